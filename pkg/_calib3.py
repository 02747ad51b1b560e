import sys
import time

import numpy as np

from waveclean.discriminator import Discriminator
from waveclean.generator import Generator, GeneratorConfig
from waveclean.dsp import MrstftConfig, StftResolution, si_snr
from waveclean import training as tr
from waveclean.tensor import Tensor, no_grad

iters = int(sys.argv[1]) if len(sys.argv) > 1 else 800

cfg = GeneratorConfig(layers=4, hidden=8, max_channels=16)
gen = Generator(cfg, seed=0)
disc = Discriminator(seed=1)
train_set = tr.make_synthetic_dataset(64, seed=2, duration=4096)
val_set = tr.make_synthetic_dataset(16, seed=3, duration=4096)

mr = MrstftConfig(resolutions=(StftResolution(128, 32, 128),
                               StftResolution(256, 64, 256),
                               StftResolution(512, 128, 512)), log_floor=1e-3)
val_mr = MrstftConfig(log_floor=1e-3)
val_w = tr.LossWeights(l1=1.0, spectral=1.0, adversarial=0.0)
weights = tr.LossWeights(1.0, 0.01, 0.05)

t0 = time.time()
init = tr.evaluate_enhancement(gen, val_set, val_mr, val_w)
tcfg = tr.TrainConfig(iterations=iters, batch_size=8, crop_len=2048, peak_lr=3e-3, seed=4)
res = tr.train(gen, disc, train_set, tcfg, loss_weights=weights, mrstft_cfg=mr)
final = tr.evaluate_enhancement(gen, val_set, val_mr, val_w)
print(f"D {iters}: drop {100 * (1 - final['loss'] / init['loss']):.1f}% "
      f"si_out {final['si_snr_out']:+.2f} (in {final['si_snr_in']:+.2f}) "
      f"gain {final['si_snr_out'] - final['si_snr_in']:+.2f} dB "
      f"wall {(time.time() - t0) / 60:.1f} min", flush=True)

# length sensitivity probe: same model evaluated on 2048-sample leading crops
crops = [(c[:2048], n[:2048]) for c, n in val_set]
si_in, si_out = [], []
with no_grad():
    for c, n in crops:
        out = gen.forward(Tensor(n.reshape(1, 1, -1))).data[0, 0]
        si_in.append(si_snr(c, n))
        si_out.append(si_snr(c, out))
print(f"crop-2048 eval: si_out {np.mean(si_out):+.2f} (in {np.mean(si_in):+.2f})")
