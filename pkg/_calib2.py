import sys
import time

import numpy as np

from waveclean.discriminator import Discriminator
from waveclean.generator import Generator, GeneratorConfig
from waveclean.dsp import MrstftConfig, StftResolution
from waveclean import training as tr

variant = sys.argv[1]
iters = int(sys.argv[2])

cfg = GeneratorConfig(layers=4, hidden=8, max_channels=16)
gen = Generator(cfg, seed=0)
disc = Discriminator(seed=1)
train_set = tr.make_synthetic_dataset(64, seed=2, duration=16000)
val_set = tr.make_synthetic_dataset(16, seed=3, duration=16000)

small_mr = MrstftConfig(resolutions=(StftResolution(128, 32, 128),
                                     StftResolution(256, 64, 256),
                                     StftResolution(512, 128, 512)), log_floor=1e-3)
val_mr = MrstftConfig(log_floor=1e-3)
val_w = tr.LossWeights(l1=1.0, spectral=1.0, adversarial=0.0)

if variant == "A":
    tcfg = tr.TrainConfig(iterations=iters, batch_size=8, crop_len=1024, peak_lr=3e-3, seed=4)
    weights = tr.LossWeights(1.0, 0.01, 0.05)
    mr = small_mr
elif variant == "B":
    tcfg = tr.TrainConfig(iterations=iters, batch_size=4, crop_len=2048, peak_lr=5e-3, seed=4)
    weights = tr.LossWeights(1.0, 0.01, 0.05)
    mr = MrstftConfig(log_floor=1e-3)
elif variant == "C":
    tcfg = tr.TrainConfig(iterations=iters, batch_size=8, crop_len=1024, peak_lr=3e-3, seed=4)
    weights = tr.LossWeights(1.0, 0.0, 0.05)
    mr = small_mr

t0 = time.time()
init = tr.evaluate_enhancement(gen, val_set, val_mr, val_w)
res = tr.train(gen, disc, train_set, tcfg, loss_weights=weights, mrstft_cfg=mr)
final = tr.evaluate_enhancement(gen, val_set, val_mr, val_w)
print(f"{variant} {iters}: drop {100 * (1 - final['loss'] / init['loss']):.1f}% "
      f"si_out {final['si_snr_out']:+.2f} (in {final['si_snr_in']:+.2f}) "
      f"gain {final['si_snr_out'] - final['si_snr_in']:+.2f} dB "
      f"wall {(time.time() - t0) / 60:.1f} min", flush=True)
