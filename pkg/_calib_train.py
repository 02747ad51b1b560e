import json
import time

import numpy as np

from waveclean.discriminator import Discriminator
from waveclean.generator import Generator, GeneratorConfig
from waveclean.dsp import MrstftConfig
from waveclean import training as tr

t0 = time.time()
cfg = GeneratorConfig(layers=4, hidden=8, max_channels=16)
gen = Generator(cfg, seed=0)
disc = Discriminator(seed=1)
train_set = tr.make_synthetic_dataset(64, seed=2, duration=16000)
val_set = tr.make_synthetic_dataset(16, seed=3, duration=16000)

mr = MrstftConfig(log_floor=1e-3)
weights = tr.LossWeights(l1=1.0, spectral=0.01, adversarial=0.05)
val_w = tr.LossWeights(l1=1.0, spectral=1.0, adversarial=0.0)

init = tr.evaluate_enhancement(gen, val_set, mr, val_w)
print("init:", json.dumps(init), flush=True)

tcfg = tr.TrainConfig(iterations=2000, batch_size=4, crop_len=2048, peak_lr=2e-3,
                      seed=4, val_every=250)
res = tr.train(gen, disc, train_set, tcfg, loss_weights=weights, mrstft_cfg=mr,
               val_dataset=None)
for i in range(0, 2000, 250):
    print(f"g_loss[{i}:{i+250}] mean {np.mean(res.history['g_loss'][i:i+250]):.4f}", flush=True)

final = tr.evaluate_enhancement(gen, val_set, mr, val_w)
print("final:", json.dumps(final))
print(f"loss drop: {100 * (1 - final['loss'] / init['loss']):.1f}%")
print(f"si_snr: in {final['si_snr_in']:.2f} out {final['si_snr_out']:.2f} "
      f"gain {final['si_snr_gain']:+.2f} dB")
print(f"wall: {(time.time() - t0) / 60:.1f} min")
