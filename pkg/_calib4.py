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
train_set = tr.make_synthetic_dataset(64, seed=2, duration=4096)
val_set = tr.make_synthetic_dataset(16, seed=3, duration=4096)
val_mr = MrstftConfig(log_floor=1e-3)
val_w = tr.LossWeights(1.0, 1.0, 0.0)
weights = tr.LossWeights(1.0, 0.0, 0.05)
init = tr.evaluate_enhancement(gen, val_set, val_mr, val_w)
print("init:", {k: round(v, 3) for k, v in init.items()}, flush=True)
tcfg = tr.TrainConfig(iterations=2000, batch_size=8, crop_len=2048, peak_lr=4e-3, seed=4,
                      val_every=500)
res = tr.train(gen, disc, train_set, tcfg, val_dataset=val_set, loss_weights=weights)
for step, m in res.history["val"]:
    print(f"  step {step}: loss {m['loss']:.3f} si_out {m['si_snr_out']:+.2f}", flush=True)
final = tr.evaluate_enhancement(gen, val_set, val_mr, val_w)
print("final:", {k: round(v, 3) for k, v in final.items()})
print(f"drop {100 * (1 - final['loss'] / init['loss']):.1f}%  "
      f"gain {final['si_snr_out'] - final['si_snr_in']:+.2f} dB  "
      f"wall {(time.time() - t0) / 60:.1f} min")
