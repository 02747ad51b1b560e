"""Loss identities and decomposition, schedule endpoints, augmentations,
synthetic data, oracles, and short training-loop properties."""
import os
import stat
import sys

import numpy as np
import pytest

from gradcheck import REL_TOL, gradcheck
from waveclean import training as tr
from waveclean.discriminator import Discriminator, DiscriminatorConfig
from waveclean.dsp import MrstftConfig, StftResolution, si_snr
from waveclean.generator import Generator, GeneratorConfig
from waveclean.tensor import Tensor

SMALL_MRSTFT = MrstftConfig(resolutions=(StftResolution(128, 32, 128),
                                         StftResolution(256, 64, 256)))
SMALL_DISC = DiscriminatorConfig(block_channels=(2, 4, 4, 4), kernel=3, pooled_len=2,
                                 linear_hidden=4)


# -- generator loss -----------------------------------------------------------------


def test_generator_loss_zero_at_fixed_point(rng):
    x = rng.normal(size=2048).astype(np.float32)
    loss = tr.generator_loss(x, x, Tensor(np.ones(1, dtype=np.float32)))
    assert loss.item() == 0.0


def test_generator_loss_reduces_to_l1(rng):
    x = rng.normal(size=(2, 1024)).astype(np.float32)
    y = rng.normal(size=(2, 1024)).astype(np.float32)
    w = tr.LossWeights(l1=1.0, spectral=0.0, adversarial=0.0)
    loss = tr.generator_loss(x, y, None, w)
    np.testing.assert_allclose(loss.item(), np.abs(x - y).mean(), rtol=1e-6)


def test_generator_loss_single_term_decomposition(rng):
    from waveclean.dsp import mrstft_loss
    x = rng.normal(size=2048).astype(np.float32)
    y = (x + 0.1 * rng.normal(size=2048)).astype(np.float32)
    scores = Tensor(np.array([0.7], dtype=np.float32))
    spec_only = tr.generator_loss(x, y, scores,
                                  tr.LossWeights(0.0, 1.0, 0.0), SMALL_MRSTFT)
    np.testing.assert_allclose(spec_only.item(),
                               mrstft_loss(x, y, SMALL_MRSTFT).item(), rtol=1e-6)
    adv_only = tr.generator_loss(x, y, scores, tr.LossWeights(0.0, 0.0, 1.0))
    np.testing.assert_allclose(adv_only.item(), (0.7 - 1.0) ** 2, rtol=1e-5)
    combined = tr.generator_loss(x, y, scores, tr.LossWeights(2.0, 3.0, 4.0), SMALL_MRSTFT)
    l1_only = tr.generator_loss(x, y, scores, tr.LossWeights(1.0, 0.0, 0.0))
    np.testing.assert_allclose(
        combined.item(),
        2 * l1_only.item() + 3 * spec_only.item() + 4 * adv_only.item(), rtol=1e-5)


def test_generator_loss_grad_through_frozen_disc(rng):
    disc = Discriminator(SMALL_DISC, seed=0, dtype=np.float64)
    for p in disc.params.values():
        p.requires_grad = False
    x = rng.normal(size=(1, 256))
    x_hat = Tensor(rng.normal(size=(1, 256)), requires_grad=True, dtype=np.float64)

    def loss():
        scores = disc.forward(Tensor(x.reshape(1, 1, -1), dtype=np.float64),
                              x_hat.reshape(1, 1, 256))
        return tr.generator_loss(Tensor(x, dtype=np.float64), x_hat, scores,
                                 tr.LossWeights(1.0, 1.0, 0.5), SMALL_MRSTFT)

    assert gradcheck(loss, [x_hat], rng, max_coords=20) < REL_TOL
    for p in disc.params.values():
        p.requires_grad = True


def test_loss_weights_validation():
    with pytest.raises(ValueError):
        tr.LossWeights(-1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        tr.LossWeights(0.0, 0.0, 0.0)


# -- mixup ---------------------------------------------------------------------------


def test_mixup_endpoints_exact(rng):
    x = rng.normal(size=100).astype(np.float32)
    y = rng.normal(size=100).astype(np.float32)
    np.testing.assert_array_equal(tr.mixup(x, y, 1.0), x)
    np.testing.assert_array_equal(tr.mixup(x, y, 0.0), y)
    np.testing.assert_allclose(tr.mixup(np.array([1.0, 0.0]), np.array([0.0, 1.0]), 0.5),
                               [0.5, 0.5])


def test_mixup_bounds_property(rng):
    x = rng.normal(size=50)
    y = rng.normal(size=50)
    for lam in rng.uniform(0, 1, size=20):
        m = tr.mixup(x, y, float(lam))
        assert np.all(m >= np.minimum(x, y) - 1e-12)
        assert np.all(m <= np.maximum(x, y) + 1e-12)


def test_mixup_rejects_bad_lambda(rng):
    with pytest.raises(ValueError):
        tr.mixup(np.zeros(4), np.zeros(4), 1.5)


def test_mixup_policy_samples_unit_interval(rng):
    pol = tr.MixupPolicy(2.0, 5.0)
    vals = [pol.sample(rng) for _ in range(200)]
    assert all(0.0 <= v <= 1.0 for v in vals)
    with pytest.raises(ValueError):
        tr.MixupPolicy(0.0, 1.0)


# -- discriminator loss ----------------------------------------------------------------


def test_disc_loss_zero_at_oracle_fixed_point(rng):
    oracle = tr.SiSnrProxyOracle()
    x = rng.normal(size=(2, 512)).astype(np.float32)
    x_hat = (x + 0.2 * rng.normal(size=(2, 512))).astype(np.float32)
    mixed = tr.mixup(x, x_hat, 0.3)

    def perfect(ref3, other3):
        vals = []
        for i in range(ref3.shape[0]):
            a, b = ref3.data[i, 0], other3.data[i, 0]
            vals.append(1.0 if np.array_equal(a, b) else oracle.score(a, b))
        return Tensor(np.array(vals, dtype=np.float32))

    loss = tr.discriminator_loss(x, x_hat, mixed, perfect, oracle)
    assert loss.item() == pytest.approx(0.0, abs=1e-12)


def test_disc_loss_is_sum_of_three_nonneg_terms(rng):
    oracle = tr.SiSnrProxyOracle()
    disc = Discriminator(SMALL_DISC, seed=1)
    x = rng.normal(size=(2, 300)).astype(np.float32)
    x_hat = rng.normal(size=(2, 300)).astype(np.float32)
    mixed = tr.mixup(x, x_hat, 0.5)
    total = tr.discriminator_loss(x, x_hat, mixed, disc.forward, oracle).item()
    assert total >= 0.0

    def term(other, target_fn):
        s = disc.forward(Tensor(x.reshape(2, 1, -1)), Tensor(other.reshape(2, 1, -1))).data
        q = np.array([target_fn(i) for i in range(2)])
        return ((s - q) ** 2).mean()

    want = (term(x, lambda i: 1.0)
            + term(x_hat, lambda i: oracle.score(x[i], x_hat[i]))
            + term(mixed, lambda i: oracle.score(x[i], mixed[i])))
    assert total == pytest.approx(want, rel=1e-5)


def test_disc_loss_gradcheck(rng):
    oracle = tr.SiSnrProxyOracle()
    disc = Discriminator(SMALL_DISC, seed=2, dtype=np.float64)
    x = rng.normal(size=(1, 128))
    x_hat = rng.normal(size=(1, 128))
    mixed = tr.mixup(x, x_hat, 0.4)

    def loss():
        return tr.discriminator_loss(Tensor(x, dtype=np.float64),
                                     Tensor(x_hat, dtype=np.float64),
                                     Tensor(mixed, dtype=np.float64),
                                     disc.forward, oracle)

    tensors = [disc.params["block0.conv.w"], disc.params["fc1.w"],
               disc.params["sigmoid.slope"], disc.params["block1.norm.gamma"]]
    assert gradcheck(loss, tensors, rng, max_coords=10) < REL_TOL


# -- schedule ----------------------------------------------------------------------------


def test_lr_schedule_endpoints():
    assert tr.lr_schedule(0, 1000) == 0.0
    assert tr.lr_schedule(50, 1000) == 2e-4
    assert tr.lr_schedule(1000, 1000) == pytest.approx(0.0, abs=1e-20)
    mid = tr.lr_schedule(525, 1000)
    assert 0 < mid < 2e-4
    with pytest.raises(ValueError):
        tr.lr_schedule(1001, 1000)


def test_lr_schedule_monotone_after_peak():
    vals = [tr.lr_schedule(s, 400, warmup_frac=0.1) for s in range(40, 401)]
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


# -- quality oracles ---------------------------------------------------------------------


def test_proxy_oracle_identity_is_one(rng):
    oracle = tr.SiSnrProxyOracle()
    x = rng.normal(size=400)
    assert oracle.score(x, x) == 1.0
    noisy = x + rng.normal(size=400)
    q = oracle.score(x, noisy)
    assert 0.0 <= q < 1.0
    assert oracle.score(x, x + 0.001 * rng.normal(size=400)) > q


def test_external_command_oracle(tmp_path, rng):
    scorer = tmp_path / "fake_scorer.py"
    scorer.write_text(
        "import sys\n"
        "from waveclean.wavio import wav_read\n"
        "a = wav_read(sys.argv[1]); b = wav_read(sys.argv[2])\n"
        "print(4.5 if abs(a.samples - b.samples).max() < 1e-3 else 1.0)\n")
    oracle = tr.ExternalCommandOracle([sys.executable, str(scorer)])
    x = (rng.normal(size=1600) * 0.1).astype(np.float32)
    assert oracle.score(x, x) == pytest.approx(1.0)
    assert oracle.score(x, -x) == pytest.approx((1.0 + 0.5) / 5.0)


# -- augmentations -------------------------------------------------------------------------


def test_remix_permutes_noise(rng):
    clean = rng.normal(size=(4, 64)).astype(np.float32)
    noise = rng.normal(size=(4, 64)).astype(np.float32)
    out = tr.augment_remix(clean, noise, np.random.default_rng(3))
    assert sorted(map(tuple, out)) == sorted(map(tuple, noise))  # multiset preserved
    single = tr.augment_remix(clean[:1], noise[:1], np.random.default_rng(3))
    np.testing.assert_array_equal(single, noise[:1])
    a = tr.augment_remix(clean, noise, np.random.default_rng(9))
    b = tr.augment_remix(clean, noise, np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)


def test_bandmask_zero_width_is_identity(rng):
    sig = rng.normal(size=2000)

    class ZeroRng:
        def integers(self, lo, hi, **kw):
            return np.int64(0)

    out = tr.augment_bandmask(sig, ZeroRng())
    np.testing.assert_allclose(out, sig, atol=1e-6)


def test_bandmask_removes_band_energy(rng):
    t = np.arange(8000)
    sig = sum(np.sin(2 * np.pi * f * t / 16000) for f in (500, 3000, 5000))

    class FixedBand:
        calls = 0

        def integers(self, lo, hi, **kw):
            FixedBand.calls += 1
            return np.int64(20) if FixedBand.calls % 2 == 1 else np.int64(40)

    # width 20 bins starting at bin 40 of a 129-bin grid (62.5 Hz per bin):
    # covers 2500..3750 Hz, swallowing the 3 kHz tone; 500 Hz and 5 kHz survive.
    masked = tr.augment_bandmask(sig, FixedBand(), fft_size=256)
    spec_in = np.abs(np.fft.rfft(sig * np.hanning(8000)))
    spec_out = np.abs(np.fft.rfft(masked * np.hanning(8000)))
    bins = np.fft.rfftfreq(8000, 1 / 16000)
    band = (bins > 2700) & (bins < 3550)  # interior of the masked band
    keep = (bins > 4800) & (bins < 5200)
    assert (spec_out[band] ** 2).sum() < 0.02 * (spec_in[band] ** 2).sum()
    assert (spec_out[keep] ** 2).sum() > 0.9 * (spec_in[keep] ** 2).sum()
    np.testing.assert_array_equal(tr.augment_bandmask(sig, np.random.default_rng(5)),
                                  tr.augment_bandmask(sig, np.random.default_rng(5)))


def test_revecho_identity_at_zero_gain(rng):
    clean = rng.normal(size=500)
    noise = rng.normal(size=500)

    class ZeroGain:
        def uniform(self, lo, hi):
            return 0.0

        def integers(self, lo, hi, **kw):
            return np.int64(32)

    c2, n2 = tr.augment_revecho(clean, noise, ZeroGain())
    np.testing.assert_array_equal(c2, clean)
    np.testing.assert_array_equal(n2, noise)


def test_revecho_first_echo_delay_and_monotone_energy(rng):
    x = np.zeros(400)
    x[5] = 1.0
    out = tr.apply_echoes(x, gain=0.5, delay=64)
    assert out[5] == 1.0 and out[5 + 64] == pytest.approx(0.5)
    assert out[5 + 128] == pytest.approx(0.25)
    sig = rng.normal(size=1000)
    energies = [np.sum(tr.apply_echoes(sig, g, 40) ** 2)
                for g in (0.0, 0.1, 0.2, 0.3, 0.4)]
    assert all(a < b for a, b in zip(energies, energies[1:]))


# -- synthetic data ---------------------------------------------------------------------------


def test_synthetic_dataset_snr_and_bounds():
    pairs = tr.make_synthetic_dataset(12, seed=0, duration=8000)
    assert len(pairs) == 12
    for clean, noisy in pairs:
        assert clean.shape == (8000,) and noisy.shape == (8000,)
        assert np.abs(clean).max() <= 1.0
        noise = noisy - clean
        snr = 10 * np.log10(np.sum(clean ** 2) / np.sum(noise ** 2))
        nearest = min(tr.SNR_GRID_DB, key=lambda g: abs(g - snr))
        assert abs(snr - nearest) < 0.1
    again = tr.make_synthetic_dataset(12, seed=0, duration=8000)
    for (a, b), (c, d) in zip(pairs, again):
        np.testing.assert_array_equal(a, c)
        np.testing.assert_array_equal(b, d)


# -- the loop ----------------------------------------------------------------------------------


def _tiny_setup(seed=0):
    gen = Generator(GeneratorConfig(layers=3, hidden=8, max_channels=16), seed=seed)
    disc = Discriminator(SMALL_DISC, seed=seed + 1)
    data = tr.make_synthetic_dataset(4, seed=seed + 2, duration=2048)
    cfg = tr.TrainConfig(iterations=3, batch_size=2, crop_len=512, seed=seed + 3,
                         bandmask=False)
    return gen, disc, data, cfg


def test_zero_lr_leaves_weights_unchanged():
    gen, disc, data, cfg = _tiny_setup()
    cfg.peak_lr = 0.0
    before = {k: p.data.copy() for k, p in gen.params.items()}
    before_d = {k: p.data.copy() for k, p in disc.params.items()}
    tr.train(gen, disc, data, cfg, mrstft_cfg=SMALL_MRSTFT)
    for k, p in gen.params.items():
        np.testing.assert_array_equal(p.data, before[k])
    for k, p in disc.params.items():
        np.testing.assert_array_equal(p.data, before_d[k])


def test_train_records_history_and_is_reproducible():
    results = []
    for _ in range(2):
        gen, disc, data, cfg = _tiny_setup(seed=7)
        res = tr.train(gen, disc, data, cfg, mrstft_cfg=SMALL_MRSTFT)
        results.append((res.history["g_loss"], res.history["d_loss"],
                        np.concatenate([p.data.ravel() for p in gen.params.values()])))
    assert len(results[0][0]) == 3 and len(results[0][1]) == 3
    assert results[0][0] == results[1][0]
    np.testing.assert_array_equal(results[0][2], results[1][2])


def test_train_rejects_empty_and_short_data():
    gen, disc, data, cfg = _tiny_setup()
    with pytest.raises(ValueError):
        tr.train(gen, disc, [], cfg, mrstft_cfg=SMALL_MRSTFT)
    short = tr.make_synthetic_dataset(2, seed=0, duration=256)
    with pytest.raises(ValueError):
        tr.train(gen, disc, short, cfg, mrstft_cfg=SMALL_MRSTFT)


def test_train_crop_must_fit_spectral_window():
    gen, disc, data, cfg = _tiny_setup()
    with pytest.raises(ValueError):
        tr.train(gen, disc, data, cfg)  # default 2048-sample window > 512 crop


def test_checkpoint_callback_invoked():
    gen, disc, data, cfg = _tiny_setup()
    cfg.checkpoint_every = 2
    steps = []
    tr.train(gen, disc, data, cfg, mrstft_cfg=SMALL_MRSTFT,
             checkpoint_fn=lambda step, g, d: steps.append(step))
    assert steps == [2]
