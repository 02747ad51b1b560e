"""Primitive-level gradients (finite differences), spec'd examples, and
causality probes for the time ops."""
import numpy as np
import pytest

from gradcheck import REL_TOL, gradcheck
from waveclean import nnops
from waveclean.nnops import ShapeError
from waveclean.tensor import Tensor


def t64(arr, grad=True):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=grad)


# -- gradient checks -----------------------------------------------------------


def test_conv1d_gradcheck(backend, rng):
    x = t64(rng.normal(size=(2, 3, 11)))
    w = t64(rng.normal(size=(4, 3, 3)))
    b = t64(rng.normal(size=4))
    err = gradcheck(lambda: (nnops.conv1d_causal(x, w, b, 2, 2) ** 2).sum(),
                    [x, w, b], rng)
    assert err < REL_TOL


def test_conv_transpose1d_gradcheck(backend, rng):
    x = t64(rng.normal(size=(2, 4, 6)))
    w = t64(rng.normal(size=(4, 3, 4)))
    b = t64(rng.normal(size=3))
    err = gradcheck(lambda: (nnops.conv_transpose1d_causal(x, w, b, 2) ** 2).sum(),
                    [x, w, b], rng)
    assert err < REL_TOL


def test_gru_gradcheck(rng):
    x = t64(rng.normal(size=(2, 5, 3)))
    wi = t64(rng.normal(size=(12, 3)) * 0.5)
    wh = t64(rng.normal(size=(12, 4)) * 0.5)
    bi = t64(rng.normal(size=12) * 0.5)
    bh = t64(rng.normal(size=12) * 0.5)
    h0 = t64(rng.normal(size=(2, 4)) * 0.5)

    def loss():
        seq, h_t = nnops.gru_layer(x, wi, wh, bi, bh, h0)
        return (seq ** 2).sum() + (h_t * 1.5).sum()

    assert gradcheck(loss, [x, wi, wh, bi, bh, h0], rng) < REL_TOL


@pytest.mark.parametrize("op", ["glu", "prelu", "bn_train", "bn_infer", "inorm",
                                "gap", "maxpool", "linear", "pad", "cumsum"])
def test_pointwise_op_gradchecks(op, rng):
    x = t64(rng.normal(size=(2, 4, 7)))
    if op == "glu":
        fn, tensors = lambda: (nnops.glu(x) ** 2).sum(), [x]
    elif op == "prelu":
        a = t64(np.array([0.25, 0.1, 0.3, 0.2]))
        fn, tensors = lambda: (nnops.prelu(x, a) ** 2).sum(), [x, a]
    elif op in ("bn_train", "bn_infer"):
        g = t64(rng.normal(size=4) + 1.0)
        b = t64(rng.normal(size=4))
        rm, rv = rng.normal(size=4), rng.uniform(0.5, 2.0, size=4)
        train = op == "bn_train"
        fn = lambda: (nnops.batch_norm1d(x, g, b, rm.copy(), rv.copy(), train) ** 2).sum()
        tensors = [x, g, b]
    elif op == "inorm":
        g = t64(rng.normal(size=4) + 1.0)
        b = t64(rng.normal(size=4))
        fn, tensors = lambda: (nnops.instance_norm1d(x, g, b) ** 2).sum(), [x, g, b]
    elif op == "gap":
        fn, tensors = lambda: (nnops.global_avg_pool_time(x) ** 2).sum(), [x]
    elif op == "maxpool":
        fn, tensors = lambda: (nnops.adaptive_max_pool_time(x, 3) ** 2).sum(), [x]
    elif op == "linear":
        w = t64(rng.normal(size=(5, 7)))
        b = t64(rng.normal(size=5))
        x2 = t64(rng.normal(size=(3, 7)))
        fn, tensors = lambda: (nnops.linear(x2, w, b) ** 2).sum(), [x2, w, b]
    elif op == "pad":
        fn, tensors = lambda: (nnops.pad_time_left(x, 3) ** 2).sum(), [x]
    else:
        fn, tensors = lambda: (nnops.cumsum_time(x) ** 2).sum(), [x]
    assert gradcheck(fn, tensors, rng) < REL_TOL


def test_elementwise_gradchecks(rng):
    x = t64(rng.uniform(0.5, 2.0, size=(3, 5)))
    for make in (lambda: x.exp().sum(), lambda: x.log().sum(), lambda: x.sqrt().sum(),
                 lambda: x.abs().sum(), lambda: x.tanh().sum(), lambda: x.sigmoid().sum(),
                 lambda: (x ** 3).sum(), lambda: ((x * 2 - 1) / (x + 3)).sum()):
        assert gradcheck(make, [x], rng) < REL_TOL


# -- spec'd examples -------------------------------------------------------------


def test_glu_examples(rng):
    val = rng.normal(size=(1, 2, 5)).astype(np.float32)
    x = Tensor(np.concatenate([val, np.zeros_like(val)], axis=1))
    np.testing.assert_allclose(nnops.glu(x).data, 0.5 * val, rtol=1e-6)
    x = Tensor(np.concatenate([val, np.full_like(val, 50.0)], axis=1))
    np.testing.assert_allclose(nnops.glu(x).data, val, rtol=1e-6)
    assert nnops.glu(Tensor(np.ones((1, 4, 3), dtype=np.float32))).shape[1] == 2
    with pytest.raises(ShapeError):
        nnops.glu(Tensor(np.ones((1, 3, 3), dtype=np.float32)))


def _gru_weights(rng, cin, hd, scale=0.5, dtype=np.float32):
    return (Tensor((rng.normal(size=(3 * hd, cin)) * scale).astype(dtype), requires_grad=True),
            Tensor((rng.normal(size=(3 * hd, hd)) * scale).astype(dtype), requires_grad=True),
            Tensor((rng.normal(size=3 * hd) * scale).astype(dtype), requires_grad=True),
            Tensor((rng.normal(size=3 * hd) * scale).astype(dtype), requires_grad=True))


def test_gru_zero_weights_zero_output(rng):
    x = Tensor(rng.normal(size=(2, 6, 3)).astype(np.float32))
    zeros = [Tensor(np.zeros(s, dtype=np.float32)) for s in
             [(12, 3), (12, 4), (12,), (12,)]]
    seq, h_t = nnops.gru_layer(x, *zeros)
    np.testing.assert_array_equal(seq.data, 0.0)
    np.testing.assert_array_equal(h_t.data, 0.0)


def test_gru_single_step_matches_cell(rng):
    wi, wh, bi, bh = _gru_weights(rng, 3, 4)
    x = Tensor(rng.normal(size=(2, 1, 3)).astype(np.float32))
    h0 = Tensor(rng.normal(size=(2, 4)).astype(np.float32))
    seq, h_t = nnops.gru_layer(x, wi, wh, bi, bh, h0)
    # manual cell
    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))
    gi = x.data[:, 0] @ wi.data.T + bi.data
    gh = h0.data @ wh.data.T + bh.data
    r = sig(gi[:, :4] + gh[:, :4])
    z = sig(gi[:, 4:8] + gh[:, 4:8])
    n = np.tanh(gi[:, 8:] + r * gh[:, 8:])
    expect = (1 - z) * n + z * h0.data
    np.testing.assert_allclose(h_t.data, expect, atol=1e-6)
    np.testing.assert_allclose(seq.data[:, 0], expect, atol=1e-6)


def test_gru_split_and_chain_matches_unsplit(rng):
    wi, wh, bi, bh = _gru_weights(rng, 3, 5)
    x = Tensor(rng.normal(size=(1, 9, 3)).astype(np.float32))
    full, _ = nnops.gru_layer(x, wi, wh, bi, bh)
    first, h_mid = nnops.gru_layer(Tensor(x.data[:, :4]), wi, wh, bi, bh)
    second, _ = nnops.gru_layer(Tensor(x.data[:, 4:]), wi, wh, bi, bh, h_mid)
    chained = np.concatenate([first.data, second.data], axis=1)
    np.testing.assert_array_equal(chained, full.data)


def test_gru_hidden_size_mismatch():
    rng = np.random.default_rng(0)
    wi, wh, bi, bh = _gru_weights(rng, 3, 4)
    x = Tensor(rng.normal(size=(2, 5, 3)).astype(np.float32))
    with pytest.raises(ShapeError):
        nnops.gru_layer(x, wi, wh, bi, bh, Tensor(np.zeros((2, 7), dtype=np.float32)))


def test_batch_norm_examples(rng):
    x = Tensor(rng.normal(size=(3, 4, 9)).astype(np.float32))
    ones, zeros = np.ones(4, np.float32), np.zeros(4, np.float32)
    g, b = Tensor(ones.copy()), Tensor(zeros.copy())
    # infer identity: running mean 0, var 1 (up to the epsilon floor)
    y = nnops.batch_norm1d(x, g, b, zeros.copy(), ones.copy(), train=False)
    np.testing.assert_allclose(y.data, x.data, atol=1e-4)
    # train mode normalizes
    y = nnops.batch_norm1d(x, g, b, zeros.copy(), ones.copy(), train=True)
    np.testing.assert_allclose(y.data.mean(axis=(0, 2)), 0.0, atol=1e-5)
    np.testing.assert_allclose(y.data.var(axis=(0, 2)), 1.0, atol=1e-3)
    # beta shifts
    y2 = nnops.batch_norm1d(x, g, Tensor(np.full(4, 2.5, np.float32)),
                            zeros.copy(), ones.copy(), train=True)
    np.testing.assert_allclose(y2.data, y.data + 2.5, atol=1e-5)


def test_batch_norm_updates_running_stats(rng):
    x = Tensor((rng.normal(size=(2, 3, 50)) * 2 + 1).astype(np.float32))
    rm, rv = np.zeros(3, np.float32), np.ones(3, np.float32)
    nnops.batch_norm1d(x, Tensor(np.ones(3, np.float32)), Tensor(np.zeros(3, np.float32)),
                       rm, rv, train=True, momentum=1.0)
    np.testing.assert_allclose(rm, x.data.mean(axis=(0, 2)), atol=1e-5)
    np.testing.assert_allclose(rv, x.data.var(axis=(0, 2)), rtol=1e-4)


def test_zero_variance_floored():
    x = Tensor(np.ones((1, 2, 8), dtype=np.float32))
    y = nnops.batch_norm1d(x, Tensor(np.ones(2, np.float32)),
                           Tensor(np.zeros(2, np.float32)),
                           np.zeros(2, np.float32), np.ones(2, np.float32), train=True)
    assert np.all(np.isfinite(y.data))


def test_prelu_example():
    x = Tensor(np.array([[[-1.0, 1.0]]], dtype=np.float32))
    a = Tensor(np.array([0.25], dtype=np.float32))
    np.testing.assert_allclose(nnops.prelu(x, a).data[0, 0], [-0.25, 1.0])


def test_pool_examples(rng):
    x = Tensor(np.full((2, 3, 7), 4.2, dtype=np.float32))
    np.testing.assert_allclose(nnops.global_avg_pool_time(x).data, 4.2, rtol=1e-6)
    y = rng.normal(size=(2, 3, 11)).astype(np.float32)
    pooled = nnops.adaptive_max_pool_time(Tensor(y), 1)
    np.testing.assert_allclose(pooled.data[:, :, 0], y.max(axis=2))


def test_maxpool_tie_routes_to_lowest_index():
    x = Tensor(np.array([[[1.0, 3.0, 3.0, 0.0]]], dtype=np.float64), requires_grad=True)
    nnops.adaptive_max_pool_time(x, 1).sum().backward()
    np.testing.assert_array_equal(x.grad[0, 0], [0.0, 1.0, 0.0, 0.0])


# -- causality ---------------------------------------------------------------------


def test_conv_causality_probes(backend, rng):
    for _ in range(30):
        bsz = int(rng.integers(1, 3))
        ci = int(rng.integers(1, 4))
        co = int(rng.integers(1, 4))
        k = int(rng.integers(1, 5))
        stride = int(rng.integers(1, 4))
        dil = int(rng.integers(1, 3))
        t = int(rng.integers(max(4, stride), 40))
        x = rng.normal(size=(bsz, ci, t)).astype(np.float32)
        w = Tensor(rng.normal(size=(co, ci, k)).astype(np.float32))
        b = Tensor(rng.normal(size=co).astype(np.float32))
        y1 = nnops.conv1d_causal(Tensor(x), w, b, stride, dil).data
        t_out = y1.shape[2]
        f0 = int(rng.integers(0, t_out))
        boundary = f0 * stride  # last input sample frame f0 can see
        if boundary + 1 >= t:
            continue
        x2 = x.copy()
        x2[:, :, boundary + 1:] += rng.normal(size=(bsz, ci, t - boundary - 1)).astype(np.float32)
        y2 = nnops.conv1d_causal(Tensor(x2), w, b, stride, dil).data
        assert np.array_equal(y1[:, :, :f0 + 1], y2[:, :, :f0 + 1])


def test_gru_causality_probes(rng):
    for _ in range(20):
        t = int(rng.integers(3, 20))
        wi, wh, bi, bh = _gru_weights(rng, 3, 4)
        x = rng.normal(size=(1, t, 3)).astype(np.float32)
        seq1, _ = nnops.gru_layer(Tensor(x), wi, wh, bi, bh)
        cut = int(rng.integers(1, t))
        x2 = x.copy()
        x2[:, cut:, :] += 1.0
        seq2, _ = nnops.gru_layer(Tensor(x2), wi, wh, bi, bh)
        assert np.array_equal(seq1.data[:, :cut], seq2.data[:, :cut])
