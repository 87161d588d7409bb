"""Reference MLP: configuration, forward/backward against independent oracles."""
import numpy as np
import pytest

from fusedmlp.model import (Activation, MlpConfig, MlpParams, Precision, backward_reference,
                            forward_reference, init_params, input_gradient, loss_l2,
                            train_step_reference, xavier_scale)
from fusedmlp.numeric import ShapeError, StateError, bf16_to_f32, f32_to_bf16, round_bf16

from gradcheck import draw_inputs, fd_gradient, forward64, kink_margin, rel_error


def f32_config(width=16, nlayers=3, **kw):
    return MlpConfig(width=width, nlayers=nlayers, precision=Precision.F32, **kw)


def test_config_validation():
    with pytest.raises(ValueError):
        MlpConfig(width=48)
    with pytest.raises(ValueError):
        MlpConfig(nlayers=1)
    with pytest.raises(ValueError):
        MlpConfig(width=16, in_width=17)
    cfg = MlpConfig(width=64, nlayers=4)
    assert cfg.in_width == cfg.out_width == 64
    assert cfg.nmatrices == 3 and cfg.n_weights == 12288
    assert cfg.activations() == [Activation.RELU, Activation.RELU, Activation.LINEAR]


def test_params_dtype_and_shape_checks():
    cfg = MlpConfig(width=16, nlayers=3)
    with pytest.raises(TypeError):
        MlpParams(cfg, [np.zeros((16, 16), np.float32)] * 2)
    with pytest.raises(ShapeError):
        MlpParams(cfg, [np.zeros((16, 16), np.uint16)])
    with pytest.raises(ShapeError):
        MlpParams(cfg, [np.zeros((16, 8), np.uint16)] * 2)


def test_init_is_seeded_and_bounded():
    cfg = MlpConfig(width=32, nlayers=4)
    a, b, c = init_params(cfg, 7), init_params(cfg, 7), init_params(cfg, 8)
    for wa, wb in zip(a.weights, b.weights):
        np.testing.assert_array_equal(wa, wb)
    assert not np.array_equal(a.weights[0], c.weights[0])
    s = xavier_scale(32)
    for w in a.weights_f32():
        assert np.abs(w).max() <= round_bf16(np.float32(s)) and w.std() > 0.3 * s


def test_packed_copies_match_weights():
    p = init_params(MlpConfig(width=16, nlayers=3), 0)
    for w, pk, pt in zip(p.weights, p.packed, p.packed_t):
        np.testing.assert_array_equal(pk.unpack(), w)
        np.testing.assert_array_equal(pt.unpack(), w.T)


def test_relu_edge_values():
    c = np.array([-0.0, 0.0, np.nan, -1.0, 2.0], dtype=np.float32)
    out = Activation.RELU.forward(c)
    np.testing.assert_array_equal(out.view(np.uint32), np.array([0, 0, 0, 0, 0x40000000], np.uint32))
    d = np.ones(5, np.float32)
    np.testing.assert_array_equal(Activation.RELU.backward(out, d), [0, 0, 0, 0, 1])
    assert Activation.LINEAR.forward(c) is c


def test_forward_f32_matches_float64_oracle(rng):
    cfg = f32_config(width=32, nlayers=4)
    p = init_params(cfg, 1)
    x = rng.uniform(-1, 1, (10, 32)).astype(np.float32)
    out, cache = forward_reference(p, x, want_cache=True)
    ref = forward64([w.astype(np.float64) for w in p.weights], x)
    np.testing.assert_allclose(out, ref, rtol=1e-5, atol=1e-5)
    assert len(cache) == 4 and cache.a[0] is not None


def test_forward_bf16_values_are_representable(rng):
    p = init_params(MlpConfig(width=16, nlayers=4), 2)
    x = rng.standard_normal((8, 16)).astype(np.float32)
    out, cache = forward_reference(p, x, want_cache=True)
    for a in cache.a:
        np.testing.assert_array_equal(round_bf16(a), a)
    # bits in, same result
    np.testing.assert_array_equal(forward_reference(p, f32_to_bf16(x))[0], out)


def test_forward_rejects_bad_shape():
    p = init_params(MlpConfig(width=16, nlayers=2), 0)
    with pytest.raises(ShapeError):
        forward_reference(p, np.zeros((4, 8), np.float32))
    with pytest.raises(ShapeError):
        forward_reference(p, np.zeros((0, 16), np.float32))


def test_loss_masking_and_gradient():
    pred = np.array([[1.0, 2.0, 9.0], [3.0, 5.0, 9.0], [7.0, 7.0, 7.0]], np.float32)
    tgt = np.zeros_like(pred)
    loss, d = loss_l2(pred, tgt, mask_cols=2, m_valid=2)
    assert loss == np.float32((1 + 4 + 9 + 25) / 4)
    np.testing.assert_array_equal(d, np.array([[0.5, 1.0, 0], [1.5, 2.5, 0], [0, 0, 0]], np.float32))
    with pytest.raises(ShapeError):
        loss_l2(pred, tgt, mask_cols=0)
    with pytest.raises(ShapeError):
        loss_l2(pred, tgt, mask_cols=1, m_valid=4)
    with pytest.raises(ShapeError):
        loss_l2(pred, tgt[:2], mask_cols=1)


def test_backward_requires_full_cache(rng):
    p = init_params(f32_config(nlayers=3), 0)
    x = rng.standard_normal((4, 16)).astype(np.float32)
    _, cache = forward_reference(p, x, want_cache=True)
    with pytest.raises(StateError):
        backward_reference(p, None, np.zeros((4, 16), np.float32))
    with pytest.raises(ShapeError):
        backward_reference(p, cache, np.zeros((3, 16), np.float32))


@pytest.mark.parametrize("nlayers", [2, 3, 4])
def test_f32_gradients_match_finite_differences(rng, nlayers):
    cfg = f32_config(width=16, nlayers=nlayers, out_width=8)
    p = init_params(cfg, 10 + nlayers)
    x = draw_inputs(rng, [w.astype(np.float64) for w in p.weights], (4, 16), h=1e-3)
    target = rng.uniform(-1, 1, (4, 16)).astype(np.float32)
    _, grads = train_step_reference(p, x, target, mask_cols=8)
    numeric = fd_gradient([w.astype(np.float64) for w in p.weights], x, target, 8, h=1e-3)
    assert rel_error(grads.g, numeric) < 1e-3


def test_input_gradient_matches_finite_differences(rng):
    cfg = f32_config(width=16, nlayers=3)
    p = init_params(cfg, 3)
    x = draw_inputs(rng, [w.astype(np.float64) for w in p.weights], (4, 16), h=1e-3)
    target = rng.uniform(-1, 1, (4, 16)).astype(np.float32)
    out, cache = forward_reference(p, x, want_cache=True)
    _, d = loss_l2(out, target, 16)
    _, dcache = backward_reference(p, cache, d)
    gx = input_gradient(p, dcache)
    ws = [w.astype(np.float64) for w in p.weights]
    x64 = x.astype(np.float64)
    num = np.zeros_like(x64)
    h = 1e-3
    for idx in np.ndindex(x64.shape):
        xp, xm = x64.copy(), x64.copy()
        xp[idx] += h
        xm[idx] -= h
        num[idx] = (np.mean((forward64(ws, xp) - target) ** 2)
                    - np.mean((forward64(ws, xm) - target) ** 2)) / (2 * h)
    assert rel_error([gx], [num]) < 1e-3


def test_bf16_backward_matches_manual_chain(rng):
    # one hidden layer written out by hand with explicit bf16 rounding
    cfg = MlpConfig(width=16, nlayers=3)
    p = init_params(cfg, 4)
    x = round_bf16(rng.standard_normal((8, 16)).astype(np.float32))
    t = rng.standard_normal((8, 16)).astype(np.float32)
    w1, w2 = (bf16_to_f32(w).astype(np.float64) for w in p.weights)
    a2 = round_bf16(np.maximum(x @ w1, 0).astype(np.float32))
    a3 = round_bf16((a2 @ w2).astype(np.float32))
    d3 = round_bf16((2 * (a3 - t) / (8 * 16)).astype(np.float32))
    d2 = round_bf16(np.where(a2 > 0, d3 @ w2.T, 0).astype(np.float32))
    g1 = x.T.astype(np.float64) @ d2
    g2 = a2.T.astype(np.float64) @ d3
    loss, grads = train_step_reference(p, x, t, 16)
    # float64 sums vs ascending f32 sums: agreement to f32 accumulation error
    np.testing.assert_allclose(grads.g[0], g1, rtol=1e-4, atol=1e-6)
    np.testing.assert_allclose(grads.g[1], g2, rtol=1e-4, atol=1e-6)
    assert abs(float(loss) - np.mean((a3 - t) ** 2)) < 1e-5


@pytest.mark.parametrize("seed", range(20))
def test_f32_gradients_many_seeds(seed):
    rng = np.random.default_rng([seed, 99])
    nlayers = 2 + seed % 3
    p = init_params(f32_config(width=16, nlayers=nlayers), 100 + seed)
    ws = [w.astype(np.float64) for w in p.weights]
    x = draw_inputs(rng, ws, (4, 16), h=1e-3)
    assert kink_margin(ws, x, 1e-3) > 10
    t = rng.uniform(-1, 1, (4, 16)).astype(np.float32)
    _, grads = train_step_reference(p, x, t, 16)
    assert rel_error(grads.g, fd_gradient(ws, x, t, 16, h=1e-3)) < 1e-3
