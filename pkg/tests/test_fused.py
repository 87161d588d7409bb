"""Fused engine vs the unfused reference: bitwise equality and invariances."""
import numpy as np
import pytest

from fusedmlp.checkpoint import Checkpoint, to_bytes
from fusedmlp.fused import (FusedEngine, TileConfig, fused_inference, fused_train, grad_gemm_pass,
                            pad_batch, padded_width_for)
from fusedmlp.model import (MlpConfig, Precision, forward_reference, init_params,
                            train_step_reference)
from fusedmlp.numeric import ShapeError, StateError, f32_to_bf16


def random_case(seed):
    rng = np.random.default_rng(seed)
    width = int(rng.choice([16, 32, 64, 128]))
    nlayers = int(rng.integers(2, 9))
    tm = int(rng.integers(1, 9))
    m = int(rng.choice([tm, 64, 1024]))
    m = -(-m // tm) * tm
    out_width = int(rng.integers(1, width + 1))
    cfg = MlpConfig(width=width, nlayers=nlayers, out_width=out_width)
    params = init_params(cfg, seed)
    x = f32_to_bf16(rng.uniform(-1, 1, (m, width)).astype(np.float32))
    target = rng.uniform(-1, 1, (m, width)).astype(np.float32)
    m_valid = int(rng.integers(1, m + 1))
    return params, x, target, TileConfig(tm=tm, workers=int(rng.integers(1, 4))), m_valid


@pytest.mark.parametrize("seed", range(50))
def test_fused_matches_reference_bitwise(seed):
    params, x, target, tile, m_valid = random_case(seed)
    ref_out, _ = forward_reference(params, x)
    np.testing.assert_array_equal(fused_inference(params, x, tile).view(np.uint32),
                                  ref_out.view(np.uint32))
    mask = params.config.out_width
    ref_loss, ref_grads = train_step_reference(params, x, target, mask, m_valid)
    loss, grads, _, _ = fused_train(params, x, target, tile, mask, m_valid)
    assert np.float32(loss).view(np.uint32) == np.float32(ref_loss).view(np.uint32)
    for g, r in zip(grads.g, ref_grads.g):
        np.testing.assert_array_equal(g.view(np.uint32), r.view(np.uint32))


def test_fused_caches_match_reference():
    params, x, target, tile, _ = random_case(1000)
    _, cache = forward_reference(params, x, want_cache=True)
    _, _, fcache, dcache = FusedEngine(params, tile).train(x, target, 3)
    for a, r in zip(fcache.a, cache.a):
        np.testing.assert_array_equal(a, r)
    assert len(dcache) == params.config.nmatrices
    # gradients recomputed from widened caches agree with the bits path
    from fusedmlp.model import BackwardCache, ForwardCache
    g1 = grad_gemm_pass(fcache, dcache)
    g2 = grad_gemm_pass(ForwardCache(list(fcache.a)), BackwardCache(list(dcache.d)), workers=2)
    for a, b in zip(g1.g, g2.g):
        np.testing.assert_array_equal(a, b)


def test_thread_invariance_outputs_grads_checkpoints():
    cfg = MlpConfig(width=64, nlayers=5)
    params = init_params(cfg, 5)
    rng = np.random.default_rng(5)
    x = f32_to_bf16(rng.uniform(-1, 1, (1024, 64)).astype(np.float32))
    target = rng.uniform(-1, 1, (1024, 64)).astype(np.float32)
    results = []
    for workers in (1, 2, 8):
        tile = TileConfig(tm=8, workers=workers)
        out = fused_inference(params, x, tile)
        loss, grads, _, _ = fused_train(params, x, target, tile)
        from fusedmlp.optim import OptimizerState, optimizer_step
        stepped = optimizer_step(OptimizerState(), params, grads)
        results.append((out.tobytes(), np.float32(loss).tobytes(),
                        b"".join(g.tobytes() for g in grads.g), to_bytes(Checkpoint(stepped))))
    assert results[0] == results[1] == results[2]


def test_engine_rejects_bad_inputs():
    params = init_params(MlpConfig(width=16, nlayers=3), 0)
    eng = FusedEngine(params, TileConfig(tm=4))
    with pytest.raises(TypeError):
        eng.inference(np.zeros((8, 16), np.float32))
    with pytest.raises(ShapeError):
        eng.inference(np.zeros((6, 16), np.uint16))
    with pytest.raises(ShapeError):
        eng.inference(np.zeros((8, 32), np.uint16))
    with pytest.raises(ShapeError):
        eng.train(np.zeros((8, 16), np.uint16), np.zeros((4, 16), np.float32), 1)
    with pytest.raises(ValueError):
        FusedEngine(init_params(MlpConfig(width=16, nlayers=3, precision=Precision.F32), 0))


def test_tile_config_validation():
    for bad in (dict(tm=0), dict(tm=9), dict(workers=0), dict(tk=8)):
        with pytest.raises(ValueError):
            TileConfig(**bad)


def test_grad_pass_rejects_incomplete_caches():
    with pytest.raises(StateError):
        grad_gemm_pass(None, None)


def test_padding_rows_and_columns():
    tile = TileConfig(tm=8)
    x = np.ones((2**11 + 3, 10), np.float32)
    bits, report = pad_batch(x, tile, 16)
    assert bits.shape == (2056, 16) and report.padded_m == 2056
    assert report.original_m == 2051 and report.original_in_width == 10
    assert np.all(bits[2051:] == 0) and np.all(bits[:, 10:] == 0)
    assert np.all(bits[:2051, :10] == 0x3F80)
    assert padded_width_for(2) == 16 and padded_width_for(17, 3) == 32 and padded_width_for(100) == 128
    with pytest.raises(ShapeError):
        padded_width_for(129)
    with pytest.raises(ShapeError):
        pad_batch(np.ones((4, 20)), tile, 16)


def test_padded_rows_do_not_change_loss_or_grads():
    cfg = MlpConfig(width=16, nlayers=3, in_width=5, out_width=2)
    params = init_params(cfg, 9)
    rng = np.random.default_rng(9)
    x = rng.uniform(-1, 1, (13, 5)).astype(np.float32)
    y = rng.uniform(-1, 1, (13, 2)).astype(np.float32)
    tile = TileConfig(tm=8)
    bits, rep = pad_batch(x, tile, 16)
    target = np.zeros(bits.shape, np.float32)
    target[:13, :2] = y
    loss, grads, _, _ = fused_train(params, bits, target, tile, 2, rep.original_m)
    exact, _ = pad_batch(x, TileConfig(tm=1), 16)
    t2 = np.zeros(exact.shape, np.float32)
    t2[:, :2] = y
    ref_loss, ref_grads = train_step_reference(params, exact, t2, 2)
    assert loss == ref_loss
    for g, r in zip(grads.g, ref_grads.g):
        np.testing.assert_array_equal(g, r)
