"""Hash-grid encoding: interpolation identities, hashing and gradients."""
import numpy as np
import pytest

from fusedmlp.encoding import (HASH_PRIME_Y, DomainError, HashGridConfig, HashGridParams,
                               encode_identity, hash_grid_backward, hash_grid_forward)
from fusedmlp.numeric import ShapeError, bf16_to_f32

SMALL = HashGridConfig(levels=4, features_per_level=2, base_resolution=4, per_level_scale=2.0,
                       log2_table_size=6)


def test_resolutions_and_dims():
    cfg = HashGridConfig()
    res = cfg.resolutions()
    assert res[0] == 16 and res[1] == 24 and res[2] == 36 and res[-1] == int(16 * 1.5**15)
    assert cfg.output_dim == 32 and cfg.table_size == 32768


def test_encode_identity():
    out = encode_identity(np.array([[1.0, -2.0]]), 16)
    assert out.shape == (1, 16) and out.dtype == np.uint16
    np.testing.assert_array_equal(bf16_to_f32(out)[0, :3], [1.0, -2.0, 0.0])
    with pytest.raises(ShapeError):
        encode_identity(np.zeros((2, 20)), 16)


def test_domain_and_shape_errors():
    params = HashGridParams.init(SMALL, 0)
    with pytest.raises(DomainError):
        hash_grid_forward(params, SMALL, np.array([[0.5, 1.01]]))
    with pytest.raises(DomainError):
        hash_grid_forward(params, SMALL, np.array([[-1e-9, 0.5]]))
    with pytest.raises(ShapeError):
        hash_grid_forward(params, SMALL, np.zeros((3, 3)))
    with pytest.raises(ShapeError):
        hash_grid_forward(HashGridParams(np.zeros((1, 2, 2), np.float32)), SMALL, np.zeros((1, 2)))


def test_weights_partition_of_unity_exact_on_dyadic(rng):
    params = HashGridParams.init(SMALL, 1)
    coords = rng.integers(0, 1025, size=(500, 2)) / 1024.0
    _, ctx = hash_grid_forward(params, SMALL, coords)
    assert np.all(ctx.weights.sum(axis=2) == 1.0)
    assert np.all(ctx.weights >= 0)


def _expected_index(cx, cy, mask):
    return (cx ^ (cy * HASH_PRIME_Y)) & mask


def test_corner_coordinates_hit_one_entry():
    params = HashGridParams.init(SMALL, 2)
    res = SMALL.resolutions()
    coords = np.array([[0.0, 0.0], [0.25, 0.5], [1.0, 1.0]])
    feats, ctx = hash_grid_forward(params, SMALL, coords)
    mask = SMALL.table_size - 1
    for level, r in enumerate(res):
        for m, (x, y) in enumerate(coords):
            px, py = x * r, y * r
            ix, iy = min(int(px), r - 1), min(int(py), r - 1)
            cx, cy = int(round(px)), int(round(py))
            idx = _expected_index(cx, cy, mask)
            np.testing.assert_array_equal(feats[m, 2 * level:2 * level + 2], params.tables[level, idx])
            corner = (cx - ix) + 2 * (cy - iy)
            assert ctx.weights[level, m, corner] == 1.0


def test_cell_center_is_corner_average():
    cfg = HashGridConfig(levels=1, base_resolution=4, log2_table_size=10)
    params = HashGridParams.init(cfg, 3, dtype=np.float64)
    feats, _ = hash_grid_forward(params, cfg, np.array([[0.375, 0.625]]))  # center of cell (1, 2)
    mask = cfg.table_size - 1
    corners = [_expected_index(cx, cy, mask) for cy in (2, 3) for cx in (1, 2)]
    np.testing.assert_allclose(feats[0], params.tables[0, corners].mean(axis=0), rtol=1e-15)


def test_collinear_interpolation_is_linear():
    # along a horizontal line inside one cell, features move linearly in x
    cfg = HashGridConfig(levels=1, base_resolution=8, log2_table_size=10)
    params = HashGridParams.init(cfg, 4, dtype=np.float64)
    xs = np.linspace(0.26, 0.37, 7)
    coords = np.stack([xs, np.full_like(xs, 0.55)], axis=1)
    feats, _ = hash_grid_forward(params, cfg, coords)
    second = feats[2:] - 2 * feats[1:-1] + feats[:-2]
    assert np.abs(second).max() < 1e-15


def test_backward_is_adjoint_of_forward(rng):
    params = HashGridParams.init(SMALL, 5, dtype=np.float64)
    coords = rng.uniform(0, 1, (40, 2))
    feats, ctx = hash_grid_forward(params, SMALL, coords)
    d = rng.standard_normal(feats.shape)
    grad = hash_grid_backward(ctx, d)
    # <d, J t> == <J^T d, t> for the linear map tables -> features
    t = rng.standard_normal(params.tables.shape)
    jt, _ = hash_grid_forward(HashGridParams(t), SMALL, coords)
    assert abs(np.sum(d * jt) - np.sum(grad * t)) < 1e-10
    with pytest.raises(ShapeError):
        hash_grid_backward(ctx, d[:, :3])


def test_backward_matches_finite_differences_sampled(rng):
    cfg = HashGridConfig(levels=3, base_resolution=4, per_level_scale=2.0, log2_table_size=5)
    params = HashGridParams.init(cfg, 6, scale=0.5, dtype=np.float64)
    coords = rng.uniform(0, 1, (25, 2))
    w = rng.standard_normal(cfg.output_dim)

    def loss(tables):
        feats, _ = hash_grid_forward(HashGridParams(tables), cfg, coords)
        return float(np.sum(np.sin(feats @ w)))

    feats, ctx = hash_grid_forward(params, cfg, coords)
    d = np.cos(feats @ w)[:, None] * w[None, :]
    grad = hash_grid_backward(ctx, d)
    h = 1e-3
    flat = params.tables.reshape(-1)
    touched = np.flatnonzero(grad.reshape(-1))
    picks = rng.choice(touched, size=min(40, touched.size), replace=False)
    worst = 0.0
    for i in picks:
        plus, minus = flat.copy(), flat.copy()
        plus[i] += h
        minus[i] -= h
        num = (loss(plus.reshape(params.tables.shape)) - loss(minus.reshape(params.tables.shape))) / (2 * h)
        a = grad.reshape(-1)[i]
        worst = max(worst, abs(a - num) / max(abs(a), abs(num), 1e-8))
    assert worst < 1e-3


def test_backward_deterministic_f32(rng):
    params = HashGridParams.init(HashGridConfig(), 7)
    coords = rng.uniform(0, 1, (2000, 2))
    feats, ctx = hash_grid_forward(params, HashGridConfig(), coords)
    d = rng.standard_normal(feats.shape).astype(np.float32)
    assert hash_grid_backward(ctx, d).tobytes() == hash_grid_backward(ctx, d).tobytes()
