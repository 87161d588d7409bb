"""Input encodings: zero padding and a trainable 2-D multiresolution hash grid."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from fusedmlp.numeric import ShapeError, f32_to_bf16

HASH_PRIME_Y = 2654435761


class DomainError(ValueError):
    """Raised for inputs outside an encoding's domain."""


def encode_identity(coords: np.ndarray, width: int) -> np.ndarray:
    """Copy ``coords`` into the first columns of a zero ``M x width`` bf16 matrix."""
    coords = np.asarray(coords, dtype=np.float32)
    if coords.ndim != 2:
        raise ShapeError(f"coords must be 2-D, got {coords.shape}")
    m, d = coords.shape
    if d > width:
        raise ShapeError(f"{d} input columns do not fit width {width}")
    out = np.zeros((m, width), dtype=np.uint16)
    out[:, :d] = f32_to_bf16(coords)
    return out


@dataclass(frozen=True)
class HashGridConfig:
    levels: int = 16
    features_per_level: int = 2
    base_resolution: int = 16
    per_level_scale: float = 1.5
    log2_table_size: int = 15

    @property
    def output_dim(self) -> int:
        return self.levels * self.features_per_level

    @property
    def table_size(self) -> int:
        return 1 << self.log2_table_size

    def resolutions(self) -> np.ndarray:
        return np.array([math.floor(self.base_resolution * self.per_level_scale ** level)
                         for level in range(self.levels)], dtype=np.int64)


@dataclass
class HashGridParams:
    tables: np.ndarray  # (levels, table_size, features_per_level)

    @classmethod
    def init(cls, cfg: HashGridConfig, seed: int, scale: float = 1e-4,
             dtype=np.float32) -> "HashGridParams":
        rng = np.random.default_rng(seed)
        shape = (cfg.levels, cfg.table_size, cfg.features_per_level)
        return cls(rng.uniform(-scale, scale, size=shape).astype(dtype))

    def check(self, cfg: HashGridConfig) -> None:
        shape = (cfg.levels, cfg.table_size, cfg.features_per_level)
        if self.tables.shape != shape:
            raise ShapeError(f"tables {self.tables.shape} do not match config {shape}")


@dataclass
class InterpContext:
    """Corner indices and bilinear weights of one forward call."""

    indices: np.ndarray  # (levels, M, 4) int64
    weights: np.ndarray  # (levels, M, 4), dtype of the tables
    table_shape: tuple[int, int, int]


@njit(nogil=True, cache=True)
def _hash_forward(coords, tables, resolutions, mask, out, indices, weights):
    levels, _, nfeat = tables.shape
    one = weights.dtype.type(1.0)
    for level in range(levels):
        res = resolutions[level]
        for m in range(coords.shape[0]):
            px = coords[m, 0] * res
            py = coords[m, 1] * res
            ix = min(int(math.floor(px)), res - 1)
            iy = min(int(math.floor(py)), res - 1)
            fx = weights.dtype.type(px - ix)
            fy = weights.dtype.type(py - iy)
            w = (
                (one - fx) * (one - fy),
                fx * (one - fy),
                (one - fx) * fy,
                fx * fy,
            )
            for corner in range(4):
                cx = np.uint64(ix + (corner & 1))
                cy = np.uint64(iy + (corner >> 1))
                h = (cx ^ (cy * np.uint64(HASH_PRIME_Y))) & np.uint64(mask)
                indices[level, m, corner] = np.int64(h)
                weights[level, m, corner] = w[corner]
            for f in range(nfeat):
                acc = out.dtype.type(0.0)
                for corner in range(4):
                    acc += weights[level, m, corner] * tables[level, indices[level, m, corner], f]
                out[m, level * nfeat + f] = acc


@njit(nogil=True, cache=True)
def _hash_backward(indices, weights, d_features, grad):
    levels, m_count, _ = indices.shape
    nfeat = grad.shape[2]
    for level in range(levels):
        for m in range(m_count):
            for corner in range(4):
                idx = indices[level, m, corner]
                w = weights[level, m, corner]
                for f in range(nfeat):
                    grad[level, idx, f] += w * d_features[m, level * nfeat + f]


def hash_grid_forward(params: HashGridParams, cfg: HashGridConfig, coords: np.ndarray):
    """Encode ``M x 2`` coordinates in ``[0, 1]^2`` to ``M x (levels * F)`` features.

    Computation runs in the tables' dtype. Returns ``(features, InterpContext)``.
    """
    params.check(cfg)
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ShapeError(f"coords must be (M, 2), got {coords.shape}")
    if not np.all((coords >= 0.0) & (coords <= 1.0)):
        raise DomainError("coordinates must lie in [0, 1]^2")
    dtype = params.tables.dtype
    m = coords.shape[0]
    out = np.empty((m, cfg.output_dim), dtype=dtype)
    indices = np.empty((cfg.levels, m, 4), dtype=np.int64)
    weights = np.empty((cfg.levels, m, 4), dtype=dtype)
    _hash_forward(coords, params.tables, cfg.resolutions(), cfg.table_size - 1, out, indices, weights)
    return out, InterpContext(indices, weights, params.tables.shape)


def hash_grid_backward(ctx: InterpContext, d_features: np.ndarray) -> np.ndarray:
    """Scatter feature gradients back onto the table entries.

    Samples are visited in ascending order for every entry, so the result is
    bitwise reproducible.
    """
    levels, m, _ = ctx.indices.shape
    nfeat = ctx.table_shape[2]
    d_features = np.ascontiguousarray(d_features, dtype=ctx.weights.dtype)
    if d_features.shape != (m, levels * nfeat):
        raise ShapeError(f"d_features {d_features.shape} != {(m, levels * nfeat)}")
    grad = np.zeros(ctx.table_shape, dtype=ctx.weights.dtype)
    _hash_backward(ctx.indices, ctx.weights, d_features, grad)
    return grad
