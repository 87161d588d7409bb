"""bf16 conversions, weight packing and the reference GEMM.

Matrices are plain 2-D numpy arrays. ``float32`` arrays play the role of f32
matrices; ``uint16`` arrays hold raw bf16 bit patterns. Every matrix product in
the package accumulates in f32 in strictly ascending reduction order, which is
what makes the fused engine bitwise comparable with this module.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fusedmlp import _kernels


class ShapeError(ValueError):
    """Raised when array shapes violate an operation's preconditions."""


class StateError(RuntimeError):
    """Raised when a cache or context is missing data an operation needs."""


def f32_to_bf16(x) -> np.ndarray:
    """Round f32 values to bf16 bit patterns (round-to-nearest-even).

    NaN maps to a quiet NaN with the sign preserved. Works on scalars and
    arrays; always returns a ``uint16`` array (0-d for scalar input).
    """
    x = np.asarray(x, dtype=np.float32)
    bits = x.view(np.uint32)
    lsb = (bits >> np.uint32(16)) & np.uint32(1)
    rounded = ((bits + np.uint32(0x7FFF) + lsb) >> np.uint32(16)).astype(np.uint16)
    nan = np.isnan(x)
    if np.any(nan):
        quiet = ((bits >> np.uint32(16)) | np.uint32(0x0040)).astype(np.uint16)
        rounded = np.where(nan, quiet, rounded)
    return rounded


def bf16_to_f32(bits) -> np.ndarray:
    """Widen bf16 bit patterns to f32 (exact)."""
    bits = np.asarray(bits, dtype=np.uint16)
    return (bits.astype(np.uint32) << np.uint32(16)).view(np.float32)


def round_bf16(x) -> np.ndarray:
    """f32 -> bf16 -> f32, i.e. the nearest bf16-representable f32 values."""
    return bf16_to_f32(f32_to_bf16(x))


def _check_2d(name: str, a: np.ndarray) -> None:
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")


def gemm_f32(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """C = A @ B for f32 inputs, products and sums in f32, ascending k."""
    a = np.ascontiguousarray(a, dtype=np.float32)
    b = np.ascontiguousarray(b, dtype=np.float32)
    _check_2d("A", a)
    _check_2d("B", b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.float32)
    _kernels.gemm_ascending(a, b, out)
    return out


def gemm_bf16_f32(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Multiply two bf16 matrices (``uint16`` bit patterns) into an f32 matrix.

    ``C(r, c) = sum_k f32(A(r, k)) * f32(B(k, c))``; each product is exact in
    f32 and the sum runs over k in ascending order.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.dtype != np.uint16 or b.dtype != np.uint16:
        raise TypeError("gemm_bf16_f32 expects uint16 bf16 bit patterns")
    return gemm_f32(bf16_to_f32(a), bf16_to_f32(b))


def gemm_at_b(a: np.ndarray, d: np.ndarray) -> np.ndarray:
    """G = A^T D with each element summed over rows m in ascending order."""
    a = np.ascontiguousarray(a, dtype=np.float32)
    d = np.ascontiguousarray(d, dtype=np.float32)
    _check_2d("A", a)
    _check_2d("D", d)
    if a.shape[0] != d.shape[0]:
        raise ShapeError(f"row counts differ: {a.shape} vs {d.shape}")
    out = np.zeros((a.shape[1], d.shape[1]), dtype=np.float32)
    _kernels.gemm_at_b_rows(a, d, 0, a.shape[1], out)
    return out


@dataclass(frozen=True)
class PackedWeights:
    """bf16 weights in row-pair interleaved order.

    ``data`` has length ``k * n``; element ``(2p + j, c)`` of the logical
    matrix lives at ``data[(p * n + c) * 2 + j]``.
    """

    k: int
    n: int
    data: np.ndarray

    def unpack(self) -> np.ndarray:
        return self.data.reshape(self.k // 2, self.n, 2).transpose(0, 2, 1).reshape(self.k, self.n).copy()


def pack_weights(b: np.ndarray, transpose: bool = False) -> PackedWeights:
    """Pack a bf16 ``K x N`` matrix (or its transpose) into row-pair order."""
    b = np.asarray(b)
    if b.dtype != np.uint16:
        raise TypeError("pack_weights expects uint16 bf16 bit patterns")
    _check_2d("B", b)
    if transpose:
        b = b.T
    k, n = b.shape
    if k % 2 or n % 2:
        raise ShapeError(f"packed weights need even dimensions, got {k}x{n}")
    data = np.ascontiguousarray(b.reshape(k // 2, 2, n).transpose(0, 2, 1)).reshape(-1)
    return PackedWeights(k, n, data)


def unpack_weights(p: PackedWeights) -> np.ndarray:
    return p.unpack()
