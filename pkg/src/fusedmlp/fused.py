"""Fully-fused CPU executor.

Each TM-row block of the batch is carried through every layer while it stays
in a small block-resident buffer; only the final activations (inference) or the
A_i/D_i caches (training) are written back. Every worker stages all layer
weights once into its own contiguous tile buffer before touching a block,
which is the CPU stand-in for staging weights in shared local memory.

Workers own disjoint ranges of block-rows, so results never depend on how many
workers run.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from fusedmlp import _kernels
from fusedmlp.model import (
    ALLOWED_WIDTHS,
    BackwardCache,
    ForwardCache,
    Gradients,
    MlpParams,
    Precision,
)
from fusedmlp.numeric import ShapeError, StateError, bf16_to_f32, f32_to_bf16

TK = _kernels.TK
TN = _kernels.TN


@dataclass(frozen=True)
class TileConfig:
    tm: int = 8
    workers: int = 1
    tk: int = TK
    tn: int = TN

    def __post_init__(self):
        if not 1 <= self.tm <= 8:
            raise ValueError(f"tm must be in 1..8, got {self.tm}")
        if self.tk != TK or self.tn != TN:
            raise ValueError("tk and tn are fixed at 16")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def check_width(self, width: int) -> None:
        if width % self.tk or width % self.tn:
            raise ShapeError(f"width {width} is not a multiple of {self.tk}")


@dataclass(frozen=True)
class PaddingReport:
    original_m: int
    padded_m: int
    original_in_width: int
    original_out_width: int
    padded_width: int


def padded_width_for(*widths: int) -> int:
    need = max(16, *widths)
    for w in ALLOWED_WIDTHS:
        if w >= need:
            return w
    raise ShapeError(f"no supported width holds {need} columns")


def pad_batch(x: np.ndarray, tile: TileConfig, target_width: int,
              out_width: int | None = None) -> tuple[np.ndarray, PaddingReport]:
    """Zero-pad rows to a multiple of ``tile.tm`` and columns to ``target_width``.

    Returns the padded matrix as bf16 bits plus a report of what was done.
    """
    x = np.asarray(x)
    if x.ndim != 2:
        raise ShapeError(f"input must be 2-D, got {x.shape}")
    if target_width not in ALLOWED_WIDTHS:
        raise ShapeError(f"target width {target_width} not in {ALLOWED_WIDTHS}")
    m, in_width = x.shape
    if in_width > target_width:
        raise ShapeError(f"input has {in_width} columns, more than width {target_width}")
    padded_m = math.ceil(m / tile.tm) * tile.tm
    bits = x if x.dtype == np.uint16 else f32_to_bf16(x.astype(np.float32))
    out = np.zeros((padded_m, target_width), dtype=np.uint16)
    out[:m, :in_width] = bits
    report = PaddingReport(m, padded_m, in_width,
                           in_width if out_width is None else out_width, target_width)
    return out, report


def _split(nblocks: int, workers: int) -> list[tuple[int, int]]:
    workers = max(1, min(workers, nblocks))
    bounds = np.linspace(0, nblocks, workers + 1).astype(int)
    return [(int(bounds[i]), int(bounds[i + 1])) for i in range(workers) if bounds[i] < bounds[i + 1]]


def _run(tasks, workers: int):
    if workers == 1 or len(tasks) == 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(t) for t in tasks]
        return [f.result() for f in futures]


def _stage(packed_list) -> np.ndarray:
    k = packed_list[0].k
    n = packed_list[0].n
    staged = np.empty((len(packed_list), k, n), dtype=np.float32)
    for i, p in enumerate(packed_list):
        _kernels.stage_packed(p.data, k, n, staged[i])
    return staged


class FusedEngine:
    """Fused inference/training for one set of bf16 parameters."""

    def __init__(self, params: MlpParams, tile: TileConfig | None = None):
        if params.config.precision is not Precision.BF16:
            raise ValueError("the fused engine runs in bf16 precision only")
        self.params = params
        self.tile = tile or TileConfig()
        self.tile.check_width(params.config.width)
        self._acts = params.config.activation_codes()

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(x)
        width = self.params.config.width
        if x.dtype != np.uint16:
            raise TypeError("fused engine input must be bf16 bits; use pad_batch")
        if x.ndim != 2 or x.shape[1] != width:
            raise ShapeError(f"input must be (M, {width}), got {x.shape}")
        if x.shape[0] == 0 or x.shape[0] % self.tile.tm:
            raise ShapeError(f"row count {x.shape[0]} is not a positive multiple of tm={self.tile.tm}")
        return x

    def inference(self, x: np.ndarray) -> np.ndarray:
        """Run all layers block by block; returns A_nlayers as f32."""
        x = self._check_input(x)
        tm = self.tile.tm
        out = np.empty_like(x)
        packed = self.params.packed

        def task(b0, b1):
            def run():
                staged = _stage(packed)
                _kernels.fused_forward_range(x, staged, self._acts, tm, b0, b1, out)
            return run

        ranges = _split(x.shape[0] // tm, self.tile.workers)
        _run([task(b0, b1) for b0, b1 in ranges], self.tile.workers)
        return bf16_to_f32(out)

    def train(self, x: np.ndarray, target: np.ndarray, mask_cols: int,
              m_valid: int | None = None):
        """Forward + loss + D recurrence fused per block, then the gradient pass.

        Returns ``(loss, Gradients, ForwardCache, BackwardCache)``.
        """
        x = self._check_input(x)
        cfg = self.params.config
        target = np.ascontiguousarray(target, dtype=np.float32)
        if target.shape != x.shape:
            raise ShapeError(f"target {target.shape} != input {x.shape}")
        m, width = x.shape
        m_valid = m if m_valid is None else m_valid
        if not 1 <= mask_cols <= width or not 1 <= m_valid <= m:
            raise ShapeError("mask_cols/m_valid out of range")
        tm = self.tile.tm
        nmat = cfg.nmatrices
        a_cache = np.empty((nmat + 1, m, width), dtype=np.uint16)
        d_cache = np.empty((nmat, m, width), dtype=np.uint16)
        loss_rows = np.empty(m, dtype=np.float32)
        denom = np.float32(m_valid * mask_cols)
        packed, packed_t = self.params.packed, self.params.packed_t

        def task(b0, b1):
            def run():
                staged = _stage(packed)
                staged_t = _stage(packed_t)
                _kernels.fused_train_range(x, target, staged, staged_t, self._acts, tm, b0, b1,
                                           m_valid, mask_cols, denom, a_cache, d_cache, loss_rows)
            return run

        ranges = _split(m // tm, self.tile.workers)
        _run([task(b0, b1) for b0, b1 in ranges], self.tile.workers)
        loss = _kernels.sequential_sum(loss_rows)
        grads = grad_gemm_pass_bits(a_cache, d_cache, self.tile.workers)
        return np.float32(loss), grads, ForwardCache(bits=a_cache), BackwardCache(bits=d_cache)


def _grad_chunks(nmat: int, width: int, workers: int) -> list[list[tuple[int, int, int]]]:
    """Split the (layer, 16-row tile) grid of G into contiguous per-worker runs.

    Adjacent tiles of one layer inside a run are merged into a single job.
    """
    tiles = [(i, k0) for i in range(nmat) for k0 in range(0, width, TN)]
    chunks = []
    for lo, hi in _split(len(tiles), workers):
        jobs: list[tuple[int, int, int]] = []
        for i, k0 in tiles[lo:hi]:
            if jobs and jobs[-1][0] == i and jobs[-1][2] == k0:
                jobs[-1] = (i, jobs[-1][1], k0 + TN)
            else:
                jobs.append((i, k0, k0 + TN))
        chunks.append(jobs)
    return chunks


def grad_gemm_pass_bits(a_cache: np.ndarray, d_cache: np.ndarray, workers: int = 1) -> Gradients:
    """G_i = A_i^T D_{i+1} from stacked bf16 caches.

    Every output element is owned by exactly one job and summed over the batch
    rows in ascending order.
    """
    nmat, _, width = d_cache.shape
    if a_cache.shape[0] < nmat or a_cache.shape[1:] != d_cache.shape[1:]:
        raise StateError("activation and gradient caches are inconsistent")
    grads = [np.zeros((width, width), dtype=np.float32) for _ in range(nmat)]

    def task(jobs):
        def run():
            for i, k0, k1 in jobs:
                _kernels.gemm_at_b_bf16_rows(a_cache[i], d_cache[i], k0, k1, grads[i])
        return run

    chunks = _grad_chunks(nmat, width, workers)
    _run([task(c) for c in chunks], workers)
    return Gradients(grads)


def grad_gemm_pass(cache: ForwardCache, dcache: BackwardCache, workers: int = 1) -> Gradients:
    """Weight gradients from f32 caches holding bf16-representable values."""
    if cache is None or dcache is None or len(dcache) == 0 or len(cache) != len(dcache) + 1:
        raise StateError("caches are incomplete")
    if cache.bits is not None and dcache.bits is not None:
        return grad_gemm_pass_bits(cache.bits, dcache.bits, workers)
    a_bits = np.stack([f32_to_bf16(a) for a in cache.a[:-1]])
    d_bits = np.stack([f32_to_bf16(d) for d in dcache.d])
    if not (np.array_equal(bf16_to_f32(a_bits), np.stack(cache.a[:-1]))
            and np.array_equal(bf16_to_f32(d_bits), np.stack(dcache.d))):
        raise ValueError("cache values are not bf16-representable")
    return grad_gemm_pass_bits(a_bits, d_bits, workers)


def fused_inference(params: MlpParams, x: np.ndarray, tile: TileConfig | None = None) -> np.ndarray:
    return FusedEngine(params, tile).inference(x)


def fused_train(params: MlpParams, x: np.ndarray, target: np.ndarray,
                tile: TileConfig | None = None, mask_cols: int | None = None,
                m_valid: int | None = None):
    mask = params.config.out_width if mask_cols is None else mask_cols
    return FusedEngine(params, tile).train(x, target, mask, m_valid)
