"""Network definition and the unfused reference implementation.

The reference path materializes every intermediate matrix (C_i, A_i, D_i) and
is the correctness oracle for :mod:`fusedmlp.fused`.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from fusedmlp.numeric import (
    PackedWeights,
    ShapeError,
    StateError,
    bf16_to_f32,
    f32_to_bf16,
    gemm_at_b,
    gemm_f32,
    pack_weights,
)

ALLOWED_WIDTHS = (16, 32, 64, 128)


class Activation(enum.Enum):
    LINEAR = "linear"
    RELU = "relu"

    @property
    def code(self) -> int:
        return 1 if self is Activation.RELU else 0

    def forward(self, c: np.ndarray) -> np.ndarray:
        if self is Activation.RELU:
            # NaN and -0.0 both map to +0.0, matching the fused kernels
            return np.where(c > 0, c, np.float32(0)).astype(np.float32)
        return c

    def backward(self, a: np.ndarray, d: np.ndarray) -> np.ndarray:
        """sigma_b(A, D): D masked where the post-activation value is not positive."""
        if self is Activation.RELU:
            return np.where(a > 0, d, np.float32(0)).astype(np.float32)
        return d


class Precision(enum.Enum):
    F32 = "f32"
    BF16 = "bf16"


@dataclass(frozen=True)
class MlpConfig:
    width: int = 64
    nlayers: int = 6
    in_width: int | None = None
    out_width: int | None = None
    hidden_activation: Activation = Activation.RELU
    output_activation: Activation = Activation.LINEAR
    precision: Precision = Precision.BF16

    def __post_init__(self):
        if self.width not in ALLOWED_WIDTHS:
            raise ValueError(f"width must be one of {ALLOWED_WIDTHS}, got {self.width}")
        if self.nlayers < 2:
            raise ValueError(f"nlayers must be >= 2, got {self.nlayers}")
        if self.in_width is None:
            object.__setattr__(self, "in_width", self.width)
        if self.out_width is None:
            object.__setattr__(self, "out_width", self.width)
        for name in ("in_width", "out_width"):
            v = getattr(self, name)
            if not 1 <= v <= self.width:
                raise ValueError(f"{name}={v} must lie in [1, {self.width}]")

    @property
    def nmatrices(self) -> int:
        return self.nlayers - 1

    def activations(self) -> list[Activation]:
        return [self.hidden_activation] * (self.nmatrices - 1) + [self.output_activation]

    def activation_codes(self) -> np.ndarray:
        return np.array([a.code for a in self.activations()], dtype=np.int64)

    @property
    def n_weights(self) -> int:
        return self.nmatrices * self.width * self.width


@dataclass
class MlpParams:
    """Per-layer weights B_1..B_{nlayers-1}.

    ``weights`` holds ``uint16`` bf16 patterns in BF16 precision and ``float32``
    arrays in F32 precision. Packed copies exist only for BF16 and are rebuilt
    by :meth:`set_weights`.
    """

    config: MlpConfig
    weights: list[np.ndarray]
    packed: list[PackedWeights] = field(default_factory=list)
    packed_t: list[PackedWeights] = field(default_factory=list)

    def __post_init__(self):
        self.set_weights(self.weights)

    def set_weights(self, weights: list[np.ndarray]) -> None:
        cfg = self.config
        if len(weights) != cfg.nmatrices:
            raise ShapeError(f"expected {cfg.nmatrices} weight matrices, got {len(weights)}")
        dtype = np.uint16 if cfg.precision is Precision.BF16 else np.float32
        out = []
        for w in weights:
            w = np.ascontiguousarray(w)
            if w.shape != (cfg.width, cfg.width):
                raise ShapeError(f"weight shape {w.shape} != {(cfg.width, cfg.width)}")
            if w.dtype != dtype:
                raise TypeError(f"{cfg.precision.value} weights must be {np.dtype(dtype).name}")
            out.append(w)
        self.weights = out
        if cfg.precision is Precision.BF16:
            self.packed = [pack_weights(w) for w in out]
            self.packed_t = [pack_weights(w, transpose=True) for w in out]
        else:
            self.packed, self.packed_t = [], []

    def weights_f32(self) -> list[np.ndarray]:
        if self.config.precision is Precision.BF16:
            return [bf16_to_f32(w) for w in self.weights]
        return [w.copy() for w in self.weights]

    @classmethod
    def from_f32(cls, config: MlpConfig, weights: list[np.ndarray]) -> "MlpParams":
        """Build params from f32 values, rounding to the storage precision."""
        ws = [np.asarray(w, dtype=np.float32) for w in weights]
        if config.precision is Precision.BF16:
            ws = [f32_to_bf16(w) for w in ws]
        return cls(config, ws)


class _LayerCache:
    """List of per-layer f32 matrices, optionally backed by a stacked bf16 array.

    The bf16-backed form widens a layer only when it is read.
    """

    def __init__(self, mats: list[np.ndarray] | None = None, bits: np.ndarray | None = None):
        if (mats is None) == (bits is None):
            raise ValueError("give exactly one of mats or bits")
        self._mats = mats
        self.bits = bits

    def _get(self) -> list[np.ndarray]:
        if self._mats is None:
            self._mats = [bf16_to_f32(b) for b in self.bits]
        return self._mats

    def __len__(self) -> int:
        return len(self._mats) if self._mats is not None else len(self.bits)


class ForwardCache(_LayerCache):
    @property
    def a(self) -> list[np.ndarray]:  # A_1..A_nlayers
        return self._get()


class BackwardCache(_LayerCache):
    @property
    def d(self) -> list[np.ndarray]:  # D_2..D_nlayers
        return self._get()

    def layer(self, i: int) -> np.ndarray:
        """D_{i+2} as f32 without widening the other layers."""
        if self._mats is not None:
            return self._mats[i]
        return bf16_to_f32(self.bits[i])


@dataclass
class Gradients:
    g: list[np.ndarray]  # G_1..G_{nlayers-1}, f32


def xavier_scale(width: int) -> float:
    return math.sqrt(6.0 / (2 * width))


def init_params(config: MlpConfig, seed: int) -> MlpParams:
    """Xavier-uniform weights from a seeded PCG64 stream."""
    rng = np.random.default_rng(seed)
    s = np.float32(xavier_scale(config.width))
    weights = [
        rng.uniform(-s, s, size=(config.width, config.width)).astype(np.float32)
        for _ in range(config.nmatrices)
    ]
    # float32 rounding can push a sample just past s
    weights = [np.clip(w, -s, s) for w in weights]
    return MlpParams.from_f32(config, weights)


def _quantize(x: np.ndarray, precision: Precision) -> np.ndarray:
    if precision is Precision.BF16:
        return bf16_to_f32(f32_to_bf16(x))
    return x


def _input_f32(x: np.ndarray, config: MlpConfig) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != config.width or x.shape[0] < 1:
        raise ShapeError(f"input must be (M>=1, {config.width}), got {x.shape}")
    if x.dtype == np.uint16:
        return bf16_to_f32(x)
    return _quantize(x.astype(np.float32), config.precision)


def forward_reference(params: MlpParams, x: np.ndarray, want_cache: bool = False):
    """Layer-by-layer inference: C_i = A_i B_i, A_{i+1} = sigma(C_i).

    In BF16 precision every A_i is rounded to bf16 before the next product.
    Returns ``(A_nlayers as f32, ForwardCache or None)``.
    """
    cfg = params.config
    a = _input_f32(x, cfg)
    cache = [a] if want_cache else None
    for w, act in zip(params.weights_f32(), cfg.activations()):
        c = gemm_f32(a, w)
        a = _quantize(act.forward(c), cfg.precision)
        if cache is not None:
            cache.append(a)
    return a, (ForwardCache(cache) if cache is not None else None)


def loss_l2(prediction: np.ndarray, target: np.ndarray, mask_cols: int, m_valid: int | None = None):
    """Mean squared error over the first ``mask_cols`` columns and ``m_valid`` rows.

    Returns ``(loss, d_nlayers)`` where ``d_nlayers = 2 * Diff / (M * mask_cols)``.
    The loss is summed row by row (columns ascending) and then over rows in
    ascending order, all in f32.
    """
    prediction = np.asarray(prediction, dtype=np.float32)
    target = np.asarray(target, dtype=np.float32)
    if prediction.shape != target.shape or prediction.ndim != 2:
        raise ShapeError(f"prediction {prediction.shape} and target {target.shape} differ")
    m, width = prediction.shape
    if not 1 <= mask_cols <= width:
        raise ShapeError(f"mask_cols={mask_cols} outside [1, {width}]")
    m_valid = m if m_valid is None else m_valid
    if not 1 <= m_valid <= m:
        raise ShapeError(f"m_valid={m_valid} outside [1, {m}]")
    denom = np.float32(m_valid * mask_cols)
    diff = prediction - target
    diff[:, mask_cols:] = 0
    diff[m_valid:, :] = 0
    elems = (diff * diff) / denom
    d = (np.float32(2) * diff) / denom
    row_sums = np.zeros(m, dtype=np.float32)
    for c in range(width):
        row_sums += elems[:, c]
    loss = np.cumsum(row_sums, dtype=np.float32)[-1]
    return np.float32(loss), d


def backward_reference(params: MlpParams, cache: ForwardCache, d_nlayers: np.ndarray):
    """D recurrence followed by a separate pass for the weight gradients."""
    cfg = params.config
    if cache is None or len(cache) != cfg.nlayers:
        raise StateError("forward cache must hold all nlayers activations")
    a = cache.a
    if d_nlayers.shape != a[-1].shape:
        raise ShapeError(f"d_nlayers {d_nlayers.shape} != output {a[-1].shape}")
    acts = cfg.activations()
    weights = params.weights_f32()
    d_top = _quantize(acts[-1].backward(a[-1], np.asarray(d_nlayers, dtype=np.float32)), cfg.precision)
    ds = [d_top]
    for i in range(cfg.nmatrices - 1, 0, -1):
        # D_{i+1} from D_{i+2} and B_{i+1}, zero-based
        prop = gemm_f32(ds[0], np.ascontiguousarray(weights[i].T))
        ds.insert(0, _quantize(acts[i - 1].backward(a[i], prop), cfg.precision))
    grads = [gemm_at_b(a[i], ds[i]) for i in range(cfg.nmatrices)]
    return Gradients(grads), BackwardCache(ds)


def train_step_reference(params: MlpParams, x: np.ndarray, target: np.ndarray,
                         mask_cols: int, m_valid: int | None = None):
    """Forward, L2 loss and backward. No optimizer update."""
    out, cache = forward_reference(params, x, want_cache=True)
    loss, d = loss_l2(out, target, mask_cols, m_valid)
    grads, _ = backward_reference(params, cache, d)
    return loss, grads


def input_gradient(params: MlpParams, dcache: BackwardCache) -> np.ndarray:
    """dLoss/dA_1 = D_2 B_1^T in f32; feeds trainable input encodings."""
    w1 = params.weights_f32()[0]
    return gemm_f32(dcache.layer(0), np.ascontiguousarray(w1.T))
