"""Analytical roofline model for fused and non-fused MLP kernels.

Byte counts are per batch row, for bf16 storage (2 bytes per value), with the
L2 cache ignored. ``rows_per_group`` is how many batch rows share one HBM load
of a weight matrix: 64 sub-groups times TM for the SYCL scheme, 128 for the
CUDA scheme.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass

BYTES_BF16 = 2


class Scheme(enum.Enum):
    FUSED_SYCL = "sycl"
    FUSED_CUDA = "cuda"
    UNFUSED = "unfused"


@dataclass(frozen=True)
class DeviceProfile:
    name: str
    hbm_bw_Bps: float = 2e12
    # aggregate SLM bandwidth implied by the device's 393 Tflop/s SLM-bound ceiling
    slm_bw_Bps: float = 49.9e12
    peak_bf16_flops: float = 838e12
    peak_f32_flops: float = 52e12

    def __post_init__(self):
        for field_name in ("hbm_bw_Bps", "slm_bw_Bps", "peak_bf16_flops", "peak_f32_flops"):
            if not getattr(self, field_name) > 0:
                raise ValueError(f"{field_name} must be positive")


INTEL_MAX_1550 = DeviceProfile("Intel Data Center GPU Max 1550")
# compute peak from the public H100 PCIe datasheet (dense bf16); shared-memory
# bandwidth is not modelled for this device
H100_PCIE = DeviceProfile("Nvidia H100 PCIe", hbm_bw_Bps=2e12, slm_bw_Bps=math.inf,
                          peak_bf16_flops=756e12, peak_f32_flops=51e12)

CUDA_ROWS_PER_GROUP = 128
CUDA_OI_SLM = 25.6


@dataclass(frozen=True)
class KernelModel:
    scheme: Scheme = Scheme.FUSED_SYCL
    width: int = 64
    tm: int = 8
    subgroups_per_group: int = 64  # 1024 work-items / sub-group size 16

    @property
    def rows_per_group(self) -> int:
        if self.scheme is Scheme.FUSED_CUDA:
            return CUDA_ROWS_PER_GROUP
        return self.subgroups_per_group * self.tm

    def __post_init__(self):
        if self.tm < 1 or self.width < 1 or self.subgroups_per_group < 1:
            raise ValueError("tm, width and subgroups_per_group must be positive")


@dataclass(frozen=True)
class OiReport:
    flops_per_byte_hbm: float
    flops_per_byte_slm: float
    peak_flops: float


def _check_layers(nlayers: int) -> None:
    if nlayers < 2:
        raise ValueError(f"nlayers must be >= 2, got {nlayers}")


def _gemm_flops(m: KernelModel) -> float:
    return 2.0 * m.width * m.width  # per batch row


def _row_bytes(m: KernelModel) -> float:
    return float(m.width * BYTES_BF16)


def _weight_bytes(m: KernelModel) -> float:
    return m.width * m.width * BYTES_BF16 / m.rows_per_group


def oi_layer(model: KernelModel) -> float:
    """Flops per HBM byte of one hidden layer (weights are the only traffic)."""
    if model.scheme is Scheme.UNFUSED:
        raise ValueError("per-layer fused intensity is undefined for the unfused scheme; use oi_unfused")
    return _gemm_flops(model) / _weight_bytes(model)


def oi_inference(model: KernelModel, nlayers: int) -> float:
    """Whole inference: input load, output store and one weight load per layer."""
    _check_layers(nlayers)
    if model.scheme is Scheme.UNFUSED:
        return oi_unfused(nlayers, model.width)
    n = nlayers - 1
    flops = n * _gemm_flops(model)
    bytes_ = 2 * _row_bytes(model) + n * _weight_bytes(model)
    return flops / bytes_


def oi_train_forward(model: KernelModel, nlayers: int) -> float:
    """Training forward pass: inference traffic plus a store of every A_i.

    At width 64 this equals ``512(n-1)/(9n+7)`` (SYCL, TM=8) and
    ``128(n-1)/(3n+1)`` (CUDA).
    """
    _check_layers(nlayers)
    if model.scheme is Scheme.UNFUSED:
        raise ValueError("training-forward intensity is modelled for fused schemes only")
    n = nlayers - 1
    flops = n * _gemm_flops(model)
    bytes_ = 2 * _row_bytes(model) + n * _weight_bytes(model) + n * _row_bytes(model)
    return flops / bytes_


def oi_train_forward_printed(scheme: Scheme, nlayers: int, alternative: bool = False) -> float:
    """The closed forms for width 64 and TM=8, optionally with a denominator in n-1.

    ``alternative=True`` gives ``512(n-1)/(9(n-1)+7)`` for SYCL (49.2 at n=6)
    and ``128(n-1)/(3(n-1)+1)`` for CUDA.
    """
    _check_layers(nlayers)
    k = nlayers - 1 if alternative else nlayers
    if scheme is Scheme.FUSED_SYCL:
        return 512 * (nlayers - 1) / (9 * k + 7)
    if scheme is Scheme.FUSED_CUDA:
        return 128 * (nlayers - 1) / (3 * k + 1)
    raise ValueError("printed formulas exist for the fused schemes only")


def train_full_bytes(model: KernelModel, nlayers: int) -> float:
    n = nlayers - 1
    row = _row_bytes(model)
    return (row                              # input
            + n * row + n * row              # store A_2..A_n and D_2..D_n
            + 2 * n * _weight_bytes(model)   # B_i and B_i^T
            + 2 * n * row)                   # reload A_i, D_i for the G_i products


def train_gemm_count(nlayers: int) -> int:
    """(n-1) forward, (n-2) back-propagation and (n-1) weight-gradient GEMMs."""
    return 3 * nlayers - 4


def oi_train_full(model: KernelModel, nlayers: int) -> float:
    _check_layers(nlayers)
    if model.scheme is Scheme.UNFUSED:
        raise ValueError("full-training intensity is modelled for fused schemes only")
    return train_gemm_count(nlayers) * _gemm_flops(model) / train_full_bytes(model, nlayers)


def oi_unfused(nlayers: int, width: int = 64) -> float:
    """Non-fused inference: each layer loads A_i and stores A_{i+1}; weights neglected."""
    _check_layers(nlayers)
    return 2.0 * width * width / (2 * width * BYTES_BF16)


def oi_slm(model: KernelModel) -> float:
    """Flops per byte of shared-local-memory traffic.

    SYCL: per sub-group and layer, the full weight matrix is read once and a
    1/subgroups share of it is written while staging.
    """
    if model.scheme is Scheme.FUSED_CUDA:
        return CUDA_OI_SLM
    if model.scheme is Scheme.UNFUSED:
        raise ValueError("the unfused scheme does not stage weights in SLM")
    w_bytes = model.width * model.width * BYTES_BF16
    flops = 2.0 * model.width * model.width * model.tm
    return flops / (w_bytes + w_bytes / model.subgroups_per_group)


def peak_estimate(oi_hbm: float, oi_slm: float, profile: DeviceProfile) -> OiReport:
    peak = min(profile.peak_bf16_flops, oi_hbm * profile.hbm_bw_Bps, oi_slm * profile.slm_bw_Bps)
    return OiReport(oi_hbm, oi_slm, peak)


def register_working_set(tm: int, width: int, tk: int, tn: int, s_a: int, s_b: int, s_c: int) -> int:
    """Bytes per sub-group: a TM-row input block, a TM-row f32 output block and one weight tile."""
    return tm * width * s_a + tm * width * s_c + tk * tn * s_b


MODES = ("inference", "train_forward", "train_full")
CSV_COLUMNS = ("scheme", "nlayers", "tm", "oi_hbm", "oi_slm", "peak_flops")


def _oi_for_mode(model: KernelModel, nlayers: int, mode: str) -> float:
    if mode == "inference":
        return oi_inference(model, nlayers)
    if mode == "train_forward":
        return oi_train_forward(model, nlayers)
    if mode == "train_full":
        return oi_train_full(model, nlayers)
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def roofline_rows(nlayers_range=range(2, 17), tms=(8,), mode: str = "train_full",
                  schemes=(Scheme.FUSED_SYCL, Scheme.FUSED_CUDA),
                  profiles: dict | None = None) -> list[dict]:
    """Theoretical peak table, one row per (scheme, nlayers, tm)."""
    profiles = profiles or {Scheme.FUSED_SYCL: INTEL_MAX_1550, Scheme.FUSED_CUDA: H100_PCIE,
                            Scheme.UNFUSED: INTEL_MAX_1550}
    rows = []
    for scheme in schemes:
        scheme_tms = tms if scheme is Scheme.FUSED_SYCL else (8,)
        for tm in scheme_tms:
            model = KernelModel(scheme, tm=tm)
            for n in nlayers_range:
                if scheme is Scheme.UNFUSED:
                    hbm, slm = oi_unfused(n), math.inf
                else:
                    hbm, slm = _oi_for_mode(model, n, mode), oi_slm(model)
                report = peak_estimate(hbm, slm, profiles[scheme])
                rows.append({"scheme": scheme.value, "nlayers": n, "tm": tm,
                             "oi_hbm": hbm, "oi_slm": slm, "peak_flops": report.peak_flops})
    return rows


def rows_to_csv(rows: list[dict], stream=None) -> str:
    stream = stream or io.StringIO()
    writer = csv.DictWriter(stream, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return stream.getvalue() if isinstance(stream, io.StringIO) else ""
