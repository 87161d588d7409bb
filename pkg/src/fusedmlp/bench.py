"""Function-approximation benchmark: learn y = sin(x W + b) for R^64 -> R^64."""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from fusedmlp.fused import FusedEngine, TileConfig, pad_batch
from fusedmlp.model import MlpConfig, Precision, forward_reference, init_params, loss_l2, train_step_reference
from fusedmlp.optim import OptimizerState, optimizer_step
from fusedmlp.roofline import train_gemm_count

CSV_COLUMNS = ("mode", "M", "niter", "seconds", "flops_per_sec", "final_loss")


def bench_niter(m: int) -> int:
    """Iterations per batch size: max(floor(1000 * 2^18 / M), 250)."""
    if m < 1:
        raise ValueError("batch size must be positive")
    return max(1000 * 2**18 // m, 250)


def gemms_per_iter(mode: str, nlayers: int) -> int:
    return nlayers - 1 if mode == "inference" else train_gemm_count(nlayers)


def flops_per_iter(mode: str, width: int, m: int, nlayers: int) -> int:
    return 2 * width * width * m * gemms_per_iter(mode, nlayers)


@dataclass
class BenchConfig:
    width: int = 64
    in_width: int = 64
    out_width: int = 64
    nlayers: int = 6
    batch_sizes: list[int] = field(default_factory=lambda: [2**e for e in range(11, 23)])
    precision: Precision = Precision.BF16
    tm: int = 8
    workers: int = 1
    iters: int | None = None
    lr: float = 1e-3
    seed: int = 0
    max_batch: int | None = None
    modes: tuple[str, ...] = ("inference", "training")

    def mlp_config(self) -> MlpConfig:
        return MlpConfig(width=self.width, nlayers=self.nlayers, in_width=self.in_width,
                         out_width=self.out_width, precision=self.precision)


class TargetFunction:
    """Fixed non-linear map y = sin(x W + b) with seeded W, b.

    W has fan-in scaled entries N(0, 1/in_width); b is a uniform phase in
    [-pi, pi], so different outputs sit on different parts of the sine.
    """

    def __init__(self, in_width: int, out_width: int, seed: int):
        rng = np.random.default_rng([seed, 1])
        self.w = (rng.standard_normal((in_width, out_width)) * np.sqrt(1.0 / in_width)).astype(np.float32)
        self.b = rng.uniform(-np.pi, np.pi, out_width).astype(np.float32)

    def sample(self, m: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
        rng = np.random.default_rng([seed, 2, m])
        x = rng.uniform(-1.0, 1.0, (m, self.w.shape[0])).astype(np.float32)
        return x, np.sin(x.astype(np.float64) @ self.w + self.b).astype(np.float32)


class Trainer:
    """Full-batch training on one batch with either the fused engine or the reference path."""

    def __init__(self, cfg: BenchConfig, x: np.ndarray, y: np.ndarray):
        self.cfg = cfg
        self.mlp_cfg = cfg.mlp_config()
        self.params = init_params(self.mlp_cfg, cfg.seed)
        self.tile = TileConfig(tm=cfg.tm, workers=cfg.workers)
        self.x, report = pad_batch(x, self.tile, cfg.width)
        self.m_valid = report.original_m
        self.target = np.zeros(self.x.shape, dtype=np.float32)
        self.target[:y.shape[0], :y.shape[1]] = y
        self.opt = OptimizerState("adam", lr=cfg.lr)

    def step(self) -> float:
        if self.mlp_cfg.precision is Precision.BF16:
            loss, grads, _, _ = FusedEngine(self.params, self.tile).train(
                self.x, self.target, self.cfg.out_width, self.m_valid)
        else:
            loss, grads = train_step_reference(self.params, self.x, self.target,
                                               self.cfg.out_width, self.m_valid)
        self.params = optimizer_step(self.opt, self.params, grads)
        return float(loss)

    def infer(self) -> np.ndarray:
        if self.mlp_cfg.precision is Precision.BF16:
            return FusedEngine(self.params, self.tile).inference(self.x)
        return forward_reference(self.params, self.x)[0]

    def loss(self) -> float:
        out = self.infer()
        return float(loss_l2(out, self.target, self.cfg.out_width, self.m_valid)[0])


def run_function_approx_bench(cfg: BenchConfig, csv_path=None) -> list[dict]:
    """Time inference and training for every batch size; optionally write CSV."""
    target_fn = TargetFunction(cfg.in_width, cfg.out_width, cfg.seed)
    rows = []
    for m in cfg.batch_sizes:
        if cfg.max_batch is not None and m > cfg.max_batch:
            continue
        niter = cfg.iters if cfg.iters is not None else bench_niter(m)
        x, y = target_fn.sample(m, cfg.seed)
        trainer = Trainer(cfg, x, y)
        for mode in cfg.modes:
            if mode == "inference":
                trainer.infer()  # warm-up and kernel compilation
                t0 = time.perf_counter()
                for _ in range(niter):
                    trainer.infer()
                seconds = time.perf_counter() - t0
                final = trainer.loss()
            elif mode == "training":
                t0 = time.perf_counter()
                for _ in range(niter):
                    final = trainer.step()
                seconds = time.perf_counter() - t0
            else:
                raise ValueError(f"unknown mode {mode!r}")
            flops = flops_per_iter(mode, cfg.width, trainer.x.shape[0], cfg.nlayers) * niter
            rows.append({"mode": mode, "M": m, "niter": niter, "seconds": seconds,
                         "flops_per_sec": flops / seconds if seconds > 0 else float("inf"),
                         "final_loss": final})
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            write_bench_csv(rows, cfg.nlayers, fh)
    return rows


def bench_csv_preamble(nlayers: int) -> str:
    return (f"# flops_per_iter = 2*width^2*M*gemms; gemms: inference={gemms_per_iter('inference', nlayers)}"
            f" (nlayers-1), training={gemms_per_iter('training', nlayers)} (3*nlayers-4)\n")


def write_bench_csv(rows: list[dict], nlayers: int, stream=None) -> str:
    stream = stream or io.StringIO()
    stream.write(bench_csv_preamble(nlayers))
    writer = csv.DictWriter(stream, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return stream.getvalue() if isinstance(stream, io.StringIO) else ""
