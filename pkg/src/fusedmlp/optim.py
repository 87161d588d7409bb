"""SGD and Adam with f32 master copies of bf16 weights."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fusedmlp.model import Gradients, MlpParams
from fusedmlp.numeric import ShapeError


@dataclass
class OptimizerState:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    master: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.kind!r}")

    def update(self, key, value: np.ndarray, grad: np.ndarray) -> None:
        """In-place update of one f32 tensor. Call ``advance`` once per step first."""
        if value.shape != grad.shape:
            raise ShapeError(f"parameter {key!r}: {value.shape} vs gradient {grad.shape}")
        grad = grad.astype(value.dtype, copy=False)
        if self.kind == "sgd":
            value -= value.dtype.type(self.lr) * grad
            return
        if key not in self.m:
            self.m[key] = np.zeros_like(value)
            self.v[key] = np.zeros_like(value)
        m, v = self.m[key], self.v[key]
        m *= self.beta1
        m += (1.0 - self.beta1) * grad
        v *= self.beta2
        v += (1.0 - self.beta2) * (grad * grad)
        bc1 = 1.0 - self.beta1 ** self.step
        bc2 = 1.0 - self.beta2 ** self.step
        value -= (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)

    def advance(self) -> None:
        self.step += 1


def optimizer_step(state: OptimizerState, params: MlpParams, grads: Gradients) -> MlpParams:
    """One update of every weight matrix; returns freshly rounded and packed params.

    The optimizer keeps f32 master weights so updates smaller than a bf16 ulp
    still accumulate.
    """
    if len(grads.g) != len(params.weights):
        raise ShapeError(f"{len(grads.g)} gradients for {len(params.weights)} weight matrices")
    state.advance()
    current = params.weights_f32()
    for i, (w, g) in enumerate(zip(current, grads.g)):
        key = ("mlp", i)
        if key not in state.master:
            state.master[key] = w
        state.update(key, state.master[key], g)
    return MlpParams.from_f32(params.config, [state.master[("mlp", i)] for i in range(len(current))])
