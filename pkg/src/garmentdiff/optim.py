"""AdamW with decoupled weight decay.

The decay term is applied directly to the parameter value (using the
pre-update value), never through the moment estimates, so wd=0 reduces
exactly to Adam and zero-gradient steps decay by (1 - lr*wd) per step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .tensor import Parameter


@dataclass
class OptimizerState:
    lr: float = 1e-4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def create(cls, params: list[Parameter], lr: float = 1e-4, weight_decay: float = 0.01,
               beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> "OptimizerState":
        state = cls(lr=lr, weight_decay=weight_decay, beta1=beta1, beta2=beta2, eps=eps)
        for p in params:
            state.m[p.name] = np.zeros_like(p.data)
            state.v[p.name] = np.zeros_like(p.data)
        return state


def adamw_step(params: list[Parameter], state: OptimizerState):
    """One update over ``params``; gradients must already be populated
    (a missing gradient is treated as zero)."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p in params:
        if p.name not in state.m:
            raise ValidationError(f"optimizer state not initialized for parameter {p.name!r}")
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = state.m[p.name]
        v = state.v[p.name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        update = state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        decay = state.lr * state.weight_decay * p.data
        p.data = p.data - update - decay
