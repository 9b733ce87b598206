"""Finite-difference verification of analytic gradients.

``grad_check`` compares the gradients produced by ``backward()`` against
central differences, entry-by-entry on a deterministic sample of entries
per parameter, and reports the worst relative error per parameter. The
loss closure must be pure: same parameters in, same scalar out.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import RngState
from .tensor import Parameter


@dataclass
class GradCheckReport:
    per_param: dict = field(default_factory=dict)

    @property
    def max_rel_err(self) -> float:
        return max(self.per_param.values()) if self.per_param else 0.0

    def worst(self) -> tuple[str, float]:
        name = max(self.per_param, key=self.per_param.get)
        return name, self.per_param[name]


def _rel_err(a: float, n: float) -> float:
    denom = max(abs(a), abs(n))
    if denom < 1e-12:
        return 0.0
    return abs(a - n) / denom


def grad_check(loss_fn, params: list[Parameter], h: float = 1e-4,
               max_entries_per_param: int = 4, seed: int = 0,
               grad_tweak=None) -> GradCheckReport:
    """Run ``loss_fn()`` (a closure over ``params``) and compare analytic
    gradients to central differences at up to ``max_entries_per_param``
    sampled entries of each parameter.

    ``grad_tweak`` is a test hook: called with (name, grad_value) before
    comparison so a harness can corrupt a gradient and prove the check
    actually fails.
    """
    for p in params:
        p.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {p.name: (np.array(p.grad) if p.grad is not None else np.zeros_like(p.data))
                for p in params}
    for p in params:
        p.zero_grad()

    rng = RngState(seed)
    report = GradCheckReport()
    for p in params:
        n = p.data.size
        k = min(max_entries_per_param, n)
        if k == n:
            entries = np.arange(n)
        else:
            entries = np.unique(rng.integers(0, n, shape=(k,)))
        flat = p.data.reshape(-1)
        worst = 0.0
        for idx in entries:
            orig = flat[idx]
            flat[idx] = orig + h
            fplus = loss_fn().item()
            flat[idx] = orig - h
            fminus = loss_fn().item()
            flat[idx] = orig
            numeric = (fplus - fminus) / (2.0 * h)
            a = float(analytic[p.name].reshape(-1)[idx])
            if grad_tweak is not None:
                a = grad_tweak(p.name, a)
            worst = max(worst, _rel_err(a, numeric))
        report.per_param[p.name] = worst
    return report
