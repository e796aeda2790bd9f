"""Finite-difference verification of analytic gradients.

The checker perturbs every scalar entry of the given parameters in place,
re-evaluates the loss, and compares the central difference against the
gradient from one taped backward pass. It is O(2 * n_params) forward
evaluations, so keep the models tiny.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_relative_error: float
    parameter_count: int
    worst_parameter: str = ""

    def ok(self, tol: float = 1e-4) -> bool:
        return self.max_relative_error < tol


def _named(params) -> list[tuple[str, Tensor]]:
    if isinstance(params, Tensor):
        return [("theta", params)]
    out = []
    for i, p in enumerate(params):
        if isinstance(p, tuple):
            out.append((p[0], p[1]))
        else:
            out.append((f"theta[{i}]", p))
    return out


def finite_difference_check(
    f: Callable[[], Tensor],
    params: Tensor | Sequence,
    h: float = 1e-5,
    retry_h: float = 1e-6,
) -> GradCheckReport:
    """Compare analytic and central-difference gradients of a scalar loss.

    f re-evaluates the loss from the current parameter values and must be
    deterministic (fix any rng draws outside it). The relative error uses
    max(|analytic|, |numeric|, 1e-3) as the denominator so that near-zero
    gradients are compared absolutely rather than blowing up the ratio.

    Entries whose error at the base step is suspicious are re-probed at
    retry_h: truncation error (large third derivatives, e.g. norms with
    small eps) collapses under a smaller step, while a wrong analytic
    gradient disagrees at every scale.
    """
    named = _named(params)
    for _, p in named:
        if p.data.dtype != np.float64:
            raise ValueError("gradient checks require float64 parameters")
        p.grad = None

    out = f()
    if out.data.size != 1:
        raise ValueError("f must return a scalar")
    out.backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in named}

    def probe(flat, i, step):
        orig = flat[i]
        flat[i] = orig + step
        fp = float(f().data)
        flat[i] = orig - step
        fm = float(f().data)
        flat[i] = orig
        return (fp - fm) / (2.0 * step)

    def rel_err(a, n):
        return abs(a - n) / max(abs(a), abs(n), 1e-3)

    worst = 0.0
    worst_name = ""
    count = 0
    for name, p in named:
        flat = p.data.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            rel = rel_err(a_flat[i], probe(flat, i, h))
            if rel > 1e-5:
                rel = min(rel, rel_err(a_flat[i], probe(flat, i, retry_h)))
            if rel > worst:
                worst = rel
                worst_name = f"{name}[{i}]"
            count += 1
        p.grad = None

    return GradCheckReport(max_relative_error=worst, parameter_count=count,
                           worst_parameter=worst_name)
