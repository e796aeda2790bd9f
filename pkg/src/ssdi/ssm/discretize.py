"""Zero-order-hold discretization of a diagonal continuous-time system.

This is the reference (array-level) form of what the scan kernels fuse
inline. For diagonal A the matrix exponential reduces to elementwise
exp, and the input operator to phi(z) = (exp(z) - 1) / z times delta * B.
Near z = 0 the ratio is replaced by its two-term series 1 + z/2, whose
truncation error z^2/6 is below double rounding at the 1e-8 switch point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError, DomainError


@dataclass
class DiscretizedPair:
    A_bar: np.ndarray  # (L, H, N) per-step state decay, in (0, 1) for stable A
    B_bar: np.ndarray  # (L, H, N) per-step input weight


def discretize(A: np.ndarray, B: np.ndarray, delta: np.ndarray) -> DiscretizedPair:
    """ZOH-discretize diag(A) per head: A (H, N), B (L, N), delta (L, H)."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or delta.ndim != 2:
        raise DimensionError("discretize expects A (H, N), B (L, N), delta (L, H)")
    H, N = A.shape
    L = delta.shape[0]
    if delta.shape != (L, H) or B.shape != (L, N):
        raise DimensionError(
            f"shape mismatch: A {A.shape}, B {B.shape}, delta {delta.shape}")
    if np.any(delta <= 0.0):
        raise DomainError("step sizes must be strictly positive")

    z = delta[:, :, None] * A[None, :, :]            # (L, H, N)
    # exp keeps the decay strictly positive even where expm1(z) rounds to -1
    A_bar = np.exp(z)
    em = np.expm1(z)
    small = np.abs(z) < 1e-8
    phi = np.where(small, 1.0 + 0.5 * z, em / np.where(small, 1.0, z))
    B_bar = phi * delta[:, :, None] * B[:, None, :]
    return DiscretizedPair(A_bar=A_bar, B_bar=B_bar)
