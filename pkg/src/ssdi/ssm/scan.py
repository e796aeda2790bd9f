"""Backend selection and the differentiable scan operation.

The compiled kernel is preferred; the numpy twin loads when the extension
is missing or when SSDI_SCAN_BACKEND=python is set. Both backends are
importable side by side for parity tests and benchmarks.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

import numpy as np

from ..errors import DimensionError
from ..numerics.tensor import Tensor, as_tensor
from . import _scan_np

try:
    from . import _scan_cy
except ImportError:
    _scan_cy = None

_BACKENDS = {"python": _scan_np}
if _scan_cy is not None:
    _BACKENDS["compiled"] = _scan_cy

_env = os.environ.get("SSDI_SCAN_BACKEND", "").strip().lower()
if _env and _env in _BACKENDS:
    _ACTIVE = _env
elif _env and _env not in _BACKENDS:
    raise ImportError(f"SSDI_SCAN_BACKEND={_env!r} is not available; have {sorted(_BACKENDS)}")
else:
    _ACTIVE = "compiled" if "compiled" in _BACKENDS else "python"


def active_backend() -> str:
    return _ACTIVE


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


@contextmanager
def use_backend(name: str):
    global _ACTIVE
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {sorted(_BACKENDS)}")
    prev = _ACTIVE
    _ACTIVE = name
    try:
        yield
    finally:
        _ACTIVE = prev


def _c(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a)


def ssm_scan(delta, A, Bm, Cm, x) -> Tensor:
    """Run the selective-scan recurrence; differentiable in all five inputs.

    Shapes: delta (B, L, H), A (H, N) diagonal entries, Bm (B, L, N),
    Cm (B, L, N), x (B, L, H); returns y (B, L, H). The ZOH discretization
    happens inside the kernel; callers supply raw (positive) step sizes.
    """
    delta = as_tensor(delta)
    A = as_tensor(A)
    Bm = as_tensor(Bm)
    Cm = as_tensor(Cm)
    x = as_tensor(x)
    if delta.ndim != 3 or x.ndim != 3 or A.ndim != 2:
        raise DimensionError("ssm_scan expects delta/x (B, L, H) and A (H, N)")
    B, L, H = delta.shape
    N = A.shape[1]
    if A.shape[0] != H or x.shape != (B, L, H):
        raise DimensionError("delta, x, and A disagree on head count")
    if Bm.shape != (B, L, N) or Cm.shape != (B, L, N):
        raise DimensionError("B/C projections must be (B, L, N)")
    # the compiled kernel is monomorphic per call; settle mixed inputs on
    # their common type up front so both backends behave identically
    dtype = np.result_type(delta.data, A.data, Bm.data, Cm.data, x.data)
    kernel = _BACKENDS[_ACTIVE]

    dd, Ad, Bd, Cd, xd = (_c(t.data.astype(dtype, copy=False))
                          for t in (delta, A, Bm, Cm, x))
    y = np.empty((B, L, H), dtype=dtype)
    hs = np.empty((B, L, H, N), dtype=dtype)
    kernel.scan_forward(dd, Ad, Bd, Cd, xd, y, hs)

    def backward(g):
        g = _c(g.astype(dtype, copy=False))
        ddelta = np.zeros_like(dd)
        dA = np.zeros_like(Ad)
        dBm = np.zeros_like(Bd)
        dCm = np.zeros_like(Cd)
        dx = np.zeros_like(xd)
        carry = np.zeros((H, N), dtype=dtype)
        kernel.scan_backward(dd, Ad, Bd, Cd, xd, hs, g, ddelta, dA, dBm, dCm, dx, carry)
        for t, grad in ((delta, ddelta), (A, dA), (Bm, dBm), (Cm, dCm), (x, dx)):
            if t.requires_grad:
                t._accumulate(grad.astype(t.data.dtype, copy=False))

    return Tensor._result(y, (delta, A, Bm, Cm, x), backward)
