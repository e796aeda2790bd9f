"""Pure-numpy twin of the compiled scan kernel.

Vectorizes over batch, heads, and states at each time step; the time loop
itself is irreducible. Same signatures and buffer contracts as the
compiled version so the two are interchangeable behind scan.py.
"""

import numpy as np


def _phi(z):
    em = np.expm1(z)
    small = np.abs(z) < 1e-8
    denom = np.where(small, 1.0, z)
    return em + 1.0, np.where(small, 1.0 + 0.5 * z, em / denom)


def _dphi(z, a):
    small = np.abs(z) < 1e-3
    zz = np.where(small, 1.0, z * z)
    series = 0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0
    return np.where(small, series, (a * (z - 1.0) + 1.0) / zz)


def scan_forward(delta, A, Bm, Cm, x, y, hs):
    B, L, H = delta.shape
    for l in range(L):
        z = delta[:, l, :, None] * A[None, :, :]
        a, phi = _phi(z)
        bbar = phi * delta[:, l, :, None] * Bm[:, l, None, :]
        if l > 0:
            state = a * hs[:, l - 1] + bbar * x[:, l, :, None]
        else:
            state = bbar * x[:, l, :, None]
        hs[:, l] = state
        y[:, l] = np.einsum("bhn,bn->bh", state, Cm[:, l])


def scan_backward(delta, A, Bm, Cm, x, hs, dy, ddelta, dA, dBm, dCm, dx, carry):
    B, L, H = delta.shape
    N = A.shape[1]
    run = np.zeros((B, H, N), dtype=delta.dtype)
    for l in range(L - 1, -1, -1):
        d_l = delta[:, l, :, None]
        b_l = Bm[:, l, None, :]
        z = d_l * A[None, :, :]
        a, phi = _phi(z)
        dphi = _dphi(z, a)
        bbar = phi * d_l * b_l
        g = dy[:, l, :, None] * Cm[:, l, None, :] + run
        h_prev = hs[:, l - 1] if l > 0 else 0.0
        da = g * h_prev
        dbb = g * x[:, l, :, None]
        dz = da * a + dbb * d_l * b_l * dphi
        ddelta[:, l] = (dz * A[None, :, :]).sum(axis=-1) + (dbb * phi * b_l).sum(axis=-1)
        dA += (dz * d_l).sum(axis=0)
        dBm[:, l] = (dbb * phi * d_l).sum(axis=1)
        dCm[:, l] = (dy[:, l, :, None] * hs[:, l]).sum(axis=1)
        dx[:, l] = (g * bbar).sum(axis=-1)
        run = g * a
