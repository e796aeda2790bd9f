# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled selective-scan recurrence.

Fuses the zero-order-hold discretization into the scan so the (B, L, H, N)
discretized operators never materialize as arrays; only the state
trajectory hs is stored for the backward pass. Arithmetic runs in double
precision regardless of storage dtype.

The recurrence, per batch b, head h, state n:

    z      = delta * A
    a      = exp(z)
    phi    = (exp(z) - 1) / z        (series 1 + z/2 below |z| = 1e-8)
    h_new  = a * h_prev + phi * delta * B * x
    y     += C * h_new
"""

from libc.math cimport expm1, fabs

ctypedef fused real:
    float
    double


def scan_forward(real[:, :, ::1] delta, real[:, ::1] A, real[:, :, ::1] Bm,
                 real[:, :, ::1] Cm, real[:, :, ::1] x,
                 real[:, :, ::1] y, real[:, :, :, ::1] hs):
    """Fill y (B, L, H) and the state trajectory hs (B, L, H, N)."""
    cdef Py_ssize_t nb = delta.shape[0]
    cdef Py_ssize_t L = delta.shape[1]
    cdef Py_ssize_t H = delta.shape[2]
    cdef Py_ssize_t N = A.shape[1]
    cdef Py_ssize_t b, l, h, n
    cdef double z, em, a, phi, bbar, hv, hprev, dv, xv, acc

    with nogil:
        for b in range(nb):
            for l in range(L):
                for h in range(H):
                    dv = <double> delta[b, l, h]
                    xv = <double> x[b, l, h]
                    acc = 0.0
                    for n in range(N):
                        z = dv * <double> A[h, n]
                        em = expm1(z)
                        a = em + 1.0
                        if fabs(z) < 1e-8:
                            phi = 1.0 + 0.5 * z
                        else:
                            phi = em / z
                        bbar = phi * dv * <double> Bm[b, l, n]
                        if l > 0:
                            hprev = <double> hs[b, l - 1, h, n]
                        else:
                            hprev = 0.0
                        hv = a * hprev + bbar * xv
                        hs[b, l, h, n] = <real> hv
                        acc += <double> Cm[b, l, n] * hv
                    y[b, l, h] = <real> acc


def scan_backward(real[:, :, ::1] delta, real[:, ::1] A, real[:, :, ::1] Bm,
                  real[:, :, ::1] Cm, real[:, :, ::1] x, real[:, :, :, ::1] hs,
                  real[:, :, ::1] dy,
                  real[:, :, ::1] ddelta, real[:, ::1] dA, real[:, :, ::1] dBm,
                  real[:, :, ::1] dCm, real[:, :, ::1] dx, real[:, ::1] carry):
    """Accumulate input gradients given dL/dy; all grad buffers arrive zeroed.

    carry is (H, N) scratch for the running state adjoint; reset per batch
    element. dA sums over the whole batch since A is shared.
    """
    cdef Py_ssize_t nb = delta.shape[0]
    cdef Py_ssize_t L = delta.shape[1]
    cdef Py_ssize_t H = delta.shape[2]
    cdef Py_ssize_t N = A.shape[1]
    cdef Py_ssize_t b, l, h, n
    cdef double z, em, a, phi, dphi, bbar, hprev, dv, xv, dyv
    cdef double g, da, dbb, dz, ddv, dxv, av, bv

    with nogil:
        for b in range(nb):
            for h in range(H):
                for n in range(N):
                    carry[h, n] = <real> 0.0
            for l in range(L - 1, -1, -1):
                for h in range(H):
                    dyv = <double> dy[b, l, h]
                    dv = <double> delta[b, l, h]
                    xv = <double> x[b, l, h]
                    ddv = 0.0
                    dxv = 0.0
                    for n in range(N):
                        av = <double> A[h, n]
                        bv = <double> Bm[b, l, n]
                        z = dv * av
                        em = expm1(z)
                        a = em + 1.0
                        if fabs(z) < 1e-8:
                            phi = 1.0 + 0.5 * z
                        else:
                            phi = em / z
                        if fabs(z) < 1e-3:
                            dphi = 0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0
                        else:
                            dphi = (a * (z - 1.0) + 1.0) / (z * z)
                        bbar = phi * dv * bv
                        g = dyv * <double> Cm[b, l, n] + <double> carry[h, n]
                        if l > 0:
                            hprev = <double> hs[b, l - 1, h, n]
                        else:
                            hprev = 0.0
                        da = g * hprev
                        dbb = g * xv
                        dz = da * a + dbb * dv * bv * dphi
                        ddv += dz * av + dbb * phi * bv
                        dA[h, n] += <real> (dz * dv)
                        dBm[b, l, n] += <real> (dbb * phi * dv)
                        dCm[b, l, n] += <real> (dyv * <double> hs[b, l, h, n])
                        dxv += g * bbar
                        carry[h, n] = <real> (g * a)
                    ddelta[b, l, h] = <real> ddv
                    dx[b, l, h] = <real> dxv
