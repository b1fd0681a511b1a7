# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: the Klein-Gordon kick-drift-kick stepper and the
Zakharov-Shabat transfer-matrix product.

Both functions have numpy twins in :mod:`kgpump._fallback` with identical
signatures; :mod:`kgpump.kernels` picks one at import.
"""
from libc.math cimport exp
cimport numpy as cnp
import numpy as np

cnp.import_array()

cdef extern from "complex.h" nogil:
    double complex csqrt(double complex)
    double complex cexp(double complex)
    double complex ccosh(double complex)
    double complex csinh(double complex)
    double complex conj(double complex)
    double cabs(double complex)


cdef inline void _accel_fd4(const double[::1] u, double[::1] acc, double inv12dx2,
                            double gamma, const double[:, ::1] force, Py_ssize_t row,
                            Py_ssize_t f_lo) noexcept nogil:
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t nf = force.shape[1]
    cdef Py_ssize_t i, im1, im2, ip1, ip2
    cdef double ui
    for i in range(n):
        im1 = i - 1 if i >= 1 else i - 1 + n
        im2 = i - 2 if i >= 2 else i - 2 + n
        ip1 = i + 1 if i + 1 < n else i + 1 - n
        ip2 = i + 2 if i + 2 < n else i + 2 - n
        ui = u[i]
        acc[i] = (-u[im2] + 16.0 * u[im1] - 30.0 * ui + 16.0 * u[ip1] - u[ip2]) * inv12dx2 \
            - ui - gamma * ui * ui * ui
    if nf > 0:
        for i in range(nf):
            acc[f_lo + i] += force[row, i]


def kdk_fd4(double[::1] u, double[::1] v, double[::1] acc, const double[::1] damp_half,
            const double[:, ::1] force, Py_ssize_t f_lo, double dt, double dx,
            double gamma, Py_ssize_t nsteps, const Py_ssize_t[::1] probe_idx,
            Py_ssize_t stride, Py_ssize_t phase0, double[:, :, ::1] probe_out):
    """Advance ``nsteps`` kick-drift-kick steps in place.

    ``acc`` must hold the acceleration at the block's first time and is left
    holding the acceleration at the final time. ``force[j]`` is the drive at
    step ``j`` of the block on indices ``f_lo:f_lo + force.shape[1]``. Probe
    values are written every ``stride`` steps; ``phase0`` is the global step
    count at block start. Returns the number of probe rows written.
    """
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t npr = probe_idx.shape[0]
    cdef Py_ssize_t s, i, p, row = 0
    cdef double half = 0.5 * dt
    cdef double inv12dx2 = 1.0 / (12.0 * dx * dx)
    with nogil:
        for s in range(nsteps):
            for i in range(n):
                v[i] = damp_half[i] * v[i] + half * acc[i]
                u[i] += dt * v[i]
            _accel_fd4(u, acc, inv12dx2, gamma, force, s + 1, f_lo)
            for i in range(n):
                v[i] = damp_half[i] * (v[i] + half * acc[i])
            if stride > 0 and (phase0 + s + 1) % stride == 0:
                for p in range(npr):
                    probe_out[row, p, 0] = u[probe_idx[p]]
                    probe_out[row, p, 1] = v[probe_idx[p]]
                row += 1
    return row


def accel_fd4(const double[::1] u, double dx, double gamma, const double[:, ::1] force,
              Py_ssize_t row, Py_ssize_t f_lo):
    """Acceleration ``u_xx - u - gamma u^3 + F`` with the 4th-order stencil."""
    out = np.empty(u.shape[0])
    cdef double[::1] acc = out
    _accel_fd4(u, acc, 1.0 / (12.0 * dx * dx), gamma, force, row, f_lo)
    return out


def zs_scattering_a(const double complex[::1] q, double h, const double complex[::1] zetas):
    """Scattering coefficient a(zeta) of v' = [[-i z, q], [-conj(q), i z]] v.

    ``q`` is piecewise constant on cells of width ``h``. Each cell's exact
    propagator is rescaled by exp(i z h) so that a(zeta) is the first
    component of the product applied to (1, 0).
    """
    cdef Py_ssize_t nz = zetas.shape[0]
    cdef Py_ssize_t nq = q.shape[0]
    out = np.empty(nz, dtype=np.complex128)
    cdef double complex[::1] res = out
    cdef Py_ssize_t j, m
    cdef double complex z, k, ch, shk, ph, p1, p2, n1, n2, qm, x2, e, ei
    with nogil:
        for j in range(nz):
            z = zetas[j]
            p1 = 1.0
            p2 = 0.0
            ph = cexp(1j * z * h)
            for m in range(nq):
                qm = q[m]
                x2 = (-z * z - qm * conj(qm)) * h * h
                if cabs(x2) < 1e-2:
                    # even series of cosh(kh) and sinh(kh)/k in (kh)^2
                    ch = 1.0 + x2 * (0.5 + x2 * (1.0 / 24 + x2 * (1.0 / 720 + x2 * (1.0 / 40320))))
                    shk = h * (1.0 + x2 * (1.0 / 6 + x2 * (1.0 / 120 + x2 * (1.0 / 5040 + x2 * (1.0 / 362880)))))
                else:
                    k = csqrt(x2) / h
                    e = cexp(k * h)
                    ei = 1.0 / e
                    ch = 0.5 * (e + ei)
                    shk = 0.5 * (e - ei) / k
                n1 = ph * ((ch - 1j * z * shk) * p1 + shk * qm * p2)
                n2 = ph * (-shk * conj(qm) * p1 + (ch + 1j * z * shk) * p2)
                p1 = n1
                p2 = n2
            res[j] = p1
    return out
