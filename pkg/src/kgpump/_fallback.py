"""Pure numpy versions of the routines in ``_core.pyx`` (same signatures)."""
import numpy as np


def _lap_fd4(u, dx):
    return (-np.roll(u, 2) + 16.0 * np.roll(u, 1) - 30.0 * u
            + 16.0 * np.roll(u, -1) - np.roll(u, -2)) / (12.0 * dx * dx)


def accel_fd4(u, dx, gamma, force, row, f_lo):
    acc = _lap_fd4(u, dx) - u - gamma * u ** 3
    nf = force.shape[1]
    if nf:
        acc[f_lo:f_lo + nf] += force[row]
    return acc


def kdk_fd4(u, v, acc, damp_half, force, f_lo, dt, dx, gamma, nsteps,
            probe_idx, stride, phase0, probe_out):
    half = 0.5 * dt
    row = 0
    for s in range(nsteps):
        v *= damp_half
        v += half * acc
        u += dt * v
        acc[:] = accel_fd4(u, dx, gamma, force, s + 1, f_lo)
        v += half * acc
        v *= damp_half
        if stride > 0 and (phase0 + s + 1) % stride == 0:
            probe_out[row, :, 0] = u[probe_idx]
            probe_out[row, :, 1] = v[probe_idx]
            row += 1
    return row


def zs_scattering_a(q, h, zetas):
    q = np.asarray(q, dtype=complex)
    z = np.asarray(zetas, dtype=complex)
    p1 = np.ones_like(z)
    p2 = np.zeros_like(z)
    ph = np.exp(1j * z * h)
    for qm in q:
        k = np.sqrt(-z * z - abs(qm) ** 2)
        kh = k * h
        ch = np.cosh(kh)
        small = np.abs(kh) < 1e-8
        shk = np.where(small, h, np.sinh(kh) / np.where(small, 1.0, k))
        n1 = ph * ((ch - 1j * z * shk) * p1 + shk * qm * p2)
        p2 = ph * (-shk * np.conj(qm) * p1 + (ch + 1j * z * shk) * p2)
        p1 = n1
    return p1
