"""Post-resonance envelope: phase sets, NLSE evolution, soliton census.

The leading envelope Psi of exp(i Phi / eps^2) obeys

    2i w Psi_t2 + D Psi_xixi + i (Phi_t2t2 - Phi_x2x2) Psi + g |Psi|^2 Psi = 0,

with w = Phi_t2. The printed normalisation is D = 1, g = gamma; the values
that follow from the cubic Klein-Gordon balance (D = eps^2 (xi_t^2 - xi_x^2),
g = 3 gamma) are passed explicitly where the direct solver is compared.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from . import kernels


class PostResonanceError(RuntimeError):
    pass


class DomainOverflowError(PostResonanceError):
    pass


class DegeneracyError(PostResonanceError):
    pass


class SingularPrefactorError(PostResonanceError):
    pass


class ResamplingError(PostResonanceError):
    pass


# -- phase sets -------------------------------------------------------------

PHI, S = (1, 0), (0, 1)  # a Phi + b S as (a, b)


def _neg(p):
    return (-p[0], -p[1])


_BASE = {
    (1, 0): frozenset({PHI, _neg(PHI)}),
    (2, 0): frozenset({PHI, _neg(PHI), S, _neg(S)}),
    (3, 1): frozenset({PHI, _neg(PHI)}),
}


def valid_index(n, k):
    return (n, k) in _BASE or (n >= 1 and 0 <= k <= n - 2)


@dataclass(frozen=True)
class PhaseSet:
    n: int
    k: int
    members: frozenset

    def __contains__(self, chi):
        return tuple(chi) in self.members

    @property
    def primed(self):
        """Members other than +-Phi (those fixed by algebraic equations)."""
        return self.members - {PHI, _neg(PHI)}

    def labels(self):
        def lab(p):
            a, b = p
            parts = [f"{a}Phi" if a else "", f"{b:+d}S" if b else ""]
            return ("".join(parts).lstrip("+") or "0").replace("1Phi", "Phi").replace("+1S", "+S").replace("-1S", "-S")
        return sorted(lab(p) for p in self.members)


@lru_cache(maxsize=None)
def _phase_members(n, k):
    if (n, k) in _BASE:
        return _BASE[(n, k)]
    out = set()
    for j1 in range(1, n - 1):
        for j2 in range(1, n - j1):
            j3 = n - j1 - j2
            for l1 in range(0, k + 1):
                for l2 in range(0, k - l1 + 1):
                    l3 = k - l1 - l2
                    if not (valid_index(j1, l1) and valid_index(j2, l2) and valid_index(j3, l3)):
                        continue
                    A, B, C = _phase_members(j1, l1), _phase_members(j2, l2), _phase_members(j3, l3)
                    for a, b, c in product(A, B, C):
                        out.add((a[0] + b[0] + c[0], a[1] + b[1] + c[1]))
    return frozenset(out)


def phase_set(n, k):
    """K_{n,k}: base sets, else the union of triple sums over valid index pairs."""
    if not valid_index(n, k):
        raise ValueError(f"invalid phase-set index ({n}, {k})")
    return PhaseSet(n, k, _phase_members(n, k))


# -- algebraic harmonics ----------------------------------------------------

def prefactor(chi, grad):
    """-(chi_t2)^2 + (chi_x2)^2 + 1 for chi = a Phi + b S."""
    a, b = chi
    ct = a * np.asarray(grad["Phi_t2"]) + b * np.asarray(grad["S_t2"])
    cx = a * np.asarray(grad["Phi_x2"]) + b * np.asarray(grad["S_x2"])
    return -ct ** 2 + cx ** 2 + 1.0


def cubic_products(components, chi):
    """sum of Psi_a Psi_b Psi_d over ordered triples with a + b + d = chi."""
    total = 0
    keys = list(components)
    for a, b in product(keys, keys):
        d = (chi[0] - a[0] - b[0], chi[1] - a[1] - b[1])
        if d in components:
            total = total + components[a] * components[b] * components[d]
    return total


def algebraic_envelope(chi, grad, gamma=0.0, cubic=None, force=None, other=None, tol=1e-12):
    """Psi_chi = F_chi / prefactor with F = -gamma cubic + force + other."""
    chi = tuple(chi)
    if chi in (PHI, _neg(PHI)):
        raise SingularPrefactorError("chi = +-Phi is resonant; use the NLSE instead")
    pre = prefactor(chi, grad)
    if np.any(np.abs(pre) < tol):
        raise SingularPrefactorError(f"prefactor vanishes for chi = {chi}")
    rhs = 0
    if cubic is not None:
        rhs = rhs - gamma * np.asarray(cubic)
    if force is not None:
        rhs = rhs + np.asarray(force)
    if other is not None:
        rhs = rhs + np.asarray(other)
    return rhs / pre + 0 * pre


# -- NLSE -------------------------------------------------------------------

@dataclass(frozen=True)
class NlseCoefficients:
    """Coefficients along the evolution; omega and damping as functions of t2."""

    omega: Callable = lambda t2: 1.0
    damping: Callable = lambda t2: 0.0
    D: float = 1.0
    g: Optional[float] = None  # defaults to gamma at evolve time

    @classmethod
    def from_phase_field(cls, pf, x2_ref=0.0, D=None, g=None, tol=1e-6):
        """Read Phi_t2 and the damping term along x2 = x2_ref.

        The split-step scheme needs xi-independent coefficients; a field whose
        Phi_t2 varies across x2 by more than ``tol`` is rejected.
        """
        spread = np.ptp(pf.phi_t2, axis=1)
        if np.max(spread) > tol:
            raise PostResonanceError("Phi_t2 varies along the curve; xi-dependent NLSE not supported")
        j = int(np.argmin(np.abs(pf.x2 - x2_ref)))
        om = CubicSpline(pf.t2, pf.phi_t2[:, j])
        dm = CubicSpline(pf.t2, pf.damping()[:, j])
        Dv = float(np.mean(pf.dispersion)) if D is None else D
        return cls(lambda t: float(om(t)), lambda t: float(dm(t)), Dv, g)


@dataclass(frozen=True)
class EnvelopeField:
    xi: np.ndarray
    t2: float
    values: np.ndarray
    coeffs: NlseCoefficients = field(default_factory=NlseCoefficients, repr=False)

    @property
    def dxi(self):
        return float(self.xi[1] - self.xi[0])

    def mass(self):
        return float(np.sum(np.abs(self.values) ** 2) * self.dxi)

    def boundary_ratio(self, frac=0.02):
        m = max(int(frac * self.xi.size), 1)
        peak = max(float(np.max(np.abs(self.values))), 1e-300)
        return float(max(np.abs(self.values[:m]).max(), np.abs(self.values[-m:]).max()) / peak)


@dataclass(frozen=True)
class NlseTrajectory:
    t2: np.ndarray
    xi: np.ndarray
    values: np.ndarray  # (nt, nx)
    coeffs: NlseCoefficients = field(repr=False, default_factory=NlseCoefficients)

    def at(self, j):
        return EnvelopeField(self.xi, float(self.t2[j]), self.values[j], self.coeffs)

    @property
    def final(self):
        return self.at(-1)

    def mass(self):
        return np.sum(np.abs(self.values) ** 2, axis=1) * (self.xi[1] - self.xi[0])


def nlse_initial_data(acc, xi_grid, t2=1.0, convention="matched", coeffs=None, fill_outside=False):
    """Envelope at the crossing from an AccumulatedAmplitude.

    ``matched`` uses the layer's post-crossing coefficient -i sgn(phi) A, so
    Psi multiplies exp(i Phi / eps^2) directly; ``raw`` uses A itself.
    """
    xi_grid = np.asarray(xi_grid, float)
    src = acc.post_envelope if convention == "matched" else acc.values
    if convention not in ("matched", "raw"):
        raise ValueError(f"unknown convention {convention!r}")
    lo, hi = acc.xi_grid.min(), acc.xi_grid.max()
    inside = (xi_grid >= lo - 1e-12) & (xi_grid <= hi + 1e-12)
    if not fill_outside and not np.all(inside):
        raise ResamplingError(f"envelope grid [{xi_grid.min():g}, {xi_grid.max():g}] leaves "
                              f"the amplitude window [{lo:g}, {hi:g}]")
    vals = np.zeros(xi_grid.shape, complex)
    if acc.xi_grid.size == 1:
        vals[inside] = src[0]
    else:
        re = CubicSpline(acc.xi_grid, src.real)(xi_grid[inside])
        im = CubicSpline(acc.xi_grid, src.imag)(xi_grid[inside])
        vals[inside] = re + 1j * im
    return EnvelopeField(xi_grid, float(t2), vals, coeffs or NlseCoefficients())


def sech_ansatz(amplitude, gamma, xi, t2=0.0, t2_0=0.0, D=1.0, omega=1.0):
    """Exact one-soliton of 2i w Psi_t + D Psi_xixi + gamma |Psi|^2 Psi = 0 (gamma D > 0)."""
    B = amplitude * np.sqrt(gamma / (2.0 * D))
    Om = D * B ** 2 / (2.0 * omega)
    return amplitude / np.cosh(B * np.asarray(xi)) * np.exp(1j * Om * (t2 - t2_0))


def _simpson(fn, a, b):
    return (b - a) / 6.0 * (fn(a) + 4 * fn(0.5 * (a + b)) + fn(b))


def nlse_evolve(init, t2_end, dt2, gamma, coeffs=None, pad=2, taper=True, store_every=1,
                tol_decay=1e-6, omega_min=0.1):
    """Strang-split evolution from ``init`` to ``t2_end``.

    Linear half-steps are exact in Fourier space on the padded periodic grid,
    the full nonlinear step is an exact pointwise phase rotation.
    """
    co = coeffs or init.coeffs
    g = gamma if co.g is None else co.g
    nx = init.xi.size
    h = init.dxi
    npad = int(pad * nx)
    off = (npad - nx) // 2
    psi = np.zeros(npad, complex)
    psi[off:off + nx] = init.values
    kappa = 2 * np.pi * np.fft.fftfreq(npad, d=h)
    mask = np.ones(npad)
    if taper and npad > nx:
        # smooth absorber in the outer padding only
        j = np.arange(npad)
        dist = np.minimum(np.abs(j - off), np.abs(j - (off + nx - 1)))
        outer = (j < off) | (j >= off + nx)
        w = max((npad - nx) // 4, 1)
        ramp = np.clip((dist - w) / w, 0, 1)
        mask = np.where(outer, np.cos(0.5 * np.pi * ramp) ** 2 + 0 * ramp, 1.0)
        mask = np.where(outer & (dist > 2 * w), 0.0, mask)

    inv2w = lambda t: 1.0 / (2.0 * co.omega(t))
    damp = lambda t: co.damping(t) / (2.0 * co.omega(t))
    t0 = init.t2
    nsteps = max(int(np.ceil((t2_end - t0) / dt2 - 1e-9)), 0)
    dt = (t2_end - t0) / nsteps if nsteps else 0.0
    peak0 = max(float(np.max(np.abs(init.values))), 1e-300)
    times, frames = [t0], [init.values.copy()]

    def linear(p, a, b):
        c_disp = _simpson(inv2w, a, b)
        c_damp = _simpson(damp, a, b)
        return np.fft.ifft(np.exp(-1j * co.D * kappa ** 2 * c_disp - c_damp) * np.fft.fft(p))

    t = t0
    for s in range(nsteps):
        if abs(co.omega(t)) < omega_min:
            raise DegeneracyError(f"|Phi_t2| < {omega_min:g} at t2={t:.6g}")
        psi = linear(psi, t, t + dt / 2)
        psi = psi * np.exp(1j * g * np.abs(psi) ** 2 * _simpson(inv2w, t, t + dt))
        psi = linear(psi, t + dt / 2, t + dt)
        if taper:
            psi = psi * mask
        t = t0 + (s + 1) * dt
        if (s + 1) % store_every == 0 or s == nsteps - 1:
            m = max(int(0.01 * nx), 2)
            edge = max(np.abs(psi[off:off + m]).max(), np.abs(psi[off + nx - m:off + nx]).max())
            if edge > tol_decay * peak0 and pad > 1:
                raise DomainOverflowError(f"packet reached the xi-domain edge at t2={t:.6g} "
                                          f"(|Psi|={edge:.2e})")
            times.append(t)
            frames.append(psi[off:off + nx].copy())
    return NlseTrajectory(np.array(times), init.xi, np.array(frames), co)


# -- soliton census ---------------------------------------------------------

@dataclass(frozen=True)
class SolitonEstimate:
    eigenvalues: np.ndarray
    count: int
    amplitudes: np.ndarray  # peak |q| = 2 Im zeta, converted back to Psi units
    velocities: np.ndarray  # d xi / d t2 per soliton
    area: float  # int |q| dX in the standard normalisation
    jacobian: dict
    complete: bool = True
    winding: Optional[int] = None


def standard_form(values, xi, D=1.0, g=1.0, omega=1.0):
    """Map Psi on xi to q on X for i q_T + q_XX / 2 + |q|^2 q = 0.

    With w = Phi_t2: X = xi sqrt(w/|D|), q = sqrt(|g|/(2w)) Psi, conjugated when
    D < 0 (which also flips the sign of g). Focusing iff g D > 0.
    """
    conj = D < 0
    gg, DD = (-g, -D) if conj else (g, D)
    if gg <= 0:
        return None
    beta = np.sqrt(omega / DD)
    alpha = np.sqrt(gg / (2 * omega))
    q = alpha * (np.conj(values) if conj else np.asarray(values))
    return q, np.asarray(xi) * beta, {"X_per_xi": float(beta), "q_per_psi": float(alpha),
                                      "conjugated": bool(conj), "T_per_t2": 1.0}


def _a(q, h, zetas):
    z = np.ascontiguousarray(np.atleast_1d(zetas), dtype=complex)
    return kernels.zs_scattering_a(np.ascontiguousarray(q, dtype=complex), float(h), z)


def _winding(q, h, R, H, delta, n0=256, max_level=12):
    """Zeros of a(z) inside the rectangle [-R, R] x [delta, H] by the argument principle."""
    corners = [complex(-R, delta), complex(R, delta), complex(R, H), complex(-R, H)]
    total = 0.0
    for c0, c1 in zip(corners, corners[1:] + corners[:1]):
        ts = np.linspace(0.0, 1.0, n0 + 1)
        for _ in range(max_level):
            a = _a(q, h, c0 + (c1 - c0) * ts)
            d = np.angle(a[1:] / a[:-1])
            big = np.abs(d) > np.pi / 4
            if not np.any(big):
                break
            ts = np.sort(np.concatenate([ts, 0.5 * (ts[:-1][big] + ts[1:][big])]))
        total += float(np.sum(d))
    return int(round(total / (2 * np.pi)))


def _refine(q, h, z, tol=1e-8, it=60):
    for _ in range(it):
        dz = 1e-6 * max(1.0, abs(z))
        a0 = _a(q, h, [z])[0]
        da = (_a(q, h, [z + dz])[0] - _a(q, h, [z - dz])[0]) / (2 * dz)
        if da == 0:
            break
        step = a0 / da
        z = z - step
        if abs(step) < tol * 1e-2:
            break
    return z


def _midpoint_samples(q, X, hc):
    """Cubic-spline resample of q at the midpoints of cells of width <= hc."""
    n = max(int(np.ceil((X[-1] - X[0]) / hc)), 1)
    hm = (X[-1] - X[0]) / n
    Xm = X[0] + (np.arange(n) + 0.5) * hm
    return CubicSpline(X, q.real)(Xm) + 1j * CubicSpline(X, q.imag)(Xm), hm


def zs_eigenvalues(q, X, tol=1e-8, n_grid=(48, 32), delta=None, cell=0.05):
    """Discrete ZS eigenvalues of v' = [[-i z, q], [-q*, i z]] v in Im z > 0.

    Zeros of a(z) are counted by the argument principle on a rectangle,
    seeded from a grid scan of |a| and refined by Newton iteration at two
    cell widths, then Richardson-extrapolated (the cell propagator is second
    order). Returns (eigenvalues, winding count, complete flag).
    """
    q = np.asarray(q, complex)
    X = np.asarray(X, float)
    qmax = float(np.max(np.abs(q)))
    if qmax == 0:
        return np.empty(0, complex), 0, True
    live = np.nonzero(np.abs(q) > 1e-13 * qmax)[0]
    lo, hi = max(live[0] - 2, 0), min(live[-1] + 3, q.size)
    q, X = q[lo:hi], X[lo:hi]
    h = float(X[1] - X[0])
    spec = np.abs(np.fft.fft(q))
    kk = 2 * np.pi * np.abs(np.fft.fftfreq(q.size, d=h))
    kmax = float(kk[spec > 1e-6 * spec.max()].max())
    H = 1.05 * qmax + 0.05
    R = 0.5 * kmax + H
    delta = 1e-3 * H if delta is None else delta
    hc = min(h, cell / max(qmax, R))
    qc, hcm = _midpoint_samples(q, X, hc)
    count = _winding(qc, hcm, R, H, delta)
    if count <= 0:
        return np.empty(0, complex), 0, count == 0
    re = np.linspace(-R, R, n_grid[0])
    im = np.linspace(delta, H, n_grid[1])
    Z = re[None, :] + 1j * im[:, None]
    A = np.abs(_a(qc, hcm, Z.ravel())).reshape(Z.shape)
    seeds = []
    for i in range(A.shape[0]):
        for j in range(A.shape[1]):
            nb = A[max(i - 1, 0):i + 2, max(j - 1, 0):j + 2]
            if A[i, j] <= nb.min():
                seeds.append((A[i, j], Z[i, j]))
    q1, h1 = _midpoint_samples(q, X, hc / 2)
    q2, h2 = _midpoint_samples(q, X, hc / 4)
    found = []
    for _, s0 in sorted(seeds, key=lambda p: p[0]):
        z = _refine(qc, hcm, s0, tol)
        if not (delta / 2 < z.imag < 1.5 * H and abs(z.real) < 1.5 * R):
            continue
        if abs(_a(qc, hcm, [z])[0]) > 1e-6 or any(abs(z - w) < 1e-5 for w in found):
            continue
        z1 = _refine(q1, h1, z, tol)
        z2 = _refine(q2, h2, z1, tol)
        zr = (4 * z2 - z1) / 3
        if all(abs(zr - w) > 1e-6 for w in found):
            found.append(zr)
        if len(found) == count:
            break
    found = sorted(found, key=lambda z: -z.imag)
    return np.array(found, complex), count, len(found) == count


def soliton_census(env, gamma=None, D=None, g=None, omega=None, tol_decay=1e-4):
    """Count solitons in an envelope via its Zakharov-Shabat spectrum."""
    co = env.coeffs
    D = co.D if D is None else D
    g = (co.g if co.g is not None else gamma) if g is None else g
    if g is None:
        raise ValueError("nonlinear coefficient needed")
    omega = co.omega(env.t2) if omega is None else omega
    if np.max(np.abs(env.values)) > 0 and env.boundary_ratio() > tol_decay:
        raise PostResonanceError("envelope not decayed at the domain boundary")
    mapped = standard_form(env.values, env.xi, D, g, omega)
    if mapped is None:  # defocusing: no bright solitons
        return SolitonEstimate(np.empty(0, complex), 0, np.empty(0), np.empty(0), 0.0,
                               {"defocusing": True})
    q, X, jac = mapped
    area = float(np.sum(np.abs(q)) * (X[1] - X[0]))
    if area < np.pi / 2:
        # below this L1 norm the ZS problem has no discrete spectrum
        return SolitonEstimate(np.empty(0, complex), 0, np.empty(0), np.empty(0), area,
                               jac, True, 0)
    ev, count, complete = zs_eigenvalues(q, X)
    amps = 2 * ev.imag / jac["q_per_psi"]
    vel = -2 * ev.real / jac["X_per_xi"]  # conjugation leaves positions unchanged
    return SolitonEstimate(ev, len(ev), amps, vel, area, jac, complete, count)
