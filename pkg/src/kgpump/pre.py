"""Pre-resonance WKB expansion  U = sum_n eps^n sum_k U^n_k exp(i k S / eps^2).

Amplitudes depend on the slow variables (t2, x2) and on x1 = eps x, the
latter only through the force profile f(x1).

The general recurrence, obtained by applying the modulated operator

    e^{-ikS/eps^2} (d_t^2 - d_x^2 + 1) e^{ikS/eps^2}
      = -l_k - eps 2ik S_x2 d_x1
        + eps^2 (2ik S_t2 d_t2 + ik S_t2t2 - 2ik S_x2 d_x2 - ik S_x2x2 - d_x1^2)
        - eps^3 2 d_x1 d_x2 + eps^4 (d_t2^2 - d_x2^2),

with l_k = k^2 (S_t2^2 - S_x2^2) - 1, is solved order by order on a grid.
For k = 1 and n <= 4 the same recurrence has closed forms.
"""
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .fd import derivative
from .phase import eval_l, l_gradient

L_MIN = 1e-3


class PreResonanceError(RuntimeError):
    pass


class SingularityProximityError(PreResonanceError):
    pass


class ValidityError(PreResonanceError):
    pass


@dataclass(frozen=True)
class HarmonicSet:
    n: int
    ks: tuple

    def __contains__(self, k):
        return k in self.ks

    @property
    def positive(self):
        return tuple(k for k in self.ks if k > 0)


def omega_set(n):
    """Harmonics present at order n: {+-1} up to n = 5, then odd up to 2l+3."""
    if n < 2:
        raise ValueError(f"harmonic sets start at n = 2, got {n}")
    top = 1 if n <= 5 else 2 * ((n - 6) // 4) + 3
    pos = list(range(1, top + 1, 2))
    return HarmonicSet(n, tuple(sorted([-k for k in pos] + pos)))


@dataclass(frozen=True)
class ForceProfile:
    """Smooth, rapidly decaying f(x1); derivatives analytic when provided."""

    f: Callable
    df: Optional[Callable] = None
    d2f: Optional[Callable] = None
    support_radius: float = np.inf
    name: str = "custom"
    h_fd: float = 1e-4

    def __call__(self, x1):
        return self.f(np.asarray(x1, float))

    def d1(self, x1):
        x1 = np.asarray(x1, float)
        if self.df is not None:
            return self.df(x1)
        h = self.h_fd
        return (-self.f(x1 + 2 * h) + 8 * self.f(x1 + h) - 8 * self.f(x1 - h) + self.f(x1 - 2 * h)) / (12 * h)

    def d2(self, x1):
        x1 = np.asarray(x1, float)
        if self.d2f is not None:
            return self.d2f(x1)
        h = self.h_fd
        return (-self.f(x1 + 2 * h) + 16 * self.f(x1 + h) - 30 * self.f(x1)
                + 16 * self.f(x1 - h) - self.f(x1 - 2 * h)) / (12 * h * h)

    @property
    def is_zero(self):
        return self.name == "zero"

    def decays(self, tol=1e-10):
        if not np.isfinite(self.support_radius):
            return True
        r = self.support_radius
        return bool(np.all(np.abs(self.f(np.array([-r, r]))) < tol))


def gaussian(amplitude=1.0, width=1.0, center=0.0):
    a, w, c = complex(amplitude), float(width), float(center)
    if a.imag == 0:
        a = a.real

    def f(y):
        return a * np.exp(-((y - c) / w) ** 2)

    def df(y):
        return -2 * (y - c) / w ** 2 * f(y)

    def d2f(y):
        z = (y - c) / w
        return (4 * z ** 2 - 2) / w ** 2 * f(y)

    radius = abs(c) + w * np.sqrt(np.log(max(abs(a), 1e-300) / 1e-12)) if a != 0 else 0.0
    return ForceProfile(f, df, d2f, radius, f"gaussian(A={amplitude}, w={width}, c={center})")


def sech(amplitude=1.0, width=1.0, center=0.0):
    a, w, c = float(amplitude), float(width), float(center)

    def f(y):
        return a / np.cosh((y - c) / w)

    def df(y):
        z = (y - c) / w
        return -a / w * np.tanh(z) / np.cosh(z)

    def d2f(y):
        z = (y - c) / w
        s = 1.0 / np.cosh(z)
        return a / w ** 2 * s * (np.tanh(z) ** 2 - s ** 2)

    radius = abs(c) + w * np.log(2 * max(abs(a), 1e-300) / 1e-12) if a != 0 else 0.0
    return ForceProfile(f, df, d2f, radius, f"sech(A={amplitude}, w={width}, c={center})")


def zero_force():
    z = lambda y: np.zeros_like(np.asarray(y, float))
    return ForceProfile(z, z, z, 0.0, "zero")


def builtin_force(name, amplitude=1.0, width=1.0, center=0.0):
    if name == "gaussian":
        return gaussian(amplitude, width, center)
    if name == "sech":
        return sech(amplitude, width, center)
    if name == "zero":
        return zero_force()
    raise ValueError(f"unknown force profile {name!r}")


# -- closed forms (k = 1) ---------------------------------------------------

def _partials(phase, t2, x2):
    st, sx = phase.gradient(t2, x2)
    return (np.asarray(st, float), np.asarray(sx, float), phase.s_t2t2(t2, x2),
            phase.s_x2x2(t2, x2))


def u2(phase, force, t2, x2, x1):
    return -force(x1) / eval_l(phase, t2, x2)


def u3(phase, force, t2, x2, x1):
    _, sx, _, _ = _partials(phase, t2, x2)
    return 2j * sx * force.d1(x1) / eval_l(phase, t2, x2) ** 2


def u4(phase, force, t2, x2, x1):
    st, sx, stt, sxx = _partials(phase, t2, x2)
    lv = eval_l(phase, t2, x2)
    lt, lx = l_gradient(phase, t2, x2)
    f, f2 = force(x1), force.d2(x1)
    return ((4 * sx ** 2 * f2 + 2j * f * (st * lt - sx * lx)) / lv ** 3
            + (f2 - 1j * (stt - sxx) * f) / lv ** 2)


_CLOSED = {2: u2, 3: u3, 4: u4}


# -- grid recurrence --------------------------------------------------------

@dataclass(frozen=True)
class SlowGrid:
    """Uniform tensor grid over (t2, x2, x1)."""

    t2: np.ndarray
    x2: np.ndarray
    x1: np.ndarray

    @classmethod
    def around(cls, t2, x2, x1, n=13, h_t=1e-2, h_x2=1e-2, h_x1=None, x1_span=None):
        """Grid centred on (t2, x2) with an x1 axis covering ``x1_span``."""
        off = (np.arange(n) - n // 2)
        if x1_span is None:
            x1_ax = x1 + off * (h_x1 or 1e-1)
        else:
            x1_ax = np.linspace(x1_span[0], x1_span[1], max(n, int(round((x1_span[1] - x1_span[0]) / (h_x1 or 0.05))) + 1))
        return cls(t2 + off * h_t, x2 + off * h_x2, x1_ax)

    @property
    def shape(self):
        return (self.t2.size, self.x2.size, self.x1.size)

    def steps(self):
        return tuple(float(a[1] - a[0]) for a in (self.t2, self.x2, self.x1))

    def mesh(self):
        return np.meshgrid(self.t2, self.x2, self.x1, indexing="ij")


@dataclass(frozen=True)
class WkbCoefficient:
    n: int
    k: int
    values: np.ndarray
    grid: SlowGrid = field(repr=False)

    def conj_partner(self):
        return WkbCoefficient(self.n, -self.k, np.conj(self.values), self.grid)


class WkbTable:
    """All U^n_k up to ``n_max`` on a SlowGrid, computed once and then read-only."""

    def __init__(self, phase, force, grid, gamma=0.0, n_max=4, l_min=L_MIN, fd_order=6):
        if n_max > 8:
            raise ValueError("recurrence supported up to order 8")
        self.phase, self.force, self.grid, self.gamma = phase, force, grid, float(gamma)
        self.n_max = n_max
        self.fd_order = fd_order
        T, X2, X1 = grid.mesh()
        self._st = np.broadcast_to(phase.s_t2(T, X2), T.shape)
        self._sx = np.broadcast_to(phase.s_x2(T, X2), T.shape)
        self._stt = np.broadcast_to(phase.s_t2t2(T, X2), T.shape)
        self._sxx = np.broadcast_to(phase.s_x2x2(T, X2), T.shape)
        self.l = self._st ** 2 - self._sx ** 2 - 1.0
        if np.any(np.abs(self.l) <= l_min):
            k = np.unravel_index(np.argmin(np.abs(self.l)), self.l.shape)
            raise SingularityProximityError(
                f"|l| <= {l_min:g} at t2={T[k]:.6g}, x2={X2[k]:.6g}")
        self.f = np.asarray(force(X1)).astype(complex)
        self._table = {}
        self._build()

    def _d(self, a, axis, m=1):
        h = self.grid.steps()[axis]
        return derivative(a, h, m=m, axis=axis, order=self.fd_order)

    def get(self, n, k):
        if n < 2 or k not in omega_set(n):
            return None
        if k < 0:
            return np.conj(self._table[(n, -k)])
        return self._table[(n, k)]

    def _cubic(self, n, k):
        total = 0
        for n1 in range(2, n - 3):
            for n2 in range(2, n - n1 - 1):
                n3 = n - n1 - n2
                if n3 < 2:
                    continue
                for k1, k2 in product(omega_set(n1).ks, omega_set(n2).ks):
                    k3 = k - k1 - k2
                    if k3 not in omega_set(n3):
                        continue
                    total = total + self.get(n1, k1) * self.get(n2, k2) * self.get(n3, k3)
        return total

    def operator_terms(self, n, k, get=None):
        """Everything in the order-n, harmonic-k balance except -l_k U^n_k and the force."""
        get = get or self.get
        st, sx, stt, sxx = self._st, self._sx, self._stt, self._sxx
        out = np.zeros(self.grid.shape, complex)
        a = get(n - 1, k)
        if a is not None:
            out += -2j * k * sx * self._d(a, 2)
        a = get(n - 2, k)
        if a is not None:
            out += (2j * k * st * self._d(a, 0) + 1j * k * stt * a
                    - 2j * k * sx * self._d(a, 1) - 1j * k * sxx * a - self._d(a, 2, 2))
        a = get(n - 3, k)
        if a is not None:
            out += -2 * self._d(self._d(a, 2), 1)
        a = get(n - 4, k)
        if a is not None:
            out += self._d(a, 0, 2) - self._d(a, 1, 2)
        return out

    def _build(self):
        for n in range(2, self.n_max + 1):
            for k in omega_set(n).positive:
                lk = k * k * (self._st ** 2 - self._sx ** 2) - 1.0
                rhs = self.operator_terms(n, k)
                if self.gamma and n >= 6:
                    rhs = rhs + self.gamma * self._cubic(n, k)
                if n == 2 and k == 1:
                    rhs = rhs - self.f
                self._table[(n, k)] = rhs / lk

    def coefficient(self, n, k):
        v = self.get(n, k)
        if v is None:
            raise PreResonanceError(f"harmonic {k} is not in Omega_{n}")
        return WkbCoefficient(n, k, v, self.grid)

    def residual(self, epsilon, N):
        """Residual of the truncated series in the full equation, per harmonic.

        Returns the max modulus over harmonics at each grid node. Lower-order
        balances cancel exactly because the same discrete operators built the
        table, so what is left is the O(eps^(N+1)) tail.
        """
        eps = float(epsilon)
        ks = sorted({k for n in range(2, N + 1) for k in omega_set(n).ks})
        A = {k: sum(eps ** n * self.get(n, k) for n in range(2, N + 1) if self.get(n, k) is not None)
             for k in ks}
        st, sx, stt, sxx = self._st, self._sx, self._stt, self._sxx
        res = np.zeros(self.grid.shape)
        for k in ks:
            if k < 0:
                continue
            a = A[k]
            lk = k * k * (st ** 2 - sx ** 2) - 1.0
            r = (-lk * a - eps * 2j * k * sx * self._d(a, 2)
                 + eps ** 2 * (2j * k * st * self._d(a, 0) + 1j * k * stt * a
                               - 2j * k * sx * self._d(a, 1) - 1j * k * sxx * a - self._d(a, 2, 2))
                 - eps ** 3 * 2 * self._d(self._d(a, 2), 1)
                 + eps ** 4 * (self._d(a, 0, 2) - self._d(a, 1, 2)))
            if self.gamma:
                cub = 0
                for k1, k2 in product(ks, ks):
                    k3 = k - k1 - k2
                    if k3 in A:
                        cub = cub + A[k1] * A[k2] * A[k3]
                r = r + self.gamma * cub
            if k == 1:
                r = r - eps ** 2 * self.f
            res = np.maximum(res, np.abs(r))
        return res


def wkb_amplitude(n, k, phase, force, grid, gamma=0.0, l_min=L_MIN):
    """U^n_k on ``grid``; n <= 4 with k = 1 uses the closed forms."""
    if k not in omega_set(n):
        raise PreResonanceError(f"harmonic {k} is not in Omega_{n}")
    if abs(k) == 1 and n in _CLOSED:
        T, X2, X1 = grid.mesh()
        lv = eval_l(phase, T, X2)
        if np.any(np.abs(lv) <= l_min):
            raise SingularityProximityError(f"|l| <= {l_min:g} on the grid")
        v = np.asarray(_CLOSED[n](phase, force, T, X2, X1), complex)
        return WkbCoefficient(n, k, v if k > 0 else np.conj(v), grid)
    return WkbTable(phase, force, grid, gamma, n_max=n, l_min=l_min).coefficient(n, k)


@dataclass(frozen=True)
class PreField:
    u: np.ndarray  # real field on the fast grid
    envelopes: dict  # k -> sum_n eps^n U^n_k (k > 0)
    theta: np.ndarray  # carrier phase S / eps^2

    @property
    def envelope(self):
        return self.envelopes[1]


def _validity(phase, t, x, epsilon, margin):
    t2 = epsilon ** 2 * np.asarray(t, float)
    x2 = epsilon ** 2 * np.asarray(x, float)
    lv = eval_l(phase, t2, x2)
    bad = -lv <= margin * epsilon
    return lv, bad


def evaluate_pre_field(N, phase, force, epsilon, x, t, gamma=0.0, margin=5.0,
                       check=True, grid_points=13):
    """Assemble the order-N WKB field on fast points ``x`` at fast time ``t``."""
    if N < 2:
        raise ValueError("truncation order starts at 2")
    eps = float(epsilon)
    x = np.asarray(x, float)
    t2 = eps ** 2 * float(t)
    x2 = eps ** 2 * x
    x1 = eps * x
    lv, bad = _validity(phase, t, x, eps, margin)
    if check and np.any(bad):
        pts = x[np.broadcast_to(bad, x.shape)]
        raise ValidityError(
            f"-l <= {margin:g} eps at t2={t2:.6g} for {pts.size} points, e.g. x={pts[:3]}")
    theta = np.broadcast_to(phase.s(t2, x2), x.shape) / eps ** 2
    envelopes = {}
    if N <= 5:
        env = np.zeros(x.shape, complex)
        for n in range(2, min(N, 4) + 1):
            env = env + eps ** n * _CLOSED[n](phase, force, t2, x2, x1)
        if N == 5:
            env = env + eps ** 5 * _grid_values(5, 1, phase, force, t2, x2, x1, gamma, grid_points)
        envelopes[1] = env
    else:
        for k in sorted({k for n in range(2, N + 1) for k in omega_set(n).positive}):
            env = 0
            for n in range(2, N + 1):
                if k in omega_set(n):
                    env = env + eps ** n * _grid_values(n, k, phase, force, t2, x2, x1, gamma, grid_points)
            envelopes[k] = np.asarray(env, complex)
    u = np.zeros(x.shape)
    for k, env in envelopes.items():
        u = u + 2.0 * np.real(env * np.exp(1j * k * theta))
    return PreField(u, envelopes, theta)


def _grid_values(n, k, phase, force, t2, x2, x1, gamma, npts):
    """Interpolate a recurrence coefficient from grids built around the points."""
    h1 = 0.02
    grid = SlowGrid(t2 + (np.arange(npts) - npts // 2) * 1e-2,
                    np.linspace(x2.min() - 6e-2, x2.max() + 6e-2, max(npts, 13)),
                    np.arange(x1.min() - 6 * h1, x1.max() + 7 * h1, h1))
    vals = WkbTable(phase, force, grid, gamma, n_max=n).get(n, k)
    mid = vals[npts // 2]
    interp_re = RegularGridInterpolator((grid.x2, grid.x1), mid.real, method="cubic")
    interp_im = RegularGridInterpolator((grid.x2, grid.x1), mid.imag, method="cubic")
    pts = np.column_stack([np.broadcast_to(x2, x1.shape).ravel(), x1.ravel()])
    return (interp_re(pts) + 1j * interp_im(pts)).reshape(x1.shape)


def pre_field_with_velocity(N, phase, force, epsilon, x, t, gamma=0.0, margin=5.0, dt=1e-2):
    """Field and its time derivative (5-point central difference in t)."""
    us = [evaluate_pre_field(N, phase, force, epsilon, x, t + j * dt, gamma, margin).u
          for j in (-2, -1, 1, 2)]
    v = (us[0] - 8 * us[1] + 8 * us[2] - us[3]) / (12 * dt)
    return evaluate_pre_field(N, phase, force, epsilon, x, t, gamma, margin).u, v


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    residual: float
    zero_branch: bool
    l_values: np.ndarray
    magnitudes: np.ndarray


def singularity_exponent(n, k, phase, force, x2=0.0, x1=0.0, l_range=(1e-1, 10 ** -2.5),
                         samples=24, t2_bracket=(0.0, 5.0), gamma=0.0):
    """Log-log slope of |U^n_k| against |l| as l -> 0 from below along x2 = const."""
    from scipy.optimize import brentq

    hi, lo = max(l_range), min(l_range)
    if np.log10(hi / lo) < 1.5:
        raise ValueError("approach samples must span at least 1.5 decades")
    targets = -np.logspace(np.log10(hi), np.log10(lo), samples)
    t2s = np.array([brentq(lambda t, c=c: float(eval_l(phase, t, x2)) - c, *t2_bracket, xtol=1e-15)
                    for c in targets])
    if abs(k) == 1 and n in _CLOSED:
        vals = np.abs(_CLOSED[n](phase, force, t2s, np.full_like(t2s, x2), np.full_like(t2s, x1)))
    else:
        vals = np.array([abs(_grid_values(n, k, phase, force, t, np.array([x2]), np.array([x1]),
                                          gamma, 13)[0]) for t in t2s])
    scale = abs(force(np.array([x1]))[0]) + abs(force.d1(np.array([x1]))[0]) + abs(force.d2(np.array([x1]))[0])
    mags = np.asarray(vals, float)
    if np.all(mags <= 1e-13 * max(scale, 1e-300) * np.abs(targets) ** (-(n - 2))) or np.all(mags == 0):
        return ExponentFit(float("nan"), 0.0, True, -targets, mags)
    A = np.column_stack([np.log(-targets), np.ones_like(targets)])
    coef, res, *_ = np.linalg.lstsq(A, np.log(mags), rcond=None)
    resid = float(np.sqrt(res[0] / samples)) if res.size else 0.0
    return ExponentFit(float(coef[0]), resid, False, -targets, mags)
