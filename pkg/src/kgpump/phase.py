"""Resonance geometry of the driving phase S(t2, x2).

Slow variables are ``t2 = eps^2 t`` and ``x2 = eps^2 x``; the layer uses
``t1 = t2 / eps`` and ``x1 = x2 / eps``. The resonance curve is the zero set of
``l = S_t2^2 - S_x2^2 - 1``.
"""
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .expr import Expression

TOL_ROOT = 1e-12
TOL_ODE = 1e-10


class GeometryError(RuntimeError):
    pass


class PhaseEvaluationError(GeometryError):
    pass


class TransversalityError(GeometryError):
    pass


class CausticError(GeometryError):
    pass


class SlowPoint(NamedTuple):
    t2: float
    x2: float


def _central4(fn, h, axis):
    """4th-order central difference of ``fn(t2, x2)`` along one slow axis."""

    def d(t2, x2):
        t2 = np.asarray(t2, float)
        x2 = np.asarray(x2, float)
        if axis == 0:
            f = lambda s: fn(t2 + s * h, x2)
        else:
            f = lambda s: fn(t2, x2 + s * h)
        return (-f(2) + 8 * f(1) - 8 * f(-1) + f(-2)) / (12 * h)

    return d


@dataclass(frozen=True)
class PhaseSpec:
    """Driving phase with its partial derivatives up to second order.

    All callables take ``(t2, x2)`` (scalars or broadcastable arrays).
    """

    s: Callable
    s_t2: Callable
    s_x2: Callable
    s_t2t2: Callable
    s_x2x2: Callable
    s_x2t2: Callable
    name: str = "custom"

    @classmethod
    def from_function(cls, s, h_fd=1e-4, name="custom", **known):
        """Fill any derivative not given in ``known`` by central differences.

        Second derivatives are differences of the (analytic or differenced)
        first derivatives, so each is 4th order in ``h_fd``.
        """
        s_t2 = known.get("s_t2") or _central4(s, h_fd, 0)
        s_x2 = known.get("s_x2") or _central4(s, h_fd, 1)
        return cls(
            s=s,
            s_t2=s_t2,
            s_x2=s_x2,
            s_t2t2=known.get("s_t2t2") or _central4(s_t2, h_fd, 0),
            s_x2x2=known.get("s_x2x2") or _central4(s_x2, h_fd, 1),
            s_x2t2=known.get("s_x2t2") or _central4(s_x2, h_fd, 0),
            name=name,
        )

    def gradient(self, t2, x2):
        return self.s_t2(t2, x2), self.s_x2(t2, x2)


def _const(c):
    return lambda t2, x2: np.full(np.broadcast(np.asarray(t2), np.asarray(x2)).shape, float(c))


def quadratic():
    """S = t2^2 / 2: the resonance curve is the line t2 = 1."""
    return PhaseSpec(
        s=lambda t2, x2: 0.5 * np.asarray(t2, float) ** 2 + 0.0 * np.asarray(x2, float),
        s_t2=lambda t2, x2: np.asarray(t2, float) + 0.0 * np.asarray(x2, float),
        s_x2=_const(0.0),
        s_t2t2=_const(1.0),
        s_x2x2=_const(0.0),
        s_x2t2=_const(0.0),
        name="quadratic",
    )


def quadratic_tilted(a):
    """S = t2^2 / 2 + a x2; resonance on t2 = sqrt(1 + a^2)."""
    a = float(a)
    return PhaseSpec(
        s=lambda t2, x2: 0.5 * np.asarray(t2, float) ** 2 + a * np.asarray(x2, float),
        s_t2=lambda t2, x2: np.asarray(t2, float) + 0.0 * np.asarray(x2, float),
        s_x2=_const(a),
        s_t2t2=_const(1.0),
        s_x2x2=_const(0.0),
        s_x2t2=_const(0.0),
        name=f"quadratic_tilted(a={a:g})",
    )


def linear(c):
    """S = c t2 (a constant-frequency drive)."""
    c = float(c)
    return PhaseSpec(
        s=lambda t2, x2: c * np.asarray(t2, float) + 0.0 * np.asarray(x2, float),
        s_t2=_const(c),
        s_x2=_const(0.0),
        s_t2t2=_const(0.0),
        s_x2x2=_const(0.0),
        s_x2t2=_const(0.0),
        name=f"linear(c={c:g})",
    )


def custom(source, h_fd=1e-4):
    """Phase from an expression in ``t2`` and ``x2``; derivatives by differencing."""
    return PhaseSpec.from_function(Expression(source), h_fd=h_fd, name=f"custom({source})")


def builtin_phase(name, a=0.0, expr=None, h_fd=1e-4):
    if name == "quadratic":
        return quadratic()
    if name == "quadratic_tilted":
        return quadratic_tilted(a)
    if name == "linear":
        return linear(a)
    if name == "custom":
        if not expr:
            raise ValueError("custom phase needs an expression")
        return custom(expr, h_fd=h_fd)
    raise ValueError(f"unknown phase {name!r}")


def eval_l(phase, t2, x2):
    """Resonance detuning l = S_t2^2 - S_x2^2 - 1."""
    st, sx = phase.gradient(t2, x2)
    val = np.asarray(st) ** 2 - np.asarray(sx) ** 2 - 1.0
    bad = ~np.isfinite(val)
    if np.any(bad):
        tt, xx = np.broadcast_arrays(np.asarray(t2, float), np.asarray(x2, float))
        idx = np.argwhere(bad)[0] if np.ndim(val) else ()
        raise PhaseEvaluationError(
            f"non-finite phase derivative at t2={tt[tuple(idx)]!r}, x2={xx[tuple(idx)]!r}")
    return val


def l_gradient(phase, t2, x2):
    """(dl/dt2, dl/dx2) from the second partials of S."""
    st, sx = phase.gradient(t2, x2)
    stt, sxx, sxt = phase.s_t2t2(t2, x2), phase.s_x2x2(t2, x2), phase.s_x2t2(t2, x2)
    return 2 * st * stt - 2 * sx * sxt, 2 * st * sxt - 2 * sx * sxx


def rate_expression(phase, t2, x2):
    """d lambda / d sigma on the curve: 2 S_t2 l_t2 - 2 S_x2 l_x2."""
    st, sx = phase.gradient(t2, x2)
    lt, lx = l_gradient(phase, t2, x2)
    return 2 * st * lt - 2 * sx * lx


@dataclass(frozen=True)
class ResonanceCurve:
    t2: np.ndarray
    x2: np.ndarray
    xi: np.ndarray  # fast-variable arclength, 0 at the origin, increasing with x2
    phi: np.ndarray
    origin: Optional[SlowPoint]
    epsilon: float
    phase: PhaseSpec = field(repr=False)

    @property
    def empty(self):
        return self.t2.size == 0

    def __len__(self):
        return int(self.t2.size)

    def l_eval(self, t2, x2):
        return eval_l(self.phase, t2, x2)

    def point(self, xi):
        """Slow point at curve parameter ``xi`` (cubic interpolation)."""
        if self.empty:
            raise GeometryError("empty resonance curve")
        if len(self) < 4:
            j = int(np.argmin(np.abs(self.xi - xi)))
            return SlowPoint(float(self.t2[j]), float(self.x2[j]))
        return SlowPoint(float(CubicSpline(self.xi, self.t2)(xi)),
                         float(CubicSpline(self.xi, self.x2)(xi)))


def _bisect(fn, a, b, fa, tol):
    for _ in range(200):
        m = 0.5 * (a + b)
        fm = fn(m)
        if fm == 0.0 or (abs(fm) < tol and b - a < 1e-6) or b - a <= 4 * np.finfo(float).eps * max(1.0, abs(m)):
            return m
        if np.sign(fm) == np.sign(fa):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def find_resonance_curve(phase, t2_window, x2_window, epsilon, n_lines=65,
                         origin_x2=0.0, tol_root=TOL_ROOT, n_scan=512,
                         check=True, tol_phi=1e-8):
    """Locate l = 0 by scanning lines of constant x2 over ``t2_window``.

    The first sign change along each line (in increasing t2) is refined by
    bisection. Returns an empty curve if l never changes sign. With
    ``check`` set, a vanishing crossing rate raises TransversalityError.
    """
    x_lines = np.linspace(x2_window[0], x2_window[1], n_lines)
    ts = np.linspace(t2_window[0], t2_window[1], n_scan)
    roots_t, roots_x = [], []
    for x2 in x_lines:
        lv = eval_l(phase, ts, np.full_like(ts, x2))
        sgn = np.sign(lv)
        change = np.nonzero(sgn[:-1] * sgn[1:] <= 0)[0]
        if change.size == 0:
            continue
        j = change[0]
        if lv[j] == 0.0:
            roots_t.append(ts[j])
        else:
            fn = lambda t, x2=x2: float(eval_l(phase, t, x2))
            roots_t.append(_bisect(fn, ts[j], ts[j + 1], lv[j], tol_root))
        roots_x.append(x2)
    if not roots_t:
        e = np.empty(0)
        return ResonanceCurve(e, e, e, e, None, epsilon, phase)
    t2 = np.array(roots_t)
    x2 = np.array(roots_x)
    seg = np.hypot(np.diff(t2), np.diff(x2))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    j0 = int(np.argmin(np.abs(x2 - origin_x2)))
    xi = (s - s[j0]) / epsilon
    phi = rate_expression(phase, t2, x2)
    curve = ResonanceCurve(t2, x2, xi, phi, SlowPoint(t2[j0], x2[j0]), epsilon, phase)
    if check:
        bad = np.nonzero(np.abs(phi) < tol_phi)[0]
        if bad.size:
            k = bad[0]
            raise TransversalityError(
                f"characteristics graze l=0 at t2={t2[k]:.6g}, x2={x2[k]:.6g} (phi={phi[k]:.3g})")
    return curve


@dataclass(frozen=True)
class TransversalityReport:
    passed: bool
    min_abs: float
    values: np.ndarray
    failing: np.ndarray  # sample indices


def check_transversality(phase, curve, tol=1e-8):
    """Evaluate l_x2 S_x2 - l_t2 S_t2 at every curve sample."""
    if curve.empty:
        return TransversalityReport(True, float("inf"), np.empty(0), np.empty(0, int))
    st, sx = phase.gradient(curve.t2, curve.x2)
    lt, lx = l_gradient(phase, curve.t2, curve.x2)
    vals = lx * sx - lt * st
    failing = np.nonzero(np.abs(vals) < tol)[0]
    return TransversalityReport(failing.size == 0, float(np.min(np.abs(vals))), vals, failing)


def crossing_rate(curve, xi, tol=1e-8):
    """phi(xi) = d lambda / d sigma at sigma = 0 (may be negative)."""
    p = curve.point(xi)
    val = float(rate_expression(curve.phase, p.t2, p.x2))
    if abs(val) < tol:
        raise TransversalityError(f"crossing rate vanishes at xi={xi:g}")
    return val


@dataclass(frozen=True)
class Characteristic:
    """A layer characteristic through an origin point, parametrised by sigma."""

    origin: SlowPoint
    epsilon: float
    sigma: np.ndarray
    t2: np.ndarray
    x2: np.ndarray
    lam: np.ndarray
    Lam: np.ndarray  # integral of lambda from 0 to sigma
    truncated: bool
    _dense: Callable = field(repr=False)
    _phase: PhaseSpec = field(repr=False)
    expansion_coeffs: Optional[dict] = None

    @property
    def t1(self):
        return self.t2 / self.epsilon

    @property
    def x1(self):
        return self.x2 / self.epsilon

    def state(self, sigma):
        """(t2, x2, Lambda) at arbitrary sigma inside the integrated range."""
        return self._dense(np.asarray(sigma, float))

    def lam_at(self, sigma):
        t2, x2, _ = self.state(sigma)
        return eval_l(self._phase, t2, x2) / self.epsilon

    def ode_residual(self):
        """Max deviation between the sampled path's derivative and the ODE right side."""
        h = 1e-4
        s = self.sigma[2:-2]
        if s.size == 0:
            return 0.0
        fwd, bwd = self.state(s + h), self.state(s - h)
        d = (fwd - bwd) / (2 * h)
        t2, x2, _ = self.state(s)
        st, sx = self._phase.gradient(t2, x2)
        rhs = np.vstack([2 * self.epsilon * st, -2 * self.epsilon * sx,
                         eval_l(self._phase, t2, x2) / self.epsilon])
        scale = np.maximum(1.0, np.abs(rhs))
        return float(np.max(np.abs(d - rhs) / scale))


def integrate_characteristics(phase, origin, sigma_range, epsilon, n_samples=801,
                              c1=1.0, window=None, rtol=1e-12, atol=1e-14,
                              max_steps=200000):
    """Integrate dt1/dsigma = 2 S_t2, dx1/dsigma = -2 S_x2 from ``origin``.

    Works in slow variables (dt2/dsigma = 2 eps S_t2, ...), carrying
    Lambda = int_0^sigma lambda alongside. ``window`` = ((t2_lo, t2_hi),
    (x2_lo, x2_hi)) truncates the path where it leaves the slow window.
    """
    s_lo, s_hi = float(sigma_range[0]), float(sigma_range[1])
    if not s_lo <= 0.0 <= s_hi:
        raise ValueError("sigma_range must contain 0")
    limit = c1 / epsilon
    if max(abs(s_lo), abs(s_hi)) > limit:
        raise GeometryError(f"|sigma| must stay below c1/eps = {limit:g}")

    def rhs(_s, y):
        st, sx = phase.gradient(y[0], y[1])
        return [2 * epsilon * st, -2 * epsilon * sx, float(eval_l(phase, y[0], y[1])) / epsilon]

    events = []
    if window is not None:
        (tl, th), (xl, xh) = window

        def leave(_s, y):
            return min(y[0] - tl, th - y[0], y[1] - xl, xh - y[1])

        leave.terminal = True
        events.append(leave)

    y0 = [origin.t2, origin.x2, 0.0]
    sols, truncated = [], False
    for end in (s_lo, s_hi):
        if end == 0.0:
            sols.append(None)
            continue
        sol = solve_ivp(rhs, (0.0, end), y0, method="DOP853", rtol=rtol, atol=atol,
                        dense_output=True, events=events or None)
        if sol.status < 0:
            raise GeometryError(f"characteristic integration failed: {sol.message}")
        if sol.status == 1:
            truncated = True
        sols.append(sol)

    lo_end = sols[0].t[-1] if sols[0] is not None else 0.0
    hi_end = sols[1].t[-1] if sols[1] is not None else 0.0

    def dense(s):
        s = np.asarray(s, float)
        out = np.empty((3,) + s.shape)
        neg = s < 0
        if np.any(neg):
            out[:, neg] = sols[0].sol(s[neg])
        if np.any(~neg):
            if sols[1] is None:
                out[:, ~neg] = np.asarray(y0)[:, None]
            else:
                out[:, ~neg] = sols[1].sol(s[~neg])
        return out

    sigma = np.linspace(lo_end, hi_end, n_samples)
    t2, x2, Lam = dense(sigma)
    lam = eval_l(phase, t2, x2) / epsilon

    st, sx = phase.gradient(origin.t2, origin.x2)
    stt, sxx, sxt = (phase.s_t2t2(origin.t2, origin.x2), phase.s_x2x2(origin.t2, origin.x2),
                     phase.s_x2t2(origin.t2, origin.x2))
    coeffs = {"g1": float(-(st * sxt - sx * sxx)), "h1": float(st * stt - sx * sxt)}
    return Characteristic(origin, epsilon, sigma, t2, x2, lam, Lam, truncated, dense, phase,
                          coeffs)


@dataclass(frozen=True)
class PhaseField:
    """Post-resonance eigenphase Phi on a slow grid ``(t2[i], x2[j])``."""

    t2: np.ndarray
    x2: np.ndarray
    phi: np.ndarray
    phi_t2: np.ndarray
    phi_x2: np.ndarray
    phi_t2t2: np.ndarray
    phi_x2x2: np.ndarray
    xi: np.ndarray  # ray label (fast arclength along l = 0) through each node
    dispersion: np.ndarray  # (d_t1 xi)^2 - (d_x1 xi)^2
    epsilon: float

    def residual(self):
        return np.abs(self.phi_t2 ** 2 - self.phi_x2 ** 2 - 1.0)

    def damping(self):
        return self.phi_t2t2 - self.phi_x2x2


def solve_eikonal(phase, curve, t2_grid, x2_grid, tol_root=TOL_ROOT):
    """Launch straight eikonal rays from l = 0 and sample Phi on a grid.

    On the curve Phi = S and grad Phi = grad S; along a ray with parameter
    s the point moves by (2 Phi_t2, -2 Phi_x2) ds and Phi grows by 2 ds.
    """
    if curve.empty:
        raise GeometryError("eikonal data needs a non-empty resonance curve")
    eps = curve.epsilon
    xi_c = curve.xi
    tc, xc = curve.t2, curve.x2
    pc, qc = phase.gradient(tc, xc)
    pc = np.broadcast_to(pc, tc.shape).astype(float)
    qc = np.broadcast_to(qc, tc.shape).astype(float)
    sc = np.broadcast_to(phase.s(tc, xc), tc.shape).astype(float)
    if len(curve) >= 4:
        T, X, P, Q, S0 = (CubicSpline(xi_c, v) for v in (tc, xc, pc, qc, sc))
    else:
        raise GeometryError("need at least 4 curve samples for ray interpolation")
    dT, dX, dP, dQ = T.derivative(), X.derivative(), P.derivative(), Q.derivative()

    tg, xg = np.meshgrid(np.asarray(t2_grid, float), np.asarray(x2_grid, float), indexing="ij")
    flat_t, flat_x = tg.ravel(), xg.ravel()

    def g(xi, t, x):
        return -(t - T(xi)) * Q(xi) - (x - X(xi)) * P(xi)

    xi_nodes = np.empty(flat_t.size)
    for n, (t, x) in enumerate(zip(flat_t, flat_x)):
        gv = g(xi_c, t, x)
        sgn = np.sign(gv)
        hits = np.nonzero(sgn[:-1] * sgn[1:] <= 0)[0]
        if hits.size == 0:
            raise GeometryError(f"grid node t2={t:.6g}, x2={x:.6g} is not reached by any ray")
        cands = []
        for k in hits:
            a, b = xi_c[k], xi_c[k + 1]
            ga, gb = g(a, t, x), g(b, t, x)
            if ga == 0.0 or gb == 0.0:
                cands.append(a if ga == 0.0 else b)
                continue
            cands.append(brentq(lambda z: float(g(z, t, x)), a, b, xtol=1e-13, rtol=1e-15))
        cands = np.unique(np.round(cands, 10))
        if cands.size > 1:
            raise CausticError(f"rays cross at t2={t:.6g}, x2={x:.6g}")
        xi_nodes[n] = cands[0]

    Pn, Qn = P(xi_nodes), Q(xi_nodes)
    s_nodes = ((flat_t - T(xi_nodes)) * 2 * Pn - (flat_x - X(xi_nodes)) * 2 * Qn) / (4 * (Pn ** 2 + Qn ** 2))
    det = (dT(xi_nodes) + 2 * s_nodes * dP(xi_nodes)) * (-2 * Qn) - 2 * Pn * (dX(xi_nodes) - 2 * s_nodes * dQ(xi_nodes))
    det0 = dT(xi_nodes) * (-2 * Qn) - 2 * Pn * dX(xi_nodes)
    flip = np.nonzero(np.sign(det) != np.sign(det0))[0]
    if flip.size:
        k = flip[0]
        raise CausticError(f"ray map folds near t2={flat_t[k]:.6g}, x2={flat_x[k]:.6g}")

    shape = tg.shape
    phi = (S0(xi_nodes) + 2 * s_nodes).reshape(shape)
    phi_t = Pn.reshape(shape)
    phi_x = Qn.reshape(shape)
    # grad xi from inverting d(t2, x2)/d(xi, s); xi is in fast units
    dxi_dt = (-2 * Qn) / det
    dxi_dx = -(2 * Pn) / det
    disp = (eps ** 2 * (dxi_dt ** 2 - dxi_dx ** 2)).reshape(shape)
    # second partials: Phi_t2 = P(xi(t2, x2)) and Phi_x2 = Q(xi(t2, x2))
    phi_tt = (dP(xi_nodes) * dxi_dt).reshape(shape)
    phi_xx = (dQ(xi_nodes) * dxi_dx).reshape(shape)
    return PhaseField(np.asarray(t2_grid, float), np.asarray(x2_grid, float), phi, phi_t, phi_x,
                      phi_tt, phi_xx, xi_nodes.reshape(shape), disp, eps)
