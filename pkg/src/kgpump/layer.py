"""Internal layer near l = 0: transport along characteristics.

Along a characteristic (d/dsigma = 2 S_t2 d_t1 - 2 S_x2 d_x1) the layer
amplitudes solve

    i W' - lambda W = F,                W -> 0 as lambda -> -inf,

whose solution is W = -i e^{-i Lam} int_{-inf}^sigma F e^{i Lam}, with
Lam = int_0^sigma lambda. The oscillatory integral is done panel by panel
(Gauss-Legendre, <= pi/4 phase advance per panel), and the infinite tails
by the integration-by-parts series W_0 = -F/lambda, W_{j+1} = (i/lambda) W_j'.
"""
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import RegularGridInterpolator
from scipy.special import loggamma

from .fd import derivative
from .phase import integrate_characteristics

LAM_MATCH = 20.0
MAX_TERMS = 6

_GL10 = leggauss(10)
_GL20 = leggauss(20)


class LayerError(RuntimeError):
    pass


class SpanError(LayerError):
    pass


class QuadratureError(LayerError):
    pass


def _gl(nodes, a, b):
    x, w = nodes
    a, b = np.asarray(a)[..., None], np.asarray(b)[..., None]
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def source_along(char, force):
    """F(sigma) = f(x1(sigma)) on a characteristic."""
    eps = char.epsilon

    def F(s):
        _, x2, _ = char.state(s)
        return np.asarray(force(x2 / eps), complex)

    return F


def tail_series(char, source, sigma, terms=4, h=0.05, sign=1):
    """Non-oscillatory particular solution sum_{j<terms} W_j at ``sigma``.

    Derivatives of the smooth W_j are taken by 6th-order differences on a
    local stencil of spacing ``h``; ``sign=-1`` gives the conjugate problem.
    """
    if terms < 1:
        raise ValueError("need at least one series term")
    if terms > MAX_TERMS:
        raise LayerError(f"series limited to {MAX_TERMS} terms by stencil smoothness")
    sigma = np.atleast_1d(np.asarray(sigma, float))
    m = 4 * terms + 4
    grid = sigma[:, None] + h * np.arange(-m, m + 1)[None, :]
    lam = char.lam_at(grid)
    w = -source(grid) / lam
    total = w.copy()
    for _ in range(terms - 1):
        w = sign * 1j / lam * derivative(w, h, 1, axis=1, order=6)
        total = total + w
    return total[:, m]


class _Duhamel:
    """Cumulative oscillatory integral of ``source * exp(i sign Lam)`` on a characteristic."""

    def __init__(self, char, source, sign=1, terms=4, tol=1e-9, h_max=0.25):
        self.char, self.source, self.sign, self.terms = char, source, sign, terms
        s_lo, s_hi = float(char.sigma[0]), float(char.sigma[-1])
        # panels of equal phase advance pi/4 (or h_max where lambda is small)
        fine = np.linspace(s_lo, s_hi, 40 * char.sigma.size)
        rate = np.maximum(np.abs(char.lam_at(fine)), np.pi / (4 * h_max))
        mu = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(fine))])
        npan = max(int(np.ceil(mu[-1] / (np.pi / 4))), 1)
        self.edges = np.interp(np.linspace(0, mu[-1], npan + 1), mu, fine)
        self.edges[0], self.edges[-1] = s_lo, s_hi
        a, b = self.edges[:-1], self.edges[1:]
        p10 = self._panel(a, b, _GL10)
        p20 = self._panel(a, b, _GL20)
        self.err = float(np.sum(np.abs(p20 - p10)))
        scale = max(float(np.max(np.abs(p20))), 1e-300) * np.sqrt(npan)
        if self.err > tol * max(scale, 1.0) and self.err > 1e-13:
            raise QuadratureError(f"panel quadrature did not converge (err {self.err:.2e})")
        self.cum = np.concatenate([[0.0], np.cumsum(p20)])
        # tails beyond the integrated range, from the non-oscillatory series
        self.start_lo = 1j * sign * self._e(s_lo) * tail_series(char, source, s_lo, terms, sign=sign)[0]
        self.end_hi = -1j * sign * self._e(s_hi) * tail_series(char, source, s_hi, terms, sign=sign)[0]

    def _e(self, s):
        return np.exp(1j * self.sign * self.char.state(s)[2])

    def _panel(self, a, b, nodes):
        x, w = _gl(nodes, a, b)
        return np.sum(w * self.source(x) * self._e(x), axis=-1)

    def integral_from_lo(self, s):
        """int_{sigma_lo}^{s} F e^{i sign Lam} for each entry of ``s``."""
        s = np.atleast_1d(np.asarray(s, float))
        j = np.clip(np.searchsorted(self.edges, s, side="right") - 1, 0, self.edges.size - 2)
        return self.cum[j] + self._panel(self.edges[j], s, _GL20)

    @property
    def total(self):
        return self.cum[-1]


@dataclass(frozen=True)
class LayerCoefficient:
    n: int
    k: int
    sigma: np.ndarray
    values: np.ndarray
    lam: np.ndarray
    rhs: np.ndarray
    char: object = field(repr=False)
    orientation: int = 1  # sign of the crossing rate
    sign: int = 1  # exponent convention, -1 gives the conjugate problem
    accumulated: Optional[complex] = None
    quad_error: float = 0.0
    _eval: Optional[Callable] = field(default=None, repr=False)
    _source: Optional[Callable] = field(default=None, repr=False)
    extra: dict = field(default_factory=dict)

    def conj_partner(self):
        ev = None if self._eval is None else (lambda s: np.conj(self._eval(s)))
        return LayerCoefficient(self.n, -self.k, self.sigma, np.conj(self.values), self.lam,
                                np.conj(self.rhs), self.char, self.orientation, -self.sign,
                                None if self.accumulated is None else np.conj(self.accumulated),
                                self.quad_error, ev, None, dict(self.extra))

    def value(self, sigma):
        if self._eval is None:
            raise LayerError("coefficient has no evaluator")
        return self._eval(sigma)

    def derivative(self, sigma):
        """From the transport equation: W' = -i sign (lambda W + F)."""
        s = np.asarray(sigma, float)
        return -1j * self.sign * (self.char.lam_at(s) * self.value(s) + self._source(s))

    def transport_residual(self, h_scale=3e-3):
        """Residual of i sign W' - lambda W = F relative to max|F|.

        Measured in the demodulated frame M = i sign o e^{i sign Lam} W, where
        it reads M' = o F e^{i sign Lam} (o the orientation). The two forms
        agree because Lam' = lambda holds along the integrated characteristic;
        the frame avoids differencing the fast carrier. M' by 5-point stencil.
        """
        s = self.sigma[4:-4]
        lam = self.char.lam_at(s)
        h = h_scale / np.maximum(1.0, np.abs(lam))
        c = 1j * self.sign * self.orientation

        def M(x):
            return c * np.exp(1j * self.sign * self.char.state(x)[2]) * self.value(x)

        vals = [M(s + j * h) for j in (-2, -1, 1, 2)]
        d = (vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * h)
        r = d - self.orientation * self._source(s) * np.exp(1j * self.sign * self.char.state(s)[2])
        fmax = max(float(np.max(np.abs(self.rhs))), 1e-300)
        return float(np.max(np.abs(r)) / fmax)


def _check_span(char, lam_match, orientation):
    lam = char.lam
    if lam.min() > -lam_match:
        raise SpanError(f"characteristic reaches lambda = {lam.min():.3g} only; "
                        f"need <= {-lam_match:g}")
    if lam.max() < 1.0:
        raise SpanError(f"characteristic never leaves the resonance (max lambda {lam.max():.3g})")
    if orientation * (lam[-1] - lam[0]) <= 0:
        raise SpanError("lambda is not monotone in the recorded orientation")


def solve_transport(char, source, n=1, orientation=None, lam_match=LAM_MATCH, terms=4,
                    sign=1, tol=1e-9):
    """Duhamel solution of i sign W' - lambda W = source with the zero condition."""
    if orientation is None:
        orientation = 1 if char.lam[-1] > char.lam[0] else -1
    _check_span(char, lam_match, orientation)
    dq = _Duhamel(char, source, sign=sign, terms=terms, tol=tol)
    s_lo, s_hi = float(char.sigma[0]), float(char.sigma[-1])
    full = dq.start_lo + dq.total + dq.end_hi  # int over the whole real line
    if orientation > 0:
        def ev(s):
            s = np.asarray(s, float)
            I = dq.start_lo + dq.integral_from_lo(s.ravel()).reshape(s.shape)
            return -1j * sign * np.exp(-1j * sign * char.state(s)[2]) * I
    else:
        def ev(s):
            s = np.asarray(s, float)
            J = dq.total - dq.integral_from_lo(s.ravel()).reshape(s.shape) + dq.end_hi
            return 1j * sign * np.exp(-1j * sign * char.state(s)[2]) * J
    vals = ev(char.sigma)
    return LayerCoefficient(n, 1 if sign > 0 else -1, char.sigma, vals, char.lam,
                            source(char.sigma), char, orientation, sign, complex(full),
                            dq.err, ev, source)


def layer_leading(char, force, phase=None, lam_match=LAM_MATCH, terms=4, sign=1, tol=1e-9):
    """W^1_1 along ``char`` for the force profile."""
    return solve_transport(char, source_along(char, force), 1, None, lam_match, terms, sign, tol)


def third_harmonic(leading, gamma):
    """Algebraic W^3_3 = (gamma / 8) (W^1_1)^3."""
    vals = gamma / 8.0 * leading.values ** 3
    ev = None
    if leading._eval is not None:
        ev = lambda s: gamma / 8.0 * leading.value(s) ** 3
    return LayerCoefficient(3, 3 * leading.k, leading.sigma, vals, leading.lam,
                            np.zeros_like(vals), leading.char, leading.orientation,
                            leading.sign, None, 0.0, ev, None)


def unit_force():
    from .pre import ForceProfile
    one = lambda y: np.ones_like(np.asarray(y, float))
    return ForceProfile(one, lambda y: 0 * one(y), lambda y: 0 * one(y), np.inf, "unit")


def first_correction_source(char, phase, force, gamma=0.0, lam_match=LAM_MATCH, terms=4):
    """Source of the W^2_1 transport problem for x2-independent phases.

    With exact coefficients along the characteristic the slow-derivative
    terms are already inside W^1_1, leaving
        F^2 = (d_x1^2 - d_t1^2) W^1 - i (S_t2t2 - S_x2x2) W^1 - 3 gamma |W^1|^2 W^1.
    Characteristics sit at fixed x1 here, so W^1 = f(x1) w(sigma).
    """
    t2, x2, _ = char.state(char.sigma)
    if np.max(np.abs(phase.s_x2(t2, x2))) > 1e-12:
        raise NotImplementedError("first correction implemented for x2-independent phases")
    unit = layer_leading(char, unit_force(), lam_match=lam_match, terms=terms)
    x1 = char.origin.x2 / char.epsilon
    f0 = complex(force(np.array([x1]))[0])
    f2 = complex(force.d2(np.array([x1]))[0])
    eps = char.epsilon

    def F2(s):
        s = np.asarray(s, float)
        t, x, _ = char.state(s)
        st, stt = phase.s_t2(t, x), phase.s_t2t2(t, x)
        lam = char.lam_at(s)
        w = unit.value(s)
        w1 = -1j * (lam * w + 1.0)
        lam1 = 2 * st * 2 * st * stt  # d lambda / d sigma = l_t2 * 2 S_t2
        w2 = -1j * (lam1 * w + lam * w1)
        wtt = (w2 / (2 * st) - eps * stt * w1 / st) / (2 * st)
        return (f2 * w - f0 * wtt - 1j * (stt - phase.s_x2x2(t, x)) * f0 * w
                - 3 * gamma * abs(f0) ** 2 * f0 * np.abs(w) ** 2 * w)

    return F2, unit, f0


def layer_first_correction(char, phase, force, leading=None, gamma=0.0, lam_match=LAM_MATCH,
                           terms=4, fit_window=(5.0, 15.0), fit_degree=3):
    """W^2_1 by Duhamel quadrature plus a polynomial fit of its secular growth.

    The growing part is measured in the frame I(sigma) = i e^{i Lam} W^2 on
    ``fit_window`` (in lambda) and reported as polynomial coefficients in
    sigma (lowest first) under ``extra["secular"]``.
    """
    F2, unit, f0 = first_correction_source(char, phase, force, gamma, lam_match, terms)
    coef = solve_transport(char, F2, 2, None, lam_match, terms)
    lam = char.lam
    sel = (lam >= fit_window[0]) & (lam <= fit_window[1])
    extra = {"unit_accumulated": unit.accumulated, "f0": f0}
    if sel.sum() > fit_degree + 2:
        s = char.sigma[sel]
        frame = 1j * np.exp(1j * char.state(s)[2]) * (coef.values[sel]
                                                     - tail_series(char, F2, s, terms))
        V = np.vander(s, fit_degree + 1, increasing=True)
        c, *_ = np.linalg.lstsq(V, frame, rcond=None)
        extra["secular"] = c
        extra["secular_fit_residual"] = float(np.max(np.abs(V @ c - frame)))
    return LayerCoefficient(2, 1, coef.sigma, coef.values, coef.lam, coef.rhs, char,
                            coef.orientation, 1, coef.accumulated, coef.quad_error,
                            coef._eval, coef._source, extra)


@dataclass(frozen=True)
class TailComparison:
    side: int
    sigma: np.ndarray
    lam: np.ndarray
    series: np.ndarray
    deviation: np.ndarray  # |W - series|
    relative: np.ndarray  # deviation / |W|
    plateau: Optional[np.ndarray] = None  # |W - particular series| on the + side


def layer_tail_series(coef, side, terms=1, lam_min=LAM_MATCH):
    """Compare the quadrature solution with its lambda -> side*inf asymptotics."""
    if side not in (-1, 1):
        raise ValueError("side must be -1 or +1")
    if coef._source is None:
        raise LayerError("coefficient carries no source")
    sel = side * coef.lam >= lam_min
    s = coef.sigma[sel]
    part = tail_series(coef.char, coef._source, s, terms, sign=coef.sign)
    W = coef.values[sel]
    plateau = None
    series = part
    if side > 0:
        post = -1j * coef.sign * coef.orientation
        osc = post * coef.accumulated * np.exp(-1j * coef.sign * coef.char.state(s)[2])
        series = part + osc
        plateau = np.abs(W - part)
    dev = np.abs(W - series)
    return TailComparison(side, s, coef.lam[sel], series, dev, dev / np.maximum(np.abs(W), 1e-300),
                          plateau)


@dataclass(frozen=True)
class AccumulatedAmplitude:
    xi_grid: np.ndarray
    values: np.ndarray  # int f e^{i Lam} dsigma over the whole characteristic
    phi: np.ndarray
    stationary_phase: np.ndarray
    phase_convention: dict
    quad_error: np.ndarray
    alt_factor: float = 2.0

    @property
    def post_envelope(self):
        """Coefficient of e^{-i Lam} in W^1_1 after the crossing."""
        return -1j * self.phase_convention["exponent_sign"] * np.sign(self.phi) * self.values

    @property
    def doubled_values(self):
        """Alternative normalisation carried for comparison (twice the oracle)."""
        return self.alt_factor * self.stationary_phase


def stationary_phase(f_value, phi, sign=1):
    return f_value * np.sqrt(2 * np.pi / np.abs(phi)) * np.exp(1j * sign * np.sign(phi) * np.pi / 4)


def quadratic_exact_amplitude(f_value, epsilon):
    """Closed form of int exp(i Lam) for S = t2^2/2 (Abel-regularised tails).

    Lam = (u - 1 - ln u) / (4 eps^2) with u = exp(4 eps sigma) turns the
    integral into a Gamma function: with kappa = 1/(4 eps^2),
    (1/(4 eps)) e^{-i kappa} Gamma(-i kappa) (-i kappa)^{i kappa}.
    """
    kappa = 1.0 / (4.0 * epsilon ** 2)
    logv = (-1j * kappa + loggamma(-1j * kappa) + 1j * kappa * np.log(kappa) + np.pi * kappa / 2)
    return f_value * np.exp(logv) / (4.0 * epsilon)


def auto_lam_match(char, fraction=0.5):
    """min(LAM_MATCH, fraction of the |lambda| reached on the short side)."""
    return float(min(LAM_MATCH, fraction * min(-char.lam.min(), char.lam.max())))


def accumulated_amplitude(curve, force, phase, epsilon, xi=None, lam_match=LAM_MATCH,
                          lam_reach=None, c1=1.0, terms=4, sign=1, n_samples=401, _fast=True):
    """Accumulated amplitude on characteristics through the curve points ``xi``.

    ``lam_match=None`` picks min(LAM_MATCH, half the |lambda| the characteristic
    reaches inside its validity window) per point, for moderate eps.
    """
    if curve.empty:
        raise LayerError("empty resonance curve")
    xi = curve.xi if xi is None else np.atleast_1d(np.asarray(xi, float))
    if _fast and _x2_independent(curve, phase):
        # every characteristic is the same curve: A(xi) = f(x1(xi)) A_unit
        unit = accumulated_amplitude(_single_point(curve), unit_force(), phase, epsilon,
                                     None, lam_match, lam_reach, c1, terms, sign, n_samples,
                                     _fast=False)
        x1 = np.interp(xi, curve.xi, curve.x2) / epsilon
        fv = np.asarray(force(x1), complex)
        phi = np.full(xi.shape, unit.phi[0])
        conv = dict(unit.phase_convention, fast_path="x2-independent phase")
        return AccumulatedAmplitude(np.asarray(xi), fv * unit.values[0], phi,
                                    np.array([stationary_phase(v, phi[0], sign) for v in fv]),
                                    conv, np.abs(fv) * unit.quad_error[0])
    vals, phis, errs, sp, used = [], [], [], [], []
    for x in xi:
        p = curve.point(x)
        phi = float(np.interp(x, curve.xi, curve.phi))
        lm, reach = lam_match, lam_reach
        if lm is None:
            full = integrate_characteristics(phase, p, (-0.999 * c1 / epsilon, 0.999 * c1 / epsilon),
                                             epsilon, n_samples=n_samples, c1=c1)
            lm = auto_lam_match(full)
        reach = 3 * lm if reach is None else reach
        span = min(reach / abs(phi) * 1.5, 0.999 * c1 / epsilon)
        char = integrate_characteristics(phase, p, (-span, span), epsilon, n_samples=n_samples,
                                         c1=c1)
        # trim to the lambda range actually needed
        lam = char.lam
        keep = np.abs(lam) <= reach * 1.05
        lo, hi = np.nonzero(keep)[0][[0, -1]]
        if hi - lo < 20:
            raise SpanError("characteristic too short after trimming")
        if lo > 0 or hi < lam.size - 1:
            char = integrate_characteristics(phase, p, (char.sigma[lo], char.sigma[hi]), epsilon,
                                             n_samples=n_samples, c1=c1)
        coef = layer_leading(char, force, phase, lm, terms, sign)
        vals.append(coef.accumulated)
        errs.append(coef.quad_error)
        phis.append(phi)
        used.append(lm)
        fv = complex(force(np.array([p.x2 / epsilon]))[0])
        sp.append(stationary_phase(fv, phi, sign))
    conv = {"exponent_sign": sign, "phi_sign": np.sign(phis).astype(int).tolist(),
            "oracle": "f sqrt(2 pi/|phi|) exp(i sgn(phi) pi/4)",
            "lam_match": sorted(set(float(u) for u in used))}
    return AccumulatedAmplitude(np.asarray(xi), np.array(vals), np.array(phis), np.array(sp),
                                conv, np.array(errs))


def _x2_independent(curve, phase):
    if len(curve) < 2:
        return False
    t2 = np.asarray(curve.t2, float)
    if np.ptp(t2) > 1e-12:
        return False
    tt = np.linspace(0.5 * t2[0], 1.5 * t2[0], 7)
    T, X = np.meshgrid(tt, np.asarray(curve.x2, float)[:: max(1, len(curve) // 8)])
    return bool(np.all(np.asarray(phase.s_x2(T, X)) == 0)
                and np.all(np.asarray(phase.s_x2t2(T, X)) == 0)
                and np.all(np.asarray(phase.s_x2x2(T, X)) == 0))


def _single_point(curve):
    j = len(curve) // 2
    return replace(curve, t2=curve.t2[j:j + 1], x2=curve.x2[j:j + 1], xi=curve.xi[j:j + 1],
                   phi=curve.phi[j:j + 1])


def phase_deviation(char, Phi):
    """S/eps^2 - Lam - Phi/eps^2 along a characteristic.

    ``Phi`` is a PhaseField or a callable Phi(t2, x2). Small (O(eps sigma^3))
    where the layer phase matches the post-resonance eikonal phase.
    """
    if not callable(Phi):
        pf = Phi
        interp = RegularGridInterpolator((pf.t2, pf.x2), pf.phi, method="cubic")
        Phi = lambda t, x: interp(np.column_stack([np.ravel(t), np.ravel(x)])).reshape(np.shape(t))
    t2, x2, Lam = char.state(char.sigma)
    eps2 = char.epsilon ** 2
    return (char._phase.s(t2, x2) - Phi(t2, x2)) / eps2 - Lam
