"""Direct solution against the three asymptotic regimes.

All comparisons use quadrature envelopes Z = (u - i v / omega) e^{-i theta}
of the direct and the predicted field with the same carrier, so the
demodulation itself cancels out of the error. Pre-resonance and layer use
theta = S / eps^2, post-resonance theta = Phi / eps^2.

Layer and post predictions need the phase to be independent of x2 (then all
characteristics coincide, xi = x1, Phi = S(t2c) + t2 - t2c, D = -1 and
g = 3 gamma); for other phases those regions are reported as unsupported.
"""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from . import direct, layer, post, pre
from .demod import quadrature_envelope
from .phase import SlowPoint, eval_l, find_resonance_curve, integrate_characteristics

REGIMES = ("pre", "layer", "post")
FD_DT = 2e-2  # fast-time step for predicted velocities


class ExperimentError(RuntimeError):
    def __init__(self, stage, exc):
        self.stage = stage
        super().__init__(f"{stage}: {exc}")


class FocusingError(ExperimentError, ValueError):
    pass


@dataclass(frozen=True)
class RegionSpec:
    regime: str
    margin: float
    threshold: Optional[float] = None  # fixed bound on |l| replacing margin * eps

    def bound(self, eps):
        if self.regime == "layer":
            return self.margin * np.sqrt(eps)
        return self.threshold if self.threshold is not None else self.margin * eps

    def contains(self, l, eps):
        b = self.bound(eps)
        if self.regime == "pre":
            return -l > b
        if self.regime == "post":
            return l > b
        return np.abs(l) < b

    def describe(self, eps):
        b = self.bound(eps)
        return {"pre": f"-l > {b:.6g}", "layer": f"|l| < {b:.6g}", "post": f"l > {b:.6g}"}[self.regime]


def regions_from(cfg):
    r = cfg["regions"]
    return (RegionSpec("pre", r["m_pre"], r["pre_threshold"]),
            RegionSpec("layer", r["m_lay"]),
            RegionSpec("post", r["m_post"], r["post_threshold"]))


def check_seams(regions, eps):
    """Neighbouring regions must overlap for the seam checks to mean anything."""
    pre_r, lay, post_r = regions
    if not pre_r.bound(eps) < lay.bound(eps) or not post_r.bound(eps) < lay.bound(eps):
        raise ExperimentError("regions", f"no seam overlap at eps={eps:g}: "
                              f"{pre_r.describe(eps)}, {lay.describe(eps)}, {post_r.describe(eps)}")


@dataclass
class RegionError:
    regime: str
    bounds: str
    supported: bool = True
    n_points: int = 0
    rel_l2: float = 0.0
    rel_linf: float = 0.0
    peak_direct: float = 0.0
    peak_predicted: float = 0.0
    note: str = ""
    extra: dict = field(default_factory=dict)


@dataclass
class ComparisonReport:
    epsilon: float
    config_hash: str
    regions: dict
    seams: dict
    orders: dict
    runtime: float = 0.0
    meta: dict = field(default_factory=dict)

    def errors(self):
        return {k: r.rel_l2 for k, r in self.regions.items() if r.supported}

    def to_dict(self, timing=False):
        d = {"epsilon": self.epsilon, "config_hash": self.config_hash, "orders": self.orders,
             "regions": {k: asdict(v) for k, v in self.regions.items()},
             "seams": self.seams, "meta": self.meta}
        if timing:
            d["runtime_s"] = self.runtime
        return _clean(d)

    def to_markdown(self):
        lines = [f"# Regime comparison, eps = {self.epsilon:g}", "",
                 f"config `{self.config_hash}`, runtime {self.runtime:.1f} s", "",
                 "| region | bounds | points | rel L2 | rel Linf | peak direct | peak predicted |",
                 "|---|---|---|---|---|---|---|"]
        for k, r in self.regions.items():
            if not r.supported:
                lines.append(f"| {k} | {r.bounds} | - | unsupported | | | |")
                continue
            lines.append(f"| {k} | {r.bounds} | {r.n_points} | {r.rel_l2:.4g} | {r.rel_linf:.4g} "
                         f"| {r.peak_direct:.4g} | {r.peak_predicted:.4g} |")
        if self.seams:
            lines += ["", "| seam | discrepancy | bound | ok |", "|---|---|---|---|"]
            for k, s in self.seams.items():
                lines.append(f"| {k} | {s['discrepancy']:.4g} | {s['bound']:.4g} | {s['ok']} |")
        return "\n".join(lines) + "\n"


def _clean(obj):
    """JSON-safe copy: numpy scalars to python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


# -- predictions --------------------------------------------------------------

def _x2_independent(phase):
    t = np.linspace(0.0, 3.0, 13)
    T, X = np.meshgrid(t, np.linspace(-2.0, 2.0, 9))
    return all(np.all(np.asarray(fn(T, X)) == 0) for fn in (phase.s_x2, phase.s_x2t2, phase.s_x2x2))


def _is_zero(force):
    if force.is_zero:
        return True
    return not np.any(np.asarray(force(np.linspace(-50, 50, 2001))))


def _x1_window(cfg, force, grid, eps):
    w = cfg["regions"]["x1_window"]
    if w is None:
        y = np.linspace(-50, 50, 20001)
        fy = np.abs(force(y))
        big = y[fy >= 1e-4 * max(fy.max(), 1e-300)]
        w = 1.5 * np.max(np.abs(big)) + 3.0 if big.size else 1.0
    inner = (0.5 - grid.sponge_fraction) * grid.length * 0.95 if grid.boundary == "sponge" \
        else 0.5 * grid.length
    return float(min(w, inner * eps))


def _velocity(fn, t):
    us = [fn(t + j * FD_DT) for j in (-2, -1, 1, 2)]
    return (us[0] - 8 * us[1] + 8 * us[2] - us[3]) / (12 * FD_DT)


class Predictor:
    """Asymptotic (u, v) on fast points for each regime."""

    def __init__(self, cfg, params):
        self.cfg = cfg
        self.p = params
        self.eps = params.epsilon
        self.phase = params.phase
        self.force = params.force
        self.gamma = params.gamma
        self.order = cfg["solver"]["pre_order"]
        self.simple = _x2_independent(self.phase)
        self.t2c = None
        self._coef = None
        self._sig = None
        self._nlse = {}
        if self.simple:
            self._setup_crossing()

    def _setup_crossing(self):
        eps = self.eps
        t2_end = eps ** 2 * self.p.t_end
        try:
            curve = find_resonance_curve(self.phase, (1e-6, max(t2_end, 1e-3)), (-1.0, 1.0), eps,
                                         n_lines=3)
        except Exception as exc:
            raise ExperimentError("resonance curve", exc) from exc
        if curve.empty:
            return
        self.t2c = float(curve.t2[0])
        self.omega = float(self.phase.s_t2(self.t2c, 0.0))
        c1 = 1.0
        char = integrate_characteristics(self.phase, SlowPoint(self.t2c, 0.0),
                                         (-0.999 * c1 / eps, 0.999 * c1 / eps), eps, n_samples=801)
        lm = self.cfg["solver"]["lam_match"]
        lm = layer.auto_lam_match(char) if lm is None else lm
        self.lam_match = lm
        try:
            self._coef = layer.layer_leading(char, layer.unit_force(), self.phase, lm)
        except layer.LayerError as exc:
            raise ExperimentError("layer", exc) from exc
        self._char = char
        self._sig = CubicSpline(char.t2, char.sigma)
        self.a_unit = complex(self._coef.accumulated)
        self.acc_alt_factor = layer.AccumulatedAmplitude.alt_factor

    # carriers
    def theta_s(self, t, x):
        e2 = self.eps ** 2
        return np.asarray(self.phase.s(e2 * t, e2 * x), float) / e2 * np.ones_like(x)

    def omega_s(self, t, x):
        e2 = self.eps ** 2
        return np.asarray(self.phase.s_t2(e2 * t, e2 * x), float) * np.ones_like(x)

    def theta_phi(self, t, x):
        t2 = self.eps ** 2 * t
        return (float(self.phase.s(self.t2c, 0.0)) + self.omega * (t2 - self.t2c)) / self.eps ** 2 \
            * np.ones_like(x)

    # fields
    def pre_u(self, t, x):
        return pre.evaluate_pre_field(self.order, self.phase, self.force, self.eps, x, t,
                                      self.gamma, check=False).u

    def pre(self, t, x):
        return self.pre_u(t, x), _velocity(lambda s: self.pre_u(s, x), t)

    def layer_u(self, t, x):
        sig = self._sig(self.eps ** 2 * t)
        w = self._coef.value(np.atleast_1d(sig))[0] * np.asarray(self.force(self.eps * x), complex)
        return 2.0 * np.real(self.eps * w * np.exp(1j * self.theta_s(t, x)))

    def layer(self, t, x):
        if self._coef is None:
            raise ExperimentError("layer", "no layer solution for this configuration")
        t2 = self.eps ** 2 * t
        if not self._char.t2[0] < t2 < self._char.t2[-1]:
            raise ExperimentError("layer", f"t2={t2:.4g} outside the characteristic")
        return self.layer_u(t, x), _velocity(lambda s: self.layer_u(s, x), t)

    def nlse_coeffs(self):
        return post.NlseCoefficients(omega=lambda t2, w=self.omega: w, D=-1.0, g=3.0 * self.gamma)

    def _xi(self):
        n = self.cfg["solver"]["xi_points"]
        half = max(4 * _x1_window(self.cfg, self.force, self.p.grid, self.eps), 40.0)
        return np.linspace(-half, half, n, endpoint=False)

    def nlse_init(self, force=None):
        force = force or self.force
        xi = self._xi()
        # post-crossing coefficient of the layer solution
        vals = -1j * self._coef.orientation * self.a_unit * np.asarray(force(xi), complex)
        return post.EnvelopeField(xi, self.t2c, vals, self.nlse_coeffs())

    def envelope_at(self, t2_list):
        """Psi at the requested t2 (ascending), evolved from the crossing."""
        out = {}
        cur = self.nlse_init()
        tol = self.cfg["solver"]["tol_decay"]
        for t2 in sorted(t2_list):
            if t2 in self._nlse:
                cur = self._nlse[t2]
                continue
            if t2 > cur.t2:
                cur = post.nlse_evolve(cur, t2, self.cfg["solver"]["nlse_dt2"], self.gamma,
                                       self.nlse_coeffs(), tol_decay=tol).final
            self._nlse[t2] = cur
        for t2 in t2_list:
            out[t2] = self._nlse[t2]
        return out

    def post(self, t, x, env):
        eps = self.eps
        xi = env.xi
        h = xi[1] - xi[0]
        k = 2 * np.pi * np.fft.fftfreq(xi.size, h)
        psi = env.values
        co = self.nlse_coeffs()
        pxx = np.fft.ifft(-(k ** 2) * np.fft.fft(psi))
        psi_t = 1j / (2 * self.omega) * (co.D * pxx + co.g * np.abs(psi) ** 2 * psi)
        x1 = eps * x
        ps = np.interp(x1, xi, psi.real) + 1j * np.interp(x1, xi, psi.imag)
        pt = np.interp(x1, xi, psi_t.real) + 1j * np.interp(x1, xi, psi_t.imag)
        e = np.exp(1j * self.theta_phi(t, x))
        u = 2 * np.real(eps * ps * e)
        v = 2 * np.real(eps * (1j * self.omega * ps + eps ** 2 * pt) * e)
        # forced harmonic on S continues past the crossing
        fu, fv = self.pre(t, x) if self.order == 2 else self._forced2(t, x)
        return u + fu, v + fv

    def _forced2(self, t, x):
        fn = lambda s: pre.evaluate_pre_field(2, self.phase, self.force, self.eps, x, s,
                                              check=False).u
        return fn(t), _velocity(fn, t)

    def t2_post_start(self, m_post):
        """First t2 after the crossing with l > m_post eps."""
        b = m_post * self.eps
        g = lambda t2: float(eval_l(self.phase, t2, 0.0)) - b
        hi = self.t2c + 0.1
        while g(hi) < 0:
            hi = self.t2c + 2 * (hi - self.t2c)
            if hi > 100:
                raise ExperimentError("post", "l never exceeds the post margin")
        return brentq(g, self.t2c, hi, xtol=1e-12)


def _errors(zd, zp):
    den = np.linalg.norm(zp)
    num = np.linalg.norm(zd - zp)
    if den == 0:
        return (0.0, 0.0) if num == 0 else (np.inf, np.inf)
    return float(num / den), float(np.max(np.abs(zd - zp)) / np.max(np.abs(zp)))


def _snapshot_times(cfg, params):
    r = cfg["regions"]
    t2_end = params.epsilon ** 2 * params.t_end
    n = int(np.floor((t2_end - r["t2_min"]) / r["snapshot_dt2"] + 1e-9)) + 1
    return tuple(float(np.round(r["t2_min"] + j * r["snapshot_dt2"], 12)) for j in range(max(n, 0)))


def compare_regimes(cfg, orders=None, params=None):
    """Run the direct solver and compare each region with its prediction."""
    tic = time.perf_counter()
    orders = dict(orders or {})
    if "pre" in orders:
        cfg = cfg.override({("solver", "pre_order"): int(orders["pre"])})
    orders = {"pre": cfg["solver"]["pre_order"], "layer": 1, "post": 1}
    params = params or cfg.run_params()
    eps = params.epsilon
    regions = regions_from(cfg)
    check_seams(regions, eps)
    snaps = _snapshot_times(cfg, params)
    try:
        traj = direct.run(replace(params, snapshot_t2=snaps))
    except direct.DirectError as exc:
        raise ExperimentError("direct", exc) from exc
    try:
        pred = Predictor(cfg, params)
    except ExperimentError:
        raise
    except Exception as exc:
        raise ExperimentError("prediction setup", exc) from exc
    x_all = params.grid.x
    x1w = _x1_window(cfg, params.force, params.grid, eps)
    xm = np.abs(eps * x_all) <= x1w
    x = x_all[xm]
    zero_force = _is_zero(params.force)

    acc = {k: {"zd": [], "zp": [], "mod": [], "ref": []} for k in REGIMES}
    seam_acc = {"pre-layer": [[], []], "layer-post": [[], []]}
    support = {"pre": True, "layer": pred.simple and pred.t2c is not None,
               "post": pred.simple and pred.t2c is not None}
    notes = {k: "" for k in REGIMES}
    if not support["layer"]:
        notes["layer"] = notes["post"] = "phase depends on x2 or has no crossing"
    post_times = []
    if support["post"]:
        post_times = [s.t * eps ** 2 for s in traj.snapshots if s.t * eps ** 2 > pred.t2c]
    try:
        envs = pred.envelope_at(post_times) if post_times else {}
    except post.PostResonanceError as exc:
        raise ExperimentError("post", exc) from exc

    for snap in traj.snapshots:
        t = snap.t
        t2 = eps ** 2 * t
        lv = np.asarray(eval_l(params.phase, t2 + 0 * x, eps ** 2 * x), float)
        masks = {r.regime: r.contains(lv, eps) for r in regions}
        ud, vd = snap.u[xm], snap.v[xm]
        th_s, om_s = pred.theta_s(t, x), pred.omega_s(t, x)
        got = {}
        for reg in REGIMES:
            m = masks[reg]
            if not support[reg] or not np.any(m):
                continue
            xs = x[m]
            try:
                if zero_force:
                    up, vp = np.zeros_like(xs), np.zeros_like(xs)
                elif reg == "pre":
                    up, vp = pred.pre(t, xs)
                elif reg == "layer":
                    up, vp = pred.layer(t, xs)
                else:
                    if t2 not in envs:
                        continue
                    up, vp = pred.post(t, xs, envs[t2])
            except ExperimentError:
                raise
            except Exception as exc:
                raise ExperimentError(f"{reg} prediction at t2={t2:.4g}", exc) from exc
            if reg == "post":
                th, om = pred.theta_phi(t, xs), pred.omega
            else:
                th, om = th_s[m], om_s[m]
            zd = quadrature_envelope(ud[m], vd[m], th, om)
            zp = quadrature_envelope(up, vp, th, om)
            acc[reg]["zd"].append(zd)
            acc[reg]["zp"].append(zp)
            if reg == "pre":
                acc[reg]["mod"].append(np.abs(zd))
                acc[reg]["ref"].append(2 * eps ** 2 * np.abs(params.force(eps * xs)) / np.abs(lv[m]))
            # S-carrier envelope of the prediction for the seam checks
            got[reg] = (m, quadrature_envelope(up, vp, th_s[m], om_s[m]))
        for a, b in (("pre", "layer"), ("layer", "post")):
            if a in got and b in got:
                both = got[a][0] & got[b][0]
                if np.any(both):
                    ia = both[got[a][0]]
                    ib = both[got[b][0]]
                    seam_acc[f"{a}-{b}"][0].append(got[a][1][ia])
                    seam_acc[f"{a}-{b}"][1].append(got[b][1][ib])

    out = {}
    for r in regions:
        reg = r.regime
        e = RegionError(reg, r.describe(eps), support[reg], note=notes[reg])
        if support[reg] and acc[reg]["zd"]:
            zd = np.concatenate(acc[reg]["zd"])
            zp = np.concatenate(acc[reg]["zp"])
            e.n_points = int(zd.size)
            e.rel_l2, e.rel_linf = _errors(zd, zp)
            e.peak_direct = float(np.max(np.abs(zd)))
            e.peak_predicted = float(np.max(np.abs(zp)))
            if reg == "pre":
                mod, ref = np.concatenate(acc[reg]["mod"]), np.concatenate(acc[reg]["ref"])
                e.extra["leading_modulus_rel_l2"] = _errors(mod, ref)[0]
            elif reg == "post" and e.peak_predicted > 0:
                # the doubled normalisation of the accumulated amplitude, for contrast
                alt = pred.acc_alt_factor
                e.extra["alt_factor"] = alt
                e.extra["peak_dev_quadrature"] = abs(e.peak_direct / e.peak_predicted - 1)
                e.extra["peak_dev_alt"] = abs(e.peak_direct / (alt * e.peak_predicted) - 1)
        elif support[reg]:
            e.note = "no snapshot points in region"
        out[reg] = e
    seams = {}
    for name, (za, zb) in seam_acc.items():
        if not za:
            continue
        za, zb = np.concatenate(za), np.concatenate(zb)
        a, b = name.split("-")
        disc = _errors(za, zb)[0] if np.any(zb) else 0.0
        bound = 2.0 * max(out[a].rel_l2, out[b].rel_l2)
        seams[name] = {"discrepancy": disc, "bound": bound, "ok": bool(disc <= bound),
                       "n_points": int(za.size)}
    meta = {"snapshots_t2": list(snaps), "x1_window": x1w, "backend": traj.backend,
            "crossing_t2": pred.t2c, "phase": params.phase.name, "force": params.force.name,
            "gamma": params.gamma}
    if pred.t2c is not None:
        meta["lam_match"] = pred.lam_match
        meta["accumulated_unit"] = [pred.a_unit.real, pred.a_unit.imag]
    return ComparisonReport(eps, cfg.digest(), out, seams, orders, time.perf_counter() - tic, meta)


# -- epsilon sweep ---------------------------------------------------------

@dataclass
class SweepTable:
    rows: list
    slope: Optional[float]
    monotone: Optional[bool]
    amplitude_exponents: dict
    flags: list

    def to_dict(self):
        return _clean(asdict(self))

    def to_markdown(self):
        lines = ["# Epsilon sweep", "",
                 "| eps | pre rel L2 | layer rel L2 | post rel L2 | pre peak | post peak | status |",
                 "|---|---|---|---|---|---|---|"]
        for r in self.rows:
            lines.append(f"| {r['epsilon']:g} | {_f(r.get('pre'))} | {_f(r.get('layer'))} | "
                         f"{_f(r.get('post'))} | {_f(r.get('pre_peak'))} | {_f(r.get('post_peak'))} "
                         f"| {r['status']} |")
        lines += ["", f"pre-error slope: {_f(self.slope)}; monotone: {self.monotone}",
                  f"amplitude exponents: {self.amplitude_exponents}"]
        if self.flags:
            lines.append(f"flags: {', '.join(self.flags)}")
        return "\n".join(lines) + "\n"


def _f(v):
    return "-" if v is None else f"{v:.4g}"


def _sweep_row(args):
    cfg, eps, orders = args
    row = {"epsilon": eps, "status": "ok"}
    try:
        rep = compare_regimes(cfg.override({("run", "epsilon"): eps}), orders)
    except Exception as exc:  # recorded per row, the sweep continues
        row["status"] = f"error: {exc}"
        return row
    for k, r in rep.regions.items():
        row[k] = r.rel_l2 if (r.supported and r.n_points) else None
    row["pre_peak"] = rep.regions["pre"].peak_direct or None
    row["post_peak"] = (rep.regions["post"].peak_direct or None) if rep.regions["post"].supported else None
    if all(not r.n_points or (r.rel_l2 == 0 and r.peak_direct == 0) for r in rep.regions.values()):
        row["status"] = "zero"
    row["config_hash"] = rep.config_hash
    return row


def _fit(eps, vals):
    ok = [(e, v) for e, v in zip(eps, vals) if v is not None and np.isfinite(v) and v > 0]
    if len(ok) < 2:
        return None
    e, v = np.array(ok).T
    return float(np.polyfit(np.log(e), np.log(v), 1)[0])


def epsilon_sweep(cfg, eps_list, orders=None, workers=1):
    """compare_regimes per eps; slope of the pre-region error in log-log."""
    eps_list = [float(e) for e in eps_list]
    jobs = [(cfg, e, orders) for e in eps_list]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            rows = list(ex.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(j) for j in jobs]
    good = [r for r in rows if r["status"] == "ok"]
    flags = [f"eps={r['epsilon']:g}: {r['status']}" for r in rows if r["status"] != "ok"]
    slope = _fit([r["epsilon"] for r in good], [r.get("pre") for r in good])
    if slope is None:
        flags.append("slope undefined")
    monotone = None
    pe = [(r["epsilon"], r.get("pre")) for r in good if r.get("pre")]
    if len(pe) >= 2:
        pe.sort()
        monotone = bool(all(b[1] > a[1] for a, b in zip(pe, pe[1:])))
    amp = {"pre": _fit([r["epsilon"] for r in good], [r.get("pre_peak") for r in good]),
           "post": _fit([r["epsilon"] for r in good], [r.get("post_peak") for r in good])}
    return SweepTable(rows, slope, monotone, amp, flags)


# -- soliton scenario -------------------------------------------------------

@dataclass
class ArmResult:
    label: str
    force_scale: float
    census_count: int
    eigenvalues: list
    area: float
    t2_window: tuple
    peak_direct: tuple
    peak_predicted: tuple
    decay_direct: float
    decay_predicted: float
    post_rel_l2: float


@dataclass
class ScenarioReport:
    empty: bool
    epsilon: float
    gamma: float
    config_hash: str
    arms: list = field(default_factory=list)
    runtime: float = 0.0

    def to_dict(self, timing=False):
        d = {"empty": self.empty, "epsilon": self.epsilon, "gamma": self.gamma,
             "config_hash": self.config_hash, "arms": [asdict(a) for a in self.arms]}
        if timing:
            d["runtime_s"] = self.runtime
        return _clean(d)

    def to_markdown(self):
        lines = [f"# Soliton scenario, eps = {self.epsilon:g}, gamma = {self.gamma:g}", ""]
        if self.empty:
            return "\n".join(lines + ["zero force: empty report, zero field", ""])
        lines += ["| arm | scale | census | eigenvalues | direct decay | predicted decay | post rel L2 |",
                  "|---|---|---|---|---|---|---|"]
        for a in self.arms:
            ev = ", ".join(f"{z[0]:.4g}{z[1]:+.4g}i" for z in a.eigenvalues) or "none"
            lines.append(f"| {a.label} | {a.force_scale:g} | {a.census_count} | {ev} | "
                         f"{a.decay_direct:.3f} | {a.decay_predicted:.3f} | {a.post_rel_l2:.4g} |")
        return "\n".join(lines) + "\n"


def _scenario_arm(cfg, label, scale):
    params = cfg.run_params(force_scale=scale)
    eps = params.epsilon
    pred = Predictor(cfg, params)
    if pred.t2c is None:
        raise ExperimentError("scenario", "no resonance crossing in the time window")
    t0 = pred.t2_post_start(cfg["regions"]["m_post"])
    t1 = t0 + cfg["scenario"]["window_dt2"]
    if t1 > eps ** 2 * params.t_end + 1e-9:
        raise ExperimentError("scenario", f"t2_end must reach {t1:.4g} for the decay window")
    times = (t0, 0.5 * (t0 + t1), t1)
    init = pred.nlse_init()
    co = pred.nlse_coeffs()
    cen = post.soliton_census(init, params.gamma, D=co.D, g=co.g, omega=pred.omega)
    envs = pred.envelope_at(times)
    traj = direct.run(replace(params, snapshot_t2=times, t_end=t1 / eps ** 2 + 1.0))
    x_all = params.grid.x
    xm = np.abs(eps * x_all) <= _x1_window(cfg, params.force, params.grid, eps)
    x = x_all[xm]
    pd, pp, zds, zps = [], [], [], []
    for snap, t2 in zip(traj.snapshots, times):
        th = pred.theta_phi(snap.t, x)
        # remove the forced S harmonic before measuring the free packet
        fu, fv = pred._forced2(snap.t, x)
        zd = quadrature_envelope(snap.u[xm] - fu, snap.v[xm] - fv, th, pred.omega)
        up, vp = pred.post(snap.t, x, envs[t2])
        zp = quadrature_envelope(up - fu, vp - fv, th, pred.omega)
        pd.append(float(np.max(np.abs(zd))))
        pp.append(float(np.max(np.abs(zp))))
        zds.append(zd)
        zps.append(zp)
    err = _errors(np.concatenate(zds), np.concatenate(zps))[0]
    eig = [[float(z.real), float(z.imag)] for z in cen.eigenvalues]
    return ArmResult(label, scale, int(cen.count), eig, float(cen.area), times, tuple(pd),
                     tuple(pp), 1 - pd[-1] / pd[0], 1 - pp[-1] / pp[0], err)


def soliton_scenario(cfg):
    """Large-force arm and a small-force control, census plus direct persistence."""
    tic = time.perf_counter()
    params = cfg.run_params()
    rep = ScenarioReport(_is_zero(params.force), params.epsilon, params.gamma, cfg.digest())
    if rep.empty:
        return rep
    g, D = 3.0 * params.gamma, -1.0
    if not _x2_independent(params.phase):
        raise ExperimentError("scenario", "the scenario needs an x2-independent phase")
    if not g * D > 0:
        raise FocusingError("scenario", f"defocusing envelope equation (g D = {g * D + 0.0:g}); the "
                            "packet equation focuses for gamma < 0")
    for label, scale in (("large", 1.0), ("control", cfg["scenario"]["control_factor"])):
        try:
            rep.arms.append(_scenario_arm(cfg, label, scale))
        except ExperimentError:
            raise
        except Exception as exc:
            raise ExperimentError(f"scenario arm {label}", exc) from exc
    rep.runtime = time.perf_counter() - tic
    return rep
