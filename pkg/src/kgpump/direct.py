"""Direct solver for the forced cubic Klein-Gordon equation.

    u_tt = u_xx - u - gamma u^3 + 2 eps^2 Re[f(eps x) exp(i S(eps^2 t, eps^2 x) / eps^2)]

Kick-drift-kick (velocity Verlet) in time, 4th-order finite differences or a
Fourier pseudo-spectral operator in space. The FD path runs in the compiled
kernel when it is available.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .phase import PhaseSpec, eval_l, quadratic
from .pre import ForceProfile, evaluate_pre_field, gaussian, zero_force

BLOCK = 256  # steps per kernel call
CFL_SAFETY = 0.9


class DirectError(RuntimeError):
    pass


class ConfigurationError(DirectError, ValueError):
    pass


class BlowUpError(DirectError):
    def __init__(self, t, msg=None):
        self.t = t
        super().__init__(msg or f"non-finite field at t={t:.6g}")


@dataclass(frozen=True)
class FastGrid:
    x_min: float = -400.0
    x_max: float = 400.0
    nx: int = 4096
    boundary: str = "sponge"  # or "periodic"
    sponge_fraction: float = 0.1
    sponge_strength: float = 1.0  # peak damping rate of the quadratic ramp

    def __post_init__(self):
        if self.boundary not in ("sponge", "periodic"):
            raise ConfigurationError(f"boundary must be 'sponge' or 'periodic', got {self.boundary!r}")
        if not self.x_max > self.x_min or self.nx < 16:
            raise ConfigurationError("grid needs x_max > x_min and nx >= 16")
        if not 0 < self.sponge_fraction < 0.5:
            raise ConfigurationError("sponge_fraction must lie in (0, 0.5)")

    @property
    def dx(self):
        return (self.x_max - self.x_min) / self.nx

    @property
    def x(self):
        return self.x_min + self.dx * np.arange(self.nx)

    @property
    def length(self):
        return self.x_max - self.x_min

    def damping_rate(self):
        if self.boundary == "periodic":
            return np.zeros(self.nx)
        x = self.x
        width = self.sponge_fraction * self.length
        r = np.clip(np.maximum(self.x_min + width - x, x - (self.x_max - width)) / width, 0, 1)
        return self.sponge_strength * r ** 2

    def outer_sponge(self):
        """Mask of the outer half of the sponge layer."""
        x = self.x
        w = 0.5 * self.sponge_fraction * self.length
        return (x < self.x_min + w) | (x > self.x_max - w)

    def index(self, xp):
        j = np.rint((np.asarray(xp, float) - self.x_min) / self.dx).astype(np.intp)
        if np.any((j < 0) | (j >= self.nx)):
            raise ConfigurationError(f"probe outside the grid: {xp}")
        return j

    def enlarged(self, factor):
        """Same spacing, domain scaled by ``factor`` about its centre."""
        n = int(round(self.nx * factor))
        c = 0.5 * (self.x_min + self.x_max)
        half = 0.5 * n * self.dx
        return replace(self, x_min=c - half, x_max=c + half, nx=n)


@dataclass
class FieldState:
    u: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def copy(self):
        return FieldState(self.u.copy(), self.v.copy(), self.t)

    def finite(self):
        return bool(np.isfinite(self.u).all() and np.isfinite(self.v).all())

    def sponge_quiet(self, grid, tol_decay=1e-6):
        if grid.boundary != "sponge":
            return True
        return bool(np.max(np.abs(self.u[grid.outer_sponge()]), initial=0.0) < tol_decay)


@dataclass(frozen=True)
class RunParams:
    epsilon: float = 0.1
    gamma: float = 0.0
    force: ForceProfile = field(default_factory=gaussian)
    phase: PhaseSpec = field(default_factory=quadratic)
    grid: FastGrid = field(default_factory=FastGrid)
    dt: float = 0.02
    t_end: float = 300.0
    probes: tuple = (0.0,)
    probe_stride: int = 1
    snapshot_t2: tuple = ()
    operator: str = "fd4"  # or "spectral"
    initial: str = "wkb"  # or "rest"
    initial_order: int = 4
    energy_every: int = 0  # steps between energy samples, 0 = off

    def validate(self):
        if not 0 < self.epsilon < 1:
            raise ConfigurationError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.operator not in ("fd4", "spectral"):
            raise ConfigurationError(f"operator must be 'fd4' or 'spectral', got {self.operator!r}")
        if self.initial not in ("wkb", "rest"):
            raise ConfigurationError(f"initial must be 'wkb' or 'rest', got {self.initial!r}")
        if self.dt == 0 or self.t_end < 0 or self.probe_stride < 1:
            raise ConfigurationError("need dt != 0, t_end >= 0, probe_stride >= 1")
        bound = stability_bound(self.grid, self.operator)
        if abs(self.dt) >= bound:
            raise ConfigurationError(
                f"dt={self.dt:g} violates the {self.operator} stability bound dt < {bound:.6g} "
                f"(dx={self.grid.dx:.6g})")
        if self.grid.boundary == "periodic" and not self.force.is_zero:
            room = 0.5 * self.grid.length - self.force.support_radius / self.epsilon
            if room < self.t_end:
                raise ConfigurationError(
                    f"periodic domain leaves {room:.4g} of propagation room, need >= t_end={self.t_end:g}")
        self.grid.index(self.probes)
        return self

    @property
    def nsteps(self):
        return int(round(self.t_end / abs(self.dt)))


def omega_max(grid, operator):
    if operator == "spectral":
        return np.sqrt(1 + (np.pi / grid.dx) ** 2)
    return np.sqrt(1 + 16.0 / (3.0 * grid.dx ** 2))


def stability_bound(grid, operator="fd4"):
    """Largest admissible |dt|: Verlet is stable for dt * omega_max < 2."""
    return CFL_SAFETY * 2.0 / omega_max(grid, operator)


# -- spatial operators -------------------------------------------------------

def _wavenumbers(grid):
    return 2 * np.pi * np.fft.rfftfreq(grid.nx, grid.dx)


class _Spectral:
    def __init__(self, grid):
        k = _wavenumbers(grid)
        self.k2 = k * k
        self.keep = k <= (2.0 / 3.0) * k.max()  # 2/3 rule for the cubic term

    def lap(self, u):
        return np.fft.irfft(-self.k2 * np.fft.rfft(u), n=u.size)

    def cube(self, u):
        return np.fft.irfft(np.fft.rfft(u ** 3) * self.keep, n=u.size)


def laplacian(u, grid, operator="fd4"):
    if operator == "spectral":
        return _Spectral(grid).lap(u)
    return kernels._fallback._lap_fd4(u, grid.dx)


def energy(state, grid, gamma, operator="fd4"):
    """E = int (v^2 + u_x^2 + u^2 + gamma u^4 / 2) / 2 dx with the discrete u_x^2."""
    u, v = state.u, state.v
    grad2 = -u * laplacian(u, grid, operator)
    return 0.5 * grid.dx * float(np.sum(v * v + grad2 + u * u + 0.5 * gamma * u ** 4))


def shadow_energy(state, grid, gamma, dt, operator="fd4"):
    """Energy minus dt^2/8 |a|^2: exactly conserved by Verlet in the linear case."""
    u = state.u
    a = laplacian(u, grid, operator) - u - gamma * u ** 3
    return energy(state, grid, gamma, operator) - dt * dt / 8.0 * grid.dx * float(np.sum(a * a))


# -- forcing -----------------------------------------------------------------

class Forcing:
    """2 eps^2 Re[f(eps x) e^{i S / eps^2}] restricted to the support of f."""

    def __init__(self, params):
        eps = params.epsilon
        x = params.grid.x
        self.eps = eps
        self.phase = params.phase
        if params.force.is_zero:
            self.lo, self.x = 0, x[:0]
        else:
            r = params.force.support_radius / eps
            inside = np.flatnonzero(np.abs(x) <= r) if np.isfinite(r) else np.arange(x.size)
            if inside.size == 0:
                self.lo, self.x = 0, x[:0]
            else:
                self.lo = int(inside[0])
                self.x = x[inside[0]:inside[-1] + 1]
        self.amp = 2 * eps ** 2 * np.asarray(params.force(eps * self.x), complex)

    @property
    def width(self):
        return self.x.size

    def rows(self, times):
        times = np.asarray(times, float)
        if self.width == 0:
            return np.zeros((times.size, 0))
        e2 = self.eps ** 2
        T, X = np.meshgrid(e2 * times, e2 * self.x, indexing="ij")
        theta = np.asarray(self.phase.s(T, X), float) / e2
        return np.ascontiguousarray(np.real(self.amp * np.exp(1j * theta)))

    def complex_rows(self, times):
        """The two conjugate halves separately, for the realness check."""
        e2 = self.eps ** 2
        T, X = np.meshgrid(e2 * np.asarray(times, float), e2 * self.x, indexing="ij")
        z = 0.5 * self.amp * np.exp(1j * np.asarray(self.phase.s(T, X), float) / e2)
        return z, np.conj(z)


# -- initial data ------------------------------------------------------------

def initial_state(params, margin=3.0, dt_fd=1e-2):
    """Rest, or the forced WKB particular solution at t = 0."""
    x = params.grid.x
    if params.initial == "rest" or params.force.is_zero:
        return FieldState(np.zeros_like(x), np.zeros_like(x), 0.0)
    eps = params.epsilon
    lv = eval_l(params.phase, 0.0 * x, eps ** 2 * x)
    # the WKB form holds for either sign of l away from the resonance
    near = np.abs(lv) <= margin * eps
    f_big = np.abs(params.force(eps * x)) > 1e-12
    if np.any(near & f_big):
        raise ConfigurationError(
            f"WKB initial data need |l| > {margin:g} eps at t=0; fails at x={x[near & f_big][:3]}")

    def field_at(t):
        return evaluate_pre_field(params.initial_order, params.phase, params.force, eps, x, t,
                                  params.gamma, check=False).u

    us = [field_at(j * dt_fd) for j in (-2, -1, 1, 2)]
    v = (us[0] - 8 * us[1] + 8 * us[2] - us[3]) / (12 * dt_fd)
    return FieldState(field_at(0.0), v, 0.0)


# -- stepping ----------------------------------------------------------------

@dataclass
class Trajectory:
    probe_x: np.ndarray
    t: np.ndarray
    u: np.ndarray  # (nt, nprobe)
    v: np.ndarray
    snapshots: list  # FieldState copies
    energy_t: np.ndarray
    energy: np.ndarray
    final: FieldState
    runtime: float
    backend: str

    def probe(self, j):
        return self.t, self.u[:, j], self.v[:, j]


def _spectral_block(state, damp, forcing_rows, f_lo, dt, gamma, op, nsteps, acc,
                    probe_idx, stride, phase0, out):
    u, v = state.u, state.v
    half = 0.5 * dt
    nf = forcing_rows.shape[1]
    row = 0
    for s in range(nsteps):
        v[:] = damp * v + half * acc
        u += dt * v
        acc[:] = op.lap(u) - u - gamma * op.cube(u)
        if nf:
            acc[f_lo:f_lo + nf] += forcing_rows[s + 1]
        v[:] = damp * (v + half * acc)
        if stride > 0 and (phase0 + s + 1) % stride == 0:
            out[row, :, 0] = u[probe_idx]
            out[row, :, 1] = v[probe_idx]
            row += 1
    return row


def _acceleration(u, grid, gamma, operator, op, force_row, f_lo):
    if operator == "spectral":
        acc = op.lap(u) - u - gamma * op.cube(u)
        if force_row.size:
            acc[f_lo:f_lo + force_row.size] += force_row
        return acc
    return kernels.accel_fd4(u, grid.dx, gamma, np.ascontiguousarray(force_row[None, :]), 0, f_lo)


def run(params: RunParams, initial: Optional[FieldState] = None, progress=None) -> Trajectory:
    """Integrate to t_end, recording probes, snapshots and (optionally) energy."""
    params.validate()
    grid = params.grid
    state = (initial or initial_state(params)).copy()
    if state.u.shape != (grid.nx,) or not state.finite():
        raise ConfigurationError("initial state must be finite and match the grid")
    dt = float(params.dt)
    nsteps = params.nsteps
    forcing = Forcing(params)
    damp = np.ascontiguousarray(np.exp(-0.5 * abs(dt) * grid.damping_rate()))
    op = _Spectral(grid) if params.operator == "spectral" else None
    probe_idx = np.ascontiguousarray(grid.index(params.probes), dtype=np.intp)
    stride = params.probe_stride
    n_rows = nsteps // stride + 1
    pt = np.empty(n_rows)
    pu = np.empty((n_rows, probe_idx.size))
    pv = np.empty_like(pu)
    pt[0], pu[0], pv[0] = state.t, state.u[probe_idx], state.v[probe_idx]
    rows = 1

    e2 = params.epsilon ** 2
    snap_steps = {k for k in (int(round((t2 / e2 - state.t) / abs(dt))) for t2 in params.snapshot_t2)
                  if 0 <= k <= nsteps}
    marks = set(snap_steps)
    snaps = [state.copy()] if 0 in snap_steps else []
    every = params.energy_every
    if every:
        marks.update(range(0, nsteps + 1, every))
    e_t, e_v = [], []

    def sample_energy(k):
        if every and k % every == 0:
            e_t.append(state.t)
            e_v.append(energy(state, grid, params.gamma, params.operator))

    sample_energy(0)
    acc = _acceleration(state.u, grid, params.gamma, params.operator, op,
                        forcing.rows([state.t])[0], forcing.lo)
    t0 = state.t
    tic = time.perf_counter()
    step = 0
    while step < nsteps:
        n = min(BLOCK, nsteps - step)
        nxt = [m for m in marks if step < m <= step + n]
        if nxt:
            n = min(nxt) - step
        times = t0 + dt * (step + np.arange(n + 1))
        frows = forcing.rows(times)
        buf = np.empty((n // stride + 2, probe_idx.size, 2))
        if params.operator == "spectral":
            got = _spectral_block(state, damp, frows, forcing.lo, dt, params.gamma, op, n, acc,
                                  probe_idx, stride, step, buf)
        else:
            got = kernels.kdk_fd4(state.u, state.v, acc, damp, frows, forcing.lo, dt, grid.dx,
                                  params.gamma, n, probe_idx, stride, step, buf)
        if got:
            first = stride - step % stride
            pt[rows:rows + got] = t0 + dt * (step + first + stride * np.arange(got))
            pu[rows:rows + got] = buf[:got, :, 0]
            pv[rows:rows + got] = buf[:got, :, 1]
            rows += got
        step += n
        state.t = t0 + dt * step
        if not state.finite():
            raise BlowUpError(state.t)
        if step in marks:
            if step in snap_steps:
                snaps.append(state.copy())
            sample_energy(step)
        if progress is not None:
            progress(step, nsteps)
    return Trajectory(grid.x[probe_idx], pt[:rows], pu[:rows], pv[:rows], snaps,
                      np.array(e_t), np.array(e_v), state, time.perf_counter() - tic,
                      "numpy" if params.operator == "spectral" else kernels.BACKEND)


def advance(state, grid, gamma, dt, nsteps, operator="fd4"):
    """Unforced, undamped steps; with ``dt < 0`` this undoes a forward run."""
    p = RunParams(epsilon=0.5, gamma=gamma, force=zero_force(), grid=replace(grid, boundary="periodic"),
                  dt=dt, t_end=abs(dt) * nsteps, probes=(grid.x_min,), operator=operator,
                  initial="rest", probe_stride=max(nsteps, 1))
    return run(p, state).final


def drift(values):
    """Relative change predicted by a linear trend fit over the run."""
    values = np.asarray(values, float)
    s = np.arange(values.size)
    slope, c0 = np.polyfit(s, values, 1)
    return abs(slope * (values.size - 1)) / abs(c0)


def standing_wave(grid, amplitude=0.1, mode=4):
    """Small standing wave fitting the periodic grid."""
    k = 2 * np.pi * mode / grid.length
    u = amplitude * np.cos(k * (grid.x - grid.x_min))
    return FieldState(u, np.zeros_like(u), 0.0)
