"""Complex envelopes of real oscillatory samples.

Convention: ``u = A cos(theta + delta)`` demodulates to ``A exp(i delta)``,
i.e. the envelope is twice the positive-frequency amplitude.
"""
from dataclasses import dataclass

import numpy as np
from scipy import signal
from scipy.interpolate import CubicSpline


class DemodulationError(RuntimeError):
    def __init__(self, msg, band_edges=None):
        self.band_edges = band_edges
        super().__init__(msg)


@dataclass(frozen=True)
class Envelope:
    t: np.ndarray
    values: np.ndarray
    cutoff: float  # cycles per unit t
    band_edges: tuple  # (envelope bandwidth, lowest carrier frequency)
    settle: int  # samples at each end still inside the filter transient

    @property
    def settled(self):
        s = slice(self.settle, self.values.shape[0] - self.settle)
        return self.t[s], self.values[s]


def _bandwidth(z, dt, nu_c, fraction):
    """Smallest frequency below which ``fraction`` of the sub-carrier power lies."""
    w = signal.windows.hann(z.shape[0])
    spec = np.abs(np.fft.fft(z * w)) ** 2
    nu = np.abs(np.fft.fftfreq(z.shape[0], dt))
    # the image of the carrier sits near -2 nu_c; search up to 1.5 nu_c
    keep = nu < 1.5 * nu_c
    num, p = nu[keep], spec[keep]
    total = p.sum()
    if total == 0:
        return 0.0
    order = np.argsort(num)
    cum = np.cumsum(p[order]) / total
    return float(num[order][np.searchsorted(cum, fraction)])


def _local_fit(t, u, th, m, degree):
    """Weighted LSQ of u ~ Re[P(tau) e^{i theta}] on windows of 2m+1 samples.

    Windows are shifted inward at the ends, so there is no edge transient.
    Returns P at the target sample, i.e. the envelope.
    """
    n = t.size
    m = min(m, (n - 1) // 2)
    w = signal.windows.hann(2 * m + 3)[1:-1]
    # fit on every ``step``-th sample; the envelope is smooth on that scale
    step = max(1, m // 16)
    at = np.unique(np.r_[np.arange(0, n, step), n - 1])
    start = np.clip(at - m, 0, n - 2 * m - 1)
    idx = start[:, None] + np.arange(2 * m + 1)[None, :]
    tau = (t[idx] - t[at, None]) / (t[2 * m] - t[0])
    c, s_ = np.cos(th[idx]), np.sin(th[idx])
    powers = tau[..., None] ** np.arange(degree + 1)
    # u = sum_j (a_j cos - b_j sin) tau^j with P = sum (a_j + i b_j) tau^j
    basis = np.concatenate([powers * c[..., None], -powers * s_[..., None]], axis=-1)
    wb = basis * w[None, :, None]
    lhs = np.einsum("nki,nkj->nij", wb, basis)
    rhs = np.einsum("nki,nk->ni", wb, u[idx])
    coef = np.linalg.solve(lhs, rhs[..., None])[..., 0]
    env = coef[:, 0] + 1j * coef[:, degree + 1]
    if at.size == n:
        return env
    return CubicSpline(t[at], env.real)(t) + 1j * CubicSpline(t[at], env.imag)(t)


def demodulate(t, u, theta, window=None, cutoff=None, order=4, fraction=0.99,
               min_samples=10, method="lsq", periods=6.0, degree=2):
    """Envelope of ``u(t)`` relative to the carrier ``theta``.

    ``theta`` is an array on ``t`` or a callable of ``t``. ``t`` must be
    uniformly spaced. Both methods are zero-phase low-pass operations on
    ``u e^{-i theta}``:

    * ``"butter"``: Butterworth filtfilt with cutoff at the geometric mean of
      the measured envelope bandwidth and the lowest carrier frequency. Needs
      windows many cutoff periods long to settle.
    * ``"lsq"``: local weighted least squares of ``u`` on
      ``Re[P(tau) e^{i theta}]``, ``P`` a complex polynomial of ``degree``,
      over ``periods`` carrier periods. Exact for a single tone, no settling.
    """
    t = np.asarray(t, float)
    u = np.asarray(u, float)
    th = np.asarray(theta(t) if callable(theta) else theta, float)
    if window is not None:
        m = (t >= window[0]) & (t <= window[1])
        t, u, th = t[m], u[m], th[m]
    if t.size < 8:
        raise DemodulationError("need at least 8 samples")
    dt = t[1] - t[0]
    if np.max(np.abs(np.diff(t) - dt)) > 1e-9 * abs(dt):
        raise DemodulationError("samples must be uniform in t")
    dth = np.diff(th)
    if np.max(np.abs(dth)) > 2 * np.pi / min_samples:
        raise DemodulationError(
            f"carrier under-resolved: max phase step {np.max(np.abs(dth)):.4g} rad "
            f"exceeds 2pi/{min_samples}")
    flip = np.median(dth) < 0
    if flip:
        th = -th
    z = 2.0 * u * np.exp(-1j * th)
    nu_c = float(np.min(np.abs(np.gradient(th, dt)))) / (2 * np.pi)
    if not np.any(u):
        return Envelope(t, np.zeros(t.size, complex), 0.5 * nu_c, (0.0, nu_c), 0)
    b = _bandwidth(z, dt, nu_c, fraction)
    if cutoff is None:
        # midway on a log scale; the floor is two frequency bins
        cutoff = np.sqrt(max(b, 2.0 / (t[-1] - t[0])) * nu_c)
    if not b < cutoff < nu_c:
        raise DemodulationError(
            f"envelope band [0, {b:.4g}] and carrier {nu_c:.4g} leave no room for "
            f"cutoff {cutoff:.4g}", (b, nu_c))
    if method == "lsq":
        m = int(np.ceil(0.5 * periods / (nu_c * dt)))
        if 2 * m + 1 > t.size:
            raise DemodulationError(
                f"window of {periods:g} carrier periods needs {2 * m + 1} samples, have {t.size}",
                (b, nu_c))
        env = _local_fit(t, u, th, m, degree)
        if flip:
            env = np.conj(env)
        return Envelope(t, env, float(1.0 / (2 * m * dt)), (b, nu_c), 0)
    if method != "butter":
        raise ValueError(f"unknown method {method!r}")
    nyq = 0.5 / dt
    sos = signal.butter(order, cutoff / nyq, output="sos")
    env = signal.sosfiltfilt(sos, z.real) + 1j * signal.sosfiltfilt(sos, z.imag)
    if flip:
        env = np.conj(env)
    settle = int(np.ceil(4.0 / (cutoff * dt)))
    return Envelope(t, env, float(cutoff), (b, nu_c), min(settle, t.size // 2))


def quadrature_envelope(u, v, theta, omega):
    """Snapshot envelope (u - i v / omega) e^{-i theta}, omega = theta_t.

    Exact for a single tone; slow modulation contributes O(E_t / omega).
    """
    return (np.asarray(u) - 1j * np.asarray(v) / omega) * np.exp(-1j * np.asarray(theta))
