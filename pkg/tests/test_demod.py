import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kgpump.demod import DemodulationError, demodulate, quadrature_envelope

T = np.arange(0, 400, 0.05)


@settings(max_examples=20, deadline=None)
@given(amp=st.floats(0.1, 10), delta=st.floats(-3, 3), w=st.floats(0.8, 3.0))
def test_single_tone_recovered(amp, delta, w):
    th = w * T
    env = demodulate(T, amp * np.cos(th + delta), th)
    assert np.max(np.abs(env.values - amp * np.exp(1j * delta))) < 1e-8 * amp


def test_slow_modulation_tracked():
    a = 1 + 0.5 * np.sin(0.01 * T)
    th = 2.0 * T + 0.001 * T ** 2
    env = demodulate(T, a * np.cos(th), th)
    assert np.max(np.abs(env.values - a)) < 1e-4


def test_decreasing_carrier_conjugates_consistently():
    th = -1.5 * T
    env = demodulate(T, np.cos(th + 0.4), th)
    assert np.allclose(env.values, np.exp(0.4j), atol=1e-8)


def test_callable_carrier_and_window():
    env = demodulate(T, 2 * np.cos(T), lambda t: t, window=(100, 200))
    assert env.t[0] >= 100 and env.t[-1] <= 200
    assert np.allclose(env.values, 2.0, atol=1e-8)


def test_butterworth_method_settles():
    th = 2.0 * T
    env = demodulate(T, 1.5 * np.cos(th), th, method="butter")
    _, vals = env.settled
    assert env.settle > 0
    assert np.max(np.abs(vals - 1.5)) < 1e-3


def test_under_resolved_carrier():
    t = np.arange(0, 100, 0.5)
    with pytest.raises(DemodulationError):
        demodulate(t, np.cos(3 * t), 3 * t)


def test_band_overlap_reports_edges():
    # envelope oscillating as fast as the carrier
    th = 1.0 * T
    u = np.cos(0.9 * T) * np.cos(th)
    with pytest.raises(DemodulationError) as exc:
        demodulate(T, u, th)
    assert exc.value.band_edges is not None


def test_nonuniform_samples_rejected():
    t = np.sort(np.random.default_rng(0).uniform(0, 100, 2000))
    with pytest.raises(DemodulationError):
        demodulate(t, np.cos(t), t)


def test_zero_signal_zero_envelope():
    env = demodulate(T, np.zeros_like(T), 2 * T)
    assert not np.any(env.values)


def test_quadrature_envelope_exact_for_tone():
    x = np.linspace(0, 10, 101)
    w, amp, d = 1.7, 0.3, 0.9
    t = 4.0
    th = w * t + 0 * x
    u = amp * np.cos(th + d)
    v = -amp * w * np.sin(th + d)
    assert np.allclose(quadrature_envelope(u, v, th, w), amp * np.exp(1j * d))
