import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kgpump import layer as L
from kgpump import phase as P
from kgpump import pre

from oracles import fresnel_amplitude


def _char(eps=0.01, span=(-40, 15), ph=None, t2c=1.0):
    return P.integrate_characteristics(ph or P.quadratic(), P.SlowPoint(t2c, 0.0), span, eps,
                                       n_samples=801)


def _curve(eps, ph=None, t2=(0.1, 2.0)):
    return P.find_resonance_curve(ph or P.quadratic(), t2, (-0.05, 0.05), eps, n_lines=5)


def test_transport_residual_small():
    W = L.layer_leading(_char(), pre.gaussian())
    assert W.transport_residual() < 1e-8
    assert W.orientation == 1


def test_accumulated_matches_gamma_closed_form():
    for eps, tol in ((0.01, 1e-10), (0.001, 1e-9)):
        A = L.accumulated_amplitude(_curve(eps), pre.gaussian(), P.quadratic(), eps, xi=[0.0])
        ex = L.quadratic_exact_amplitude(1.0, eps)
        assert abs(A.values[0] - ex) / abs(ex) < tol


@pytest.mark.parametrize("eps", [0.2, 0.1])
def test_gamma_closed_form_against_oscillatory_quadrature(eps):
    ref = fresnel_amplitude(eps)
    assert abs(L.quadratic_exact_amplitude(1.0, eps) - ref) / abs(ref) < 1e-12


def test_stationary_phase_limit():
    eps = 0.001
    A = L.accumulated_amplitude(_curve(eps), pre.gaussian(0.8), P.quadratic(), eps, xi=[0.0])
    sp = L.stationary_phase(0.8, 4.0)
    assert abs(A.values[0] - sp) / abs(sp) < 1e-5
    assert abs(np.angle(A.values[0]) - np.pi / 4) < 1e-5


def test_tail_deviation_decays_like_lambda_squared():
    ch = _char(eps=0.001, span=(-90, 15))
    W = L.layer_leading(ch, pre.gaussian())
    tc = L.layer_tail_series(W, -1, 1)
    s = (tc.lam < -20) & (tc.lam > -100)
    slope = np.polyfit(np.log(-tc.lam[s]), np.log(tc.relative[s]), 1)[0]
    assert abs(slope + 2) < 0.2


def test_plateau_matches_stationary_phase():
    ch = _char(eps=0.001, span=(-90, 15))
    W = L.layer_leading(ch, pre.gaussian())
    tp = L.layer_tail_series(W, 1, 4, lam_min=10)
    ref = np.sqrt(2 * np.pi / 4.0)
    assert np.max(np.abs(tp.plateau / ref - 1)) < 1e-3


def test_third_harmonic_algebraic():
    W = L.layer_leading(_char(), pre.gaussian())
    W3 = L.third_harmonic(W, 2.0)
    assert np.allclose(W3.values, 0.25 * W.values ** 3)
    assert np.allclose(W3.value(W.sigma[:5]), 0.25 * W.value(W.sigma[:5]) ** 3)


def test_negative_orientation_and_conjugate():
    eps = 0.01
    ph = P.custom("2*t2 - t2^2/2")
    c = P.find_resonance_curve(ph, (0.1, 1.9), (-0.05, 0.05), eps, n_lines=5)
    assert c.phi[0] < 0
    A = L.accumulated_amplitude(c, pre.gaussian(), ph, eps, xi=[0.0])
    assert abs(A.values[0] - A.stationary_phase[0]) / abs(A.stationary_phase[0]) < 1e-4
    Ac = L.accumulated_amplitude(_curve(eps), pre.gaussian(), P.quadratic(), eps, xi=[0.0], sign=-1)
    Ap = L.accumulated_amplitude(_curve(eps), pre.gaussian(), P.quadratic(), eps, xi=[0.0])
    assert np.allclose(Ac.values, np.conj(Ap.values), rtol=1e-9)


def test_span_error_when_characteristic_too_short():
    ch = _char(eps=0.1, span=(-2, 2))
    with pytest.raises(L.SpanError):
        L.layer_leading(ch, pre.gaussian(), lam_match=20)


def test_auto_lam_match_moderate_eps():
    eps = 0.1
    c = P.find_resonance_curve(P.quadratic(), (0.2, 2), (-1.2, 1.2), eps, n_lines=25)
    A = L.accumulated_amplitude(c, pre.gaussian(), P.quadratic(), eps, lam_match=None)
    ex = L.quadratic_exact_amplitude(pre.gaussian()(c.x2 / eps), eps)
    assert np.max(np.abs(A.values - ex)) / np.max(np.abs(ex)) < 1e-4
    assert A.phase_convention["fast_path"]


@settings(max_examples=10, deadline=None)
@given(amp=st.floats(0.1, 5.0), c=st.floats(-1, 1))
def test_accumulated_linear_in_force(amp, c):
    eps = 0.01
    cv = _curve(eps)
    a1 = L.accumulated_amplitude(cv, pre.gaussian(1.0, 1.0, c), P.quadratic(), eps, xi=[0.0])
    a2 = L.accumulated_amplitude(cv, pre.gaussian(amp, 1.0, c), P.quadratic(), eps, xi=[0.0])
    assert np.allclose(a2.values, amp * a1.values, rtol=1e-12)


def test_zero_force_zero_layer():
    W = L.layer_leading(_char(), pre.zero_force())
    assert not np.any(W.values)
    assert W.accumulated == 0


def test_post_envelope_convention():
    eps = 0.01
    A = L.accumulated_amplitude(_curve(eps), pre.gaussian(), P.quadratic(), eps, xi=[0.0])
    assert np.allclose(A.post_envelope, -1j * A.values)
    assert np.allclose(A.doubled_values, 2 * A.stationary_phase)
