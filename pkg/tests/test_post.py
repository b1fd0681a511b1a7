import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kgpump import post

from oracles import brute_force_phase_set

XI = np.linspace(-30, 30, 1024, endpoint=False)


def test_phase_set_base_cases():
    assert post.phase_set(1, 0).labels() == ["-Phi", "Phi"]
    assert set(post.phase_set(2, 0).members) == {(1, 0), (-1, 0), (0, 1), (0, -1)}
    assert set(post.phase_set(3, 1).members) == {(1, 0), (-1, 0)}
    assert post.phase_set(2, 0).primed == {(0, 1), (0, -1)}
    with pytest.raises(ValueError):
        post.phase_set(2, 1)
    with pytest.raises(ValueError):
        post.phase_set(0, 0)


@pytest.mark.parametrize("n,k", [(n, k) for n in range(1, 7) for k in range(n + 1)
                                 if post.valid_index(n, k)])
def test_phase_set_equals_brute_force(n, k):
    assert set(post.phase_set(n, k).members) == brute_force_phase_set(n, k)


def test_phase_set_symmetric():
    for n in range(1, 7):
        m = post.phase_set(n, 0).members
        assert {(-a, -b) for a, b in m} == set(m)


def test_algebraic_envelope():
    grad = {"Phi_t2": 1.0, "Phi_x2": 0.0, "S_t2": 1.5, "S_x2": 0.0}
    # chi = S: prefactor -(1.5)^2 + 1
    psi = post.algebraic_envelope((0, 1), grad, force=2.0)
    assert np.isclose(psi, 2.0 / (1 - 2.25))
    with pytest.raises(post.SingularPrefactorError):
        post.algebraic_envelope((1, 0), grad)
    with pytest.raises(post.SingularPrefactorError):
        post.algebraic_envelope((0, 1), {**grad, "S_t2": 1.0})


def test_cubic_products():
    comps = {(1, 0): 2.0, (-1, 0): 3.0}
    # ordered triples summing to Phi: (P, P, -P) in 3 orders
    assert post.cubic_products(comps, (1, 0)) == 3 * 2 * 2 * 3


def test_sech_propagates():
    g = 2.0
    env = post.EnvelopeField(XI, 0.0, post.sech_ansatz(1.0, g, XI))
    tr = post.nlse_evolve(env, 1.0, 1e-3, g)
    assert np.max(np.abs(tr.final.values - post.sech_ansatz(1.0, g, XI, 1.0))) < 1e-3
    assert abs(tr.mass()[-1] / tr.mass()[0] - 1) < 1e-8


def test_sech_with_general_coefficients():
    D, g, w = -1.0, -3.0, 1.0
    co = post.NlseCoefficients(D=D, g=g)
    env = post.EnvelopeField(XI, 0.0, post.sech_ansatz(1.2, g, XI, D=D, omega=w), co)
    tr = post.nlse_evolve(env, 1.0, 1e-3, None, co)
    ref = post.sech_ansatz(1.2, g, XI, 1.0, D=D, omega=w)
    assert np.max(np.abs(tr.final.values - ref)) < 1e-3


def test_split_step_second_order():
    g = 2.0
    env = post.EnvelopeField(XI, 0.0, post.sech_ansatz(1.0, g, XI) * np.exp(0.3j * XI))
    ref = post.nlse_evolve(env, 1.0, 0.0125, g).final.values
    e = [np.max(np.abs(post.nlse_evolve(env, 1.0, d, g).final.values - ref)) for d in (0.1, 0.05)]
    assert 4 * 0.7 < e[0] / e[1] < 4 * 1.3


@settings(max_examples=8, deadline=None)
@given(theta=st.floats(0, 2 * np.pi))
def test_gauge_covariance(theta):
    env = post.EnvelopeField(XI, 0.0, 1.5 * np.exp(-XI ** 2 / 4))
    rot = post.EnvelopeField(XI, 0.0, np.exp(1j * theta) * env.values)
    a = post.nlse_evolve(env, 0.3, 1e-2, 1.0).final.values
    b = post.nlse_evolve(rot, 0.3, 1e-2, 1.0).final.values
    assert np.max(np.abs(b - np.exp(1j * theta) * a)) < 1e-10


def test_damping_decays_mass():
    co = post.NlseCoefficients(damping=lambda t: 0.4)
    env = post.EnvelopeField(XI, 0.0, np.exp(-XI ** 2), co)
    tr = post.nlse_evolve(env, 1.0, 1e-2, 0.0)
    # |Psi|^2 decays like exp(-damping t / omega)
    assert np.isclose(tr.mass()[-1] / tr.mass()[0], np.exp(-0.4), rtol=1e-6)


def test_degeneracy_guard():
    co = post.NlseCoefficients(omega=lambda t: 0.05)
    env = post.EnvelopeField(XI, 0.0, np.exp(-XI ** 2), co)
    with pytest.raises(post.DegeneracyError):
        post.nlse_evolve(env, 0.1, 1e-2, 1.0)


def test_domain_overflow():
    xi = np.linspace(-5, 5, 256, endpoint=False)
    env = post.EnvelopeField(xi, 0.0, np.exp(-xi ** 2) * np.exp(10j * xi))
    with pytest.raises(post.DomainOverflowError):
        post.nlse_evolve(env, 2.0, 1e-2, 0.0)


def test_census_single_soliton():
    g = 2.0
    c = post.soliton_census(post.EnvelopeField(XI, 0.0, post.sech_ansatz(1.0, g, XI)), g)
    assert c.count == 1
    assert np.isclose(c.eigenvalues[0].imag, 0.5, atol=1e-6)
    assert np.isclose(c.amplitudes[0], 1.0, atol=1e-6)


def test_census_small_and_defocusing():
    c = post.soliton_census(post.EnvelopeField(XI, 0.0, 0.1 * np.exp(-XI ** 2)), 2.0)
    assert c.count == 0 and c.area < np.pi / 2
    d = post.soliton_census(post.EnvelopeField(XI, 0.0, 3 * np.exp(-XI ** 2)), -2.0)
    assert d.count == 0 and d.jacobian.get("defocusing")


@settings(max_examples=6, deadline=None)
@given(shift=st.floats(-5, 5), theta=st.floats(0, 2 * np.pi))
def test_census_invariant_under_translation_and_phase(shift, theta):
    base = post.soliton_census(post.EnvelopeField(XI, 0.0, 2.5 * np.exp(-XI ** 2)), 2.0)
    moved = post.EnvelopeField(XI, 0.0, np.exp(1j * theta) * 2.5 * np.exp(-(XI - shift) ** 2))
    c = post.soliton_census(moved, 2.0)
    assert c.count == base.count
    assert np.allclose(np.sort(c.eigenvalues.imag), np.sort(base.eigenvalues.imag), atol=1e-6)


def test_galilean_boost_shifts_real_part():
    g, c = 2.0, 0.8
    env = post.EnvelopeField(XI, 0.0, post.sech_ansatz(1.0, g, XI) * np.exp(1j * c * XI))
    est = post.soliton_census(env, g)
    assert est.count == 1
    assert abs(est.eigenvalues[0].real + c / 2) < 1e-3
    assert abs(est.velocities[0] - c) < 1e-3


def test_census_requires_decay():
    env = post.EnvelopeField(XI, 0.0, np.ones(XI.size, complex))
    with pytest.raises(post.PostResonanceError):
        post.soliton_census(env, 1.0)


def test_initial_data_resampling():
    class Acc:
        xi_grid = np.linspace(-5, 5, 11)
        values = np.exp(-xi_grid ** 2).astype(complex)
        post_envelope = -1j * values

    env = post.nlse_initial_data(Acc, np.linspace(-5, 5, 101), t2=1.0)
    assert np.isclose(env.values[50], -1j)
    with pytest.raises(post.ResamplingError):
        post.nlse_initial_data(Acc, np.linspace(-6, 6, 101))
    filled = post.nlse_initial_data(Acc, np.linspace(-6, 6, 121), fill_outside=True)
    assert filled.values[0] == 0
