import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kgpump import phase as P
from kgpump import pre


def _grid(t0=0.3, x0=0.0, n=15, h=0.01, span=4.0, nx1=161):
    off = (np.arange(n) - n // 2) * h
    return pre.SlowGrid(t0 + off, x0 + off, np.linspace(-span, span, nx1))


def test_omega_sets():
    assert pre.omega_set(2).ks == (-1, 1)
    assert pre.omega_set(5).ks == (-1, 1)
    assert pre.omega_set(6).ks == (-3, -1, 1, 3)
    assert pre.omega_set(10).ks == (-5, -3, -1, 1, 3, 5)
    with pytest.raises(ValueError):
        pre.omega_set(1)


@given(n=st.integers(2, 60))
def test_omega_set_structure(n):
    ks = pre.omega_set(n).ks
    assert set(ks) == {-k for k in ks}
    assert {-1, 1} <= set(ks)
    assert all(k % 2 for k in ks)
    bigger = set(pre.omega_set(n + 4).ks)
    assert set(ks) <= bigger and len(bigger - set(ks)) <= 2


def test_leading_order_pointwise():
    ph, f = P.quadratic(), pre.gaussian(0.7, 1.3)
    g = _grid()
    T, X2, X1 = g.mesh()
    c = pre.wkb_amplitude(2, 1, ph, f, g)
    assert np.allclose(c.values, -f(X1) / (T ** 2 - 1), rtol=1e-14)
    assert np.array_equal(pre.wkb_amplitude(2, -1, ph, f, g).values, np.conj(c.values))


def test_u3_vanishes_for_x2_independent_phase():
    c = pre.wkb_amplitude(3, 1, P.quadratic(), pre.gaussian(), _grid())
    assert np.all(c.values == 0)


def test_zero_force_gives_zero_everything():
    tab = pre.WkbTable(P.quadratic_tilted(0.4), pre.zero_force(), _grid(), gamma=1.0, n_max=7)
    for n in range(2, 8):
        for k in pre.omega_set(n).ks:
            assert np.all(tab.get(n, k) == 0)
    pf = pre.evaluate_pre_field(2, P.quadratic(), pre.zero_force(), 0.1, np.linspace(-5, 5, 11), 30.0)
    assert np.all(pf.u == 0)


@pytest.mark.parametrize("n", [3, 4])
def test_closed_forms_match_recurrence(n):
    ph, f = P.quadratic_tilted(0.5), pre.gaussian(1.0, 1.0)
    g = _grid()
    T, X2, X1 = g.mesh()
    tab = pre.WkbTable(ph, f, g, n_max=4)
    c = pre._CLOSED[n](ph, f, T, X2, X1)
    err = np.abs(c - tab.get(n, 1))[4:-4, 4:-4, 8:-8]
    assert err.max() < 1e-5 * np.abs(c).max()


def test_conjugation_symmetry_of_table():
    tab = pre.WkbTable(P.quadratic_tilted(0.3), pre.gaussian(), _grid(), gamma=0.5, n_max=7)
    for n in range(2, 8):
        for k in pre.omega_set(n).positive:
            assert np.array_equal(tab.get(n, -k), np.conj(tab.get(n, k)))


def test_full_field_is_real_and_matches_leading_order():
    ph, f, eps = P.quadratic(), pre.gaussian(), 0.1
    x = np.linspace(-40, 40, 401)
    pf = pre.evaluate_pre_field(2, ph, f, eps, x, 50.0)
    l = 0.5 ** 2 - 1
    assert np.allclose(np.abs(pf.envelope), eps ** 2 * np.abs(f(eps * x)) / abs(l), rtol=1e-13)
    ref = 2 * np.real(-(f(eps * x) / l) * np.exp(1j * pf.theta)) * eps ** 2
    assert np.allclose(pf.u, ref, rtol=0, atol=1e-15)
    assert np.isrealobj(pf.u)


def test_validity_margin_violation_lists_points():
    with pytest.raises(pre.ValidityError, match="x="):
        pre.evaluate_pre_field(2, P.quadratic(), pre.gaussian(), 0.1, np.linspace(-5, 5, 11), 98.0)


def test_singularity_guard():
    g = pre.SlowGrid(1.0 + (np.arange(13) - 6) * 1e-5, np.linspace(-0.1, 0.1, 13),
                     np.linspace(-2, 2, 41))
    with pytest.raises(pre.SingularityProximityError):
        pre.wkb_amplitude(2, 1, P.quadratic(), pre.gaussian(), g)


@pytest.mark.parametrize("N", [2, 3, 4, 5])
def test_recurrence_residual_halving(N):
    tab = pre.WkbTable(P.quadratic_tilted(0.5), pre.gaussian(), _grid(), gamma=0.5, n_max=N)
    r = [tab.residual(e, N)[5:-5, 5:-5, 10:-10].max() for e in (0.1, 0.05)]
    assert abs(r[0] / r[1] / 2 ** (N + 1) - 1) < 0.3


def test_singularity_exponents():
    f = pre.gaussian()
    assert pre.singularity_exponent(2, 1, P.quadratic(), f).slope == pytest.approx(-1.0, abs=0.05)
    assert pre.singularity_exponent(4, 1, P.quadratic(), f).slope == pytest.approx(-3.0, abs=0.1)
    assert pre.singularity_exponent(3, 1, P.quadratic(), f).zero_branch
    tilt = P.quadratic_tilted(0.5)
    assert pre.singularity_exponent(3, 1, tilt, f, x1=0.5).slope == pytest.approx(-2.0, abs=0.1)


def test_exponent_needs_wide_approach():
    with pytest.raises(ValueError):
        pre.singularity_exponent(2, 1, P.quadratic(), pre.gaussian(), l_range=(1e-1, 1e-2))


def test_force_profiles_derivatives():
    y = np.linspace(-3, 3, 13)
    for prof in (pre.gaussian(1.3, 0.8, 0.2), pre.sech(0.9, 1.1, -0.3)):
        num = pre.ForceProfile(prof.f, name="n")
        assert np.allclose(prof.d1(y), num.d1(y), atol=1e-9)
        assert np.allclose(prof.d2(y), num.d2(y), atol=1e-6)
        assert prof.decays()
