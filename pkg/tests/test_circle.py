import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lacvar.circle import (SurfaceMeasure, cone_tau_mass, default_qmax, default_xi_samples, ellipsoid_sigma_ft,
                           multiplier_exact, multiplier_main_term, root_qmax, sigma_decay_audit, sigma_hat,
                           sphere_ft_analytic, tau_measure, units, weyl_bound_audit, weyl_sum, weyl_sum_direct,
                           zeta_cutoff)
from lacvar.errors import BudgetError, DomainError, ValidationError
from lacvar.forms import Cutoff, IntegralForm, shipped_variety, sum_of_squares

F5 = sum_of_squares(5)


def test_units():
    assert units(1) == [0]
    assert units(9) == [1, 2, 4, 5, 7, 8]
    with pytest.raises(ValidationError):
        units(0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(0, 10**6), st.lists(st.integers(-50, 50), min_size=3, max_size=3))
def test_factored_equals_direct(q, a_seed, b):
    G = IntegralForm.diagonal([1, -2, 3], 2)
    a = units(q)[a_seed % len(units(q))]
    assert abs(weyl_sum(G, q, a, b) - weyl_sum_direct(G, q, a, b)) < 1e-12


def test_cubic_factored_equals_direct():
    G = IntegralForm.diagonal([1, 2], 3)
    for q in range(1, 10):
        for a in units(q):
            for b in ((0, 0), (1, 3), (q - 1, 2)):
                assert abs(weyl_sum(G, q, a, b) - weyl_sum_direct(G, q, a, b)) < 1e-12


@pytest.mark.parametrize("q", [1, 3, 5, 15, 21])
def test_odd_gauss_modulus(q):
    for a in units(q):
        assert abs(weyl_sum(F5, q, a, [0, 1, 2, 3, 4])) == pytest.approx(q**-2.5, abs=1e-12)


def test_weyl_non_unit_and_budget():
    with pytest.raises(ValidationError):
        weyl_sum(F5, 6, 2, [0] * 5)
    with pytest.raises(BudgetError):
        weyl_sum_direct(F5, 40, 1, [0] * 5)


def test_weyl_audit_bounded():
    rows = weyl_bound_audit(F5, 30)
    assert all(not r.flagged for r in rows)
    assert rows[2].normalized == pytest.approx(1.0)


def test_sphere_transform_at_zero():
    assert float(sphere_ft_analytic(5, 0.0)) == pytest.approx(8 * math.pi**2 / 3)
    assert ellipsoid_sigma_ft(F5, np.zeros(5)) == pytest.approx(4 * math.pi**2 / 3)


def test_sphere_transform_n3_closed_form():
    rho = np.linspace(0.1, 5, 20)
    want = 2 * np.sin(2 * np.pi * rho) / rho
    assert np.allclose(sphere_ft_analytic(3, rho), want)


def test_slab_estimator_against_analytic():
    SM = SurfaceMeasure(F5, Cutoff(), samples=200_000, seed=3)
    for xi in (np.zeros(5), np.array([0.3, 0, 0, 0, 0]), np.array([0.2, -0.4, 0.1, 0, 0.5])):
        est = SM(xi)
        assert abs(est.value - ellipsoid_sigma_ft(F5, xi)) < 4 * est.se + 1e-9


def test_slab_validation():
    with pytest.raises(ValidationError):
        SurfaceMeasure(F5, eps=0)
    with pytest.raises(ValidationError):
        SurfaceMeasure(F5, samples=10)


def test_sigma_hat_dispatch():
    s = sigma_hat(F5, Cutoff())
    assert s(np.zeros(5)) == pytest.approx(4 * math.pi**2 / 3)
    with pytest.raises(DomainError):
        sigma_hat(F5, Cutoff(r1=0.5, r2=0.9), method="analytic")


def test_decay_audit_stable():
    aud = sigma_decay_audit(sigma_hat(F5, Cutoff()), 5, np.linspace(2, 20, 40), 2.5)
    assert aud["growth"] < 1.3


def test_zeta_cutoff():
    assert zeta_cutoff(1, np.array([0.4, 0.0])) == 1.0
    assert zeta_cutoff(1, np.array([1.1, 0.0])) == 0.0
    assert zeta_cutoff(2, np.array([0.3, 0.0])) > 0


def test_qmax_rules():
    assert default_qmax(64, 2) == 3
    assert root_qmax(64, 2) == 8
    assert root_qmax(1, 2) == 1


def test_main_term_approaches_exact_at_zero():
    errs = []
    for lam in (64, 256, 1024):
        ex = multiplier_exact(F5, Cutoff(), lam, [np.zeros(5)])[0]
        mt = multiplier_main_term(F5, Cutoff(), lam, np.zeros(5), root_qmax(lam, 2)).value
        errs.append(abs(ex - mt))
    assert errs[0] > errs[1] > errs[2]
    assert errs[-1] < 0.02 * 11.43


def test_xi_samples_shape():
    xs = default_xi_samples(5, 100, 0)
    assert xs.shape == (100, 5)
    assert np.all(np.abs(xs) <= 1)


def test_tau_mass():
    TM = tau_measure(shipped_variety(), samples=400_000, seed=1)
    est = TM(np.zeros(5))
    assert abs(est.value - cone_tau_mass()) < 4 * est.se
