import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from lacvar.decomp import (TorusFunction, band_count, dyadic_average, dyadic_difference, kernel_aliasing,
                           major_arc_mask_1d, major_arc_membership, martingale_classes, martingale_jump_audit,
                           midpoint_grid, psi_eval, psi_hat_1d, psi_hat_direct, psi_hat_torus, psi_sJ, psi_table,
                           single_average_bound_audit, smooth_lcm, smoothed_kernel_mass, spectral_project_minor,
                           spectral_split, square_function_audit)
from lacvar.errors import BudgetError, DomainError, ValidationError
from lacvar.forms import Cutoff, sum_of_squares
from lacvar.grid import GridFunction
from lacvar.seminorms import jump_values


def test_smooth_lcm():
    assert [smooth_lcm(j) for j in range(5)] == [1, 2, 12, 840, 720720]
    with pytest.raises(BudgetError):
        smooth_lcm(5)


def test_band_count():
    assert band_count(8) == 1
    assert band_count(12) == 1
    assert band_count(16) == 2


def test_psi_hat_plateau():
    t = np.array([0.0, 0.2, 1 / 3, 0.5, 2 / 3, 0.9])
    v = psi_hat_1d(t)
    assert v[0] == v[1] == v[2] == 1.0
    assert 0 < v[3] < 1
    assert v[4] == v[5] == 0.0


def test_psi_matches_quadrature():
    # psi(x) = int psi_hat(t) e(xt) dt
    for x in (0.0, 0.7, 2.3):
        want = integrate.quad(lambda t: float(psi_hat_1d(t)) * math.cos(2 * math.pi * x * t), -1, 1, limit=200)[0]
        assert float(psi_eval(np.array([x]))[0]) == pytest.approx(want, abs=1e-10)


def test_psi_table_tail_small():
    tab = psi_table()
    assert tab.tail_mass() < 1e-8


def test_psi_kernel_mass_and_domain():
    K = psi_sJ(2, 8, 1)
    assert K.mass() == pytest.approx(1.0, abs=1e-8)
    assert np.all(K.offsets % 2 == 0)
    with pytest.raises(DomainError):
        psi_sJ(4, 4)
    psi_sJ(1, 1)


@settings(max_examples=8, deadline=None)
@given(st.sampled_from([(1, 2), (2, 8), (12, 16)]), st.floats(0, 1))
def test_poisson_equals_direct(sJ, x):
    s, J = sJ
    a = psi_hat_torus(s, J, np.array([[x]]))
    b = psi_hat_direct(s, J, np.array([[x]]))
    assert abs(a[0] - b[0]) < 1e-6


def test_poisson_equals_direct_2d():
    xi = np.random.default_rng(0).random((6, 2))
    assert np.max(np.abs(psi_hat_torus(2, 8, xi) - psi_hat_direct(2, 8, xi))) < 1e-6


def test_square_function_bounded_and_stable():
    for j in (0, 1):
        aud = square_function_audit(j)
        assert math.isfinite(aud.bound)
        assert aud.relative_increase < 0.05


def test_square_function_validation():
    with pytest.raises(BudgetError):
        square_function_audit(4)
    with pytest.raises(ValidationError):
        square_function_audit(1, L_max=3)
    g = midpoint_grid(8)
    assert np.allclose(g, (np.arange(8) + 0.5) / 8)


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 1000), st.sampled_from([8, 12]))
def test_spectral_split_telescopes(seed, l):
    f = TorusFunction.random(2, 128, seed)
    sp = spectral_split(f, l)
    assert sp.total().max_abs_diff(f) < 1e-10


def test_split_aliasing_option():
    f = TorusFunction.random(2, 64, 0)
    with pytest.raises(BudgetError):
        spectral_split(f, 12, aliasing_tol=0.01)
    assert kernel_aliasing(256, 1024) < 0.2
    with pytest.raises(ValidationError):
        spectral_split(f, 6)


def test_torus_shift_commutes_with_split():
    f = TorusFunction.random(1, 256, 1)
    a = spectral_split(f.shift([5]), 8).f1
    b = spectral_split(f, 8).f1.shift([5])
    assert a.max_abs_diff(b) < 1e-12


def test_major_arcs():
    assert major_arc_membership([Fraction(1, 2)], 1, 4)
    assert major_arc_membership([Fraction(1, 2) + Fraction(1, 8)], 1, 4)
    assert not major_arc_membership([Fraction(1, 2) + Fraction(1, 4)], 1, 4)
    N = 64
    m = major_arc_mask_1d(N, 1, 4)
    assert list(m) == [major_arc_membership([Fraction(k, N)], 1, 4) for k in range(N)]


def test_minor_projection_removes_major():
    f = TorusFunction.random(1, 64, 2)
    g = spectral_project_minor(f, 1, 4)
    c = g.fft()
    assert np.all(np.abs(c[major_arc_mask_1d(64, 1, 4)]) < 1e-12)


def _random_grid(seed, n=2, k=10, R=20):
    rng = np.random.default_rng(seed)
    return GridFunction.from_arrays(rng.integers(-R, R, (k, n)), rng.standard_normal(k))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 4), st.integers(0, 4))
def test_dyadic_nesting(seed, a, b):
    f = _random_grid(seed)
    m, l = min(a, b), max(a, b)
    P = np.random.default_rng(seed).integers(-40, 40, (100, 2))
    assert np.allclose(dyadic_average(dyadic_average(f, m), l).evaluate(P), dyadic_average(f, l).evaluate(P))


def test_dyadic_mass_and_telescoping():
    f = _random_grid(7)
    for l in range(6):
        assert dyadic_average(f, l).mass() == pytest.approx(float(np.sum(f.values)))
    tot = dyadic_difference(f, 1)
    for m in range(2, 6):
        tot = tot + dyadic_difference(f, m)
    P = np.random.default_rng(1).integers(-64, 64, (300, 2))
    ref = dyadic_average(f, 5).evaluate(P) - dyadic_average(f, 0).evaluate(P)
    assert np.max(np.abs(tot.evaluate(P) - ref)) < 1e-12


def test_dyadic_cube_convention():
    f = GridFunction.from_arrays(np.array([[-1, 0], [0, 0]]), np.array([4.0, 8.0]))
    E1 = dyadic_average(f, 1)
    assert E1.evaluate([[-2, 1]])[0] == pytest.approx(1.0)
    assert E1.evaluate([[1, 1]])[0] == pytest.approx(2.0)


def test_martingale_classes_bruteforce():
    f = GridFunction.from_arrays(np.array([[0, 0], [3, 1], [-2, 5]]), np.array([1.0, -2.0, 0.5]))
    L = 3
    mc = martingale_classes(f, L)
    side = 2**L
    pts = np.array(list(itertools.product(range(-2 * side, 2 * side), repeat=2)))
    seqs = np.stack([dyadic_average(f, k).evaluate(pts) for k in range(L + 1)], axis=1)
    lam = 0.05
    brute = np.sum(jump_values(seqs, lam))
    assert np.sum(mc.multiplicity * jump_values(mc.sequences, lam)) == brute
    assert mc.multiplicity.sum() == np.sum(np.any(seqs != 0, axis=1))


def test_martingale_jump_audit_runs():
    fs = [_random_grid(s, k=5) for s in range(3)]
    aud = martingale_jump_audit(fs, [0.5, 0.1])
    assert aud.ratios.shape == (3, 2)
    assert aud.max_ratio < 10
    with pytest.raises(ValidationError):
        martingale_jump_audit(fs, [1.0], p=1)


def test_kernel_mass_identity():
    km = smoothed_kernel_mass(sum_of_squares(5), Cutoff(), 4)
    assert km.value == pytest.approx(1.0, abs=1e-5)
    assert smoothed_kernel_mass(sum_of_squares(5), Cutoff(), 4, psi_scale=2.0).value == pytest.approx(2.0, abs=1e-5)


def test_kernel_mass_against_materialized_convolution():
    from lacvar.grid import sparse_convolve
    from lacvar.ops import birch_magyar_kernel

    F = sum_of_squares(2)
    K = birch_magyar_kernel(F, Cutoff(), 2)
    P = psi_sJ(1, 2, 2)
    conv = sparse_convolve(K.points, K.weights, P.to_grid())
    assert float(np.sum(conv.values)) == pytest.approx(smoothed_kernel_mass(F, Cutoff(), 1).value, rel=1e-10)


def test_single_average_audit_domain():
    with pytest.raises(DomainError):
        single_average_bound_audit(sum_of_squares(5), Cutoff(), 1, 2, ensemble=1, samples=100)
