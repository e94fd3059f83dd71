import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lacvar.errors import BudgetError, DomainError, ValidationError
from lacvar.forms import Cutoff, IntegralForm, eval_form, shipped_variety, sum_of_squares
from lacvar.lattice import (count_solutions, counting_exponent_fit, counting_function, decay_fit, enumerate_solutions,
                            enumerate_variety_zero, iroot, jacobi_r4, variety_count)


def _brute(F, lam, R):
    rng = range(-R, R + 1)
    return sorted(p for p in itertools.product(rng, repeat=F.n) if eval_form(F, p) == lam)


@given(st.integers(0, 10**30), st.integers(1, 5))
def test_iroot(x, d):
    r = iroot(x, d)
    assert r**d <= x < (r + 1) ** d


@pytest.mark.parametrize("lam", [1, 2, 3, 7, 12, 25])
def test_enumeration_matches_box_scan(lam):
    F = sum_of_squares(4)
    pts = enumerate_solutions(F, lam).points
    assert sorted(map(tuple, pts.tolist())) == _brute(F, lam, iroot(lam, 2))


def test_weighted_form_enumeration():
    F = IntegralForm.diagonal([1, 2, 3], 2)
    for lam in range(1, 30):
        pts = enumerate_solutions(F, lam).points
        assert sorted(map(tuple, pts.tolist())) == _brute(F, lam, iroot(lam, 2))


def test_methods_agree():
    F = sum_of_squares(5)
    a = enumerate_solutions(F, 50, method="mitm").points
    b = enumerate_solutions(F, 50, method="scan").points
    assert sorted(map(tuple, a.tolist())) == sorted(map(tuple, b.tolist()))


def test_jacobi_small():
    F = sum_of_squares(4)
    for lam in range(1, 60):
        assert count_solutions(F, lam) == jacobi_r4(lam)


def test_counting_function_equals_count_when_cutoff_is_one():
    F = sum_of_squares(5)
    assert counting_function(F, Cutoff(), 100) == count_solutions(F, 100)


def test_budget():
    with pytest.raises(BudgetError):
        enumerate_solutions(sum_of_squares(5), 400, max_points=10)


def test_variety_enumeration_brute():
    P = shipped_variety()
    for lam in (1, 2, 5, 8):
        pts = enumerate_variety_zero(P, lam)
        want = sorted(p for p in itertools.product(range(1, lam + 1), repeat=5) if eval_form(P, p) == 0)
        assert sorted(map(tuple, pts.tolist())) == want
        assert variety_count(P, lam) == len(want)


def test_variety_needs_indefinite():
    with pytest.raises(DomainError):
        enumerate_solutions(shipped_variety(), 4)


def test_five_square_growth():
    counts = {lam: count_solutions(sum_of_squares(5), lam) for lam in (2**6, 2**7, 2**8, 2**9)}
    assert abs(counting_exponent_fit(counts).slope - 1.5) < 0.15


def test_fit_validation():
    with pytest.raises(ValidationError):
        decay_fit([1, 2], [1, 2])
    with pytest.raises(ValidationError):
        counting_exponent_fit({10: 1, 11: 2, 12: 3, 13: 4})


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 300))
def test_solutions_satisfy_form(lam):
    F = sum_of_squares(5)
    pts = enumerate_solutions(F, lam).points
    assert np.all(F.eval_array(pts) == lam)
    assert len({tuple(p) for p in pts.tolist()}) == len(pts)
