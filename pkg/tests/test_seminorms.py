import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lacvar.errors import ValidationError
from lacvar.seminorms import (SampleSequence, jump_bruteforce, jump_count, jump_values, variation_bruteforce,
                              variation_exact, variation_values)

seqs = st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=9)


def test_examples():
    assert variation_exact([0, 1, 0, 1], 1).value == 3.0
    assert variation_exact([0, 1, 0, 1], math.inf).value == 1.0
    assert jump_count([0, 1, 0, 1], 0.5).count == 3
    assert jump_count([0, 1, 0, 1], 1).count == 0
    assert variation_exact([4.0], 2).value == 0.0


@settings(max_examples=200)
@given(seqs, st.sampled_from([1, 1.5, 2, 3, math.inf]))
def test_variation_oracle(a, r):
    assert variation_exact(a, r).value == pytest.approx(variation_bruteforce(a, r), abs=1e-10)


@settings(max_examples=200)
@given(seqs, st.sampled_from([0.5, 1, 2]))
def test_jump_oracle(a, lam):
    assert jump_count(a, lam).count == jump_bruteforce(a, lam)


@given(seqs, st.sampled_from([1, 2, 3]))
def test_witness_attains(a, r):
    res = variation_exact(a, r)
    assert res.recompute(a) == pytest.approx(res.value, abs=1e-9)


@given(seqs)
def test_monotone_in_r(a):
    vals = [variation_exact(a, r).value for r in (1, 2, 3, math.inf)]
    assert all(x >= y - 1e-12 for x, y in zip(vals, vals[1:]))


@given(seqs, st.floats(0.1, 3))
def test_jump_variation_bound(a, lam):
    J = jump_count(a, lam).count
    assert lam * J ** (1 / 3) <= variation_exact(a, 3).value + 1e-9


def test_vectorised_rows():
    rng = np.random.default_rng(5)
    mat = rng.uniform(-2, 2, (40, 7))
    for r in (1, 2.5, math.inf):
        assert np.allclose(variation_values(mat, r), [variation_exact(row, r).value for row in mat])
    assert list(jump_values(mat, 0.7)) == [jump_count(row, 0.7).count for row in mat]


def test_validation():
    with pytest.raises(ValidationError):
        variation_exact([1, 2], 0.5)
    with pytest.raises(ValidationError):
        SampleSequence([1, 1], [0, 0])
    assert len(SampleSequence.of([3, 4, 5])) == 3
