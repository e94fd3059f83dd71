"""r-variation and lambda-jump functionals, scalar and pointwise over families."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

from .errors import BudgetError, ValidationError
from .grid import GridFunction, lp_norm
from .ops import FamilyField

__all__ = [
    "SampleSequence", "VariationResult", "JumpResult", "variation_exact", "variation_bruteforce",
    "jump_count", "jump_bruteforce", "variation_field", "jump_field", "jump_functional", "lp_norm",
    "as_family", "variation_values", "jump_values",
]

VARIATION_BRUTE_MAX = 14
JUMP_BRUTE_MAX = 12


@dataclass(frozen=True, eq=False)
class SampleSequence:
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices)
        vals = np.asarray(self.values)
        if vals.ndim != 1 or len(vals) < 1:
            raise ValidationError("sequence needs at least one value")
        if len(idx) != len(vals):
            raise ValidationError("indices and values differ in length")
        if np.any(np.diff(idx) <= 0):
            raise ValidationError("indices must be strictly increasing")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", vals)

    @classmethod
    def of(cls, values) -> "SampleSequence":
        values = np.asarray(values)
        return cls(np.arange(1, len(values) + 1), values)

    def __len__(self):
        return len(self.values)


def _values(seq) -> np.ndarray:
    if isinstance(seq, SampleSequence):
        return seq.values
    v = np.asarray(seq)
    if v.ndim != 1:
        raise ValidationError("expected a 1-d sequence")
    return v


def _check_r(r):
    if not (r >= 1):
        raise ValidationError(f"variation exponent must be >= 1, got {r}")


@dataclass(frozen=True)
class VariationResult:
    r: float
    value: float
    witness: tuple

    def recompute(self, seq) -> float:
        a = _values(seq)
        incs = [abs(a[j] - a[i]) for i, j in zip(self.witness, self.witness[1:])]
        if not incs:
            return 0.0
        if math.isinf(self.r):
            return float(max(incs))
        return float(sum(x**self.r for x in incs) ** (1.0 / self.r))


def variation_exact(seq, r) -> VariationResult:
    """sup over increasing subsequences of (sum |a_{k+1} - a_k|^r)^(1/r).

    O(L^2) suffix dynamic program; the reported witness is the
    lexicographically smallest optimal index tuple.
    """
    _check_r(r)
    a = _values(seq)
    L = len(a)
    if L < 2:
        return VariationResult(r, 0.0, (0,) if L else ())
    D = np.abs(a[None, :] - a[:, None])
    if math.isinf(r):
        best = D.max()
        if best == 0:
            return VariationResult(r, 0.0, (0,))
        i, j = np.argwhere(D * np.triu(np.ones((L, L)), 1) == best)[0]
        return VariationResult(r, float(best), (int(i), int(j)))
    P = D**r
    # g[i]: best increment sum over chains starting at i
    g = np.zeros(L)
    for i in range(L - 2, -1, -1):
        g[i] = max(0.0, float(np.max(P[i, i + 1:] + g[i + 1:])))
    opt = float(g.max())
    if opt == 0:
        return VariationResult(r, 0.0, (0,))
    i = int(np.flatnonzero(g == opt)[0])
    wit = [i]
    while g[i] != 0:
        cand = P[i, i + 1:] + g[i + 1:]
        i = i + 1 + int(np.flatnonzero(cand == g[i])[0])
        wit.append(i)
    return VariationResult(r, opt ** (1.0 / r), tuple(wit))


@lru_cache(maxsize=None)
def _chain_table(L: int):
    """(subset id, i, j) for every consecutive pair of every subset of range(L)."""
    sid, ii, jj = [], [], []
    for mask in range(1 << L):
        members = [k for k in range(L) if mask >> k & 1]
        for i, j in zip(members, members[1:]):
            sid.append(mask)
            ii.append(i)
            jj.append(j)
    return np.array(sid, dtype=np.int64), np.array(ii, dtype=np.int64), np.array(jj, dtype=np.int64)


def variation_bruteforce(seq, r) -> float:
    """Maximum over all 2^L index subsets; independent of the dynamic program."""
    _check_r(r)
    a = _values(seq)
    L = len(a)
    if L > VARIATION_BRUTE_MAX:
        raise BudgetError(f"brute force variation limited to L <= {VARIATION_BRUTE_MAX}", requested=L,
                          budget=VARIATION_BRUTE_MAX)
    if L < 2:
        return 0.0
    sid, ii, jj = _chain_table(L)
    inc = np.abs(a[jj] - a[ii])
    if math.isinf(r):
        return float(inc.max())
    totals = np.bincount(sid, inc**r, minlength=1 << L)
    return float(totals.max() ** (1.0 / r))


# -- jumps --------------------------------------------------------------------


@dataclass(frozen=True)
class JumpResult:
    threshold: float
    count: int
    witness: tuple


def jump_count(seq, lam) -> JumpResult:
    """Greedy earliest-endpoint count of interleaved pairs with |a_v - a_u| > lam."""
    if not lam > 0:
        raise ValidationError("jump threshold must be positive")
    a = _values(seq)
    pairs = []
    start = 0
    for v in range(1, len(a)):
        window = a[start:v]
        gaps = np.abs(a[v] - window)
        k = int(np.argmax(gaps))
        if gaps[k] > lam:
            pairs.append((start + k, v))
            start = v
    return JumpResult(float(lam), len(pairs), tuple(pairs))


def jump_bruteforce(seq, lam) -> int:
    """Exhaustive search over pair systems u1 < v1 <= u2 < v2 <= ... (memoized on position)."""
    if not lam > 0:
        raise ValidationError("jump threshold must be positive")
    a = _values(seq)
    L = len(a)
    if L > JUMP_BRUTE_MAX:
        raise BudgetError(f"brute force jumps limited to L <= {JUMP_BRUTE_MAX}", requested=L, budget=JUMP_BRUTE_MAX)
    ok = [[abs(a[v] - a[u]) > lam for v in range(L)] for u in range(L)]

    @lru_cache(maxsize=None)
    def best(s):
        m = 0
        for u, v in itertools.combinations(range(s, L), 2):
            if ok[u][v]:
                m = max(m, 1 + best(v))
        return m

    return best(0)


# -- pointwise fields ---------------------------------------------------------


FamilyLike = Union[FamilyField, Sequence[GridFunction]]


def as_family(family: FamilyLike) -> FamilyField:
    if isinstance(family, FamilyField):
        return family
    family = list(family)
    return FamilyField.from_members(tuple(range(len(family))), family)


def variation_values(mat: np.ndarray, r) -> np.ndarray:
    """Row-wise V_r of a (P, L) matrix."""
    _check_r(r)
    P, L = mat.shape
    if L < 2 or P == 0:
        return np.zeros(P)
    if math.isinf(r):
        out = np.zeros(P)
        for i in range(L - 1):
            out = np.maximum(out, np.max(np.abs(mat[:, i + 1:] - mat[:, i:i + 1]), axis=1))
        return out
    best = np.zeros((P, L))
    for j in range(1, L):
        inc = np.abs(mat[:, j:j + 1] - mat[:, :j]) ** r + best[:, :j]
        best[:, j] = inc.max(axis=1)
    return best.max(axis=1) ** (1.0 / r)


def jump_values(mat: np.ndarray, lam) -> np.ndarray:
    """Row-wise greedy jump counts of a (P, L) matrix."""
    if not lam > 0:
        raise ValidationError("jump threshold must be positive")
    P, L = mat.shape
    count = np.zeros(P, dtype=np.int64)
    if L < 2 or P == 0:
        return count
    if not np.iscomplexobj(mat):
        cols = np.ascontiguousarray(mat.T)
        lo = cols[0].copy()
        hi = cols[0].copy()
        for x in cols[1:]:
            hit = (x - lo > lam) | (hi - x > lam)
            count += hit
            np.minimum(lo, x, out=lo)
            np.maximum(hi, x, out=hi)
            np.copyto(lo, x, where=hit)
            np.copyto(hi, x, where=hit)
        return count
    start = np.zeros(P, dtype=np.int64)
    cols = np.arange(L)
    for v in range(1, L):
        gaps = np.abs(mat[:, v:v + 1] - mat[:, :v])
        gaps[cols[None, :v] < start[:, None]] = 0
        hit = gaps.max(axis=1) > lam
        count += hit
        start[hit] = v
    return count


def variation_field(family: FamilyLike, r) -> GridFunction:
    fam = as_family(family)
    return fam.field(variation_values(fam.values, r))


def jump_field(family: FamilyLike, lam) -> GridFunction:
    fam = as_family(family)
    return fam.field(jump_values(fam.values, lam).astype(float))


def jump_functional(family: FamilyLike, lam, p=2) -> float:
    """|| lam * J_lam^(1/2) ||_p over the union of supports."""
    fam = as_family(family)
    J = jump_values(fam.values, lam).astype(float)
    return lp_norm(GridFunction(fam.points, lam * np.sqrt(J)), p)
