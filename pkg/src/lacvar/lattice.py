"""Lattice points on level sets K(y) = lambda and on varieties P(y) = 0."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import BudgetError, DomainError, ValidationError
from .forms import Cutoff, IntegralForm
from .grid import lexsort_rows

DEFAULT_MAX_POINTS = 20_000_000


def iroot(x: int, d: int) -> int:
    """floor(x ** (1/d)) for x >= 0, exact."""
    if x < 0:
        raise ValueError("negative radicand")
    if x < 2:
        return x
    if d == 2:
        return math.isqrt(x)
    r = int(round(x ** (1.0 / d)))
    while r**d > x:
        r -= 1
    while (r + 1) ** d <= x:
        r += 1
    return r


@dataclass(frozen=True, eq=False)
class SolutionSet:
    lam: int
    points: np.ndarray
    weights: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.points)

    @property
    def count(self) -> int:
        return len(self.points)


def _partial_sums(coeffs, d, lam, bounds):
    """All tuples over the given coordinates with partial sum <= lam.

    Returns (tuples (m, k) int64, partial values (m,) int64).
    """
    tuples = np.zeros((1, 0), dtype=np.int64)
    sums = np.zeros(1, dtype=np.int64)
    for c, b in zip(coeffs, bounds):
        vals = np.arange(-b, b + 1, dtype=np.int64)
        contrib = c * vals**d
        new_sums = (sums[:, None] + contrib[None, :]).ravel()
        keep = new_sums <= lam
        rows = np.repeat(np.arange(len(sums)), len(vals))[keep]
        cols = np.tile(np.arange(len(vals)), len(sums))[keep]
        tuples = np.concatenate([tuples[rows], vals[cols, None]], axis=1)
        sums = new_sums[keep]
    return tuples, sums


def _coordinate_bounds(F: IntegralForm, lam: int):
    return [iroot(lam // c, F.d) for c in F.coeffs]


def _mitm_join(F: IntegralForm, lam: int, max_points: int, count_only=False):
    coeffs = F.coeffs
    h = -(-F.n // 2)
    bounds = _coordinate_bounds(F, lam)
    ta, sa = _partial_sums(coeffs[:h], F.d, lam, bounds[:h])
    tb, sb = _partial_sums(coeffs[h:], F.d, lam, bounds[h:])
    order = np.argsort(sb, kind="stable")
    sb_sorted = sb[order]
    need = lam - sa
    left = np.searchsorted(sb_sorted, need, side="left")
    right = np.searchsorted(sb_sorted, need, side="right")
    counts = right - left
    total = int(counts.sum())
    if count_only:
        return total
    if total > max_points:
        raise BudgetError(f"{total} solutions exceed the point budget", requested=total, budget=max_points)
    ia = np.repeat(np.arange(len(sa)), counts)
    starts = np.repeat(left, counts)
    within = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    ib = order[starts + within]
    return np.concatenate([ta[ia], tb[ib]], axis=1)


def _box_scan(F: IntegralForm, target: int, lo, hi, max_points: int):
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    size = int(np.prod((hi - lo + 1).astype(object)))
    if size > max_points:
        raise BudgetError(f"box scan over {size} points exceeds budget", requested=size, budget=max_points)
    axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in zip(lo, hi)]
    # chunk over the leading coordinate to bound memory
    found = []
    for x0 in axes[0]:
        rest = np.stack(np.meshgrid(*axes[1:], indexing="ij"), axis=-1).reshape(-1, F.n - 1) if F.n > 1 else np.zeros((1, 0), dtype=np.int64)
        pts = np.concatenate([np.full((len(rest), 1), x0, dtype=np.int64), rest], axis=1)
        vals = F.eval_array(pts)
        found.append(pts[vals == target])
    return np.concatenate(found) if found else np.zeros((0, F.n), dtype=np.int64)


def enumerate_solutions(F: IntegralForm, lam: int, phi: Optional[Cutoff] = None, method: str = "auto",
                        box: Optional[int] = None, max_points: int = DEFAULT_MAX_POINTS) -> SolutionSet:
    """All y in Z^n with F(y) = lam, lexicographically sorted.

    Positive-definite diagonal forms of even degree use a meet-in-the-middle
    join on partial sums; everything else scans the box |y|_inf <= ``box``.
    """
    lam = int(lam)
    if method not in ("auto", "mitm", "scan"):
        raise ValidationError(f"unknown enumeration method {method!r}")
    if F.positive_definite_diagonal:
        if lam < 0:
            pts = np.zeros((0, F.n), dtype=np.int64)
        elif method in ("auto", "mitm"):
            pts = _mitm_join(F, lam, max_points)
        else:
            b = box if box is not None else max(_coordinate_bounds(F, lam))
            pts = _box_scan(F, lam, [-b] * F.n, [b] * F.n, max_points)
    else:
        if box is None:
            raise DomainError("level set is unbounded for this form; pass an explicit box bound")
        if method == "mitm":
            raise DomainError("meet-in-the-middle needs a positive-definite diagonal form")
        pts = _box_scan(F, lam, [-box] * F.n, [box] * F.n, max_points)
    pts = pts[lexsort_rows(pts)]
    weights = None
    if phi is not None:
        weights = solution_weights(F, phi, lam, pts)
    return SolutionSet(lam=lam, points=pts, weights=weights)


def solution_weights(F: IntegralForm, phi: Cutoff, lam: int, pts: np.ndarray) -> np.ndarray:
    """phi(y / lam^(1/d)) for each point."""
    if lam <= 0:
        return np.zeros(len(pts))
    scale = float(lam) ** (1.0 / F.d)
    return phi(pts / scale)


def _cutoff_is_one_on_shell(F: IntegralForm, phi: Cutoff) -> bool:
    """True when phi(y / lam^(1/d)) = 1 for every real y with F(y) = lam."""
    if not F.positive_definite_diagonal:
        return False
    # |y|_d^d <= lam / c_min, and |y|_2 <= n^(1/2 - 1/d) |y|_d on the level set
    cmin = min(F.coeffs)
    rmax = F.n ** (0.5 - 1.0 / F.d) * cmin ** (-1.0 / F.d)
    return rmax <= phi.r1


def count_solutions(F: IntegralForm, lam: int) -> int:
    """Exact |{y : F(y) = lam}| for positive-definite diagonal forms, without listing points."""
    if not F.positive_definite_diagonal:
        raise DomainError("exact counting is implemented for positive-definite diagonal forms")
    if lam < 0:
        return 0
    return _mitm_join(F, int(lam), 0, count_only=True)


def counting_function(F: IntegralForm, phi: Cutoff, lam: int, max_points: int = DEFAULT_MAX_POINTS) -> float:
    """r_{F,phi}(lam) = sum over F(y)=lam of phi(y / lam^(1/d))."""
    if lam < 1:
        raise ValidationError("counting function needs lambda >= 1")
    if _cutoff_is_one_on_shell(F, phi):
        return float(count_solutions(F, lam))
    sol = enumerate_solutions(F, lam, phi=phi, max_points=max_points)
    return float(np.sum(sol.weights))


# -- variety ------------------------------------------------------------------


def _single_negative_diagonal(P: IntegralForm):
    if not P.is_diagonal:
        return None
    neg = [i for i, c in enumerate(P.coeffs) if c < 0]
    pos = [i for i, c in enumerate(P.coeffs) if c > 0]
    if len(neg) == 1 and len(pos) == P.n - 1:
        return neg[0]
    return None


def enumerate_variety_zero(P: IntegralForm, lam: int, max_points: int = DEFAULT_MAX_POINTS) -> np.ndarray:
    """Points y in {1..lam}^n with P(y) = 0, lexicographically sorted."""
    lam = int(lam)
    if lam < 1:
        return np.zeros((0, P.n), dtype=np.int64)
    k = _single_negative_diagonal(P)
    if k is None:
        pts = _box_scan(P, 0, [1] * P.n, [lam] * P.n, max_points)
        return pts[lexsort_rows(pts)]
    # sum_{i != k} c_i y_i^d = |c_k| y_k^d: iterate the positive part and test for a d-th power
    others = [i for i in range(P.n) if i != k]
    ck = -P.coeffs[k]
    vals = np.arange(1, lam + 1, dtype=np.int64)
    if int(sum(P.coeffs[i] for i in others)) * lam**P.d > 2**62:
        raise OverflowError("variety values exceed int64")
    budget = lam ** (P.n - 1)
    if budget > 50 * max_points:
        raise BudgetError(f"variety scan over {budget} tuples exceeds budget", requested=budget, budget=50 * max_points)
    rest_axes = others[1:]
    rest = np.stack(np.meshgrid(*([vals] * len(rest_axes)), indexing="ij"), axis=-1).reshape(-1, len(rest_axes))
    rest_sum = np.zeros(len(rest), dtype=np.int64)
    for col, i in enumerate(rest_axes):
        rest_sum += P.coeffs[i] * rest[:, col] ** P.d
    found = []
    for y0 in vals:
        s = P.coeffs[others[0]] * int(y0) ** P.d + rest_sum
        ok = s % ck == 0
        q = s // ck
        if P.d == 2:
            root = np.floor(np.sqrt(q.astype(float))).astype(np.int64)
            # correct floating error near perfect squares
            root += (root + 1) ** 2 <= q
            root -= root**2 > q
        else:
            root = np.floor(np.power(q.astype(float), 1.0 / P.d)).astype(np.int64)
            root += (root + 1) ** P.d <= q
            root -= root**P.d > q
        ok &= (root**P.d == q) & (root >= 1) & (root <= lam)
        if not ok.any():
            continue
        m = int(ok.sum())
        pts = np.empty((m, P.n), dtype=np.int64)
        pts[:, others[0]] = y0
        for col, i in enumerate(rest_axes):
            pts[:, i] = rest[ok, col]
        pts[:, k] = root[ok]
        found.append(pts)
    pts = np.concatenate(found) if found else np.zeros((0, P.n), dtype=np.int64)
    if len(pts) > max_points:
        raise BudgetError("variety point count exceeds budget", requested=len(pts), budget=max_points)
    return pts[lexsort_rows(pts)]


def variety_count(P: IntegralForm, lam: int) -> int:
    return len(enumerate_variety_zero(P, lam))


# -- exponent fits ------------------------------------------------------------


@dataclass(frozen=True)
class PowerFit:
    slope: float
    intercept: float
    residuals: np.ndarray


def decay_fit(xs, ys) -> PowerFit:
    """Least squares line through (log x, log y)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) != len(ys):
        raise ValidationError("xs and ys differ in length")
    if len(xs) < 3:
        raise ValidationError("log-log fit needs at least 3 points")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValidationError("log-log fit needs positive data")
    lx, ly = np.log(xs), np.log(ys)
    if np.ptp(lx) == 0:
        raise ValidationError("degenerate abscissae")
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return PowerFit(float(slope), float(intercept), resid)


def counting_exponent_fit(counts_by_lambda: dict) -> PowerFit:
    """Slope of log(count) against log(lambda); needs >= 4 values over >= 2 octaves."""
    lams = sorted(counts_by_lambda)
    if len(lams) < 4 or lams[-1] < 4 * lams[0]:
        raise ValidationError("exponent fit needs at least 4 lambdas spanning 2 octaves")
    return decay_fit(lams, [counts_by_lambda[l] for l in lams])


def jacobi_r4(lam: int) -> int:
    """Jacobi: r_4(m) = 8 * sum of divisors of m not divisible by 4."""
    if lam == 0:
        return 1
    return 8 * sum(dv for dv in range(1, lam + 1) if lam % dv == 0 and dv % 4 != 0)
