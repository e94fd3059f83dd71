"""Averaging operators over lattice level sets and varieties, and lacunary families."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .errors import BudgetError, DomainError, ValidationError
from .forms import Cutoff, IntegralForm, RegularValueSet
from .grid import Box, GridFunction, reduce_keys
from .lattice import enumerate_solutions, enumerate_variety_zero

NORMALIZATIONS = ("by_count", "by_power")


@dataclass(frozen=True, eq=False)
class Kernel:
    """Sparse kernel: weights[i] = phi_weights[i] / normalizer at points[i]."""

    lam: int
    points: np.ndarray
    phi_weights: np.ndarray
    normalizer: float
    normalization: str

    @property
    def weights(self) -> np.ndarray:
        return self.phi_weights / self.normalizer

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return len(self.points)

    def mass(self, exact: bool = False):
        """Sum of weights; a Fraction for by_count when ``exact`` is set."""
        if exact:
            if self.normalization != "by_count":
                raise DomainError("exact mass is defined for by_count kernels")
            num = sum((Fraction(float(w)) for w in self.phi_weights), Fraction(0))
            return num / num
        return float(np.sum(self.weights))

    def to_grid(self) -> GridFunction:
        return GridFunction.from_arrays(self.points, self.weights, n=self.n)


def _check_norm(normalization):
    if normalization not in NORMALIZATIONS:
        raise ValidationError(f"normalization must be one of {NORMALIZATIONS}, got {normalization!r}")


@lru_cache(maxsize=32)
def birch_magyar_kernel(F: IntegralForm, phi: Cutoff, lam: int, normalization: str = "by_count") -> Kernel:
    _check_norm(normalization)
    sol = enumerate_solutions(F, lam, phi=phi)
    w = sol.weights
    keep = w > 0
    pts, w = sol.points[keep], w[keep]
    if len(pts) == 0:
        raise DomainError(f"no weighted solutions of F(y) = {lam}; lambda is not in the effective value set")
    if normalization == "by_count":
        norm = float(np.sum(w))
    else:
        norm = float(lam) ** (F.n / F.d - 1)
    pts.setflags(write=False)
    w.setflags(write=False)
    return Kernel(lam, pts, w, norm, normalization)


@lru_cache(maxsize=32)
def variety_kernel(P: IntegralForm, lam: int, normalization: str = "by_count") -> Kernel:
    _check_norm(normalization)
    pts = enumerate_variety_zero(P, lam)
    if len(pts) == 0:
        raise DomainError(f"no points of P = 0 in [{lam}]^{P.n}")
    w = np.ones(len(pts))
    norm = float(len(pts)) if normalization == "by_count" else float(lam) ** (P.n - P.d)
    pts.setflags(write=False)
    w.setflags(write=False)
    return Kernel(lam, pts, w, norm, normalization)


def apply_kernel(K: Kernel, f: GridFunction) -> GridFunction:
    """(K * f)(x) = sum_y K(y) f(x - y)."""
    if len(f) == 0:
        return GridFunction.zero(K.n)
    if f.n != K.n:
        raise ValidationError(f"function dimension {f.n} != kernel dimension {K.n}")
    keys, vals, box = _family_keys([K], f)
    return reduce_keys(keys[0], vals[0], box)


def birch_magyar_average(F: IntegralForm, phi: Cutoff, lam: int, f: GridFunction,
                         normalization: str = "by_count") -> GridFunction:
    return apply_kernel(birch_magyar_kernel(F, phi, int(lam), normalization), f)


def variety_average(P: IntegralForm, lam: int, f: GridFunction, normalization: str = "by_count") -> GridFunction:
    return apply_kernel(variety_kernel(P, int(lam), normalization), f)


# -- lacunary sequences -------------------------------------------------------


def _as_fraction(c) -> Fraction:
    if isinstance(c, float):
        return Fraction(repr(c))
    return Fraction(c)


@dataclass(frozen=True)
class LacunarySequence:
    ratio: Fraction
    values: tuple

    def __post_init__(self):
        vals = self.values
        for a, b in zip(vals, vals[1:]):
            if Fraction(b, a) < self.ratio:
                raise ValidationError(f"{b}/{a} is below the lacunary ratio {self.ratio}")

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def truncated(self, count: int) -> "LacunarySequence":
        return LacunarySequence(self.ratio, self.values[:count])


def lacunary_sequence(c, start: int, count: int, values: Optional[RegularValueSet] = None) -> LacunarySequence:
    """Greedy: each term is the least element of the value set >= c * previous."""
    c = _as_fraction(c)
    if c <= 1:
        raise ValidationError("lacunary ratio must exceed 1")
    if count < 1:
        raise ValidationError("count must be positive")
    values = values or RegularValueSet(1, 1)
    cur = values.least_at_least(start)
    out = []
    while len(out) < count:
        if cur is None:
            raise BudgetError(f"value set exhausted after {len(out)} terms", requested=count, budget=len(out))
        out.append(int(cur))
        cur = values.least_at_least(c * cur)
    return LacunarySequence(c, tuple(out))


# -- families -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FamilyField:
    """Outputs of a family of operators aligned on the union of their supports.

    ``values[:, l]`` is the l-th member evaluated at ``points``.
    """

    lambdas: tuple
    points: np.ndarray
    values: np.ndarray

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return len(self.lambdas)

    @property
    def members(self) -> list:
        return [GridFunction.from_arrays(self.points, self.values[:, l], n=self.n) for l in range(len(self.lambdas))]

    def field(self, column_values) -> GridFunction:
        return GridFunction.from_arrays(self.points, column_values, n=self.n)

    @property
    def lac(self) -> GridFunction:
        """Pointwise sup over the family of |member|."""
        return self.field(np.max(np.abs(self.values), axis=1))

    def truncated(self, count: int) -> "FamilyField":
        vals = self.values[:, :count]
        keep = np.any(vals != 0, axis=1)
        return FamilyField(self.lambdas[:count], self.points[keep], vals[keep])

    @classmethod
    def from_members(cls, lambdas, members: Sequence[GridFunction]) -> "FamilyField":
        members = list(members)
        if not members:
            raise ValidationError("empty family")
        nonempty = [m for m in members if len(m)]
        n = nonempty[0].n if nonempty else members[0].n
        if any(m.n != n for m in nonempty):
            raise ValidationError("family members differ in dimension")
        if not nonempty:
            return cls(tuple(lambdas), np.zeros((0, n), dtype=np.int64), np.zeros((0, len(members))))
        box = Box.covering(*[m.points for m in nonempty])
        keys = np.concatenate([box.encode(m.points) for m in members if len(m)])
        cols = np.concatenate([np.full(len(m), l) for l, m in enumerate(members) if len(m)])
        vals = np.concatenate([m.values for m in members if len(m)])
        return cls._assemble(tuple(lambdas), keys, cols, vals, box)

    @classmethod
    def _assemble(cls, lambdas, keys, cols, vals, box):
        L = len(lambdas)
        uk, inv = np.unique(keys, return_inverse=True)
        idx = inv * L + cols
        size = len(uk) * L
        if np.iscomplexobj(vals):
            mat = np.bincount(idx, vals.real, size) + 1j * np.bincount(idx, vals.imag, size)
        else:
            mat = np.bincount(idx, vals, size)
        mat = mat.reshape(len(uk), L)
        keep = np.any(mat != 0, axis=1)
        return cls(lambdas, box.decode(uk[keep]), mat[keep])


def _family_keys(kernels, f: GridFunction):
    lo = np.min([K.points.min(axis=0) for K in kernels], axis=0) + np.minimum(f.points.min(axis=0), 0)
    hi = np.max([K.points.max(axis=0) for K in kernels], axis=0) + np.maximum(f.points.max(axis=0), 0)
    box = Box(lo, hi)
    offs = f.points @ box.strides
    keys, vals = [], []
    for K in kernels:
        kk = box.encode(K.points)
        keys.append((offs[:, None] + kk[None, :]).ravel())
        vals.append((f.values[:, None] * K.weights[None, :]).ravel())
    return keys, vals, box


def apply_family(kernels: Sequence[Kernel], f: GridFunction) -> FamilyField:
    lambdas = tuple(K.lam for K in kernels)
    if len(f) == 0:
        n = kernels[0].n
        return FamilyField(lambdas, np.zeros((0, n), dtype=np.int64), np.zeros((0, len(kernels))))
    keys, vals, box = _family_keys(kernels, f)
    cols = np.concatenate([np.full(len(k), l) for l, k in enumerate(keys)])
    return FamilyField._assemble(lambdas, np.concatenate(keys), cols, np.concatenate(vals), box)


def family_apply(F: IntegralForm, phi: Cutoff, seq, f: GridFunction, normalization: str = "by_count") -> FamilyField:
    """[A_lam f for lam in seq], aligned; ``.lac`` is the lacunary maximal field."""
    return apply_family([birch_magyar_kernel(F, phi, int(l), normalization) for l in seq], f)


def variety_family_apply(P: IntegralForm, seq, f: GridFunction, normalization: str = "by_count") -> FamilyField:
    return apply_family([variety_kernel(P, int(l), normalization) for l in seq], f)


def power_mass_ratio(F: IntegralForm, phi: Cutoff, lam: int) -> float:
    """r_{F,phi}(lam) / lam^(n/d - 1): the by_power kernel mass."""
    return birch_magyar_kernel(F, phi, int(lam), "by_power").mass()


def young_bound(K: Kernel, f: GridFunction) -> float:
    return float(np.sum(np.abs(K.weights))) * math.sqrt(float(np.sum(np.abs(f.values) ** 2)))
