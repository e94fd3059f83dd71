"""Finitely supported functions on Z^n and sparse lattice convolution.

Points are stored as a lexicographically sorted (m, n) int64 array with a
parallel value array. Alignment of several functions goes through a
mixed-radix int64 encoding of a common bounding box, which keeps joins
and reductions inside numpy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BudgetError, ValidationError

_KEY_LIMIT = 2**62


def lexsort_rows(points: np.ndarray) -> np.ndarray:
    if len(points) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.lexsort(points.T[::-1])


class Box:
    """Integer box [lo, hi] with a linear mixed-radix key map."""

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=np.int64)
        self.hi = np.asarray(hi, dtype=np.int64)
        extent = (self.hi - self.lo + 1).astype(object)
        total = 1
        strides = []
        for e in extent[::-1]:
            strides.append(total)
            total *= int(e)
        if total >= _KEY_LIMIT:
            raise BudgetError("bounding box too large for int64 keys", requested=total, budget=_KEY_LIMIT)
        self.strides = np.array(strides[::-1], dtype=np.int64)
        self.extent = np.array(extent, dtype=np.int64)

    @classmethod
    def covering(cls, *point_arrays):
        arrs = [np.asarray(p) for p in point_arrays if len(p)]
        if not arrs:
            raise ValidationError("cannot build a box around no points")
        lo = np.min([a.min(axis=0) for a in arrs], axis=0)
        hi = np.max([a.max(axis=0) for a in arrs], axis=0)
        return cls(lo, hi)

    def encode(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=np.int64) - self.lo) @ self.strides

    def offset(self, shift) -> int:
        """Key increment produced by translating a point by ``shift``."""
        return int(np.asarray(shift, dtype=np.int64) @ self.strides)

    def decode(self, keys) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.int64)
        out = np.empty((len(keys), len(self.lo)), dtype=np.int64)
        rem = keys.copy()
        for i, s in enumerate(self.strides):
            out[:, i] = rem // s
            rem -= out[:, i] * s
        return out + self.lo


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Sparse complex- or real-valued function on Z^n with finite support."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64)
        vals = np.asarray(self.values)
        if pts.ndim != 2:
            raise ValidationError("points must be a 2-d array")
        if len(pts) != len(vals):
            raise ValidationError("points and values differ in length")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)

    # construction ----------------------------------------------------------

    @classmethod
    def from_arrays(cls, points, values, n=None) -> "GridFunction":
        """Canonicalize: merge duplicate points by summation, drop zeros, sort."""
        pts = np.asarray(points, dtype=np.int64)
        vals = np.asarray(values)
        if vals.dtype.kind not in "fc":
            vals = vals.astype(float)
        if pts.size == 0:
            n = n if n is not None else (pts.shape[1] if pts.ndim == 2 else 0)
            return cls(np.zeros((0, n), dtype=np.int64), np.zeros(0, dtype=vals.dtype))
        if pts.ndim != 2:
            raise ValidationError("points must be a 2-d array")
        box = Box.covering(pts)
        keys, inv = np.unique(box.encode(pts), return_inverse=True)
        if vals.dtype.kind == "c":
            summed = np.bincount(inv, vals.real, len(keys)) + 1j * np.bincount(inv, vals.imag, len(keys))
        else:
            summed = np.bincount(inv, vals, len(keys))
        keep = summed != 0
        return cls(box.decode(keys[keep]), summed[keep])

    @classmethod
    def from_dict(cls, mapping: dict, n=None) -> "GridFunction":
        if not mapping:
            return cls.zero(n or 0)
        pts = np.array(list(mapping.keys()), dtype=np.int64)
        vals = np.array(list(mapping.values()))
        return cls.from_arrays(pts, vals)

    @classmethod
    def zero(cls, n: int) -> "GridFunction":
        return cls(np.zeros((0, n), dtype=np.int64), np.zeros(0))

    @classmethod
    def delta(cls, n: int, at=None, value=1.0) -> "GridFunction":
        at = np.zeros(n, dtype=np.int64) if at is None else np.asarray(at, dtype=np.int64)
        return cls(at.reshape(1, n), np.array([value]))

    # basic protocol ----------------------------------------------------------

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return len(self.points)

    def to_dict(self) -> dict:
        return {tuple(int(v) for v in p): complex(val) if self.values.dtype.kind == "c" else float(val)
                for p, val in zip(self.points, self.values)}

    def __getitem__(self, x):
        return self.evaluate(np.asarray(x, dtype=np.int64).reshape(1, -1))[0]

    def evaluate(self, pts) -> np.ndarray:
        """Values at arbitrary points (zero off the support)."""
        pts = np.asarray(pts, dtype=np.int64)
        out = np.zeros(len(pts), dtype=self.values.dtype if len(self) else float)
        if len(self) == 0 or len(pts) == 0:
            return out
        box = Box.covering(self.points, pts)
        own = box.encode(self.points)
        order = np.argsort(own)
        own = own[order]
        q = box.encode(pts)
        idx = np.searchsorted(own, q)
        idx_c = np.minimum(idx, len(own) - 1)
        hit = own[idx_c] == q
        out[hit] = self.values[order][idx_c[hit]]
        return out

    def _combine(self, other: "GridFunction", sign: float) -> "GridFunction":
        if self.n != other.n and len(self) and len(other):
            raise ValidationError("dimension mismatch")
        pts = np.concatenate([self.points, other.points])
        vals = np.concatenate([self.values, sign * other.values])
        return GridFunction.from_arrays(pts, vals, n=self.n)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __mul__(self, alpha):
        if alpha == 0:
            return GridFunction.zero(self.n)
        return GridFunction(self.points, self.values * alpha)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def shift(self, z) -> "GridFunction":
        """Translation (tau_z f)(x) = f(x - z)."""
        return GridFunction(self.points + np.asarray(z, dtype=np.int64), self.values)

    def allclose(self, other: "GridFunction", atol=1e-12) -> bool:
        diff = self - other
        return len(diff) == 0 or bool(np.max(np.abs(diff.values)) <= atol)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if len(self) else 0.0


def lp_norm(f: GridFunction, p) -> float:
    if p < 1:
        raise ValidationError(f"l^p norm needs p >= 1, got {p}")
    a = np.abs(f.values)
    if len(a) == 0:
        return 0.0
    if np.isinf(p):
        return float(a.max())
    if p == 2:
        return float(np.sqrt(np.sum(a * a)))
    return float(np.sum(a**p) ** (1.0 / p))


def convolve_keys(kernel_points, kernel_weights, f: GridFunction, box: Box):
    """Keys and values of all products kernel(y) f(x) placed at x + y, unreduced."""
    kkeys = box.encode(kernel_points)
    offs = np.array([box.offset(p) for p in f.points], dtype=np.int64)
    keys = (kkeys[None, :] + offs[:, None]).ravel()
    vals = (f.values[:, None] * kernel_weights[None, :]).ravel()
    return keys, vals


def sum_box(kernel_points, f_points) -> Box:
    """Box that contains kernel_points + f_points and the kernel itself."""
    lo = kernel_points.min(axis=0) + np.minimum(f_points.min(axis=0), 0)
    hi = kernel_points.max(axis=0) + np.maximum(f_points.max(axis=0), 0)
    return Box(lo, hi)


def reduce_keys(keys, vals, box: Box) -> GridFunction:
    uk, inv = np.unique(keys, return_inverse=True)
    if np.iscomplexobj(vals):
        summed = np.bincount(inv, vals.real, len(uk)) + 1j * np.bincount(inv, vals.imag, len(uk))
    else:
        summed = np.bincount(inv, vals, len(uk))
    keep = summed != 0
    return GridFunction(box.decode(uk[keep]), summed[keep])


def sparse_convolve(kernel_points, kernel_weights, f: GridFunction) -> GridFunction:
    """(K * f)(x) = sum_y K(y) f(x - y) by direct summation over both supports."""
    kernel_points = np.asarray(kernel_points, dtype=np.int64)
    kernel_weights = np.asarray(kernel_weights)
    if len(f) == 0 or len(kernel_points) == 0:
        return GridFunction.zero(f.n if len(f) else kernel_points.shape[1])
    if kernel_points.shape[1] != f.n:
        raise ValidationError(f"kernel dimension {kernel_points.shape[1]} != function dimension {f.n}")
    box = sum_box(kernel_points, f.points)
    keys, vals = convolve_keys(kernel_points, kernel_weights, f, box)
    return reduce_keys(keys, vals, box)
