"""Integral forms, Birch constants, spatial cutoffs and regular-value sets."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, ValidationError
from .profiles import plateau

INT64_MAX = 2**63 - 1


@dataclass(frozen=True)
class IntegralForm:
    """Homogeneous integer polynomial in ``n`` variables of degree ``d``.

    ``terms`` is a tuple of ``(exponents, coefficient)`` pairs with every
    exponent vector summing to ``d``.
    """

    n: int
    d: int
    terms: tuple
    diagonal_hint: Optional[tuple] = None
    rank_override: Optional[int] = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("form needs at least one variable")
        if self.d < 2:
            raise ValidationError("form degree must exceed 1")
        merged = {}
        for exps, coeff in self.terms:
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.n:
                raise ValidationError(f"exponent vector {exps} has length != n={self.n}")
            if any(e < 0 for e in exps) or sum(exps) != self.d:
                raise ValidationError(f"exponent vector {exps} does not sum to d={self.d}")
            merged[exps] = merged.get(exps, 0) + int(coeff)
        terms = tuple(sorted((e, c) for e, c in merged.items() if c != 0))
        if not terms:
            raise ValidationError("form has no nonzero coefficient")
        object.__setattr__(self, "terms", terms)
        if self.diagonal_hint is not None:
            hint = tuple(int(c) for c in self.diagonal_hint)
            if len(hint) != self.n:
                raise ValidationError("diagonal_hint must have n entries")
            object.__setattr__(self, "diagonal_hint", hint)

    @classmethod
    def diagonal(cls, coeffs: Sequence[int], d: int, name: str = "") -> "IntegralForm":
        n = len(coeffs)
        terms = []
        for i, c in enumerate(coeffs):
            e = [0] * n
            e[i] = d
            terms.append((tuple(e), int(c)))
        return cls(n=n, d=d, terms=tuple(terms), diagonal_hint=tuple(coeffs), name=name)

    @classmethod
    def from_terms(cls, terms, n=None, d=None, rank_override=None, name=""):
        terms = [(tuple(e), int(c)) for e, c in terms]
        if n is None:
            n = len(terms[0][0])
        if d is None:
            d = sum(terms[0][0])
        form = cls(n=n, d=d, terms=tuple(terms), rank_override=rank_override, name=name)
        coeffs = form._pure_power_coeffs()
        if coeffs is not None:
            object.__setattr__(form, "diagonal_hint", coeffs)
        return form

    def _pure_power_coeffs(self):
        coeffs = [0] * self.n
        for exps, c in self.terms:
            nz = [i for i, e in enumerate(exps) if e]
            if len(nz) != 1:
                return None
            coeffs[nz[0]] = c
        return tuple(coeffs)

    @property
    def is_diagonal(self) -> bool:
        return self.diagonal_hint is not None

    @property
    def coeffs(self) -> tuple:
        if self.diagonal_hint is None:
            raise DomainError("form is not diagonal")
        return self.diagonal_hint

    @property
    def positive_definite_diagonal(self) -> bool:
        return self.is_diagonal and self.d % 2 == 0 and all(c > 0 for c in self.coeffs)

    @property
    def is_even(self) -> bool:
        """K(-x) == K(x); true for even degree."""
        return self.d % 2 == 0

    def label(self) -> str:
        if self.name:
            return self.name
        if self.is_diagonal:
            return f"diag{list(self.coeffs)}^{self.d}"
        return f"form(n={self.n},d={self.d},{len(self.terms)} terms)"

    def __call__(self, x):
        return eval_form(self, x)

    def eval_array(self, pts: np.ndarray) -> np.ndarray:
        """Vectorized integer evaluation on an (m, n) int array.

        Raises OverflowError when int64 arithmetic could wrap around.
        """
        pts = np.asarray(pts)
        if pts.ndim != 2 or pts.shape[1] != self.n:
            raise ValidationError(f"expected points of shape (m, {self.n}), got {pts.shape}")
        if pts.size == 0:
            return np.zeros(0, dtype=np.int64)
        bound = int(np.abs(pts).max()) ** self.d * sum(abs(c) for _, c in self.terms)
        if bound > INT64_MAX:
            raise OverflowError(f"form values may reach {bound}, beyond int64")
        pts = pts.astype(np.int64, copy=False)
        out = np.zeros(len(pts), dtype=np.int64)
        for exps, c in self.terms:
            term = np.full(len(pts), c, dtype=np.int64)
            for i, e in enumerate(exps):
                if e:
                    term *= pts[:, i] ** e
            out += term
        return out

    def eval_real(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        out = np.zeros(pts.shape[:-1])
        for exps, c in self.terms:
            term = np.full(pts.shape[:-1], float(c))
            for i, e in enumerate(exps):
                if e:
                    term = term * pts[..., i] ** e
            out = out + term
        return out

    def grad_real(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        g = np.zeros(pts.shape)
        for exps, c in self.terms:
            for k, ek in enumerate(exps):
                if not ek:
                    continue
                term = np.full(pts.shape[:-1], float(c * ek))
                for i, e in enumerate(exps):
                    p = e - 1 if i == k else e
                    if p:
                        term = term * pts[..., i] ** p
                g[..., k] += term
        return g

    def to_config(self) -> dict:
        if self.is_diagonal:
            return {"diagonal": list(self.coeffs), "degree": self.d}
        return {"terms": [[list(e), c] for e, c in self.terms]}


def eval_form(F: IntegralForm, x) -> int:
    """Exact value of F at an integer vector (Python integers never wrap)."""
    x = [int(v) for v in x]
    if len(x) != F.n:
        raise ValidationError(f"point has {len(x)} coordinates, form has n={F.n}")
    total = 0
    for exps, c in F.terms:
        term = c
        for xi, e in zip(x, exps):
            if e:
                term *= xi**e
        total += term
    return total


def sum_of_squares(k: int) -> IntegralForm:
    return IntegralForm.diagonal([1] * k, 2, name=f"sum of {k} squares")


def shipped_variety() -> IntegralForm:
    """x1^2 + x2^2 + x3^2 + x4^2 - x5^2."""
    return IntegralForm.diagonal([1, 1, 1, 1, -1], 2, name="x1^2+x2^2+x3^2+x4^2-x5^2")


def form_from_config(cfg: dict) -> IntegralForm:
    if "diagonal" in cfg:
        return IntegralForm.diagonal(cfg["diagonal"], int(cfg.get("degree", 2)), name=cfg.get("name", ""))
    if "terms" in cfg:
        return IntegralForm.from_terms(cfg["terms"], rank_override=cfg.get("rank"), name=cfg.get("name", ""))
    raise ValidationError("form config needs 'diagonal' (+ 'degree') or 'terms'")


# -- Birch data ---------------------------------------------------------------


@dataclass(frozen=True)
class BirchData:
    rank: int
    c: Fraction
    eta: Fraction


def birch_rank_diagonal(F: IntegralForm) -> int:
    """n minus the number of vanishing diagonal coefficients.

    For sum c_i x_i^d the gradient d*c_i*x_i^(d-1) vanishes exactly on the
    coordinate subspace spanned by the e_i with c_i = 0.
    """
    if F.rank_override is not None:
        return F.rank_override
    if not F.is_diagonal:
        raise DomainError("Birch rank is only computed for diagonal forms; supply rank_override")
    return F.n - sum(1 for c in F.coeffs if c == 0)


def birch_constants(F: IntegralForm) -> BirchData:
    rank = birch_rank_diagonal(F)
    d = F.d
    c = Fraction(rank, (d - 1) * 2 ** (d - 1))
    eta = Fraction(1, 6 * d) * (c / 2 - 1)
    return BirchData(rank=rank, c=c, eta=eta)


# -- cutoff -------------------------------------------------------------------


@dataclass(frozen=True)
class Cutoff:
    """Radial cutoff: 1 on |x| <= r1, 0 on |x| >= r2."""

    r1: float = 1.2
    r2: float = 1.9
    profile: str = "bump"

    def __post_init__(self):
        if not (self.r1 > 0 and self.r2 > self.r1):
            raise ValidationError(f"cutoff needs 0 < r1 < r2, got r1={self.r1}, r2={self.r2}")

    def radial(self, rho):
        return plateau(rho, self.r1, self.r2, self.profile)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.radial(np.sqrt(np.sum(x * x, axis=-1)))


def cutoff_eval(phi: Cutoff, x) -> float:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValidationError("cutoff evaluated at a non-finite point")
    return float(phi(x))


# -- phi-regularity -----------------------------------------------------------


@dataclass(frozen=True)
class RegularityResult:
    regular: bool
    status: str  # "witness", "rank", "exhausted"
    witness: Optional[tuple] = None

    def __bool__(self):
        return self.regular


def _scale_to_unit_level(F, u):
    """Return t*u with F(t*u) = 1, or None when no positive scaling exists."""
    val = float(F.eval_real(u))
    if val == 0:
        return None
    if val < 0:
        if F.d % 2 == 0:
            return None
        u, val = -u, -val
    return u * val ** (-1.0 / F.d)


def phi_regular_check(F: IntegralForm, phi: Cutoff, n_rays: int = 2000, seed: int = 0) -> RegularityResult:
    """Rank condition plus a search for a nonsingular real point of F = 1 in supp(phi).

    The search tries coordinate directions then random rays; failing to find
    a witness is reported as "exhausted", not as a proof of absence.
    """
    if not F.is_diagonal and F.rank_override is None:
        raise DomainError("phi-regularity check needs a diagonal form or a rank override")
    rank = birch_rank_diagonal(F)
    if rank <= (F.d - 1) * 2**F.d:
        return RegularityResult(False, "rank")
    candidates = list(np.eye(F.n))
    rng = np.random.default_rng(seed)
    candidates.extend(rng.standard_normal((n_rays, F.n)))
    for u in candidates:
        x = _scale_to_unit_level(F, np.asarray(u, dtype=float))
        if x is None:
            continue
        if np.linalg.norm(x) >= phi.r2:
            continue
        if np.linalg.norm(F.grad_real(x)) == 0:
            continue
        return RegularityResult(True, "witness", tuple(float(v) for v in x))
    return RegularityResult(False, "exhausted")


# -- regular values -----------------------------------------------------------


@dataclass(frozen=True)
class RegularValueSet:
    """Arithmetic progression {offset + modulus*m : m >= 0}, optionally capped."""

    offset: int = 1
    modulus: int = 1
    cap: Optional[int] = None

    def __post_init__(self):
        if self.offset < 0 or self.modulus < 1:
            raise ValidationError("progression needs offset >= 0 and modulus >= 1")

    def __contains__(self, lam) -> bool:
        lam = int(lam)
        if lam < self.offset or (self.cap is not None and lam > self.cap):
            return False
        return (lam - self.offset) % self.modulus == 0

    def least_at_least(self, x) -> Optional[int]:
        """Least element >= x (x may be a Fraction), or None when capped out."""
        x = math.ceil(x)
        if x <= self.offset:
            val = self.offset
        else:
            val = self.offset + -(-(x - self.offset) // self.modulus) * self.modulus
        if self.cap is not None and val > self.cap:
            return None
        return val


def default_regular_values(F: IntegralForm) -> RegularValueSet:
    """All positive integers for sums of at least five squares."""
    if F.is_diagonal and F.d == 2 and F.n >= 5 and all(c == 1 for c in F.coeffs):
        return RegularValueSet(1, 1)
    raise DomainError("no default regular-value progression for this form; configure one")
