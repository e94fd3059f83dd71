"""Littlewood-Paley style frequency decomposition on Z^n and dyadic martingales.

psi is the Schwartz function whose transform is a tensor plateau (1 on
[-1/3, 1/3], 0 outside [-2/3, 2/3]); psi_{s,J} is its sampled dilate on
(sZ)^n and Psi_{l,j} = psi_{s_j, 2^(l-j)} with s_j = lcm(1..2^j).
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import BudgetError, DomainError, ValidationError
from .forms import Cutoff, IntegralForm, birch_constants
from .grid import Box, GridFunction
from .ops import birch_magyar_kernel
from .profiles import plateau
from .seminorms import jump_values

SMOOTH_LCM_JMAX = 4
PSI_PROFILE = "smooth"
PSI_ENVELOPE_TOL = 1e-9
PSI_QUAD_NODES = 2000
CACHE_ENV = "LACVAR_CACHE_DIR"


# -- scales -------------------------------------------------------------------


def smooth_lcm(j: int, j_max: int = SMOOTH_LCM_JMAX) -> int:
    """s_j = lcm(1, ..., 2^j)."""
    if j < 0:
        raise ValidationError("j must be nonnegative")
    if j > j_max:
        raise BudgetError(f"s_j grows doubly exponentially; j={j} exceeds j_max={j_max}", requested=j, budget=j_max)
    return math.lcm(*range(1, 2**j + 1))


def band_count(l: int) -> int:
    """J_l = floor(log2 l) - 2."""
    if l < 1:
        raise ValidationError("l must be positive")
    return l.bit_length() - 1 - 2


# -- psi ----------------------------------------------------------------------


def psi_hat_1d(t, profile: str = PSI_PROFILE):
    return plateau(np.abs(np.asarray(t, dtype=float)), 1.0 / 3, 2.0 / 3, profile)


def psi_hat_spec(xi, profile: str = PSI_PROFILE):
    """Fourier transform of psi on R^n: product of 1-d plateaus over the last axis."""
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0:
        return psi_hat_1d(xi, profile)
    return np.prod(psi_hat_1d(xi, profile), axis=-1)


@dataclass(frozen=True, eq=False)
class PsiTable:
    """1-d psi via psi(x) = sin(2 pi x / 3) / (pi x) + 2 int_{1/3}^{2/3} h(t) cos(2 pi x t) dt.

    The transition integral uses fixed Gauss-Legendre nodes, which is exact
    to rounding for the |x| range where psi is used.  ``T`` is the radius past
    which the sampled envelope stays below ``tol`` for three dyadic shells.
    """

    profile: str
    nodes: np.ndarray
    weights: np.ndarray
    T: float
    tol: float

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        out = np.empty(flat.shape)
        step = max(1, 4_000_000 // len(self.nodes))
        for s in range(0, len(flat), step):
            xs = flat[s:s + step]
            head = np.where(xs == 0, 2.0 / 3, np.sin(2 * np.pi * xs / 3) / (np.pi * np.where(xs == 0, 1, xs)))
            out[s:s + step] = head + 2 * (np.cos(2 * np.pi * np.outer(xs, self.nodes)) @ self.weights)
        return out.reshape(x.shape)

    def tail_mass(self) -> float:
        """2 * int_T^{8T} |psi| by the trapezoid rule on a 1/16 grid."""
        u = np.arange(self.T, 8 * self.T, 1.0 / 16)
        return float(2 * np.trapezoid(np.abs(self(u)), u))


def _find_radius(evaluate, tol: float, shells: int = 3, start: int = 4, limit: int = 2**14) -> float:
    k = start
    below = 0
    first = None
    while 2**k <= limit:
        u = np.arange(2**k, 2 ** (k + 1), 1.0 / 8)
        if np.max(np.abs(evaluate(u))) < tol:
            first = first if below else 2**k
            below += 1
            if below == shells:
                return float(first)
        else:
            below = 0
        k += 1
    raise BudgetError("psi envelope did not settle below tolerance", requested=2**k, budget=limit)


@lru_cache(maxsize=8)
def psi_table(profile: str = PSI_PROFILE, tol: float = PSI_ENVELOPE_TOL, nodes: int = PSI_QUAD_NODES) -> PsiTable:
    z, w = leggauss(nodes)
    t = (z + 3) / 6  # [-1, 1] -> [1/3, 2/3]
    h = psi_hat_1d(t, profile) * (w / 6)
    probe = PsiTable(profile, t, h, math.inf, tol)
    key = f"{profile}:{tol!r}:{nodes}"
    cached = _radius_cache().get(key)
    T = cached if cached is not None else _find_radius(probe, tol)
    if cached is None:
        _store_radius(key, T)
    return PsiTable(profile, t, h, T, tol)


def _cache_file():
    d = os.environ.get(CACHE_ENV)
    return os.path.join(d, "psi_radius.json") if d else None


def _radius_cache() -> dict:
    path = _cache_file()
    if not path or not os.path.exists(path):
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, ValueError):
        return {}


def _store_radius(key: str, T: float):
    path = _cache_file()
    if not path:
        return
    os.makedirs(os.path.dirname(path), exist_ok=True)
    data = _radius_cache()
    data[key] = T
    tmp = path + f".{os.getpid()}.tmp"
    with open(tmp, "w") as fh:
        json.dump(data, fh, sort_keys=True)
    os.replace(tmp, path)


def psi_eval(x, profile: str = PSI_PROFILE) -> np.ndarray:
    """psi on R^n (tensor product over the last axis); 1-d input for n = 1."""
    tab = psi_table(profile)
    x = np.asarray(x, dtype=float)
    if x.ndim <= 1:
        return tab(x)
    return np.prod(tab(x), axis=-1)


@dataclass(frozen=True, eq=False)
class PsiKernel:
    """psi_{s,J} truncated to |x|_inf <= T J; tensor of the 1-d ``factor``."""

    s: int
    J: int
    n: int
    offsets: np.ndarray
    factor: np.ndarray
    tail_bound: float

    def mass(self) -> float:
        return float(np.sum(self.factor)) ** self.n

    def to_grid(self, max_points: int = 5_000_000) -> GridFunction:
        m = len(self.offsets)
        if m**self.n > max_points:
            raise BudgetError("kernel too large to materialize", requested=m**self.n, budget=max_points)
        axes = np.meshgrid(*([np.arange(m)] * self.n), indexing="ij")
        idx = np.stack([a.ravel() for a in axes], axis=1)
        vals = np.prod(self.factor[idx], axis=1)
        return GridFunction.from_arrays(self.offsets[idx], vals, n=self.n)


def psi_sJ(s: int, J: int, n: int = 1, profile: str = PSI_PROFILE, strict: bool = True) -> PsiKernel:
    """(s/J)^n psi(x/J) on (sZ)^n, else 0."""
    s, J = int(s), int(J)
    if s < 1 or J < 1:
        raise ValidationError("s and J must be positive")
    if strict and J <= s and not (s == 1 and J == 1):
        raise DomainError(f"psi_(s,J) needs J > s, got s={s}, J={J}")
    tab = psi_table(profile)
    kmax = int(math.floor(tab.T * J / s))
    offsets = s * np.arange(-kmax, kmax + 1, dtype=np.int64)
    factor = (s / J) * tab(offsets / J)
    # relative tail per coordinate, times n for the tensor product
    tail = n * tab.tail_mass() / max(abs(float(np.sum(factor))), 1e-300)
    return PsiKernel(s, J, n, offsets, factor, tail)


def psi_hat_torus_1d(s, J, xi, profile: str = PSI_PROFILE) -> np.ndarray:
    """sum_k psi_hat((J/s)(k + s xi)) at each xi."""
    xi = np.asarray(xi, dtype=float)
    u = s * xi
    R = 2.0 * s / (3.0 * J)
    K = int(math.ceil(R)) + 1
    base = np.round(-u)
    ks = np.arange(-K, K + 1)
    arg = (J / s) * (base[..., None] + ks + u[..., None])
    return np.sum(psi_hat_1d(arg, profile), axis=-1)


def psi_hat_torus(s, J, xi, profile: str = PSI_PROFILE):
    """Fourier transform of psi_{s,J} on Z^n by the finite Poisson sum (last axis is n)."""
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0:
        return float(psi_hat_torus_1d(s, J, xi, profile))
    return np.prod(psi_hat_torus_1d(s, J, xi, profile), axis=-1)


def psi_hat_direct(s, J, xi, n: Optional[int] = None, profile: str = PSI_PROFILE) -> np.ndarray:
    """Direct DFT sum_x psi_{s,J}(x) e(-x.xi) over the truncated kernel."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    n = n or xi.shape[1]
    G = psi_sJ(s, J, n, profile, strict=False).to_grid()
    out = np.zeros(len(xi), dtype=complex)
    pts = G.points.astype(float)
    for a in range(0, len(pts), 200_000):
        out += G.values[a:a + 200_000] @ np.exp(-2j * np.pi * (pts[a:a + 200_000] @ xi.T))
    return out


def band_multiplier(l: int, j: int, xi, profile: str = PSI_PROFILE):
    """Fourier transform of Psi_{l,j} = psi_{s_j, 2^(l-j)}."""
    return psi_hat_torus(smooth_lcm(j), 2.0 ** (l - j), xi, profile)


# -- square function audit ----------------------------------------------------


def midpoint_grid(size: int = 256) -> np.ndarray:
    """(k + 1/2) / size: avoids the rationals where the l-sum cannot converge."""
    return (np.arange(size) + 0.5) / size


@dataclass
class SquareFunctionAudit:
    j: int
    L_max: int
    difference: str
    partial: np.ndarray
    extended: np.ndarray
    terms: np.ndarray

    @property
    def bound(self) -> float:
        return float(self.partial.max())

    @property
    def extended_bound(self) -> float:
        return float(self.extended.max())

    @property
    def relative_increase(self) -> float:
        if self.bound == 0:
            return 0.0 if self.extended_bound == 0 else math.inf
        return self.extended_bound / self.bound - 1.0

    def record(self) -> dict:
        return {"j": self.j, "L_max": self.L_max, "difference": self.difference, "bound": self.bound,
                "extended_bound": self.extended_bound, "relative_increase": self.relative_increase}


def square_function_terms(j: int, ls, xi, difference: str = "band", profile: str = PSI_PROFILE) -> np.ndarray:
    """|F(Delta Psi_{l,j})(xi)|^2 for each l (rows) and xi (columns).

    "band": Psi_{l,j+1} - Psi_{l,j}.  "scale": Psi_{l,j} - Psi_{l+1,j}.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 1:
        xi = xi[:, None]
    rows = []
    for l in ls:
        if difference == "band":
            d = band_multiplier(l, j + 1, xi, profile) - band_multiplier(l, j, xi, profile)
        elif difference == "scale":
            d = band_multiplier(l, j, xi, profile) - band_multiplier(l + 1, j, xi, profile)
        else:
            raise ValidationError(f"unknown difference {difference!r}")
        rows.append(np.abs(d) ** 2)
    return np.array(rows)


def square_function_audit(j: int, L_max: int = 24, xi=None, extend: int = 6, difference: str = "band",
                          profile: str = PSI_PROFILE) -> SquareFunctionAudit:
    """max over xi of sum_{l=2^j}^{L_max} |F(Delta Psi_{l,j})(xi)|^2, and the same with L_max + extend."""
    if not 0 <= j <= 3:
        raise BudgetError("square function audit supports 0 <= j <= 3", requested=j, budget=3)
    if L_max < 2**j + 4:
        raise ValidationError(f"L_max must be at least 2^j + 4 = {2**j + 4}")
    xi = midpoint_grid() if xi is None else np.asarray(xi, dtype=float)
    ls = list(range(2**j, L_max + extend + 1))
    terms = square_function_terms(j, ls, xi, difference, profile)
    cut = L_max - 2**j + 1
    return SquareFunctionAudit(j, L_max, difference, terms[:cut].sum(axis=0), terms.sum(axis=0), terms)


# -- torus functions ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TorusFunction:
    """Complex values on Z_N^n, read as an N-periodic function on Z^n."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim < 1 or len(set(v.shape)) != 1:
            raise ValidationError("torus function needs an N x ... x N array")
        N = v.shape[0]
        if N < 1 or N & (N - 1):
            raise ValidationError("torus size must be a power of 2")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.ndim

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @classmethod
    def random(cls, n: int, N: int, seed=0) -> "TorusFunction":
        rng = np.random.default_rng(seed)
        return cls(rng.standard_normal((N,) * n) + 1j * rng.standard_normal((N,) * n))

    def fft(self) -> np.ndarray:
        return np.fft.fftn(self.values)

    @classmethod
    def from_fft(cls, coeffs) -> "TorusFunction":
        return cls(np.fft.ifftn(coeffs))

    def frequencies(self) -> np.ndarray:
        """Frequencies k/N in [0, 1) along one axis."""
        return np.arange(self.N) / self.N

    def multiply(self, mult_1d: Sequence[np.ndarray]) -> "TorusFunction":
        """Apply a tensor-product Fourier multiplier given per axis."""
        c = self.fft()
        for ax, m in enumerate(mult_1d):
            shape = [1] * self.n
            shape[ax] = self.N
            c = c * np.reshape(m, shape)
        return TorusFunction.from_fft(c)

    def shift(self, z) -> "TorusFunction":
        return TorusFunction(np.roll(self.values, tuple(int(v) for v in z), axis=tuple(range(self.n))))

    def __add__(self, other):
        return TorusFunction(self.values + other.values)

    def __sub__(self, other):
        return TorusFunction(self.values - other.values)

    def max_abs_diff(self, other) -> float:
        return float(np.max(np.abs(self.values - other.values)))


def kernel_aliasing(J: float, N: int, profile: str = PSI_PROFILE) -> float:
    """Fraction of the 1-d |psi_{1,J}| mass at |x| >= N/2 (finite-support reading of the torus)."""
    tab = psi_table(profile)
    u = np.arange(0, 8 * tab.T, 1.0 / 64)
    a = np.abs(tab(u))
    total = np.trapezoid(a, u)
    outside = np.trapezoid(np.where(u >= N / (2.0 * J), a, 0.0), u)
    return float(outside / total)


@dataclass
class SpectralSplit:
    l: int
    J_l: int
    f1: TorusFunction
    f2: TorusFunction
    f3: TorusFunction
    pieces: list = field(default_factory=list)

    def total(self) -> TorusFunction:
        return self.f1 + self.f2 + self.f3


def spectral_split(f: TorusFunction, l: int, profile: str = PSI_PROFILE,
                   aliasing_tol: Optional[float] = None) -> SpectralSplit:
    """f1 = f*Psi_{l,0}, f2 = sum_{j<J_l} f*(Psi_{l,j+1} - Psi_{l,j}), f3 = f - f*Psi_{l,J_l}.

    Convolution is periodic, so the split is exact on the torus.  Passing
    ``aliasing_tol`` additionally demands that the kernels fit inside the
    torus, as needed when f stands for a finitely supported function on Z^n.
    """
    if l < 8:
        raise ValidationError("spectral split needs l >= 8 so that J_l >= 1")
    Jl = band_count(l)
    if aliasing_tol is not None:
        alias = kernel_aliasing(2.0**l, f.N, profile)
        if alias > aliasing_tol:
            raise BudgetError(f"kernel aliasing {alias:.3g} exceeds {aliasing_tol}", requested=alias,
                              budget=aliasing_tol)
    freqs = f.frequencies()
    mults = [psi_hat_torus_1d(smooth_lcm(j), 2.0 ** (l - j), freqs, profile) for j in range(Jl + 1)]
    f1 = f.multiply([mults[0]] * f.n)
    pieces = []
    f2 = TorusFunction(np.zeros_like(f.values))
    for j in range(Jl):
        up = f.multiply([mults[j + 1]] * f.n)
        down = f.multiply([mults[j]] * f.n)
        piece = up - down
        pieces.append(piece)
        f2 = f2 + piece
    f3 = f - f.multiply([mults[Jl]] * f.n)
    return SpectralSplit(l, Jl, f1, f2, f3, pieces)


# -- major arcs ---------------------------------------------------------------


def major_arc_membership(xi, j: int, l: int) -> bool:
    """Every coordinate is within 2^(j-l) of a multiple of 1/s_j (exact rational test)."""
    if 2**j > l:
        raise ValidationError("major arcs need 2^j <= l")
    s = smooth_lcm(j)
    width = Fraction(2) ** (j - l)
    for x in np.atleast_1d(np.asarray(xi, dtype=object)).ravel():
        fx = Fraction(x)
        dist = abs(fx * s - round(fx * s)) / s
        if dist > width:
            return False
    return True


def major_arc_mask_1d(N: int, j: int, l: int) -> np.ndarray:
    """Membership of k/N, k in Z_N, in the 1-d arcs, with integer arithmetic."""
    if 2**j > l:
        raise ValidationError("major arcs need 2^j <= l")
    s = smooth_lcm(j)
    k = np.arange(N, dtype=object)
    r = (k * s) % N
    dist = np.minimum(r, N - r)
    # dist / (N s) <= 2^(j-l)
    return np.array([int(v) * 2 ** (l - j) <= N * s for v in dist], dtype=bool)


def spectral_project_minor(f: TorusFunction, j: int, l: int) -> TorusFunction:
    """Zero the Fourier coefficients at frequencies inside the major arcs."""
    m = major_arc_mask_1d(f.N, j, l)
    inside = m
    for _ in range(f.n - 1):
        inside = np.multiply.outer(inside, m)
    c = f.fft()
    c[inside] = 0
    return TorusFunction.from_fft(c)


# -- single average audit -----------------------------------------------------


def _gauss_hat(t, sigma: float) -> np.ndarray:
    """sum_x exp(-x^2 / (2 sigma^2)) e(-x t), by Poisson summation."""
    t = np.asarray(t, dtype=float)
    t = t - np.round(t)
    m = np.arange(-2, 3)
    return math.sqrt(2 * math.pi) * sigma * np.sum(np.exp(-2 * math.pi**2 * sigma**2 * (t[..., None] + m) ** 2), axis=-1)


def _gauss_sq_norm(t, sigma: float) -> np.ndarray:
    """sum_x exp(-x^2 / sigma^2) e(x t)."""
    return _gauss_hat(t, sigma / math.sqrt(2))


def _minor_intervals(j: int, l: int, margin: float):
    """Subintervals of [0, 1) at distance > width + margin from multiples of 1/s_j."""
    s = smooth_lcm(j)
    w = 2.0 ** (j - l) + margin
    out = []
    for b in range(s):
        lo, hi = b / s + w, (b + 1) / s - w
        if hi > lo:
            out.append((lo, hi))
    return out


@dataclass
class AverageBoundAudit:
    j: int
    l: int
    lambdas: list
    ratios: np.ndarray
    stderr: np.ndarray
    leakage: np.ndarray
    control_ratio: float
    reference: float

    @property
    def max_ratio(self) -> float:
        return float(self.ratios.max())

    @property
    def valid(self) -> bool:
        return bool(np.all(self.leakage < 0.01))

    @property
    def constant(self) -> float:
        return self.max_ratio / self.reference

    def record(self) -> dict:
        return {"j": self.j, "l": self.l, "lambdas": list(self.lambdas), "max_ratio": self.max_ratio,
                "max_stderr": float(self.stderr.max()), "max_leakage": float(self.leakage.max()),
                "valid": self.valid, "control_ratio": self.control_ratio, "reference": self.reference,
                "constant": self.constant}


def _packet_audit(K_list, theta, coef, sigma, samples, rng, arcs):
    """MC Plancherel estimate of ||A f||^2 / ||f||^2 and of the major-arc share of ||f||^2.

    f = sum_k coef_k e(x.theta_k) g(x); xi is drawn from the mixture of wrapped
    normals around the theta_k, reweighted by |f_hat|^2 / density.
    """
    P, n = theta.shape
    sd = 1.0 / (2 * math.sqrt(2) * math.pi * sigma)
    p = np.abs(coef) ** 2
    p = p / p.sum()
    comp = rng.choice(P, size=samples, p=p)
    xi = (theta[comp] + sd * rng.standard_normal((samples, n))) % 1.0
    fhat = np.zeros(samples, dtype=complex)
    dens = np.zeros(samples)
    for k in range(P):
        fhat += coef[k] * np.prod(_gauss_hat(xi - theta[k], sigma), axis=1)
        dt = (xi - theta[k] + 0.5) % 1.0 - 0.5
        dens += p[k] * np.prod(np.exp(-dt**2 / (2 * sd**2)) / (math.sqrt(2 * math.pi) * sd), axis=1)
    w = np.abs(fhat) ** 2 / dens
    norm2 = 0.0
    for a in range(P):
        for b in range(P):
            norm2 += (coef[a] * np.conj(coef[b]) * np.prod(_gauss_sq_norm(theta[a] - theta[b], sigma))).real
    inside = np.ones(samples, dtype=bool)
    for c in range(n):
        inside &= arcs(xi[:, c])
    leak = float(np.mean(w * inside) / norm2)
    out = []
    for K in K_list:
        m = np.zeros(samples, dtype=complex)
        pts = K.points.astype(float)
        step = max(1, 2_000_000 // samples)
        for s in range(0, len(pts), step):
            m += K.weights[s:s + step] @ np.exp(-2j * np.pi * (pts[s:s + step] @ xi.T))
        vals = np.abs(m) ** 2 * w / norm2
        est = float(np.mean(vals))
        se = float(np.std(vals) / math.sqrt(samples))
        ratio = math.sqrt(max(est, 0.0))
        out.append((ratio, se / (2 * ratio) if ratio > 0 else math.inf))
    return out, leak


def single_average_bound_audit(F: IntegralForm, phi: Cutoff, j: int, l: int, ensemble: int = 8, packets: int = 3,
                               sigma: Optional[float] = None, samples: int = 1000, lambdas=None,
                               seed: int = 0) -> AverageBoundAudit:
    """Observed ||A_lam f||_2 / ||f||_2 for wave packets whose spectrum avoids the major arcs.

    Report only: the reference max(2^(-j(c-2)), 2^(-l d eta)) carries an
    unknown constant.
    """
    if 2**j > l:
        raise ValidationError("audit needs 2^j <= l")
    d = F.d
    if lambdas is None:
        lo, hi = 2 ** (l * d), 2 ** ((l + 1) * d)
        lambdas = sorted({lo, int(round(math.sqrt(lo * hi))), hi})
    kernels = [birch_magyar_kernel(F, phi, int(lam), "by_count") for lam in lambdas]
    sigma = sigma or 4.0 * 2 ** (l + 1)
    sd = 1.0 / (2 * math.sqrt(2) * math.pi * sigma)
    intervals = _minor_intervals(j, l, 4 * sd)
    if not intervals:
        raise DomainError("no room between the major arcs for packets of this width")
    lengths = np.array([b - a for a, b in intervals])
    s = smooth_lcm(j)
    width = 2.0 ** (j - l)

    def arcs(x):
        r = x * s
        return np.abs(r - np.round(r)) / s <= width

    rng = np.random.default_rng(seed)
    ratios, ses, leaks = [], [], []
    for _ in range(ensemble):
        pick = rng.choice(len(intervals), size=(packets, F.n), p=lengths / lengths.sum())
        lo = np.array([[intervals[i][0] for i in row] for row in pick])
        hi = np.array([[intervals[i][1] for i in row] for row in pick])
        theta = lo + (hi - lo) * rng.random((packets, F.n))
        coef = rng.standard_normal(packets) + 1j * rng.standard_normal(packets)
        res, leak = _packet_audit(kernels, theta, coef, sigma, samples, rng, arcs)
        ratios.append([r for r, _ in res])
        ses.append([e for _, e in res])
        leaks.append(leak)
    ctrl, _ = _packet_audit(kernels, np.zeros((1, F.n)), np.ones(1, dtype=complex), sigma, samples, rng, arcs)
    B = birch_constants(F)
    ref = max(2.0 ** (-j * float(B.c - 2)), 2.0 ** (-l * d * float(B.eta)))
    return AverageBoundAudit(j, l, list(lambdas), np.array(ratios), np.array(ses), np.array(leaks),
                             float(min(r for r, _ in ctrl)), ref)


# -- dyadic martingales -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CubeFunction:
    """Function constant on the dyadic cubes 2^level (t + [0,1)^n); zero off ``cubes``."""

    level: int
    cubes: np.ndarray
    means: np.ndarray

    @property
    def n(self) -> int:
        return self.cubes.shape[1]

    def __len__(self):
        return len(self.cubes)

    def evaluate(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.int64))
        t = pts >> self.level
        lookup = {tuple(c): v for c, v in zip(self.cubes.tolist(), self.means.tolist())}
        return np.array([lookup.get(tuple(r), 0.0) for r in t.tolist()])

    def mass(self) -> float:
        return float(np.sum(self.means)) * 2.0 ** (self.level * self.n)

    def refine(self, level: int) -> "CubeFunction":
        """Same function written on the finer cubes of ``level``."""
        if level > self.level:
            raise ValidationError("refine needs a finer level")
        k = self.level - level
        if k == 0:
            return self
        sub = np.stack(np.meshgrid(*([np.arange(2**k)] * self.n), indexing="ij"), axis=-1).reshape(-1, self.n)
        cubes = ((self.cubes[:, None, :] << k) + sub[None]).reshape(-1, self.n)
        return CubeFunction(level, cubes, np.repeat(self.means, len(sub)))

    def __sub__(self, other: "CubeFunction") -> "CubeFunction":
        lev = min(self.level, other.level)
        a, b = self.refine(lev), other.refine(lev)
        return _cube_combine(lev, np.concatenate([a.cubes, b.cubes]), np.concatenate([a.means, -b.means]))

    def __add__(self, other: "CubeFunction") -> "CubeFunction":
        lev = min(self.level, other.level)
        a, b = self.refine(lev), other.refine(lev)
        return _cube_combine(lev, np.concatenate([a.cubes, b.cubes]), np.concatenate([a.means, b.means]))

    def to_grid(self, max_points: int = 5_000_000) -> GridFunction:
        fine = self.refine(0)
        if len(fine) > max_points:
            raise BudgetError("too many points to materialize", requested=len(fine), budget=max_points)
        return GridFunction.from_arrays(fine.cubes, fine.means, n=self.n)


def _cube_combine(level, cubes, means, keep_zero: bool = True) -> CubeFunction:
    n = cubes.shape[1]
    if len(cubes) == 0:
        return CubeFunction(level, np.zeros((0, n), dtype=np.int64), np.zeros(0))
    box = Box.covering(cubes)
    uk, inv = np.unique(box.encode(cubes), return_inverse=True)
    sums = np.bincount(inv, means, len(uk))
    pts = box.decode(uk)
    if not keep_zero:
        nz = sums != 0
        pts, sums = pts[nz], sums[nz]
    return CubeFunction(level, pts, sums)


def _as_cubes(f) -> CubeFunction:
    if isinstance(f, CubeFunction):
        return f
    if isinstance(f, GridFunction):
        return CubeFunction(0, f.points.astype(np.int64), np.asarray(f.values, dtype=float))
    raise ValidationError("expected a GridFunction or CubeFunction")


def dyadic_average(f, l: int) -> CubeFunction:
    """E_l f: the mean of f over each dyadic cube of side 2^l meeting its support."""
    c = _as_cubes(f)
    if l < c.level:
        raise ValidationError(f"E_{l} of a level-{c.level} function is not defined here")
    k = l - c.level
    if len(c) == 0:
        return CubeFunction(l, c.cubes, c.means)
    scale = 2.0 ** (-k * c.n)
    return _cube_combine(l, c.cubes >> k, c.means * scale)


def dyadic_difference(f, m: int) -> CubeFunction:
    """D_m f = E_m f - E_(m-1) f, written at level m - 1."""
    if m < 1:
        raise ValidationError("D_m needs m >= 1")
    return dyadic_average(f, m) - dyadic_average(f, m - 1)


@dataclass(frozen=True, eq=False)
class MartingaleClasses:
    """Points sharing the same sequence (E_0 f(x), ..., E_L f(x)), with multiplicities."""

    sequences: np.ndarray
    multiplicity: np.ndarray

    @property
    def levels(self) -> int:
        return self.sequences.shape[1]


def martingale_classes(f: GridFunction, L: int) -> MartingaleClasses:
    """Group the points of the level-L cubes meeting supp f by their E-sequence.

    A point whose level-k cube is the finest one meeting supp f has zeros
    below k and the ancestor means from k up.  Points of a level-k cube that
    avoid every child meeting supp f share one sequence.
    """
    n = f.n
    levels = [dyadic_average(f, k) for k in range(L + 1)]
    parent_idx = []
    for k in range(L):
        child, par = levels[k], levels[k + 1]
        lookup = {tuple(c): i for i, c in enumerate(par.cubes.tolist())}
        parent_idx.append(np.array([lookup[tuple(c)] for c in (child.cubes >> 1).tolist()], dtype=np.int64))
    seqs, mult = [], []
    for k in range(L + 1):
        count = len(levels[k])
        if k == 0:
            m = np.ones(count)
        else:
            kids = np.bincount(parent_idx[k - 1], minlength=count)
            m = 2.0 ** (k * n) - kids * 2.0 ** ((k - 1) * n)
        seq = np.zeros((count, L + 1))
        idx = np.arange(count)
        for lev in range(k, L + 1):
            seq[:, lev] = levels[lev].means[idx]
            if lev < L:
                idx = parent_idx[lev][idx]
        keep = m > 0
        seqs.append(seq[keep])
        mult.append(m[keep])
    return MartingaleClasses(np.concatenate(seqs), np.concatenate(mult))


def _default_levels(f: GridFunction, lam_min: float, rel: float = 1e-3) -> int:
    """Smallest L with ||f||_1 2^(-L n) < rel * lam_min, so later means cannot matter."""
    l1 = float(np.sum(np.abs(f.values)))
    L = 0
    while l1 * 2.0 ** (-L * f.n) >= rel * lam_min:
        L += 1
    return max(L, 1)


@dataclass
class MartingaleJumpAudit:
    p: float
    lambdas: list
    ratios: np.ndarray
    levels: list

    @property
    def max_ratio(self) -> float:
        return float(self.ratios.max()) if self.ratios.size else 0.0

    def record(self) -> dict:
        return {"p": self.p, "lambdas": list(self.lambdas), "max_ratio": self.max_ratio,
                "levels": list(self.levels)}


def martingale_jump_norm(f: GridFunction, lam: float, p: float = 2, L: Optional[int] = None) -> float:
    """|| lam J_lam(E f)^(1/2) ||_p over the levels 0..L."""
    L = L if L is not None else _default_levels(f, lam)
    mc = martingale_classes(f, L)
    J = jump_values(mc.sequences, lam).astype(float)
    return float(np.sum(mc.multiplicity * (lam * np.sqrt(J)) ** p) ** (1.0 / p))


def martingale_jump_audit(fs: Sequence[GridFunction], lambdas, p: float = 2, L: Optional[int] = None) -> MartingaleJumpAudit:
    """Ratios || lam J_lam(E f)^(1/2) ||_p / ||f||_p for every f (rows) and lambda (columns)."""
    if not 1 < p < math.inf:
        raise ValidationError("martingale jump audit needs 1 < p < inf")
    lambdas = [float(v) for v in lambdas]
    rows, levels = [], []
    for f in fs:
        fp = float(np.sum(np.abs(f.values) ** p) ** (1.0 / p))
        if fp == 0:
            rows.append([0.0] * len(lambdas))
            levels.append(0)
            continue
        Lf = L if L is not None else _default_levels(f, min(lambdas))
        mc = martingale_classes(f, Lf)
        row = []
        for lam in lambdas:
            J = jump_values(mc.sequences, lam).astype(float)
            row.append(float(np.sum(mc.multiplicity * (lam * np.sqrt(J)) ** p) ** (1.0 / p)) / fp)
        rows.append(row)
        levels.append(Lf)
    return MartingaleJumpAudit(p, lambdas, np.array(rows), levels)


# -- kernel mass --------------------------------------------------------------


@dataclass
class KernelMass:
    l: int
    value: float
    psi_mass_1d: float
    kernel_mass: float
    tail_bound: float


def smoothed_kernel_mass(F: IntegralForm, phi: Cutoff, l: int, normalization: str = "by_count",
                         psi_scale: float = 1.0, profile: str = PSI_PROFILE) -> KernelMass:
    """sum_x (Psi_{l,0} * w_{2^l})(x).

    The mass of a convolution of summable kernels is the product of the
    masses, and Psi_{l,0} is a tensor product, so this is
    (1-d psi_{1,2^l} mass)^n times the mass of the averaging kernel.
    ``psi_scale`` rescales psi (a kernel of integral 2 gives 2).
    """
    K = birch_magyar_kernel(F, phi, 2**l, normalization)
    P = psi_sJ(1, 2**l, F.n, profile)
    m1 = float(np.sum(P.factor))
    km = K.mass()
    return KernelMass(l, psi_scale * m1**F.n * km, m1, km, P.tail_bound)
