"""Circle-method pieces: Weyl sums, surface-measure transforms, multiplier main terms."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import special

from .errors import BudgetError, DomainError, ValidationError
from .forms import Cutoff, IntegralForm, birch_constants
from .lattice import _cutoff_is_one_on_shell, decay_fit, enumerate_variety_zero, iroot
from .ops import birch_magyar_kernel
from .profiles import plateau

DIRECT_WEYL_BUDGET = 2_000_000


def e(t):
    return np.exp(2j * np.pi * np.asarray(t, dtype=float))


def units(q: int) -> list:
    """U_q; by convention U_1 = {0}."""
    if q < 1:
        raise ValidationError("modulus must be positive")
    if q == 1:
        return [0]
    return [a for a in range(1, q) if math.gcd(a, q) == 1]


# -- Weyl sums ----------------------------------------------------------------


@lru_cache(maxsize=512)
def _weyl_1d(c: int, d: int, q: int) -> np.ndarray:
    """M[a, b] = (1/q) sum_m e((a c m^d + b m) / q) for all a, b in Z_q."""
    m = np.arange(q)
    md = np.array([pow(int(x), d, q) for x in m], dtype=np.int64)
    a = np.arange(q)[:, None]
    phase = (a * (c % q) * md[None, :]) % q
    # inverse DFT over m gives the linear twist e(bm/q) with the 1/q factor
    out = np.fft.ifft(e(phase / q), axis=1)
    out.setflags(write=False)
    return out


def weyl_sum_direct(F: IntegralForm, q: int, a: int, b) -> complex:
    """q^-n sum over m in Z_q^n of e((F(m) a + m.b) / q), by full enumeration."""
    q, a = int(q), int(a)
    b = np.asarray(b, dtype=np.int64).reshape(F.n)
    if q**F.n > DIRECT_WEYL_BUDGET:
        raise BudgetError(f"direct Weyl sum needs {q ** F.n} terms", requested=q**F.n, budget=DIRECT_WEYL_BUDGET)
    grids = np.meshgrid(*[np.arange(q, dtype=np.int64)] * F.n, indexing="ij")
    m = np.stack([g.ravel() for g in grids], axis=1)
    val = np.zeros(len(m), dtype=np.int64)
    for exps, c in F.terms:
        t = np.full(len(m), c % q, dtype=np.int64)
        for i, ex in enumerate(exps):
            for _ in range(ex):
                t = (t * m[:, i]) % q
        val = (val + t) % q
    phase = (val * a + m @ b) % q
    return complex(np.mean(e(phase / q)))


def weyl_sum(F: IntegralForm, q: int, a: int, b, method: str = "auto") -> complex:
    """Normalized Weyl sum F_q(a, b); factored into 1-d sums for diagonal forms."""
    q, a = int(q), int(a)
    if q < 1:
        raise ValidationError("modulus must be positive")
    if q > 1 and math.gcd(a, q) != 1:
        raise ValidationError(f"a={a} is not a unit mod {q}")
    b = np.asarray(b, dtype=np.int64).reshape(F.n) % q
    if method == "direct" or (method == "auto" and not F.is_diagonal):
        return weyl_sum_direct(F, q, a, b)
    if not F.is_diagonal:
        raise DomainError("factored Weyl sums need a diagonal form")
    val = 1.0 + 0j
    for c, bi in zip(F.coeffs, b):
        val *= _weyl_1d(int(c), F.d, q)[a % q, bi]
    return complex(val)


@dataclass(frozen=True)
class WeylAuditRow:
    q: int
    max_abs: float
    normalized: float
    flagged: bool


def weyl_bound_audit(F: IntegralForm, q_max: int, flag_constant: float = 10.0, qs=None) -> list:
    """max over a in U_q, b in Z_q^n of |F_q(a,b)| q^c, for each q.

    The max over b of a product of independent factors is the product of
    the per-coordinate maxima, so no b enumeration is needed.
    """
    if not F.is_diagonal:
        raise DomainError("bound audit uses factored sums; needs a diagonal form")
    c = float(birch_constants(F).c)
    rows = []
    for q in qs if qs is not None else range(1, q_max + 1):
        best = 0.0
        for a in units(q):
            prod = 1.0
            for ci in F.coeffs:
                prod *= float(np.max(np.abs(_weyl_1d(int(ci), F.d, q)[a % q])))
            best = max(best, prod)
        norm = best * q**c
        rows.append(WeylAuditRow(q, best, norm, norm > flag_constant))
    return rows


# -- surface measures ---------------------------------------------------------


def sphere_ft_analytic(n: int, rho):
    """Fourier transform of surface measure on S^{n-1} at |xi| = rho."""
    if n < 2:
        raise ValidationError("sphere transform needs n >= 2")
    rho = np.asarray(rho, dtype=float)
    nu = (n - 2) / 2
    area = 2 * np.pi ** (n / 2) / special.gamma(n / 2)
    safe = np.where(rho > 0, rho, 1.0)
    val = 2 * np.pi * safe**(-nu) * special.jv(nu, 2 * np.pi * safe)
    return np.where(rho > 0, val, area)


def ellipsoid_sigma_ft(F: IntegralForm, xi):
    """Transform of phi dmu/|grad F| on {F = 1} for positive diagonal quadratics with phi = 1 there."""
    if not (F.positive_definite_diagonal and F.d == 2):
        raise DomainError("analytic surface transform needs a positive-definite diagonal quadratic")
    c = np.asarray(F.coeffs, dtype=float)
    xi = np.asarray(xi, dtype=float)
    rho = np.sqrt(np.sum(xi * xi / c, axis=-1))
    return 0.5 / math.sqrt(float(np.prod(c))) * sphere_ft_analytic(F.n, rho)


@dataclass(frozen=True)
class FTEstimate:
    value: complex
    se_re: float
    se_im: float

    @property
    def se(self) -> float:
        return math.hypot(self.se_re, self.se_im)


class SurfaceMeasure:
    """Co-area slab estimator of the transform of w dmu/|grad F| on {F = level}.

    Monte Carlo over a box; ``weight`` defaults to the cutoff ``phi``.
    The slab is (1/2 eps) 1{|F(y) - level| < eps}.
    """

    BLOCK = 100_000

    def __init__(self, form: IntegralForm, cutoff: Optional[Cutoff] = None, eps: float = 0.01,
                 samples: int = 1_000_000, seed: int = 0, level: float = 1.0,
                 weight: Optional[Callable] = None, box=None):
        if eps <= 0:
            raise ValidationError("slab width must be positive")
        if samples < 10_000:
            raise ValidationError("surface estimator needs at least 1e4 samples")
        self.form = form
        self.cutoff = cutoff or Cutoff()
        self.eps = float(eps)
        self.samples = int(samples)
        self.seed = int(seed)
        self.level = float(level)
        self.weight = weight or self.cutoff
        self.lo, self.hi = self._box() if box is None else (np.asarray(box[0], float), np.asarray(box[1], float))
        self._cache = None

    def _box(self):
        r2 = self.cutoff.r2
        n = self.form.n
        half = np.full(n, r2)
        if self.form.positive_definite_diagonal:
            c = np.asarray(self.form.coeffs, dtype=float)
            half = np.minimum(half, ((self.level + self.eps) / c) ** (1.0 / self.form.d))
        return -half, half

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def _accepted(self):
        if self._cache is None:
            pts, wts = [], []
            n = self.form.n
            done = 0
            block = 0
            while done < self.samples:
                m = min(self.BLOCK, self.samples - done)
                rng = np.random.default_rng([self.seed, block])
                y = self.lo + (self.hi - self.lo) * rng.random((m, n))
                inside = np.abs(self.form.eval_real(y) - self.level) < self.eps
                y = y[inside]
                w = np.asarray(self.weight(y), dtype=float)
                keep = w != 0
                pts.append(y[keep])
                wts.append(w[keep])
                done += m
                block += 1
            self._cache = (np.concatenate(pts), np.concatenate(wts))
        return self._cache

    @property
    def hits(self) -> int:
        return len(self._accepted()[0])

    def estimate(self, xis) -> list:
        xis = np.atleast_2d(np.asarray(xis, dtype=float))
        y, w = self._accepted()
        if len(y) == 0:
            raise DomainError("slab estimator accepted no samples; the slab misses the weight support")
        scale = self.volume / (2 * self.eps)
        N = self.samples
        out = []
        for xi in xis:
            z = w * e(-(y @ xi))
            mean = z.sum() / N
            var_re = (np.sum(z.real**2) / N - mean.real**2) * N / (N - 1)
            var_im = (np.sum(z.imag**2) / N - mean.imag**2) * N / (N - 1)
            out.append(FTEstimate(complex(scale * mean), scale * math.sqrt(max(var_re, 0) / N),
                                  scale * math.sqrt(max(var_im, 0) / N)))
        return out

    def __call__(self, xi) -> FTEstimate:
        return self.estimate(np.asarray(xi, dtype=float).reshape(1, -1))[0]

    def halving_check(self, xi, k: float = 3.0) -> dict:
        """Compare the estimate at eps and eps/2 (independent seeds) within k combined errors."""
        a = self(xi)
        half = SurfaceMeasure(self.form, self.cutoff, self.eps / 2, self.samples, self.seed + 1, self.level,
                              self.weight, (self.lo, self.hi))
        b = half(xi)
        diff = abs(a.value - b.value)
        tol = k * math.hypot(a.se, b.se)
        return {"eps": self.eps, "value": a.value, "value_half": b.value, "diff": diff, "tol": tol,
                "converged": diff <= tol}


def surface_measure_ft(SM: SurfaceMeasure, xi) -> FTEstimate:
    return SM(xi)


def sigma_hat(F: IntegralForm, phi: Cutoff, method: str = "auto", **mc) -> Callable:
    """Return xi -> complex transform of dsigma_F; analytic when available."""
    analytic = F.positive_definite_diagonal and F.d == 2 and _cutoff_is_one_on_shell(F, phi)
    if method == "analytic" or (method == "auto" and analytic):
        if not analytic:
            raise DomainError("analytic transform unavailable for this form/cutoff")
        return lambda xi: complex(ellipsoid_sigma_ft(F, xi))
    SM = SurfaceMeasure(F, phi, **mc)
    return lambda xi: SM(xi).value


def sigma_decay_audit(ft: Callable, n: int, rhos, c: float, split: float = 10.0, seed: int = 0) -> dict:
    """Running max of |ft(xi)| (1+|xi|)^(c-1) over random directions, up to split and beyond."""
    rng = np.random.default_rng(seed)
    rhos = np.asarray(rhos, dtype=float)
    prods = []
    for rho in rhos:
        u = rng.standard_normal(n)
        u /= np.linalg.norm(u)
        prods.append(abs(ft(rho * u)) * (1 + rho) ** (c - 1))
    prods = np.asarray(prods)
    c_lo = float(prods[rhos <= split].max())
    c_all = float(prods.max())
    return {"rhos": rhos.tolist(), "products": prods.tolist(), "C_split": c_lo, "C_all": c_all,
            "growth": c_all / c_lo}


# -- frequency cutoff and multipliers ----------------------------------------


def zeta_cutoff(q, xi, profile: str = "bump"):
    """zeta_hat(q xi): 1 on |q xi| <= 1/2, 0 on |q xi| >= 1."""
    xi = np.asarray(xi, dtype=float)
    r = q * np.sqrt(np.sum(xi * xi, axis=-1)) if xi.ndim else q * abs(float(xi))
    return plateau(r, 0.5, 1.0, profile)


def default_qmax(lam: int, d: int) -> int:
    return max(1, math.ceil(lam ** (1.0 / (2 * d)) - 1e-12))


def root_qmax(lam: int, d: int) -> int:
    """floor(lam^(1/d)): keeps the neglected tail shrinking as lambda grows."""
    return max(1, iroot(int(lam), d))


def multiplier_exact(F: IntegralForm, phi: Cutoff, lam: int, xis, chunk: int = 2_000_000) -> np.ndarray:
    """sum over F(y)=lam of lam^-(n/d-1) phi(y/lam^(1/d)) e(-y.xi), for each row of xis."""
    K = birch_magyar_kernel(F, phi, int(lam), "by_power")
    return _kernel_ft(K.points, K.weights, xis, chunk)


def _kernel_ft(points, weights, xis, chunk=2_000_000):
    xis = np.atleast_2d(np.asarray(xis, dtype=float))
    out = np.zeros(len(xis), dtype=complex)
    step = max(1, chunk // max(1, len(xis)))
    pts = points.astype(float)
    for s in range(0, len(points), step):
        ph = pts[s:s + step] @ xis.T
        out += weights[s:s + step] @ np.exp(-2j * np.pi * ph)
    return out


def _near_b(qxi: np.ndarray):
    """Integer vectors b with |q xi - b| < 1."""
    lo = np.floor(qxi).astype(np.int64)
    cands = np.array(np.meshgrid(*[[0, 1]] * len(qxi), indexing="ij")).reshape(len(qxi), -1).T + lo
    dist = np.sqrt(np.sum((qxi - cands) ** 2, axis=1))
    return cands[dist < 1]


def _weyl_sum_over_a(F: IntegralForm, q: int, b, phase_target: int) -> complex:
    """sum over a in U_q of e(-target a / q) F_q(a, -b)."""
    tot = 0j
    for a in units(q):
        tot += e(-phase_target * a / q) * weyl_sum(F, q, a, -np.asarray(b))
    return complex(tot)


@dataclass
class MainTerm:
    value: complex
    per_q: dict = field(default_factory=dict)


def multiplier_main_term(F: IntegralForm, phi: Cutoff, lam: int, xi, Q_max: Optional[int] = None,
                         sigma: Optional[Callable] = None, zeta_profile: str = "bump",
                         nearest_only: bool = False, dilation: Optional[float] = None,
                         target: Optional[int] = None) -> MainTerm:
    """Truncated circle-method main term for the by_power multiplier at xi.

    Sums q <= Q_max, a in U_q and every lift b in Z^n with zeta_hat(q xi - b) != 0.
    The Weyl sum is taken at -b, which equals F_q(a, b) for even forms.
    """
    xi = np.asarray(xi, dtype=float).reshape(F.n)
    lam = int(lam)
    Q_max = Q_max or default_qmax(lam, F.d)
    sigma = sigma or sigma_hat(F, phi)
    scale = dilation if dilation is not None else lam ** (1.0 / F.d)
    target = lam if target is None else target
    total = 0j
    per_q = {}
    for q in range(1, Q_max + 1):
        qxi = q * xi
        bs = _near_b(qxi)
        if nearest_only and len(bs):
            bs = bs[np.argmin(np.sum((qxi - bs) ** 2, axis=1))][None, :]
        contrib = 0j
        for b in bs:
            z = float(zeta_cutoff(1, qxi - b, zeta_profile))
            if z == 0:
                continue
            w = _weyl_sum_over_a(F, q, b % q, target % q)
            if w == 0:
                continue
            contrib += w * z * sigma(scale * (xi - b / q))
        per_q[q] = contrib
        total += contrib
    return MainTerm(complex(total), per_q)


@dataclass(frozen=True)
class MultiplierComparison:
    lam: int
    xi: tuple
    exact: complex
    main_term: complex
    q_max: int

    @property
    def abs_error(self) -> float:
        return abs(self.exact - self.main_term)

    def record(self) -> dict:
        return {"lambda": self.lam, "xi": list(self.xi), "exact_re": self.exact.real, "exact_im": self.exact.imag,
                "main_re": self.main_term.real, "main_im": self.main_term.imag, "abs_error": self.abs_error,
                "q_max": self.q_max}


def default_xi_samples(n: int, count: int = 100, seed: int = 0, rational_fraction: float = 0.2,
                       max_denominator: int = 3) -> np.ndarray:
    """Random points of [-1/2, 1/2)^n plus rationals with small denominators."""
    rng = np.random.default_rng([seed, 7])
    k = int(round(count * rational_fraction))
    rat = []
    for _ in range(k):
        q = int(rng.integers(1, max_denominator + 1))
        rat.append(rng.integers(0, q, n) / q)
    rand = rng.random((count - k, n)) - 0.5
    return np.vstack([np.array(rat).reshape(-1, n), rand])


@dataclass
class ErrorScan:
    lambdas: list
    sup_errors: list
    comparisons: list
    slope: float
    eta_reference: float
    q_max: dict

    @property
    def strictly_decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.sup_errors, self.sup_errors[1:]))


def multiplier_error_scan(F: IntegralForm, phi: Cutoff, lam_list, xis, qmax_rule: Optional[Callable] = None,
                          sigma: Optional[Callable] = None, zeta_profile: str = "bump") -> ErrorScan:
    lam_list = [int(l) for l in lam_list]
    if len(lam_list) < 4:
        raise ValidationError("error scan needs at least 4 lambdas")
    xis = np.atleast_2d(np.asarray(xis, dtype=float))
    qmax_rule = qmax_rule or (lambda lam: default_qmax(lam, F.d))
    sigma = sigma or sigma_hat(F, phi)
    sups, comps, qs = [], [], {}
    for lam in lam_list:
        Q = qmax_rule(lam)
        qs[lam] = Q
        exact = multiplier_exact(F, phi, lam, xis)
        worst = 0.0
        for xi, ex in zip(xis, exact):
            mt = multiplier_main_term(F, phi, lam, xi, Q, sigma, zeta_profile).value
            cmp = MultiplierComparison(lam, tuple(float(v) for v in xi), complex(ex), mt, Q)
            comps.append(cmp)
            worst = max(worst, cmp.abs_error)
        sups.append(worst)
    fit = decay_fit(lam_list, sups)
    eta = float(birch_constants(F).eta)
    return ErrorScan(lam_list, sups, comps, fit.slope, -eta, qs)


# -- variety analogue ---------------------------------------------------------


def box_indicator(y):
    y = np.asarray(y, dtype=float)
    return np.all((y >= 0) & (y <= 1), axis=-1).astype(float)


def tau_measure(P: IntegralForm, eps: float = 0.01, samples: int = 1_000_000, seed: int = 0) -> SurfaceMeasure:
    """Slab estimator for 1_{[0,1]^n} dnu/|grad P| on {P = 0}."""
    return SurfaceMeasure(P, Cutoff(), eps, samples, seed, level=0.0, weight=box_indicator,
                          box=(np.zeros(P.n), np.ones(P.n)))


def cone_tau_mass() -> float:
    """Mass of dtau for x1^2+x2^2+x3^2+x4^2 = x5^2 in [0,1]^5: (1/16)(1/2)|S^3|/3."""
    return math.pi**2 / 48


def variety_multiplier_exact(P: IntegralForm, lam: int, xis, normalization: str = "by_power") -> np.ndarray:
    pts = enumerate_variety_zero(P, lam)
    norm = float(lam) ** (P.n - P.d) if normalization == "by_power" else float(len(pts))
    return _kernel_ft(pts, np.full(len(pts), 1.0 / norm), xis)


def variety_multiplier_main_term(P: IntegralForm, lam: int, xi, Q_max: Optional[int] = None,
                                 tau: Optional[Callable] = None, zeta_profile: str = "bump") -> MainTerm:
    """Same structure with the variety measure, dilation lam and no e_q(-lam a) phase."""
    if tau is None:
        TM = tau_measure(P)
        tau = lambda x: TM(x).value  # noqa: E731
    return multiplier_main_term(P, Cutoff(), lam, xi, Q_max, tau, zeta_profile, dilation=float(lam), target=0)


def fitted_slope(xs, ys) -> float:
    return decay_fit(xs, ys).slope
