"""Norm-ratio experiments for lacunary families, the jump/variation bridge and the shift-system demo."""
from __future__ import annotations

import copy
import hashlib
import json
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, ValidationError
from .forms import Cutoff, IntegralForm, birch_constants, form_from_config
from .grid import GridFunction, lp_norm
from .ops import (FamilyField, apply_family, birch_magyar_kernel, lacunary_sequence, variety_kernel)
from .seminorms import jump_values, variation_exact, variation_values

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

ENSEMBLE_KINDS = ("delta", "random_sparse", "rademacher_box", "wave_packet")
FAMILIES = ("birch_magyar", "variety")

DEFAULT_CONFIG = {
    "name": "variation",
    "family": "birch_magyar",
    "seed": 0,
    "r": 3.0,
    "p": 2.0,
    "normalization": "by_count",
    "jump_grid": 16,
    "threads": 1,
    "form": {"diagonal": [1, 1, 1, 1, 1], "degree": 2},
    "cutoff": {"r1": 1.2, "r2": 1.9, "profile": "bump"},
    "lacunary": {"c": 2, "start": 2, "count": 4},
    "ensemble": {"kind": "random_sparse", "support": 4, "members": 200, "radius": 8},
}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def sha256_hex(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict

    def __post_init__(self):
        d = self.data
        if d["family"] not in FAMILIES:
            raise ValidationError(f"family must be one of {FAMILIES}")
        if d["ensemble"]["kind"] not in ENSEMBLE_KINDS:
            raise ValidationError(f"ensemble kind must be one of {ENSEMBLE_KINDS}")
        if not d["r"] >= 1 or not d["p"] >= 1:
            raise ValidationError("r and p must be at least 1")
        if int(d["ensemble"]["members"]) < 1:
            raise ValidationError("ensemble needs at least one member")

    @classmethod
    def from_dict(cls, over: Optional[dict] = None, **kw) -> "ExperimentConfig":
        data = _merge(DEFAULT_CONFIG, over or {})
        return cls(_merge(data, kw))

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))

    def replace(self, **kw) -> "ExperimentConfig":
        return ExperimentConfig(_merge(self.data, kw))

    def __getitem__(self, key):
        return self.data[key]

    @property
    def form(self) -> IntegralForm:
        return form_from_config(self.data["form"])

    @property
    def cutoff(self) -> Cutoff:
        return Cutoff(**self.data["cutoff"])

    @property
    def lambdas(self) -> tuple:
        lac = self.data["lacunary"]
        if "values" in lac:
            return tuple(int(v) for v in lac["values"])
        return lacunary_sequence(lac["c"], int(lac["start"]), int(lac["count"])).values

    @property
    def hypothesis_flag(self) -> bool:
        """True when r > max(p, p') fails."""
        p = float(self.data["p"])
        pc = math.inf if p == 1 else p / (p - 1)
        return not float(self.data["r"]) > max(p, pc)

    def hash(self) -> str:
        return sha256_hex(self.data)


def _stream(seed: int, task: str, index: int) -> np.random.Generator:
    """Counter-based stream per (seed, task name, member index)."""
    return np.random.default_rng([int(seed), zlib.crc32(task.encode()), int(index)])


def ensemble_member(cfg: ExperimentConfig, index: int) -> GridFunction:
    ens = cfg["ensemble"]
    n = cfg.form.n
    kind = ens["kind"]
    rng = _stream(cfg["seed"], "ensemble", index)
    if kind == "delta":
        return GridFunction.delta(n)
    support = int(ens["support"])
    R = int(ens.get("radius", 8))
    if kind == "random_sparse":
        pts = rng.integers(-R, R + 1, size=(support, n))
        return GridFunction.from_arrays(pts, rng.standard_normal(support), n=n)
    side = max(1, int(round(support ** (1.0 / n))))
    axes = np.meshgrid(*([np.arange(side)] * n), indexing="ij")
    pts = np.stack([a.ravel() for a in axes], axis=1)
    if kind == "rademacher_box":
        return GridFunction.from_arrays(pts, rng.choice([-1.0, 1.0], size=len(pts)), n=n)
    theta = rng.random(n)
    c = pts - (side - 1) / 2.0
    vals = np.exp(-np.sum(c * c, axis=1) / (2 * max(side / 4.0, 0.5) ** 2)) * np.exp(2j * np.pi * pts @ theta)
    return GridFunction.from_arrays(pts, vals, n=n)


def _kernels(cfg: ExperimentConfig, lambdas) -> list:
    if cfg["family"] == "variety":
        return [variety_kernel(cfg.form, int(l), cfg["normalization"]) for l in lambdas]
    return [birch_magyar_kernel(cfg.form, cfg.cutoff, int(l), cfg["normalization"]) for l in lambdas]


def _row_diameter(mat: np.ndarray) -> np.ndarray:
    out = np.zeros(len(mat))
    for i in range(mat.shape[1]):
        out = np.maximum(out, np.max(np.abs(mat[:, i:] - mat[:, i:i + 1]), axis=1))
    return out


def jump_sup(fam: FamilyField, p: float, grid_size: int = 16, widen: int = 3) -> tuple:
    """sup over a geometric lambda grid of || lam J_lam^(1/2) ||_p.

    The grid is M 2^(-i/2), i = 1..grid_size, with M the largest diameter of
    any pointwise sequence (no jumps above M).  It is widened downward while
    the maximizer sits at the small end.  Returns (sup, lam*, interior).
    """
    if len(fam.points) == 0:
        return 0.0, math.nan, True
    M = float(_row_diameter(fam.values).max())
    if M == 0:
        return 0.0, math.nan, True
    count = grid_size
    for _ in range(widen + 1):
        lams = M * 2.0 ** (-np.arange(1, count + 1) / 2.0)
        vals = []
        for lam in lams:
            J = jump_values(fam.values, lam).astype(float)
            vals.append(float(np.sum((lam * np.sqrt(J)) ** p) ** (1.0 / p)))
        k = int(np.argmax(vals))
        if k < count - 1:
            break
        count *= 2
    return vals[k], float(lams[k]), 0 < k < count - 1


@dataclass
class MemberResult:
    index: int
    f_norm: float
    variation: float
    jump: float
    jump_lambda: float
    jump_interior: bool

    @property
    def variation_ratio(self) -> float:
        return self.variation / self.f_norm

    @property
    def jump_ratio(self) -> float:
        return self.jump / self.f_norm


def _member(cfg: ExperimentConfig, kernels, index: int) -> MemberResult:
    f = ensemble_member(cfg, index)
    fam = apply_family(kernels, f)
    p, r = float(cfg["p"]), float(cfg["r"])
    V = variation_values(fam.values, r)
    vnorm = float(np.sum(V**p) ** (1.0 / p))
    js, jl, inner = jump_sup(fam, p, int(cfg["jump_grid"]))
    return MemberResult(index, lp_norm(f, p), vnorm, js, jl, inner)


def _stats(x: np.ndarray) -> dict:
    return {"max": float(np.max(x)), "median": float(np.median(x)), "q10": float(np.quantile(x, 0.1)),
            "q90": float(np.quantile(x, 0.9)), "argmax": int(np.argmax(x))}


@dataclass
class Report:
    name: str
    config: dict
    metrics: dict
    references: dict
    per_member: dict = field(default_factory=dict)
    passed: Optional[bool] = None

    @property
    def config_hash(self) -> str:
        return sha256_hex(self.config)

    def to_dict(self) -> dict:
        body = {"name": self.name, "config": self.config, "config_hash": self.config_hash, "metrics": self.metrics,
                "references": self.references, "per_member": self.per_member, "pass": self.passed}
        body["content_id"] = sha256_hex(body)
        return body

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


def _references(cfg: ExperimentConfig) -> dict:
    try:
        B = birch_constants(cfg.form)
        return {"c": float(B.c), "eta": float(B.eta), "rank": B.rank}
    except ValidationError:
        return {}


def norm_ratio_experiment(cfg: ExperimentConfig, lambdas=None) -> Report:
    """V_r and jump ratios ||.||_p / ||f||_p for every ensemble member."""
    lambdas = tuple(lambdas) if lambdas is not None else cfg.lambdas
    kernels = _kernels(cfg, lambdas)
    members = int(cfg["ensemble"]["members"])
    work = lambda i: _member(cfg, kernels, i)  # noqa: E731
    threads = int(cfg.data.get("threads", 1))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            res = list(pool.map(work, range(members)))
    else:
        res = [work(i) for i in range(members)]
    vr = np.array([m.variation_ratio for m in res])
    jr = np.array([m.jump_ratio for m in res])
    metrics = {
        "lambdas": list(lambdas),
        "variation_ratio": _stats(vr),
        "jump_ratio": _stats(jr),
        "jump_interior_fraction": float(np.mean([m.jump_interior for m in res])),
        "hypothesis_flag": cfg.hypothesis_flag,
    }
    per = {"variation_ratio": vr.tolist(), "jump_ratio": jr.tolist(),
           "jump_lambda": [m.jump_lambda for m in res]}
    return Report(cfg["name"], cfg.data, metrics, _references(cfg), per)


def variation_norm_experiment(cfg: ExperimentConfig) -> Report:
    return norm_ratio_experiment(cfg)


def jump_norm_experiment(cfg: ExperimentConfig) -> Report:
    return norm_ratio_experiment(cfg)


def variety_experiment(cfg: ExperimentConfig) -> Report:
    if cfg["family"] != "variety":
        cfg = cfg.replace(family="variety")
    return norm_ratio_experiment(cfg)


def delta_closed_form(cfg: ExperimentConfig, lambdas=None) -> float:
    """||V_r(A delta_0)||_p when the kernels have disjoint supports.

    Each point then sees one nonzero entry w: V_r = |w| at the ends of the
    sequence and 2^(1/r)|w| inside.
    """
    lambdas = tuple(lambdas) if lambdas is not None else cfg.lambdas
    kernels = _kernels(cfg, lambdas)
    p, r = float(cfg["p"]), float(cfg["r"])
    L = len(kernels)
    tot = 0.0
    for i, K in enumerate(kernels):
        scale = 1.0 if (i == 0 or i == L - 1) else 2.0 ** (1.0 / r)
        tot += scale**p * float(np.sum(np.abs(K.weights) ** p))
    return tot ** (1.0 / p)


# -- stability ----------------------------------------------------------------


@dataclass
class StabilityReport:
    base: Report
    longer: Report
    larger: Report

    def changes(self, metric: str) -> dict:
        b = self.base.metrics[metric]["max"]
        return {"length": abs(self.longer.metrics[metric]["max"] / b - 1.0),
                "ensemble": abs(self.larger.metrics[metric]["max"] / b - 1.0)}

    def passed(self, tol: float = 0.25) -> bool:
        return all(v < tol for m in ("variation_ratio", "jump_ratio") for v in self.changes(m).values())

    def record(self) -> dict:
        return {m: self.changes(m) for m in ("variation_ratio", "jump_ratio")}


def _prefix(rep: Report, members: int) -> Report:
    vr = np.array(rep.per_member["variation_ratio"][:members])
    jr = np.array(rep.per_member["jump_ratio"][:members])
    metrics = dict(rep.metrics, variation_ratio=_stats(vr), jump_ratio=_stats(jr))
    cfg = _merge(rep.config, {"ensemble": {"members": members}})
    return Report(rep.name, cfg, metrics, rep.references,
                  {"variation_ratio": vr.tolist(), "jump_ratio": jr.tolist()})


def stability_check(cfg: ExperimentConfig, lengths=(4, 8), members=(200, 800)) -> StabilityReport:
    """Max ratios at (short, few), (long, few) and (short, many).

    Member streams are indexed, so the small ensemble is a prefix of the
    large one and is read off the large run.
    """
    lac = cfg["lacunary"]
    if "values" in lac:
        full = tuple(lac["values"])
    else:
        full = lacunary_sequence(lac["c"], int(lac["start"]), max(lengths)).values
    if len(full) < max(lengths):
        raise ValidationError("lacunary values shorter than the requested length")
    short = full[:lengths[0]]
    many = norm_ratio_experiment(cfg.replace(ensemble={"members": members[1]}), short)
    few = _prefix(many, members[0])
    longer = norm_ratio_experiment(cfg.replace(ensemble={"members": members[0]}), full[:lengths[1]])
    return StabilityReport(few, longer, many)


# -- pointwise certificates ---------------------------------------------------


def pointwise_certificates(fam: FamilyField, r: float = 3.0, lam_grid=None) -> dict:
    """Violation counts for four pointwise inequalities at every point of the family.

    lam^2 J_lam <= 4 sum_l |a_l|^2;  V_inf <= 2 sup_l |a_l|;
    sup_l |a_l| <= |a_0| + 2 V_r;   lam J_lam^(1/r) <= V_r.
    """
    full = fam.values
    if len(full) == 0:
        return {"jump_square": 0, "vinf_lac": 0, "lac_variation": 0, "jump_variation": 0, "points": 0}
    # every inequality is a function of the row alone, so audit distinct rows with multiplicities
    a, mult = _distinct_rows(full)
    lac = np.max(np.abs(a), axis=1)
    Vr = variation_values(a, r)
    Vinf = variation_values(a, math.inf)
    sq = np.sum(np.abs(a) ** 2, axis=1)
    if lam_grid is None:
        lam_grid = _breakpoint_grid(a)
    eps = 1e-12
    out = {"jump_square": 0, "jump_variation": 0}
    for lam in lam_grid:
        J = jump_values(a, lam).astype(float)
        out["jump_square"] += int(mult @ (lam**2 * J > 4 * sq * (1 + eps) + eps))
        out["jump_variation"] += int(mult @ (lam * J ** (1.0 / r) > Vr * (1 + eps) + eps))
    out["vinf_lac"] = int(mult @ (Vinf > 2 * lac * (1 + eps) + eps))
    out["lac_variation"] = int(mult @ (lac > (np.abs(a[:, 0]) + 2 * Vr) * (1 + eps) + eps))
    out["points"] = int(len(full))
    out["distinct_rows"] = int(len(a))
    return out


def _breakpoint_grid(a: np.ndarray, limit: int = 4096) -> np.ndarray:
    """Just below every pairwise gap, where lam -> lam J_lam peaks; a geometric grid when there are too many."""
    L = a.shape[1]
    gaps = np.concatenate([np.abs(a[:, i + 1:] - a[:, i:i + 1]).ravel() for i in range(L - 1)])
    gaps = np.unique(gaps[gaps > 0])
    if 0 < len(gaps) <= limit:
        return np.concatenate([gaps, gaps * (1 - 1e-9)])
    M = float(_row_diameter(a).max()) or 1.0
    return M * 2.0 ** (-np.arange(0, 24) / 2.0)


def _distinct_rows(mat: np.ndarray):
    """Distinct rows and their counts; groups by a random projection, then checks each group is constant."""
    key = mat @ np.random.default_rng(0).standard_normal(mat.shape[1])
    _, first, inv, counts = np.unique(key, return_index=True, return_inverse=True, return_counts=True)
    rows = mat[first]
    if np.array_equal(rows[inv], mat):
        return rows, counts.astype(np.int64)
    rows, counts = np.unique(mat, axis=0, return_counts=True)
    return rows, counts.astype(np.int64)


# -- jump / variation bridge --------------------------------------------------


def jump_aggregate(seq, lam_floor: float = 1e-12) -> float:
    """(sum_k 4^k J_{2^k}(seq))^(1/2) over integers k."""
    a = np.asarray(seq)
    mat = a[None, :]
    M = float(_row_diameter(mat)[0])
    if M == 0:
        return 0.0
    k = math.floor(math.log2(M))
    tot = 0.0
    L = len(a)
    while True:
        lam = 2.0**k
        tot += lam**2 * float(jump_values(mat, lam)[0])
        if lam**2 * (L - 1) < 1e-16 * tot or lam < lam_floor:
            break
        k -= 1
    return math.sqrt(tot)


@dataclass
class BridgeReport:
    r: float
    ratios: np.ndarray
    lengths: list

    @property
    def max_ratio(self) -> float:
        return float(self.ratios.max()) if self.ratios.size else 0.0

    def record(self) -> dict:
        return {"r": self.r, "max_ratio": self.max_ratio, "lengths": list(self.lengths)}


def bridge_ratio(seq, r: float) -> float:
    agg = jump_aggregate(seq)
    if agg == 0:
        return 0.0
    return variation_exact(seq, r).value / agg


def lemma_bridge_check(sequences: Sequence, r: float = 3.0) -> BridgeReport:
    """V_r(a) / (sum_k 4^k J_{2^k}(a))^(1/2) for each sequence."""
    if not r > 2:
        raise ValidationError("the bridge inequality needs r > 2")
    ratios = np.array([bridge_ratio(s, r) for s in sequences])
    return BridgeReport(float(r), ratios, sorted({len(s) for s in sequences}))


def random_sequences(count: int, length: int, seed: int = 0, scale: float = 5.0) -> list:
    rng = _stream(seed, f"sequences-{length}", 0)
    return [rng.uniform(-scale, scale, size=length) for _ in range(count)]


# -- shift system -------------------------------------------------------------


def hashed_function(seed: int, exact: bool = True) -> Callable:
    """A deterministic pseudo-random f on Z^n; Fraction values when ``exact``."""

    def f(x):
        h = hashlib.blake2b(repr((seed, tuple(int(v) for v in x))).encode(), digest_size=8).digest()
        v = int.from_bytes(h, "little")
        num = v % 2001 - 1000
        if exact:
            return Fraction(num, 997)
        return num / 997.0

    return f


def shift(i: int, t: int, x: tuple) -> tuple:
    """T_i^t x = x - t e_i."""
    y = list(x)
    y[i] -= t
    return tuple(y)


def ergodic_average(f: Callable, weights, points, x) -> object:
    """(1/r) sum_y w_y f(T^y x) with T^y = T_1^{y_1} ... T_n^{y_n} applied in turn."""
    total = 0
    for w, y in zip(weights, points):
        z = tuple(x)
        for i, t in enumerate(y):
            z = shift(i, int(t), z)
        total += w * f(z)
    return total


def discrete_average(g: Callable, weights, points, m) -> object:
    """sum_y w_y g(m - y)."""
    total = 0
    for w, y in zip(weights, points):
        total += w * g(tuple(int(a) - int(b) for a, b in zip(m, y)))
    return total


@dataclass
class ErgodicReport:
    cases: int
    checked: int
    exact_mismatches: int
    float_max_diff: float
    identity_mismatches: int
    variation_mismatches: int

    @property
    def passed(self) -> bool:
        return (self.exact_mismatches == 0 and self.identity_mismatches == 0 and self.variation_mismatches == 0
                and self.float_max_diff <= 1e-12)

    def record(self) -> dict:
        return dict(self.__dict__, passed=self.passed)


def _exact_kernel(F: IntegralForm, phi: Cutoff, lam: int):
    K = birch_magyar_kernel(F, phi, int(lam), "by_count")
    total = sum((Fraction(float(w)) for w in K.phi_weights), Fraction(0))
    weights = [Fraction(float(w)) / total for w in K.phi_weights]
    pts = [tuple(int(v) for v in p) for p in K.points]
    return pts, weights


def ergodic_shift_demo(F: IntegralForm, phi: Cutoff, lam: int = 4, window: int = 32, eta: float = 1.0,
                       cases: int = 50, samples: int = 16, family=(1, 2, 4, 8), r: float = 3.0,
                       seed: int = 0) -> ErgodicReport:
    """Check A_lam gamma_x(m) against the ergodic average at T^m x on the shift system.

    gamma_x(z) = f(T^z x) on |z|_inf <= window (1 + eta/n), else 0; m ranges
    over |m|_inf <= window.  The window needs lam^(1/d) < window eta / n.
    """
    n, d = F.n, F.d
    bound = window * eta / n
    for l in (lam, *family):
        if not l ** (1.0 / d) < bound:
            raise DomainError(f"lambda={l} violates lambda^(1/d) < window * eta / n = {bound:g}")
    outer = window * (1 + eta / n)
    kern = {l: _exact_kernel(F, phi, l) for l in {lam, *family}}
    for pts, w in kern.values():
        table = dict(zip(pts, w))
        if any(table.get(tuple(-v for v in p)) != wt for p, wt in table.items()):
            raise DomainError("the shift demo needs a kernel symmetric under y -> -y")
    rng = _stream(seed, "ergodic", 0)
    checked = exact_bad = ident_bad = var_bad = 0
    fmax = 0.0
    for case in range(cases):
        f = hashed_function(seed * 100003 + case)
        ff = hashed_function(seed * 100003 + case, exact=False)
        x = tuple(int(v) for v in rng.integers(-10**6, 10**6, size=n))

        def gamma(z, f=f, x=x):
            if max(abs(v) for v in z) > outer:
                return 0
            y = x
            for i, t in enumerate(z):
                y = shift(i, t, y)
            return f(y)

        def gamma_f(z, ff=ff, x=x):
            if max(abs(v) for v in z) > outer:
                return 0.0
            return ff(tuple(a - b for a, b in zip(x, z)))

        ms = [tuple(int(v) for v in rng.integers(-window, window + 1, size=n)) for _ in range(samples)]
        ms.append(tuple([window] * n))
        ms.append(tuple([-window] * n))
        pts, w = kern[lam]
        wf = [float(v) for v in w]
        for m in ms:
            xm = tuple(a - b for a, b in zip(x, m))
            erg = ergodic_average(f, w, pts, xm)
            dis = discrete_average(gamma, w, pts, m)
            exact_bad += erg != dis
            fmax = max(fmax, abs(ergodic_average(ff, wf, pts, xm) - discrete_average(gamma_f, wf, pts, m)))
            # on Z^n itself the ergodic average is the lattice average, term by term
            ident_bad += ergodic_average(ff, wf, pts, xm) != discrete_average(ff, wf, pts, xm)
            checked += 1
        seq_e = np.array([[float(ergodic_average(f, kern[l][1], kern[l][0], tuple(a - b for a, b in zip(x, m))))
                           for l in family] for m in ms])
        seq_d = np.array([[float(discrete_average(gamma, kern[l][1], kern[l][0], m)) for l in family] for m in ms])
        var_bad += int(np.sum(variation_values(seq_e, r) != variation_values(seq_d, r)))
    return ErgodicReport(cases, checked, int(exact_bad), float(fmax), int(ident_bad), var_bad)


def compare_reports(a: dict, b: dict) -> dict:
    """Relative change of every shared max metric."""
    out = {}
    for k, v in a.get("metrics", {}).items():
        if isinstance(v, dict) and "max" in v and k in b.get("metrics", {}):
            w = b["metrics"][k]["max"]
            out[k] = {"a": v["max"], "b": w, "relative_change": (w / v["max"] - 1.0) if v["max"] else math.inf}
    return out
