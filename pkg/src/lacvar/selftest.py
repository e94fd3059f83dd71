"""Oracle-equivalence and identity checks behind ``lacvar selftest``."""
from __future__ import annotations

import math
import time

import numpy as np


def _variation(quick):
    from .seminorms import variation_bruteforce, variation_exact

    rng = np.random.default_rng(1)
    worst = 0.0
    count = 100 if quick else 1000
    for _ in range(count):
        a = rng.uniform(-5, 5, rng.integers(1, 11))
        for r in (1, 1.5, 2, 3, math.inf):
            worst = max(worst, abs(variation_exact(a, r).value - variation_bruteforce(a, r)))
    return worst <= 1e-10, f"{count} sequences, max diff {worst:.1e}"


def _jumps(quick):
    from .seminorms import jump_bruteforce, jump_count

    rng = np.random.default_rng(2)
    bad = 0
    count = 100 if quick else 1000
    for _ in range(count):
        a = rng.uniform(-3, 3, rng.integers(1, 11 if quick else 13))
        for lam in (0.5, 1, 2):
            bad += jump_count(a, lam).count != jump_bruteforce(a, lam)
    return bad == 0, f"{count} sequences, {bad} mismatches"


def _jacobi(quick):
    from .forms import Cutoff, sum_of_squares
    from .lattice import counting_function, jacobi_r4

    F = sum_of_squares(4)
    top = 60 if quick else 200
    bad = [lam for lam in range(1, top + 1) if counting_function(F, Cutoff(), lam) != jacobi_r4(lam)]
    return not bad, f"lambda <= {top}, mismatches {bad[:5]}"


def _weyl(quick):
    from .circle import units, weyl_sum, weyl_sum_direct
    from .forms import IntegralForm, sum_of_squares

    F = sum_of_squares(5)
    rng = np.random.default_rng(3)
    worst = 0.0
    for q in range(1, 40 if quick else 100, 2):
        for a in units(q):
            b = rng.integers(0, q, 5)
            worst = max(worst, abs(abs(weyl_sum(F, q, a, b)) - q**-2.5))
    G = IntegralForm.diagonal([1, 2, 3], 3)
    fac = 0.0
    for q in range(1, 9 if quick else 13):
        for a in units(q):
            b = rng.integers(0, q, 3)
            fac = max(fac, abs(weyl_sum(G, q, a, b) - weyl_sum_direct(G, q, a, b)))
    return worst <= 1e-9 and fac <= 1e-12, f"|F_q| dev {worst:.1e}, factored vs direct {fac:.1e}"


def _psi(quick):
    from .decomp import psi_hat_direct, psi_hat_torus

    xi = np.linspace(0, 1, 17 if quick else 65)[:, None]
    worst = max(float(np.max(np.abs(psi_hat_torus(s, J, xi) - psi_hat_direct(s, J, xi))))
                for s, J in ((1, 2), (2, 8), (12, 16)))
    return worst <= 1e-6, f"Poisson vs direct {worst:.1e}"


def _split(quick):
    from .decomp import TorusFunction, spectral_split

    worst = 0.0
    for seed in range(2 if quick else 20):
        f = TorusFunction.random(2, 256 if quick else 1024, seed)
        for l in (8, 12):
            worst = max(worst, spectral_split(f, l).total().max_abs_diff(f))
    return worst <= 1e-10, f"telescoping error {worst:.1e}"


def _dyadic(quick):
    from .decomp import dyadic_average, dyadic_difference
    from .grid import GridFunction

    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(5 if quick else 20):
        f = GridFunction.from_arrays(rng.integers(-30, 30, (12, 2)), rng.standard_normal(12))
        P = rng.integers(-70, 70, (300, 2))
        for l, m in ((3, 1), (5, 2), (4, 4)):
            worst = max(worst, np.max(np.abs(dyadic_average(dyadic_average(f, m), l).evaluate(P)
                                             - dyadic_average(f, l).evaluate(P))))
        tot = dyadic_difference(f, 1)
        for m in range(2, 6):
            tot = tot + dyadic_difference(f, m)
        ref = dyadic_average(f, 5).evaluate(P) - dyadic_average(f, 0).evaluate(P)
        worst = max(worst, np.max(np.abs(tot.evaluate(P) - ref)))
    return worst <= 1e-12, f"nesting/telescoping {worst:.1e}"


def _mass(quick):
    from .decomp import smoothed_kernel_mass
    from .forms import Cutoff, sum_of_squares

    ls = (4,) if quick else (4, 6, 8)
    vals = [smoothed_kernel_mass(sum_of_squares(5), Cutoff(), l).value for l in ls]
    worst = max(abs(v - 1) for v in vals)
    return worst <= 1e-5, f"|mass - 1| {worst:.1e}"


def _ergodic(quick):
    from .experiments import ergodic_shift_demo
    from .forms import Cutoff, sum_of_squares

    rep = ergodic_shift_demo(sum_of_squares(5), Cutoff(), cases=3 if quick else 50, samples=4 if quick else 16)
    return rep.passed, f"{rep.checked} points, float diff {rep.float_max_diff:.1e}"


SUITES = [
    ("variation_dp_vs_bruteforce", _variation),
    ("jump_greedy_vs_bruteforce", _jumps),
    ("four_squares_vs_jacobi", _jacobi),
    ("weyl_sums", _weyl),
    ("psi_poisson_vs_direct", _psi),
    ("spectral_split_telescoping", _split),
    ("dyadic_identities", _dyadic),
    ("smoothed_kernel_mass", _mass),
    ("shift_system_identity", _ergodic),
]


def run_selftest(quick: bool = False) -> list:
    out = []
    for name, fn in SUITES:
        t = time.perf_counter()
        ok, detail = fn(quick)
        out.append((name, bool(ok), f"{detail} ({time.perf_counter() - t:.1f}s)"))
    return out
