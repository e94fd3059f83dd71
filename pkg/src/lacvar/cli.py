"""Command-line entry point: ``lacvar <subcommand> <action> [options]``."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Optional

import numpy as np

from . import __version__
from .errors import LacvarError, ToleranceError, ValidationError
from .forms import (Cutoff, birch_constants, form_from_config, phi_regular_check, shipped_variety, sum_of_squares)
from .io import (RunManifest, read_grid_csv, read_sequence_csv, report_document, write_grid_csv, write_json,
                 write_points_csv)

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

PRESETS = {
    "five_squares": lambda: sum_of_squares(5),
    "four_squares": lambda: sum_of_squares(4),
    "variety": shipped_variety,
}


class UsageError(ValidationError):
    kind = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _load_toml(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _form(name: Optional[str], default: str = "five_squares"):
    """A preset name or a TOML file with a [form] table (or top-level form keys)."""
    name = name or default
    if name in PRESETS:
        return PRESETS[name]()
    if not os.path.exists(name):
        raise ValidationError(f"--form must be one of {sorted(PRESETS)} or a TOML file, got {name!r}")
    data = _load_toml(name)
    return form_from_config(data.get("form", data))


def _cutoff(args) -> Cutoff:
    return Cutoff(args.r1, args.r2, args.profile)


def _ints(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"expected a comma-separated integer list, got {text!r}") from None


def _emit(args, sub: str, metrics, references=None, passed=None, outputs=()):
    manifest = RunManifest(sub, _config_of(args), int(args.seed), __version__, list(outputs))
    doc = report_document(manifest, metrics, references, passed)
    if getattr(args, "out", None) and str(args.out).endswith(".json"):
        write_json(args.out, doc)
    else:
        print(json.dumps(doc, sort_keys=True, indent=1, default=str))
    return manifest


def _config_of(args) -> dict:
    skip = {"func", "out", "threads"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}


def _manifest(args, sub: str, outputs=()) -> RunManifest:
    return RunManifest(sub, _config_of(args), int(args.seed), __version__, list(outputs))


# -- subcommand handlers ------------------------------------------------------


def cmd_forms(args):
    F = _form(args.form)
    phi = _cutoff(args)
    metrics = {"form": F.to_config(), "n": F.n, "d": F.d, "label": F.label}
    try:
        B = birch_constants(F)
        metrics.update(rank=B.rank, c=float(B.c), eta=float(B.eta))
    except ValidationError as exc:
        metrics["birch"] = str(exc)
    if F.d % 2 == 0 and args.action == "check":
        res = phi_regular_check(F, phi, seed=args.seed)
        metrics["phi_regular"] = bool(res)
        metrics["regularity_detail"] = res.status
    _emit(args, "forms", metrics)
    return 0


def cmd_lattice(args):
    from .lattice import count_solutions, counting_function, enumerate_solutions

    F = _form(args.form)
    phi = _cutoff(args)
    if args.action == "enumerate":
        sol = enumerate_solutions(F, args.lam, phi=phi, max_points=args.max_points)
        if args.out and args.out.endswith(".csv"):
            m = _manifest(args, "lattice", [args.out])
            write_points_csv(args.out, sol.points, m)
        rec = {"lambda": args.lam, "count": sol.count, "weighted_count": float(np.sum(sol.weights))}
        _emit(args, "lattice", rec, outputs=[args.out] if args.out else [])
        return 0
    recs = []
    for lam in _ints(args.lambda_list):
        recs.append({"lambda": lam, "count": count_solutions(F, lam) if F.positive_definite_diagonal else None,
                     "weighted_count": counting_function(F, phi, lam)})
    _emit(args, "lattice", recs)
    return 0


def cmd_ops(args):
    from .ops import birch_magyar_average, family_apply, variety_average

    F = _form(args.form)
    f = read_grid_csv(args.input)
    if args.action == "average":
        if args.form == "variety":
            g = variety_average(F, args.lam, f, args.normalization)
        else:
            g = birch_magyar_average(F, _cutoff(args), args.lam, f, args.normalization)
        out = args.out or "average.csv"
        write_grid_csv(out, g, _manifest(args, "ops", [out]))
        _emit(args, "ops", {"points": len(g), "l2": float(np.sqrt(np.sum(np.abs(g.values) ** 2)))}, outputs=[out])
        return 0
    fam = family_apply(F, _cutoff(args), _ints(args.lambda_list), f, args.normalization)
    out = args.out or "lac.csv"
    write_grid_csv(out, fam.lac, _manifest(args, "ops", [out]))
    _emit(args, "ops", {"points": len(fam.points), "lambdas": list(fam.lambdas)}, outputs=[out])
    return 0


def cmd_seminorm(args):
    from .seminorms import jump_count, variation_exact

    _, vals = read_sequence_csv(args.input)
    if args.action == "variation":
        r = math.inf if args.r in ("inf", "infinity") else float(args.r)
        res = variation_exact(vals, r)
        _emit(args, "seminorm", {"r": repr(r), "value": res.value, "witness": list(res.witness)})
    else:
        res = jump_count(vals, args.threshold)
        _emit(args, "seminorm", {"threshold": res.threshold, "count": res.count,
                                 "pairs": [list(p) for p in res.witness]})
    return 0


def cmd_circle(args):
    from .circle import default_xi_samples, multiplier_error_scan, root_qmax, sigma_hat, weyl_bound_audit

    F = _form(args.form)
    if args.action == "weyl":
        rows = weyl_bound_audit(F, args.qmax)
        if args.out and args.out.endswith(".csv"):
            from .io import _write_rows

            _write_rows(args.out, ["q", "max_abs", "normalized", "flagged"],
                        ([r.q, r.max_abs, r.normalized, int(r.flagged)] for r in rows), _manifest(args, "circle", [args.out]))
        _emit(args, "circle", {"rows": len(rows), "flagged": [r.q for r in rows if r.flagged]})
        return 0
    if args.action == "sigma":
        ft = sigma_hat(F, _cutoff(args))
        xi = np.zeros(F.n)
        _emit(args, "circle", {"sigma_hat_0": complex(ft(xi))})
        return 0
    lams = _ints(args.lambda_list)
    xis = default_xi_samples(F.n, args.xi_samples, args.seed)
    rule = (lambda lam: root_qmax(lam, F.d)) if args.qmax_rule == "root" else None  # noqa: E731
    scan = multiplier_error_scan(F, _cutoff(args), lams, xis, qmax_rule=rule)
    recs = [c.record() for c in scan.comparisons]
    metrics = {"sup_errors": scan.sup_errors, "slope": scan.slope, "strictly_decreasing": scan.strictly_decreasing,
               "q_max": {str(k): v for k, v in scan.q_max.items()}, "records": recs}
    _emit(args, "circle", metrics, {"eta": -scan.eta_reference},
          passed=scan.strictly_decreasing and scan.slope < 0)
    return 0


def cmd_decomp(args):
    from . import decomp as D

    if args.action == "split":
        if args.input:
            f = _torus_from_csv(args.input, args.n, args.N)
        else:
            f = D.TorusFunction.random(args.n, args.N, args.seed)
        sp = D.spectral_split(f, args.l)
        err = sp.total().max_abs_diff(f)
        _emit(args, "decomp", {"l": args.l, "J_l": sp.J_l, "telescoping_error": err,
                               "norms": [float(np.linalg.norm(p.values)) for p in (sp.f1, sp.f2, sp.f3)]},
              passed=err < 1e-10)
        return 0
    if args.action == "square":
        audit = D.square_function_audit(args.j, args.lmax, difference=args.difference)
        _emit(args, "decomp", audit.record(), passed=audit.relative_increase < 0.05)
        return 0
    if args.action == "mass":
        F = _form(args.form)
        km = D.smoothed_kernel_mass(F, _cutoff(args), args.l)
        _emit(args, "decomp", km.__dict__, passed=abs(km.value - 1) < 1e-5)
        return 0
    F = _form(args.form)
    audit = D.single_average_bound_audit(F, _cutoff(args), args.j, args.l, ensemble=args.ensemble, seed=args.seed)
    rec = audit.record()
    _emit(args, "decomp", rec, {"C_jl": audit.reference})
    return 0


def _torus_from_csv(path, n, N):
    from .decomp import TorusFunction

    g = read_grid_csv(path)
    if g.n != n:
        raise ValidationError(f"input has dimension {g.n}, expected {n}")
    vals = np.zeros((N,) * n, dtype=complex)
    idx = tuple((g.points % N).T)
    np.add.at(vals, idx, g.values)
    return TorusFunction(vals)


def cmd_experiment(args):
    from . import experiments as E

    if args.action == "compare":
        with open(args.a) as fa, open(args.b) as fb:
            a, b = json.load(fa), json.load(fb)
        _emit(args, "experiment", E.compare_reports(_metrics_holder(a), _metrics_holder(b)))
        return 0
    cfg = E.ExperimentConfig.from_toml(args.config) if args.config else E.ExperimentConfig.from_dict()
    if args.threads:
        cfg = cfg.replace(threads=args.threads)
    if args.action == "ergodic":
        rep = E.ergodic_shift_demo(cfg.form, cfg.cutoff, cases=args.cases, seed=int(cfg["seed"]))
        _emit(args, "experiment", rep.record(), passed=rep.passed)
        return 0
    if args.action == "stability":
        st = E.stability_check(cfg)
        _emit(args, "experiment", st.record(), passed=st.passed())
        return 0
    rep = E.norm_ratio_experiment(cfg)
    args.seed = int(cfg["seed"])
    _emit(args, "experiment", rep.to_dict(), rep.references)
    return 0


def _metrics_holder(doc: dict) -> dict:
    """Accept either a bare report or one wrapped in a manifest document."""
    inner = doc.get("metrics", {})
    return inner if isinstance(inner, dict) and "metrics" in inner else doc


def cmd_selftest(args):
    from .selftest import run_selftest

    results = run_selftest(quick=args.quick)
    width = max(len(name) for name, _, _ in results)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    if not all(ok for _, ok, _ in results):
        raise ToleranceError("selftest failures: " + ", ".join(n for n, ok, _ in results if not ok))
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: machine parallelism)")
    common.add_argument("--out")
    formp = _Parser(add_help=False)
    formp.add_argument("--form", help=f"preset ({', '.join(sorted(PRESETS))}) or TOML file")
    formp.add_argument("--r1", type=float, default=1.2)
    formp.add_argument("--r2", type=float, default=1.9)
    formp.add_argument("--profile", default="bump", choices=["bump", "smooth"])

    p = _Parser(prog="lacvar", description="Lacunary discrete averages: enumeration, circle method, seminorms.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("forms", parents=[common, formp])
    s.add_argument("action", choices=["info", "check"])
    s.set_defaults(func=cmd_forms)

    s = sub.add_parser("lattice", parents=[common, formp])
    s.add_argument("action", choices=["enumerate", "count"])
    s.add_argument("--lambda", dest="lam", type=int, default=25)
    s.add_argument("--lambda-list", default="64,128,256,512,1024")
    s.add_argument("--max-points", type=int, default=20_000_000)
    s.set_defaults(func=cmd_lattice)

    s = sub.add_parser("ops", parents=[common, formp])
    s.add_argument("action", choices=["average", "lacunary"])
    s.add_argument("--lambda", dest="lam", type=int, default=16)
    s.add_argument("--lambda-list", default="2,4,8,16")
    s.add_argument("--input", required=True)
    s.add_argument("--normalization", default="by_count", choices=["by_count", "by_power"])
    s.set_defaults(func=cmd_ops)

    s = sub.add_parser("seminorm", parents=[common])
    s.add_argument("action", choices=["variation", "jump"])
    s.add_argument("--input", required=True)
    s.add_argument("--r", default="2")
    s.add_argument("--threshold", type=float, default=1.0)
    s.set_defaults(func=cmd_seminorm)

    s = sub.add_parser("circle", parents=[common, formp])
    s.add_argument("action", choices=["weyl", "sigma", "multiplier"])
    s.add_argument("--qmax", type=int, default=99)
    s.add_argument("--lambda-list", default="64,256,1024,4096")
    s.add_argument("--xi-samples", type=int, default=100)
    s.add_argument("--qmax-rule", default="default", choices=["default", "root"])
    s.set_defaults(func=cmd_circle)

    s = sub.add_parser("decomp", parents=[common, formp])
    s.add_argument("action", choices=["split", "square", "mass", "average"])
    s.add_argument("--n", type=int, default=2)
    s.add_argument("--N", type=int, default=1024)
    s.add_argument("--l", type=int, default=12)
    s.add_argument("--j", type=int, default=0)
    s.add_argument("--lmax", type=int, default=24)
    s.add_argument("--difference", default="band", choices=["band", "scale"])
    s.add_argument("--ensemble", type=int, default=4)
    s.add_argument("--input")
    s.set_defaults(func=cmd_decomp)

    s = sub.add_parser("experiment", parents=[common])
    s.add_argument("action", choices=["run", "stability", "ergodic", "compare"])
    s.add_argument("--config")
    s.add_argument("--cases", type=int, default=50)
    s.add_argument("--a")
    s.add_argument("--b")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("selftest", parents=[common])
    s.add_argument("--quick", action="store_true")
    s.set_defaults(func=cmd_selftest)
    return p


def _error_record(exc: LacvarError) -> dict:
    rec = exc.record()
    rec["exit_code"] = exc.exit_code
    return {"error": rec}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "ops" or args.command == "seminorm" or (args.command == "decomp" and args.input):
            path = args.input
            if path and not os.path.exists(path):
                raise ValidationError(f"input file not found: {path}")
        if args.command == "experiment" and args.action == "compare" and not (args.a and args.b):
            raise UsageError("compare needs --a and --b")
        return int(args.func(args) or 0)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except LacvarError as exc:
        print(json.dumps(_error_record(exc), sort_keys=True), file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        err = ValidationError(str(exc))
        print(json.dumps(_error_record(err), sort_keys=True), file=sys.stderr)
        return err.exit_code


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
