"""Command line front end: ``urnmoments analyze|moments|simulate|compare|corpus``.

Exit codes: 0 success, 1 runtime error, 2 invalid urn specification,
3 a hypothesis of the asymptotic theory fails for this urn.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import report as rpt
from .config import Tolerances
from .corpus import corpus_names, load_corpus, load_corpus_urn
from .errors import UrnError
from .simulator import convergence_probe
from .urn_model import load_urn

log = logging.getLogger("urnmoments")


def _load(config: str, tol: Tolerances):
    path = Path(config)
    if path.is_file():
        return load_urn(path, tol)
    if config in corpus_names():
        return load_corpus_urn(config)
    raise FileNotFoundError(f"{config}: no such file or bundled urn")


def _grid(text: str):
    try:
        values = [int(float(x)) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}; expected n1,n2,...") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("grid points must be positive integers")
    return values


def _count(text: str) -> int:
    return int(float(text))  # accept 1e4


def _write(text: str, target):
    if target in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(target).write_text(text, encoding="utf-8")


def _print_matrix(name, M):
    print(f"{name} =")
    print(np.array2string(np.asarray(M), precision=8, suppress_small=True))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_analyze(args, tol):
    spec = _load(args.config, tol)
    report = rpt.analyze(spec, tol)
    _write(rpt.to_json(report) if args.json else rpt.format_analyze(report), None)
    return report["exit_code"]


def cmd_moments(args, tol):
    spec = _load(args.config, tol)
    spec.require_complete()
    if args.csv:
        _write(rpt.moments_csv(spec, args.n, args.points, cap=args.cap, tol=tol), args.csv)
        return rpt.EXIT_OK
    if args.asymptotic:
        report = rpt.asymptotic_report(spec, tol)
        if args.json:
            _write(rpt.to_json(report), None)
        else:
            print(f"urn {spec.name}: {report['classification']}, lambda_1 = {report['lambda1']:.10g}")
            print(f"mean ~ n * {np.array2string(report['mean_slope'], precision=8)}"
                  f" + {np.array2string(report['mean_intercept'], precision=8)}")
            e = report["mean_error_order"]
            print(f"mean error O(n^{e['exponent']:.6g} log^{e['log_power']} n)")
            _print_matrix("B", report["B"])
            _print_matrix(f"lim Var(X_n) / ({report['normalization']})", report["limit"])
            print(f"null space basis: {np.array2string(report['null_space'].T, precision=6)}")
            for k, v in report["checks"].items():
                print(f"check {k}: {v:.3g}")
        return rpt.EXIT_OK
    report = rpt.exact_report(spec, args.n, cap=args.cap, tol=tol)
    if args.json:
        _write(rpt.to_json(report), None)
    else:
        print(f"urn {spec.name}, n = {args.n}, w_n = {report['w_n']:.10g}")
        print(f"E X_n = {np.array2string(report['mean'], precision=10)}")
        _print_matrix("Var X_n", report["covariance"])
    return rpt.EXIT_OK


def cmd_simulate(args, tol):
    spec = _load(args.config, tol)
    spec.require_complete()
    if args.grid:
        rows = convergence_probe(spec, args.grid, args.reps, args.seed, tol=tol)
        if args.json or args.csv:
            data = [
                {"n": r.n, "l2_error": r.l2_error, "l2_error_se": r.l2_error_se, "normalizer": r.normalizer,
                 "cov_normalized": r.cov_normalized, "mean_hat": r.estimate.mean_hat}
                for r in rows
            ]
        if args.csv:
            q = spec.q
            head = ["n", "l2_error", "l2_error_se"] + [f"cov_{i + 1}{j + 1}/norm" for i in range(q) for j in range(q)]
            lines = [",".join(head)]
            for r in rows:
                vals = [r.n, r.l2_error, r.l2_error_se, *r.cov_normalized.ravel()]
                lines.append(",".join(str(v) for v in vals))
            _write("\n".join(lines) + "\n", args.csv)
        elif args.json:
            _write(rpt.to_json({"schema_version": rpt.SCHEMA_VERSION, "kind": "probe", "urn": spec.name,
                                "reps": args.reps, "seed": args.seed, "rows": data}), None)
        else:
            print(f"urn {spec.name}, reps = {args.reps}, seed = {args.seed}")
            for r in rows:
                print(f"n={r.n:>8}  E|X_n/n - lambda_1 v_1|^2 = {r.l2_error:.4e} +- {r.l2_error_se:.1e}  "
                      f"cov/normalizer diag = {np.array2string(np.diag(r.cov_normalized), precision=5)}")
        return rpt.EXIT_OK
    report = rpt.simulation_report(spec, args.n, args.reps, args.seed, tol)
    if args.csv:
        q = spec.q
        lines = ["quantity," + ",".join(str(i + 1) for i in range(q))]
        lines.append("mean_hat," + ",".join(repr(float(x)) for x in report["mean_hat"]))
        lines.append("mean_se," + ",".join(repr(float(x)) for x in report["mean_se"]))
        for i in range(q):
            lines.append(f"cov_hat_{i + 1}," + ",".join(repr(float(x)) for x in report["cov_hat"][i]))
        _write("\n".join(lines) + "\n", args.csv)
    elif args.json:
        _write(rpt.to_json(report), None)
    else:
        print(f"urn {spec.name}, n = {args.n}, reps = {args.reps}, seed = {args.seed}")
        print(f"mean_hat = {np.array2string(report['mean_hat'], precision=6)}")
        print(f"mean_se  = {np.array2string(report['mean_se'], precision=3)}")
        _print_matrix("cov_hat", report["cov_hat"])
        print(f"largest covariance SE = {report['cov_se']:.4g}")
    return rpt.EXIT_OK


def cmd_compare(args, tol):
    spec = _load(args.config, tol)
    report = rpt.compare(spec, args.n, args.reps, args.seed, args.n_limit, tol)
    _write(rpt.to_json(report.to_dict()) if args.json else rpt.format_compare(report), None)
    return rpt.EXIT_OK if report.passed else rpt.EXIT_RUNTIME


def cmd_corpus(args, tol):
    urns = load_corpus()
    if args.action == "list":
        entries = [
            {"name": u.name, "q": u.q, "incomplete": u.incomplete, "description": u.description} for u in urns
        ]
        if args.json:
            _write(rpt.to_json({"schema_version": rpt.SCHEMA_VERSION, "kind": "corpus_list", "urns": entries}), None)
        else:
            for e in entries:
                mark = " [incomplete]" if e["incomplete"] else ""
                print(f"{e['name']:<24} q={e['q']}{mark}  {e['description']}")
        return rpt.EXIT_OK
    results, failures = [], 0
    for u in urns:
        if u.incomplete:
            continue
        try:
            rep = rpt.compare(u, args.n, args.reps, args.seed, args.n_limit, tol)
        except UrnError as exc:
            failures += 1
            results.append({"urn": u.name, "passed": False, "error": {"type": type(exc).__name__, "message": str(exc)}})
            if not args.json:
                print(f"urn {u.name}: error {type(exc).__name__}: {exc}")
            continue
        failures += not rep.passed
        results.append(rep.to_dict())
        if not args.json:
            print(rpt.format_compare(rep))
    summary = {"complete_urns": len(results), "failures": failures}
    if args.json:
        _write(rpt.to_json({"schema_version": rpt.SCHEMA_VERSION, "kind": "corpus_run", "summary": summary,
                            "results": results}), None)
    else:
        print(f"{summary['complete_urns']} complete urns, {failures} failures")
    return rpt.EXIT_OK if failures == 0 else rpt.EXIT_RUNTIME


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--log-level", default="WARNING")
    tols = common.add_argument_group("tolerances (defaults, or URNMOMENTS_TOL_<NAME> variables)")
    for f in dataclasses.fields(Tolerances):
        tols.add_argument(f"--tol-{f.name.replace('_', '-')}", dest=f"tol_{f.name}", type=float, default=None,
                          metavar="X", help=f"default {f.default:g}")

    parser = argparse.ArgumentParser(prog="urnmoments", description="Moments of balanced generalized Polya urns.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="validate and decompose an urn")
    p.add_argument("config", help="YAML file or bundled urn name")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("moments", parents=[common], help="exact or asymptotic moments")
    p.add_argument("config")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true", help="exact E X_n and Var X_n (default)")
    mode.add_argument("--asymptotic", action="store_true", help="mean asymptote and covariance limit")
    p.add_argument("--n", type=_count, default=1000)
    p.add_argument("--cap", type=_count, default=100_000, help="largest n for the exact recursion")
    p.add_argument("--csv", metavar="FILE", help="write exact moments on a geometric grid up to --n ('-' for stdout)")
    p.add_argument("--points", type=int, default=20, help="grid size for --csv")
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo estimates")
    p.add_argument("config")
    p.add_argument("--n", type=_count, default=1000)
    p.add_argument("--reps", type=_count, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=_grid, help="n1,n2,...: convergence probe instead of a single n")
    p.add_argument("--csv", metavar="FILE")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", parents=[common], help="exact vs asymptotic vs simulated")
    p.add_argument("config")
    p.add_argument("--n", type=_count, default=1000)
    p.add_argument("--reps", type=_count, default=4000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-limit", type=_count, default=100_000, help="n for the exact side of the covariance limit")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("corpus", parents=[common], help="bundled urns")
    p.add_argument("action", choices=["list", "run"])
    p.add_argument("--n", type=_count, default=1000)
    p.add_argument("--reps", type=_count, default=4000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-limit", type=_count, default=100_000)
    p.set_defaults(func=cmd_corpus)
    return parser


def _tolerances(args) -> Tolerances:
    tol = Tolerances.from_env()
    changes = {f.name: getattr(args, f"tol_{f.name}") for f in dataclasses.fields(Tolerances)}
    return tol.replace(**{k: v for k, v in changes.items() if v is not None})


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        tol = _tolerances(args)
        return args.func(args, tol)
    except UrnError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return rpt.exit_code_for(exc)
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return rpt.EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
