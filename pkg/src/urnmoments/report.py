"""Structured reports: analysis, moments, simulation and three-way comparison.

Every builder returns plain data that :func:`to_json` serialises; the layout
is versioned by :data:`SCHEMA_VERSION`.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .asymptotics import asymptotic_covariance, asymptotic_mean, mean_error_order
from .config import DEFAULT, Tolerances
from .errors import DominantMismatch, HypothesisError, SpecError, UrnError
from .exact_moments import exact_covariance, moment_path
from .simulator import estimate_moments
from .spectral import UrnClass, UrnKind, classify, decompose_urn
from .urn_model import UrnSpec, check_balance, total_activity, unreachable_colours, validate_urn

SCHEMA_VERSION = "1.0"

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_INVALID_SPEC = 2
EXIT_HYPOTHESIS = 3

INFORMATIONAL = "informational, not asserted"

#: acceptance tolerances of the comparison table
MEAN_SE_FACTOR = 4.0
COV_TRACE_REL = 0.05
MEAN_ASYMPTOTE_REL = 0.05
SIGMA_REL = 0.02
SIGMA_ZERO_TRACE = 0.05
TV2_REL = 0.15
TV2_FIT_REL = 0.05


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, SpecError):
        return EXIT_INVALID_SPEC
    if isinstance(exc, HypothesisError):
        return EXIT_HYPOTHESIS
    return EXIT_RUNTIME


def jsonable(x):
    """Recursively convert arrays, complex numbers and dataclasses to JSON types."""
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": float(x.real), "im": float(x.imag)}
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, UrnClass):
        return str(x)
    if hasattr(x, "__dataclass_fields__"):
        return jsonable(asdict(x))
    return x


def to_json(report: dict, indent: int = 2) -> str:
    return json.dumps(jsonable(report), indent=indent, sort_keys=False)


def _error(exc):
    return {"type": type(exc).__name__, "message": str(exc)}


def _urn_info(spec: UrnSpec):
    return {"name": spec.name, "q": spec.q, "incomplete": spec.incomplete, "description": spec.description}


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def analyze(spec: UrnSpec, tol: Tolerances = DEFAULT) -> dict:
    """Validation, spectral decomposition and classification of one urn."""
    report = {"schema_version": SCHEMA_VERSION, "kind": "analyze", "urn": _urn_info(spec)}
    validation = validate_urn(spec, tol=tol)
    report["validation"] = {
        "balance": validation.balance,
        "balance_error": validation.balance_error,
        "tenability": asdict(validation.tenability),
    }
    warnings = list(validation.warnings)
    report.update(spectral=None, classification=None, warnings=warnings, error=None)
    try:
        spec.require_complete()
        if validation.balance_error:
            check_balance(spec, tol)
        decomp = decompose_urn(spec, tol=tol)
    except UrnError as exc:
        report["error"] = _error(exc)
        if isinstance(exc, DominantMismatch):
            missing = unreachable_colours(spec)
            if missing:
                report["error"]["message"] += f"; colours {missing} never occur starting from X0"
            report["error"]["unreachable_colours"] = missing
        if isinstance(exc, HypothesisError):
            report["classification"] = f"NotApplicable({type(exc).__name__})"
        report["exit_code"] = exit_code_for(exc)
        return report
    cls = classify(decomp, tol)
    report["spectral"] = {
        "eigenvalues": [
            {"value": c.eigenvalue, "multiplicity": c.multiplicity, "nu": c.nu} for c in decomp.clusters
        ],
        "lambda1": decomp.lambda1,
        "lambda2": decomp.lambda2,
        "nu2": decomp.nu2,
        "v1": decomp.v1,
        "cluster_tol": decomp.cluster_tol,
        "diagnostics": decomp.diagnostics(),
    }
    report["classification"] = str(cls)
    warnings.extend(decomp.warnings)
    report["exit_code"] = EXIT_OK
    return report


def format_analyze(report: dict) -> str:
    lines = [f"urn {report['urn']['name']} (q={report['urn']['q']})"]
    v = report["validation"]
    lines.append(f"  balance b = {v['balance']}" if v["balance"] is not None else f"  balance: {v['balance_error']}")
    lines.append(f"  tenability: {v['tenability']['status']} {v['tenability']['note']}".rstrip())
    if report["spectral"]:
        s = report["spectral"]
        lines.append("  eigenvalues (multiplicity, nu):")
        for e in s["eigenvalues"]:
            lines.append(f"    {_fmt_complex(e['value'])}  ({e['multiplicity']}, {e['nu']})")
        lines.append(f"  v1 = {np.array2string(np.asarray(s['v1']), precision=6)}")
        d = s["diagnostics"]
        lines.append(
            "  residuals: reconstruction {reconstruction_residual:.2e}, partition {partition_residual:.2e}, "
            "max |P| {max_projection_norm:.3g}".format(**d)
        )
    if report["classification"]:
        lines.append(f"  classification: {report['classification']}")
    for w in report["warnings"]:
        lines.append(f"  warning: {w}")
    if report["error"]:
        lines.append(f"  error: {report['error']['type']}: {report['error']['message']}")
    return "\n".join(lines)


def _fmt_complex(z):
    z = complex(z)
    return f"{z.real:.10g}" if z.imag == 0 else f"{z.real:.10g}{z.imag:+.10g}i"


# ---------------------------------------------------------------------------
# moments and simulation
# ---------------------------------------------------------------------------


def exact_report(spec: UrnSpec, n: int, cap: Optional[int] = None, tol: Tolerances = DEFAULT) -> dict:
    m = exact_covariance(spec, n, cap=cap, tol=tol)
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "exact",
        "urn": _urn_info(spec),
        "n": n,
        "w_n": total_activity(spec, n, tol),
        "mean": m.mean,
        "covariance": m.covariance,
    }


def asymptotic_report(spec: UrnSpec, tol: Tolerances = DEFAULT) -> dict:
    decomp = decompose_urn(spec, tol=tol)
    rep = asymptotic_covariance(spec, decomp, tol=tol)
    exponent, nu2 = mean_error_order(decomp)
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "asymptotic",
        "urn": _urn_info(spec),
        "classification": str(rep.urn_class),
        "lambda1": rep.lambda1,
        "lambda2": rep.lambda2,
        "nu2": rep.nu2,
        "mean_slope": rep.mean_slope,
        "mean_intercept": rep.mean_intercept,
        "mean_error_order": {"exponent": exponent, "log_power": nu2},
        "B": rep.B,
        "Sigma_I": rep.Sigma_I,
        "limit": rep.limit,
        "normalization": rep.normalization,
        "null_space": rep.null_space,
        "checks": rep.checks,
    }


def moments_csv(spec: UrnSpec, n_max: int, points: int = 20, cap: Optional[int] = None, tol: Tolerances = DEFAULT) -> str:
    """CSV of exact moments on a geometric grid up to ``n_max``.

    Columns: ``n``, ``mean_i``, ``var_i`` and ``var_i`` divided by the
    normaliser of the covariance limit (``n`` if no limit applies).
    """
    grid = sorted(set(np.unique(np.geomspace(1, n_max, points).astype(int)).tolist()) | {n_max})
    try:
        lim = asymptotic_covariance(spec, tol=tol)
        norm, label = lim.normalizer, lim.normalization
    except UrnError:
        norm, label = float, "n"
    q = spec.q
    head = ["n"] + [f"mean_{i + 1}" for i in range(q)] + [f"var_{i + 1}" for i in range(q)]
    head += [f"var_{i + 1}/{label}" for i in range(q)]
    rows = [",".join(head)]
    for m in moment_path(spec, grid, cap=cap, tol=tol):
        d = np.diag(m.covariance)
        z = norm(m.n) if m.n > 0 else 0.0
        z = z if z > 0 else float("nan")
        vals = [m.n, *m.mean, *d, *(d / z)]
        rows.append(",".join(repr(float(v)) if not isinstance(v, int) else str(v) for v in vals))
    return "\n".join(rows) + "\n"


def simulation_report(spec: UrnSpec, n: int, reps: int, seed: int, tol: Tolerances = DEFAULT) -> dict:
    est = estimate_moments(spec, n, reps, seed, tol)
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "simulation",
        "urn": _urn_info(spec),
        "n": n,
        "reps": reps,
        "seed": seed,
        "mean_hat": est.mean_hat,
        "mean_se": est.mean_se,
        "cov_hat": est.cov_hat,
        "cov_se": est.cov_se,
    }


# ---------------------------------------------------------------------------
# comparison
# ---------------------------------------------------------------------------


@dataclass
class ComparisonRow:
    quantity: str
    oracle: str
    tolerance: Optional[str]
    exact: object = None
    asymptotic: object = None
    simulated: object = None
    simulated_se: object = None
    residual: Optional[float] = None
    passed: Optional[bool] = None
    note: str = ""


@dataclass
class ComparisonReport:
    urn: str
    classification: str
    n: int
    reps: int
    seed: int
    rows: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed is not False for r in self.rows)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "compare",
            "urn": self.urn,
            "classification": self.classification,
            "n": self.n,
            "reps": self.reps,
            "seed": self.seed,
            "passed": self.passed,
            "rows": [asdict(r) for r in self.rows],
            "skipped": self.skipped,
        }


def _trace_rel(x, ref):
    return float(np.max(np.abs(x - ref)) / max(abs(float(np.trace(ref))), 1e-300))


def _log_poly_leading(spec, n_limit, degree, tol):
    """Leading coefficient of ``Var(X_n)/n`` fitted as a polynomial in ``log n``."""
    ns = np.unique(np.geomspace(max(10, n_limit // 100), n_limit, 16).astype(int))
    path = moment_path(spec, ns, cap=None, tol=tol)
    L = np.log(ns)
    X = np.vander(L, degree + 1)
    Y = np.array([m.covariance.ravel() / m.n for m in path])
    coef = np.linalg.lstsq(X, Y, rcond=None)[0][0]
    return coef.reshape(spec.q, spec.q)


def compare(
    spec: UrnSpec,
    n: int = 1000,
    reps: int = 4000,
    seed: int = 0,
    n_limit: int = 100_000,
    tol: Tolerances = DEFAULT,
) -> ComparisonReport:
    """Exact, asymptotic and simulated moments side by side.

    Rows whose theory does not apply (for instance a large urn's
    covariance) are listed under ``skipped`` with the reason.  A row with
    ``passed=None`` is informational and never fails.
    """
    spec.require_complete()
    exact = exact_covariance(spec, n, cap=None, tol=tol)
    sim = estimate_moments(spec, n, reps, seed, tol)
    try:
        decomp = decompose_urn(spec, tol=tol)
        cls = classify(decomp, tol)
    except HypothesisError as exc:
        decomp, cls = None, UrnClass(UrnKind.NOT_APPLICABLE, type(exc).__name__)
    report = ComparisonReport(spec.name, str(cls), n, reps, seed)
    rows = report.rows

    z = np.abs(sim.mean_hat - exact.mean) / np.maximum(sim.mean_se, 1e-300)
    z[(sim.mean_se == 0) & (np.abs(sim.mean_hat - exact.mean) <= 1e-9 * max(1.0, np.abs(exact.mean).max()))] = 0.0
    rows.append(
        ComparisonRow(
            f"E X_n at n={n}",
            "exact recursion vs simulation",
            f"each coordinate within {MEAN_SE_FACTOR:g} SE",
            exact=exact.mean,
            simulated=sim.mean_hat,
            simulated_se=sim.mean_se,
            residual=float(np.max(z)),
            passed=bool(np.all(z <= MEAN_SE_FACTOR)),
        )
    )
    w = total_activity(spec, n, tol)
    bal = abs(float(spec.a @ sim.mean_hat) - w)
    rows.append(
        ComparisonRow(
            f"a.X_n at n={n}",
            "balance w_0 + n b",
            "1e-9 relative",
            exact=w,
            simulated=float(spec.a @ sim.mean_hat),
            residual=bal / w,
            passed=bal <= 1e-9 * w,
        )
    )
    rel = _trace_rel(sim.cov_hat, exact.covariance) if np.trace(exact.covariance) > 0 else float(np.max(np.abs(sim.cov_hat)))
    rows.append(
        ComparisonRow(
            f"Var X_n at n={n}",
            "exact recursion vs simulation",
            f"max entry difference <= {COV_TRACE_REL:g} trace",
            exact=exact.covariance,
            simulated=sim.cov_hat,
            simulated_se=sim.cov_se,
            residual=rel,
            passed=rel <= COV_TRACE_REL,
        )
    )
    if decomp is None:
        report.skipped.append(f"asymptotics: {cls.reason}")
        return report

    try:
        asym_mean = asymptotic_mean(spec, n, decomp, tol)
    except HypothesisError as exc:
        report.skipped.append(f"asymptotic mean: {exc}")
    else:
        rel = float(np.linalg.norm(exact.mean - asym_mean) / np.linalg.norm(exact.mean))
        small = cls.is_small
        rows.append(
            ComparisonRow(
                f"E X_n at n={n}",
                "linear asymptote (n lambda_1 + a.X_0) v_1 vs exact",
                f"relative error <= {MEAN_ASYMPTOTE_REL:g}" if small else INFORMATIONAL,
                exact=exact.mean,
                asymptotic=asym_mean,
                residual=rel,
                passed=(rel <= MEAN_ASYMPTOTE_REL) if small else None,
                note="" if small else "large urn: error of order n^(Re lambda_2/lambda_1) dominates",
            )
        )

    if not cls.is_small:
        report.skipped.append(f"covariance limit: not a small urn ({cls})")
        return report
    lim = asymptotic_covariance(spec, decomp, tol=tol)
    L = lim.limit
    ex = exact_covariance(spec, n_limit, cap=None, tol=tol)
    V = ex.covariance / lim.normalizer(n_limit)
    label = f"Var X_N / {lim.normalization} at N={n_limit}"
    if cls.kind is UrnKind.STRICTLY_SMALL and np.trace(L) <= 1e-10:
        rows.append(
            ComparisonRow(
                label,
                "exact recursion vs zero limit",
                f"trace < {SIGMA_ZERO_TRACE:g}",
                exact=V,
                asymptotic=L,
                residual=float(np.trace(V)),
                passed=float(np.trace(V)) < SIGMA_ZERO_TRACE,
            )
        )
    elif cls.kind is UrnKind.STRICTLY_SMALL:
        r = _trace_rel(V, L)
        rows.append(
            ComparisonRow(label, "exact recursion vs lambda_1 Sigma_I", f"max entry difference <= {SIGMA_REL:g} trace",
                          exact=V, asymptotic=L, residual=r, passed=r <= SIGMA_REL)
        )
    elif lim.nu2 == 0:
        r = float(np.max(np.abs(V - L)) / np.max(np.abs(L)))
        rows.append(
            ComparisonRow(label, "exact recursion vs critical limit", f"max entry relative <= {TV2_REL:g}",
                          exact=V, asymptotic=L, residual=r, passed=r <= TV2_REL)
        )
    else:
        # log corrections of relative size 1/log n make the raw ratio useless at
        # desk scale; fit Var/n as a polynomial in log n and compare its leading term
        k = 2 * lim.nu2 + 1
        C = _log_poly_leading(spec, n_limit, k, tol)
        r = float(np.max(np.abs(C - L)) / np.max(np.abs(L)))
        rows.append(
            ComparisonRow(
                f"leading log^{k}(n) coefficient of Var X_n / n, fitted on n <= {n_limit}",
                "exact recursion growth fit vs critical limit",
                f"max entry relative <= {TV2_FIT_REL:g}",
                exact=C,
                asymptotic=L,
                residual=r,
                passed=r <= TV2_FIT_REL,
                note=f"raw ratio at N: {float(np.max(np.abs(V - L)) / np.max(np.abs(L))):.3g}",
            )
        )
    if cls.kind is UrnKind.STRICTLY_SMALL and np.trace(L) > 1e-10:
        Sn = sim.cov_hat / lim.normalizer(n)
        r = _trace_rel(Sn, L)
        rows.append(
            ComparisonRow(
                f"Var X_n / n at n={n}",
                "simulation vs lambda_1 Sigma_I",
                INFORMATIONAL,
                simulated=Sn,
                asymptotic=L,
                residual=r,
                note="informational: combines sampling error with the finite-n bias",
            )
        )
    return report


def format_compare(report: ComparisonReport) -> str:
    lines = [f"urn {report.urn}: {report.classification}  (n={report.n}, reps={report.reps}, seed={report.seed})"]
    for r in report.rows:
        flag = {True: "PASS", False: "FAIL", None: "info"}[r.passed]
        res = "" if r.residual is None else f" residual={r.residual:.4g}"
        tol = r.tolerance
        lines.append(f"  [{flag}] {r.quantity}: {r.oracle} ({tol}){res}")
        if r.note:
            lines.append(f"         {r.note}")
    for s in report.skipped:
        lines.append(f"  [skip] {s}")
    lines.append("  result: " + ("pass" if report.passed else "FAIL"))
    return "\n".join(lines)
