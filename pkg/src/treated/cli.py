"""Command-line front end: estimate from CSV, run simulations, run oracles.

Exit codes: 0 success, 1 parse error, 2 validation error, 3 numeric failure.
Every error path writes a single JSON line with an ``error_code`` field to
stderr. Reports are emitted as JSON with stable key ordering and floats
serialized to 17 significant digits so values round-trip bit-exactly; output
is a pure function of the input bytes and flags.

CSV input schema (UTF-8, comma-separated, ``.`` decimal): required columns
``y`` and ``a``, covariates ``x1..xd``, optional oracle-nuisance columns
``pi, mu0, mu1, sigma0, sigma1``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from typing import Optional

import numpy as np

from .data_model import Dataset, EstimandKind, EstimateReport, NuisanceValues, OutcomeKind, KIND_ORDER
from .errors import NumericError, TreatedError, ValidationError
from .nuisance import NuisanceConfig, OutcomeMethod, PropensityMethod, SdMethod
from .estimator import estimate_all
from .simulation import (
    DgpSpec,
    McReport,
    OracleVariances,
    OrderingVerdict,
    oracle_asymptotic_variances,
    run_monte_carlo,
)

REPORT_SCHEMA_VERSION = 1


class CliParseError(Exception):
    """Unreadable input: malformed CSV/JSON, unknown columns, bad flag values."""


# ---------------------------------------------------------------------------
# Canonical JSON: insertion-ordered keys, 17-significant-digit floats.

def _format_float(x: float) -> str:
    if x != x or x in (float("inf"), float("-inf")):
        return "null"
    s = format(x, ".17g")
    # Normalize bare integers so the token stays a JSON number with float type.
    if "e" not in s and "E" not in s and "." not in s:
        s += ".0"
    return s


def dumps_canonical(obj, indent: int = 2) -> str:
    out = io.StringIO()

    def emit(o, depth):
        pad = " " * (indent * depth)
        if o is None:
            out.write("null")
        elif isinstance(o, (bool, np.bool_)):
            out.write("true" if o else "false")
        elif isinstance(o, (int, np.integer)):
            out.write(str(int(o)))
        elif isinstance(o, (float, np.floating)):
            out.write(_format_float(float(o)))
        elif isinstance(o, str):
            out.write(json.dumps(o))
        elif isinstance(o, dict):
            if not o:
                out.write("{}")
                return
            out.write("{\n")
            items = list(o.items())
            for i, (k, v) in enumerate(items):
                out.write(pad + " " * indent + json.dumps(str(k)) + ": ")
                emit(v, depth + 1)
                out.write(",\n" if i < len(items) - 1 else "\n")
            out.write(pad + "}")
        elif isinstance(o, (list, tuple)):
            seq = list(o)
            if not seq:
                out.write("[]")
                return
            out.write("[\n")
            for i, v in enumerate(seq):
                out.write(pad + " " * indent)
                emit(v, depth + 1)
                out.write(",\n" if i < len(seq) - 1 else "\n")
            out.write(pad + "]")
        else:
            raise TypeError(f"cannot serialize {type(o)!r}")

    emit(obj, 0)
    out.write("\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# CSV ingestion.

_ORACLE_COLUMNS = ("pi", "mu0", "mu1", "sigma0", "sigma1")


def read_csv_dataset(path: str, outcome_kind: OutcomeKind):
    """Parse the CSV schema into a Dataset plus any oracle nuisance columns."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise CliParseError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise CliParseError("empty CSV file")
    header = [h.strip() for h in rows[0]]
    for required in ("y", "a"):
        if required not in header:
            raise CliParseError(f"missing required column '{required}'")
    x_names = sorted((h for h in header if h.startswith("x")),
                     key=lambda s: (len(s), s))
    d = len(x_names)
    expected_x = [f"x{i}" for i in range(1, d + 1)]
    if x_names != expected_x:
        raise CliParseError(
            f"covariate columns must be named x1..x{d}; got {x_names}"
        )
    known = {"y", "a", *expected_x, *_ORACLE_COLUMNS}
    unknown = [h for h in header if h not in known]
    if unknown:
        raise CliParseError(f"unknown columns {unknown}")
    if len(set(header)) != len(header):
        raise CliParseError("duplicate column names")

    idx = {name: header.index(name) for name in header}
    body = [r for r in rows[1:] if r and any(cell.strip() for cell in r)]
    if not body:
        raise CliParseError("CSV has a header but no data rows")

    def column(name):
        col = np.empty(len(body))
        for i, row in enumerate(body):
            if len(row) != len(header):
                raise CliParseError(f"row {i + 2} has {len(row)} cells, expected {len(header)}")
            cell = row[idx[name]].strip()
            try:
                col[i] = float(cell)
            except ValueError as exc:
                raise CliParseError(f"row {i + 2}, column '{name}': bad number {cell!r}") from exc
        return col

    y = column("y")
    a = column("a")
    x = np.column_stack([column(name) for name in expected_x]) if d else np.empty((len(body), 0))
    oracle_cols = {name: column(name) for name in _ORACLE_COLUMNS if name in idx}
    dataset = Dataset(y=y, a=a, x=x, outcome_kind=outcome_kind)
    return dataset, oracle_cols


def _oracle_values(dataset: Dataset, cols: dict, clip_eps: float) -> Optional[NuisanceValues]:
    if not cols:
        return None
    if "pi" not in cols or "mu0" not in cols:
        raise ValidationError("oracle nuisances need at least the 'pi' and 'mu0' columns")
    has_sigma = "sigma0" in cols and "sigma1" in cols
    return NuisanceValues(
        pi_hat=np.clip(cols["pi"], clip_eps, 1.0 - clip_eps),
        mu0_hat=cols["mu0"],
        mu1_hat=cols.get("mu1"),
        sigma0_hat=cols["sigma0"] if has_sigma else None,
        sigma1_hat=cols["sigma1"] if has_sigma else None,
        clip_eps=clip_eps,
    )


# ---------------------------------------------------------------------------
# Report serialization.

def report_to_dict(report: EstimateReport) -> dict:
    per_kind = {}
    for kind in KIND_ORDER:
        if kind not in report.per_kind:
            continue
        inf = report.per_kind[kind]
        if inf.variance is not None:
            entry = {"variance": inf.variance}
        else:
            entry = {
                "conservative_simple": inf.conservative_simple,
                "conservative_sigma": inf.conservative_sigma,
                "conservative_fh": inf.conservative_fh,
                "variance_used": inf.variance_used,
            }
        entry["ci_lower"] = inf.ci_lower
        entry["ci_upper"] = inf.ci_upper
        per_kind[kind.value] = entry
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "psi_hat": report.psi_hat,
        "n": report.n,
        "p_n_a": report.p_n_a,
        "ci_level": report.ci_level,
        "per_kind": per_kind,
        "diagnostics": dict(report.diagnostics),
    }


def _verdict_to_dict(v: OrderingVerdict) -> dict:
    return {
        "pair": f"{v.kind_small.value}<={v.kind_large.value}",
        "scaled_diff": v.scaled_diff,
        "scaled_se": v.scaled_se,
        "holds": v.holds,
    }


def mc_report_to_dict(report: McReport) -> dict:
    per_kind = {}
    for kind in KIND_ORDER:
        st = report.per_kind[kind]
        per_kind[kind.value] = {
            "empirical_var_scaled": st.empirical_var_scaled,
            "empirical_var_scaled_se": st.empirical_var_scaled_se,
            "mean_variance_estimate": st.mean_variance_estimate,
            "coverage": st.coverage,
            "ci_level": st.ci_level,
        }
    extras = {}
    for key, value in report.extras.items():
        if key == "ordering":
            extras[key] = [_verdict_to_dict(v) for v in value]
        elif key == "satt_vs_patt":
            extras[key] = _verdict_to_dict(value) if value is not None else None
        else:
            extras[key] = value
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "n": report.n,
        "reps": report.reps,
        "seed": report.seed,
        "ci_level": report.ci_level,
        "failed_reps": report.failed_reps,
        "failure_messages": list(report.failure_messages),
        "per_kind": per_kind,
        "extras": extras,
    }


def oracle_to_dict(oracle: OracleVariances, seed: int) -> dict:
    def mc(v):
        return None if v is None else {"value": v.value, "se": v.se}

    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "draws": oracle.draws,
        "seed": seed,
        "p_a": oracle.p_a,
        "psi_patt": mc(oracle.psi_patt),
        "tau": oracle.tau,
        "asymptotic_variances": {
            "patt": mc(oracle.patt),
            "actt": mc(oracle.actt),
            "swatt": mc(oracle.swatt),
            "catt": mc(oracle.catt),
            "satt": mc(oracle.satt),
            "matt": mc(oracle.matt),
        },
        "sigma_bound": mc(oracle.sigma_bound),
        "fh_bound": mc(oracle.fh_bound),
    }


# ---------------------------------------------------------------------------
# Commands.

def _write_output(text: str, output: Optional[str]):
    if output is None or output == "-":
        sys.stdout.write(text)
    else:
        with open(output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _parse_estimands(value: str):
    if value.strip().lower() == "all":
        return None
    kinds = []
    for token in value.split(","):
        token = token.strip().lower()
        try:
            kinds.append(EstimandKind(token))
        except ValueError as exc:
            raise CliParseError(f"unknown estimand {token!r}") from exc
    if not kinds:
        raise CliParseError("empty estimand list")
    return kinds


def _load_spec(path: str) -> DgpSpec:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise CliParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliParseError(f"malformed JSON in {path}: {exc}") from exc
    try:
        return DgpSpec.from_dict(data)
    except ValidationError as exc:
        # A spec file that does not match the schema is unreadable input.
        raise CliParseError(str(exc)) from exc


def cmd_estimate(args) -> int:
    outcome_kind = OutcomeKind.BINARY if args.binary_outcome else OutcomeKind.CONTINUOUS
    dataset, oracle_cols = read_csv_dataset(args.input, outcome_kind)
    estimands = _parse_estimands(args.estimands)
    oracle = None
    if args.nuisance == "fitted":
        methods = dict(propensity_method=PropensityMethod.LOGISTIC_IRLS,
                       outcome_method=OutcomeMethod.LEAST_SQUARES,
                       sd_method=SdMethod.SQUARED_RESIDUAL_REGRESSION)
    else:
        if args.nuisance == "auto" and not oracle_cols:
            methods = dict(propensity_method=PropensityMethod.LOGISTIC_IRLS,
                           outcome_method=OutcomeMethod.LEAST_SQUARES,
                           sd_method=SdMethod.SQUARED_RESIDUAL_REGRESSION)
        else:
            oracle = _oracle_values(dataset, oracle_cols, args.clip_eps)
            if oracle is None:
                raise ValidationError(
                    "--nuisance oracle requires 'pi' and 'mu0' CSV columns"
                )
            has_sigma = oracle.sigma0_hat is not None
            methods = dict(propensity_method=PropensityMethod.ORACLE,
                           outcome_method=OutcomeMethod.ORACLE,
                           sd_method=SdMethod.ORACLE if has_sigma else SdMethod.SKIP)
    config = NuisanceConfig(folds=args.folds, clip_eps=args.clip_eps,
                            seed=args.seed, **methods)
    report = estimate_all(dataset, config, oracle=oracle,
                          estimands=estimands, ci_level=args.ci_level)
    _write_output(dumps_canonical(report_to_dict(report)), args.output)
    return 0


def cmd_simulate(args) -> int:
    spec = _load_spec(args.spec)
    config = NuisanceConfig(folds=args.folds, clip_eps=args.clip_eps, seed=args.seed)
    report = run_monte_carlo(
        spec, n=args.n, reps=args.reps, seed=args.seed,
        nuisance_config=config,
        oracle_nuisances=args.oracle_nuisances,
        ci_level=args.ci_level,
        patt_draws=args.patt_draws,
    )
    _write_output(dumps_canonical(mc_report_to_dict(report)), args.output)
    verdicts = report.extras.get("ordering", [])
    summary = "; ".join(
        f"{v.kind_small.value}<={v.kind_large.value}:{'ok' if v.holds else 'VIOLATED'}"
        for v in verdicts
    ) or "n/a (single replication)"
    print(f"ordering verdicts: {summary}", file=sys.stderr)
    return 0


def cmd_oracle(args) -> int:
    if args.draws < 1:
        raise CliParseError("--draws must be >= 1")
    spec = _load_spec(args.spec)
    oracle = oracle_asymptotic_variances(spec, draws=args.draws, seed=args.seed)
    _write_output(dumps_canonical(oracle_to_dict(oracle, args.seed)), args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treated",
        description="Treatment-effect-on-the-treated estimation and simulation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate from a CSV file")
    est.add_argument("--input", required=True, help="CSV with columns y,a,x1..xd")
    est.add_argument("--output", default=None, help="output path (default stdout)")
    est.add_argument("--estimands", default="all",
                     help="comma-separated subset of patt,actt,swatt,catt,satt,matt")
    est.add_argument("--ci-level", type=float, default=0.95)
    est.add_argument("--nuisance", choices=("auto", "fitted", "oracle"), default="auto",
                     help="auto uses oracle CSV columns when present")
    est.add_argument("--folds", type=int, default=1)
    est.add_argument("--clip-eps", type=float, default=0.01)
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--binary-outcome", action="store_true",
                     help="declare the outcome binary (enables the sharp swatt bound)")
    est.set_defaults(func=cmd_estimate)

    sim = sub.add_parser("simulate", help="run a seeded replication study")
    sim.add_argument("--spec", required=True, help="DGP spec JSON")
    sim.add_argument("--output", default=None)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--reps", type=int, required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--oracle-nuisances", action="store_true")
    sim.add_argument("--ci-level", type=float, default=0.95)
    sim.add_argument("--folds", type=int, default=1)
    sim.add_argument("--clip-eps", type=float, default=0.01)
    sim.add_argument("--patt-draws", type=int, default=2_000_000)
    sim.set_defaults(func=cmd_simulate)

    orc = sub.add_parser("oracle", help="brute-force true variances for a DGP spec")
    orc.add_argument("--spec", required=True)
    orc.add_argument("--output", default=None)
    orc.add_argument("--draws", type=int, default=10_000_000)
    orc.add_argument("--seed", type=int, default=0)
    orc.set_defaults(func=cmd_oracle)
    return parser


def _emit_error(code: str, message: str):
    line = json.dumps({"error_code": code, "message": message})
    print(line, file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed its message; map usage errors to parse errors
        if exc.code in (0, None):
            return 0
        _emit_error("ParseError", "invalid command line arguments")
        return 1
    try:
        return args.func(args)
    except CliParseError as exc:
        _emit_error("ParseError", str(exc))
        return 1
    except ValidationError as exc:
        _emit_error(type(exc).__name__.removesuffix("Error"), str(exc))
        return 2
    except NumericError as exc:
        _emit_error(type(exc).__name__.removesuffix("Error"), str(exc))
        return 3
    except TreatedError as exc:
        _emit_error(type(exc).__name__.removesuffix("Error"), str(exc))
        return 2


if __name__ == "__main__":
    sys.exit(main())
