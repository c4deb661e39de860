"""Command-line front end.

Subcommands: ``estimate`` (regression inference on a CSV dataset),
``simulate`` (coverage / consistency studies), ``bound`` (normal
approximation bounds), ``diagnose`` (assumption diagnostics). All reports
are JSON with a fixed, versioned field layout; output is byte-stable for a
given config and seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import fields as dc_fields

import numpy as np

from mwclust.clusters import ClusterScheme, build_index
from mwclust.dgp import DgpSpec, structure, true_bias_term
from mwclust.diagnostics import assumption_ratios, leverage_L, rank_condition
from mwclust.harness import run_consistency, run_coverage
from mwclust.regression import (
    RegressionData,
    SingularDesignError,
    fwl_residualize,
    theta_inference,
)
from mwclust.stein import wasserstein_bound
from mwclust.variance import jacobi_eigh

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_DATA = 2
EXIT_SINGULAR = 3

_DGP_KEYS = {f.name for f in dc_fields(DgpSpec)}
_SIMULATE_KEYS = {
    "dgp",
    "mode",
    "target",
    "reps",
    "seed",
    "sweep",
    "demean",
    "write_data",
    "out",
    "format",
}
_BOUND_KEYS = {"dgp", "method", "reps", "sweep", "out", "format"}
_DIAGNOSE_KEYS = {"dgp", "out", "format"}


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _report(command: str, config_echo: dict, results: dict, warnings: list[str]) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config_echo": config_echo,
        "results": results,
        "warnings": warnings,
    }
    return json.dumps(doc, sort_keys=True, indent=2, default=_json_default) + "\n"


def _emit(text: str, out_path: str | None):
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_config(path: str, allowed: set[str]) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path}: top level must be an object")
    for key in cfg:
        if key not in allowed:
            raise ConfigError(f"config {path}: unknown key {key!r}")
    if "dgp" in cfg:
        if not isinstance(cfg["dgp"], dict):
            raise ConfigError(f"config {path}: 'dgp' must be an object")
        for key in cfg["dgp"]:
            if key not in _DGP_KEYS:
                raise ConfigError(f"config {path}: unknown key 'dgp.{key}'")
    return cfg


def _dgp_from_config(cfg: dict) -> DgpSpec:
    if "dgp" not in cfg:
        raise ConfigError("config is missing required key 'dgp'")
    try:
        return DgpSpec(**cfg["dgp"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid dgp spec: {exc}") from exc


def _read_table(path: str, columns: list[str]):
    """Read required columns from a comma-delimited UTF-8 file with a header."""
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: missing header row")
        for col in columns:
            if col not in reader.fieldnames:
                raise DataError(f"{path}: missing required column {col!r}")
        rows = {col: [] for col in columns}
        for lineno, row in enumerate(reader, start=2):
            for col in columns:
                val = row.get(col)
                if val is None or val == "":
                    raise DataError(f"{path}: row {lineno}: missing value in column {col!r}")
                rows[col].append(val)
    if not rows[columns[0]]:
        raise DataError(f"{path}: no data rows")
    return rows


def _floats(path: str, col: str, values: list[str]) -> np.ndarray:
    out = np.empty(len(values))
    for k, v in enumerate(values):
        try:
            out[k] = float(v)
        except ValueError:
            raise DataError(
                f"{path}: row {k + 2}: column {col!r}: not a number: {v!r}"
            ) from None
    return out


def _build_regression(args) -> tuple[RegressionData, np.ndarray | None]:
    cluster_cols = args.cluster.split(",")
    if len(cluster_cols) != 2:
        raise DataError("--cluster requires exactly two comma-separated columns")
    control_cols = [c for c in (args.controls.split(",") if args.controls else []) if c]
    columns = [args.y, args.d, *control_cols, *cluster_cols]
    if args.weight:
        columns.append(args.weight)
    table = _read_table(args.data, columns)
    Y = _floats(args.data, args.y, table[args.y])
    D = _floats(args.data, args.d, table[args.d])
    n = Y.size
    controls = np.column_stack(
        [np.ones(n)] + [_floats(args.data, c, table[c]) for c in control_cols]
    )
    scheme = ClusterScheme.from_labels(
        table[cluster_cols[0]], table[cluster_cols[1]], dims=tuple(cluster_cols)
    )
    weight = _floats(args.data, args.weight, table[args.weight]) if args.weight else None
    if weight is not None:
        if (weight <= 0).any():
            raise DataError(f"{args.data}: weight column {args.weight!r} must be positive")
        # analytic weights: rescale rows, clusters untouched
        root = np.sqrt(weight)
        Y = Y * root
        D = D * root
        controls = controls * root[:, None]
    names = (args.d, "(intercept)", *control_cols)
    data = RegressionData(Y=Y, D=D, controls=controls, scheme=scheme, column_names=names)
    return data, weight


def cmd_estimate(args) -> int:
    data, _ = _build_regression(args)
    index = build_index(data.scheme)
    res = theta_inference(data, index)
    warnings = list(res.warnings)
    sigma_sq = res.sigma_sq
    V = res.V_hat
    if args.dof_correction:
        factor = 1.0
        for sizes in index.cluster_sizes:
            if sizes.size > 1:
                factor *= sizes.size / (sizes.size - 1.0)
        sigma_sq *= factor
        V = V * factor
    if args.psd_project and V is not None:
        vals, vecs = jacobi_eigh(V)
        V = vecs @ np.diag(np.clip(vals, 0.0, None)) @ vecs.T
        V = 0.5 * (V + V.T)
        sigma_sq = max(sigma_sq, 0.0)
    negative = sigma_sq < 0
    sigma = float(np.sqrt(sigma_sq)) if not negative else None
    from mwclust.regression import Z_CRIT_95

    ci = (
        [res.theta_hat - Z_CRIT_95 * sigma, res.theta_hat + Z_CRIT_95 * sigma]
        if sigma is not None
        else None
    )
    diag = _data_diagnostics(data, index, res, warnings)
    results = {
        "n": data.n,
        "theta_hat": res.theta_hat,
        "sigma_hat": sigma,
        "sigma_sq": sigma_sq,
        "t_stat": (res.theta_hat / sigma) if sigma else None,
        "ci_95": ci,
        "beta_hat": res.beta_hat,
        "V_hat_diag": np.diag(V) if V is not None else None,
        "negative_variance": bool(negative),
        "diagnostics": diag,
    }
    echo = {
        "data": args.data,
        "y": args.y,
        "d": args.d,
        "controls": args.controls or "",
        "cluster": args.cluster,
        "weight": args.weight or "",
        "psd_project": bool(args.psd_project),
        "dof_correction": bool(args.dof_correction),
    }
    _emit(_report("estimate", echo, results, warnings), args.out)
    return EXIT_OK


def _data_diagnostics(data: RegressionData, index, res, warnings: list[str]) -> dict:
    report = None
    lam = None
    try:
        scores = res.residuals * res.D_tilde
        from mwclust.clusters import WeightedSample
        from mwclust.variance import cgm_raw

        est = cgm_raw(
            WeightedSample(W=scores[:, None], omega=np.ones(data.n)), index
        )
        lam = est.lambda_min
        if lam > 0:
            report = assumption_ratios(index, res.D_tilde, lam).to_dict()
        else:
            report = {"L_per_dim": leverage_L(index, res.D_tilde)}
            warnings.append(
                "estimated score variance not positive definite; regularity ratios omitted"
            )
    except ValueError as exc:
        warnings.append(f"diagnostics unavailable: {exc}")
    rank = rank_condition(data.X)
    if report is not None:
        report["rank_lambda"] = rank
        for w in report.get("warnings", []):
            if w not in warnings:
                warnings.append(w)
        report.pop("warnings", None)
    return report


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config, _SIMULATE_KEYS)
    spec = _dgp_from_config(cfg)
    mode = cfg.get("mode", "coverage")
    reps = int(args.reps if args.reps is not None else cfg.get("reps", 1000))
    seed = int(args.seed if args.seed is not None else cfg.get("seed", 0))
    out = args.out or cfg.get("out")
    fmt = args.format or cfg.get("format", "json")
    warnings: list[str] = []
    if args.threads and args.threads > 1:
        warnings.append("threads > 1 requested; running sequentially")
    scheme, oracle = structure(spec)
    if mode == "coverage":
        target = cfg.get("target", "mean")
        report = run_coverage(spec, target=target, reps=reps, seed=seed)
        results = report.to_dict()
        if cfg.get("write_data"):
            if target != "regression-theta":
                raise ConfigError("write_data requires target 'regression-theta'")
            results["first_replication"] = _write_replication(
                cfg["write_data"], spec, seed
            )
    elif mode == "consistency":
        sweep = cfg.get("sweep")
        if not sweep:
            raise ConfigError("consistency mode requires a nonempty 'sweep' list")
        report = run_consistency(
            spec, sweep, reps=reps, seed=seed, demean=bool(cfg.get("demean", False))
        )
        results = report.to_dict()
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    results["true_Q"] = oracle.true_Q
    results["bias_term"] = true_bias_term(oracle)
    results["n"] = scheme.n
    warnings.extend(results.pop("warnings", []))
    echo = dict(cfg)
    echo.update({"reps": reps, "seed": seed, "mode": mode})
    if fmt == "csv":
        if mode != "consistency":
            raise ConfigError("csv format is only available for the consistency trace")
        _emit(_trace_csv(results["trace"]), out)
    else:
        _emit(_report("simulate", echo, results, warnings), out)
    return EXIT_OK


def _trace_csv(trace: list[dict]) -> str:
    cols = ["M", "n", "mean_var_ratio", "var_ratio_sd", "mc_se"]
    lines = [",".join(cols)]
    for row in trace:
        lines.append(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in cols))
    return "\n".join(lines) + "\n"


def _write_replication(path: str, spec: DgpSpec, seed: int) -> dict:
    """Write replication 0 as a dataset and return its in-memory estimates."""
    from mwclust.dgp import draw
    from mwclust.harness import INTERCEPT_TRUE, THETA_TRUE, _regressor

    scheme, _ = structure(spec)
    g, h = scheme.labels
    W = draw(DgpSpec(**{**spec.__dict__, "seed": seed}), 0)
    D = _regressor(seed, 0, g, h, spec.M)
    Y = THETA_TRUE * D + INTERCEPT_TRUE + W
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("y,d,g,h\n")
        for k in range(scheme.n):
            fh.write(f"{float(Y[k])!r},{float(D[k])!r},{g[k]},{h[k]}\n")
    data = RegressionData(
        Y=Y, D=D, controls=np.ones((scheme.n, 1)), scheme=scheme,
        column_names=("d", "(intercept)"),
    )
    res = theta_inference(data, build_index(scheme))
    return {"path": path, "theta_hat": res.theta_hat, "sigma_hat": res.sigma_hat}


def cmd_bound(args) -> int:
    cfg = _load_config(args.config, _BOUND_KEYS)
    spec = _dgp_from_config(cfg)
    method = cfg.get("method", "monte-carlo")
    reps = int(args.reps if args.reps is not None else cfg.get("reps", 10_000))
    sweep = cfg.get("sweep") or [spec.M]
    results = {"bounds": []}
    for M in sweep:
        spec_m = DgpSpec(**{**spec.__dict__, "M": int(M)})
        rep = wasserstein_bound(spec_m, method=method, reps=reps)
        entry = rep.to_dict()
        entry["M"] = int(M)
        results["bounds"].append(entry)
    echo = dict(cfg)
    echo.update({"method": method, "reps": reps, "sweep": list(sweep)})
    _emit(_report("bound", echo, results, []), args.out or cfg.get("out"))
    return EXIT_OK


def cmd_diagnose(args) -> int:
    warnings: list[str] = []
    if args.config:
        cfg = _load_config(args.config, _DIAGNOSE_KEYS)
        spec = _dgp_from_config(cfg)
        scheme, oracle = structure(spec)
        index = build_index(scheme)
        report = assumption_ratios(
            index,
            np.ones(scheme.n),
            oracle.true_Q,
            dependent=oracle.dependent,
        )
        results = report.to_dict()
        results["true_Q"] = oracle.true_Q
        warnings.extend(results.pop("warnings", []))
        echo = dict(cfg)
        _emit(_report("diagnose", echo, results, warnings), args.out or cfg.get("out"))
        return EXIT_OK
    if not args.data or not args.cluster:
        raise ConfigError("diagnose requires either --config or --data with --cluster")
    cluster_cols = args.cluster.split(",")
    if len(cluster_cols) != 2:
        raise DataError("--cluster requires exactly two comma-separated columns")
    if args.d:
        data, _ = _build_regression(args)
        index = build_index(data.scheme)
        D_tilde, _ = fwl_residualize(data)
        weights = D_tilde
    else:
        columns = list(cluster_cols)
        if args.weight:
            columns.append(args.weight)
        table = _read_table(args.data, columns)
        scheme = ClusterScheme.from_labels(
            table[cluster_cols[0]], table[cluster_cols[1]], dims=tuple(cluster_cols)
        )
        index = build_index(scheme)
        weights = (
            _floats(args.data, args.weight, table[args.weight])
            if args.weight
            else np.ones(scheme.n)
        )
    results = {"L_per_dim": leverage_L(index, weights), "n": index.n}
    warnings.append(
        "data mode: dependence indicator unobservable; only leverage reported"
    )
    echo = {
        "data": args.data,
        "cluster": args.cluster,
        "d": args.d or "",
        "weight": args.weight or "",
    }
    _emit(_report("diagnose", echo, results, warnings), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mwclust",
        description="Inference under multi-way cluster dependence",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_data_flags(p, require_model: bool):
        p.add_argument("--data", required=require_model, help="CSV dataset path")
        p.add_argument("--y", required=require_model, help="outcome column")
        p.add_argument("--d", required=require_model, help="regressor-of-interest column")
        p.add_argument("--controls", default="", help="comma-separated control columns")
        p.add_argument("--cluster", required=require_model, help="two cluster columns, comma-separated")
        p.add_argument("--weight", default="", help="optional weight column")

    est = sub.add_parser("estimate", help="regression inference on a dataset")
    add_data_flags(est, require_model=True)
    est.add_argument("--out", default=None)
    est.add_argument("--format", choices=["json"], default="json")
    est.add_argument("--psd-project", action="store_true")
    est.add_argument("--dof-correction", action="store_true")
    est.set_defaults(func=cmd_estimate)

    sim = sub.add_parser("simulate", help="run a replication study from a config")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", default=None)
    sim.add_argument("--format", choices=["json", "csv"], default=None)
    sim.add_argument("--reps", type=int, default=None)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--threads", type=int, default=1)
    sim.set_defaults(func=cmd_simulate)

    bnd = sub.add_parser("bound", help="normal-approximation bound for a design")
    bnd.add_argument("--config", required=True)
    bnd.add_argument("--out", default=None)
    bnd.add_argument("--reps", type=int, default=None)
    bnd.set_defaults(func=cmd_bound)

    diag = sub.add_parser("diagnose", help="assumption diagnostics")
    diag.add_argument("--config", default=None)
    add_data_flags(diag, require_model=False)
    diag.add_argument("--out", default=None)
    diag.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SingularDesignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SINGULAR


if __name__ == "__main__":
    sys.exit(main())
