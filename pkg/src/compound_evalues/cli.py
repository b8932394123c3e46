"""Command-line frontend: file ingestion, dispatch, and persistence.

One binary with subcommands; every input is CSV (RFC 4180, UTF-8, headers
mandatory) and every structured output is JSON or CSV. Exit codes: 0 on
success, 1 for input errors, 2 for numerical failures. Values in a config
file override command-line flags, which override built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .asymptotics import estimate_compound_budget
from .core import Calibrator, EVector, PVector, calibrate_e_to_p, calibrate_p_to_e
from .errors import ConfigError, DataError, NumericalError
from .mixtures import (
    CuiSolver,
    SummaryStats,
    _mean_scale_loglik_grid,
    _scale_loglik_grid,
    build_localization,
    default_variance_grid,
    npmle_certificate,
    npmle_fit,
)
from .procedures import (
    MergeSpec,
    ProcedureResult,
    by_procedure,
    derandomize,
    ebh,
    implied_compound_evalues,
    merge_pvalues,
    pbh,
    weighted_pbh,
)
from .simbench import (
    Scenario,
    TestingProblem,
    default_scenarios,
    generate_scenario_data,
    plot_data_rows,
    run_study,
    write_results_csv,
)

SUBCOMMANDS = (
    "ebh",
    "pbh",
    "by",
    "epbh",
    "calibrate",
    "npmle",
    "cui",
    "odp",
    "derandomize",
    "merge",
    "validate",
    "simulate",
)


@dataclass
class RunConfig:
    """Parsed subcommand plus its effective (config-over-flag) options."""

    subcommand: str
    options: dict


# ---------------------------------------------------------------------------
# ingestion


def ingest_data(path, format: str, as_type: str = "e"):
    """Read one of the three CSV formats into validated structures.

    ``values`` yields an EVector (``as_type='e'``) or PVector; ``raw_matrix``
    and ``summary_stats`` yield TestingProblem. Malformed rows raise
    DataError with the offending line number.
    """
    if format == "values":
        cls = EVector if as_type == "e" else PVector
        return cls.from_csv(path)
    if format == "raw_matrix":
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header:
                raise DataError("raw matrix CSV is empty")
            width = len(header)
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != width:
                    raise DataError(f"line {lineno}: expected {width} columns, got {len(row)}")
                try:
                    vals = [float(v) for v in row]
                except ValueError as exc:
                    raise DataError(f"line {lineno}: non-numeric entry") from exc
                if any(np.isnan(vals)):
                    raise DataError(f"line {lineno}: NaN entry")
                rows.append(vals)
        if not rows:
            raise DataError("raw matrix CSV has no data rows")
        return TestingProblem.from_data(np.array(rows))
    if format == "summary_stats":
        xbar, s2, sh2, ns = [], [], [], []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            needed = {"xbar", "s2", "sigma_hat2", "n"}
            if reader.fieldnames is None or not needed.issubset(reader.fieldnames):
                raise DataError("summary CSV needs columns xbar,s2,sigma_hat2,n")
            for lineno, row in enumerate(reader, start=2):
                try:
                    st = SummaryStats(
                        xbar=float(row["xbar"]),
                        s2=float(row["s2"]),
                        sigma_hat2=float(row["sigma_hat2"]),
                        n=int(row["n"]),
                    )
                except (TypeError, ValueError) as exc:
                    raise DataError(f"line {lineno}: {exc}") from exc
                if np.isnan([st.xbar, st.s2, st.sigma_hat2]).any():
                    raise DataError(f"line {lineno}: NaN entry")
                xbar.append(st.xbar)
                s2.append(st.s2)
                sh2.append(st.sigma_hat2)
                ns.append(st.n)
        if not xbar:
            raise DataError("summary CSV has no data rows")
        if len(set(ns)) != 1:
            raise DataError("summary CSV must use one group size n")
        return TestingProblem.from_summaries(xbar, s2, sh2, ns[0])
    raise ConfigError(f"unknown format {format!r}")


def _load_config_file(path) -> dict:
    text = open(path, "rb").read()
    if str(path).endswith(".toml"):
        try:
            import tomllib  # py >= 3.11
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text.decode("utf-8"))
    return json.loads(text.decode("utf-8"))


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_result(opts, result: ProcedureResult, values: Optional[np.ndarray] = None) -> None:
    if opts.get("out"):
        _write_json(opts["out"], result.to_json_dict())
    else:
        json.dump(result.to_json_dict(), sys.stdout, sort_keys=True)
        sys.stdout.write("\n")
    if opts.get("csv") and values is not None:
        mask = result.mask(values.size)
        with open(opts["csv"], "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "value", "rejected"])
            for i, (v, rej) in enumerate(zip(values, mask), start=1):
                writer.writerow([i, repr(float(v)), int(rej)])


# ---------------------------------------------------------------------------
# subcommand implementations


def _cmd_ebh(opts):
    e = ingest_data(opts["input"], "values", as_type="e")
    _write_result(opts, ebh(e, opts["alpha"]), e.values)


def _cmd_pbh(opts):
    p = ingest_data(opts["input"], "values", as_type="p")
    _write_result(opts, pbh(p, opts["alpha"]), p.values)


def _cmd_by(opts):
    p = ingest_data(opts["input"], "values", as_type="p")
    _write_result(opts, by_procedure(p, opts["alpha"]), p.values)


def _cmd_epbh(opts):
    p = ingest_data(opts["pvalues"], "values", as_type="p")
    w = ingest_data(opts["weights"], "values", as_type="e")
    _write_result(opts, weighted_pbh(p, w, opts["alpha"]), p.values)


def _cmd_calibrate(opts):
    if opts["direction"] == "e-to-p":
        e = ingest_data(opts["input"], "values", as_type="e")
        out = calibrate_e_to_p(e)
    else:
        p = ingest_data(opts["input"], "values", as_type="p")
        if opts["kind"] == "power":
            cal = Calibrator.power(opts["kappa"])
        else:
            cal = Calibrator.by_step(p.K, opts["alpha"])
        out = calibrate_p_to_e(p, cal)
    out.to_csv(opts["out"])


def _grid_from_opts(opts):
    return default_variance_grid(opts["grid_min"], opts["grid_max"], opts["grid_size"])


def _cmd_npmle(opts):
    vec = ingest_data(opts["input"], "values", as_type="e")
    grid = _grid_from_opts(opts)
    g = npmle_fit(vec.values, opts["nu"], grid)
    loglik, gap = npmle_certificate(g, vec.values, opts["nu"])
    _write_json(
        opts["out"],
        {
            "support": list(map(float, g.support)),
            "weights": list(map(float, g.weights)),
            "loglik": loglik,
            "gap": gap,
        },
    )


def _plugin_log_parts(problem: TestingProblem, lam: float, grid):
    """NPMLE fit plus vectorized numerator/denominator log-likelihoods."""
    if problem.data is None:
        raise DataError("this subcommand needs a raw data matrix")
    nu = problem.n - 1
    g = npmle_fit(problem.sigma_hat2, nu, grid)
    keep = g.weights > 0
    atoms = g.support[keep]
    logw = np.log(g.weights[keep])
    sumx = problem.data.sum(axis=1)
    sumsq = problem.n * problem.s2
    log_num = logsumexp(
        _mean_scale_loglik_grid(sumsq[:, None], sumx[:, None], problem.n, lam, atoms[None, :])
        + logw[None, :],
        axis=1,
    )
    log_den_eb = logsumexp(
        _scale_loglik_grid(sumsq[:, None], problem.n, atoms[None, :]) + logw[None, :], axis=1
    )
    return g, sumsq, log_num, log_den_eb


def _emit_evalues(opts, values: np.ndarray) -> None:
    evec = EVector(values)
    evec.to_csv(opts["out"])
    if opts.get("alpha") is not None and opts.get("result"):
        _write_json(opts["result"], ebh(evec, opts["alpha"]).to_json_dict())


def _cmd_odp(opts):
    problem = ingest_data(opts["input"], "raw_matrix")
    grid = _grid_from_opts(opts)
    _, _, log_num, log_den = _plugin_log_parts(problem, opts["lam"], grid)
    with np.errstate(over="ignore"):
        _emit_evalues(opts, np.exp(log_num - log_den))


def _cmd_cui(opts):
    problem = ingest_data(opts["input"], "raw_matrix")
    grid = _grid_from_opts(opts)
    nu = problem.n - 1
    _, sumsq, log_num, _ = _plugin_log_parts(problem, opts["lam"], grid)
    loc = build_localization(problem.sigma_hat2, opts["delta"])
    solver = CuiSolver(loc, grid, nu)
    log_den = np.empty(problem.K)
    for k in np.argsort(sumsq):
        log_den[k] = solver.log_denominator(_scale_loglik_grid(sumsq[k], problem.n, grid))
    with np.errstate(over="ignore"):
        _emit_evalues(opts, np.exp(log_num - log_den))


def _cmd_derandomize(opts):
    paths = opts["inputs"]
    weights = opts["weights"]
    if weights is None:
        weights = [1.0 / len(paths)] * len(paths)
    if len(weights) != len(paths):
        raise ConfigError("need one weight per input result")
    alphas = opts["alphas"] or [opts["alpha"]] * len(paths)
    if len(alphas) != len(paths):
        raise ConfigError("need one alpha per input result")
    K = opts["k"]
    runs = []
    for path, a, w in zip(paths, alphas, weights):
        with open(path, encoding="utf-8") as fh:
            result = ProcedureResult.from_json_dict(json.load(fh))
        runs.append((implied_compound_evalues(result, K, a), w))
    combined = derandomize(runs)
    _emit_evalues(opts, combined.values)


def _cmd_merge(opts):
    p = ingest_data(opts["pvalues"], "values", as_type="p")
    e = ingest_data(opts["evalues"], "values", as_type="e")
    spec = MergeSpec.twice_mean() if opts["kind"] == "twice_mean" else MergeSpec.geometric()
    merged = merge_pvalues(p, e, spec)
    payload = {"kind": opts["kind"], "merged_p": merged}
    if opts.get("out"):
        _write_json(opts["out"], payload)
    else:
        json.dump(payload, sys.stdout, sort_keys=True)
        sys.stdout.write("\n")


_VALIDATE_CONSTRUCTIONS = ("constant", "exact_lr", "odp_oracle", "sum_of_squares", "implied_ebh")


def _validate_construction(name: str, lam: float, alpha: float):
    if name == "constant":
        return lambda pr: EVector(np.ones(pr.K), null_mask=pr.null_mask)
    if name == "exact_lr":

        def lr(pr):
            sigma = np.sqrt(pr.true_sigma2)
            sumx = pr.data.sum(axis=1)
            vals = np.exp(lam * sumx / sigma - 0.5 * pr.n * lam**2)
            return EVector(vals, null_mask=pr.null_mask)

        return lr
    if name == "odp_oracle":

        def odp(pr):
            atoms, counts = np.unique(pr.true_sigma2, return_counts=True)
            logw = np.log(counts / counts.sum())
            sumx = pr.data.sum(axis=1)
            sumsq = pr.n * pr.s2
            log_num = logsumexp(
                _mean_scale_loglik_grid(sumsq[:, None], sumx[:, None], pr.n, lam, atoms[None, :])
                + logw[None, :],
                axis=1,
            )
            log_den = logsumexp(
                _scale_loglik_grid(sumsq[:, None], pr.n, atoms[None, :]) + logw[None, :], axis=1
            )
            return EVector(np.exp(log_num - log_den), null_mask=pr.null_mask)

        return odp
    if name == "sum_of_squares":

        def sos(pr):
            vals = pr.K * pr.s2 / pr.sigma_hat2.sum()
            return EVector(vals, null_mask=pr.null_mask)

        return sos
    if name == "implied_ebh":
        lr = _validate_construction("exact_lr", lam, alpha)

        def implied(pr):
            evec = lr(pr)
            res = ebh(evec, alpha)
            out = implied_compound_evalues(res, pr.K, alpha)
            return EVector(out.values, null_mask=pr.null_mask)

        return implied
    raise ConfigError(f"unknown construction {name!r}; choose from {_VALIDATE_CONSTRUCTIONS}")


def _cmd_validate(opts):
    cfg = _load_config_file(opts["config_file"])
    seed = opts["seed"]
    out = []
    for pair in cfg.get("pairs", []):
        name = pair.get("name") or pair["construction"]
        sc = pair.get("scenario", {})
        scenario = Scenario(
            K=int(sc.get("K", 8)),
            n=int(sc.get("n", 10)),
            n_nulls=int(sc.get("K", 8)),  # budget checks run under the full null
            xi=0.0,
            variance_mode=sc.get("variance_mode", "uniform"),
            alpha=float(sc.get("alpha", 0.1)),
            reps=int(sc.get("reps", 1000)),
            seed=seed,
        )
        construction = _validate_construction(
            pair["construction"], float(sc.get("lam", 0.5)), scenario.alpha
        )
        est = estimate_compound_budget(
            lambda rep, sc=scenario: generate_scenario_data(sc, rep),
            construction,
            reps=scenario.reps,
            cap=sc.get("cap"),
        )
        entry = {"name": name, "construction": pair["construction"]}
        entry.update(est.to_json_dict())
        out.append(entry)
    _write_json(opts["out"], out)


def _cmd_simulate(opts):
    if opts.get("scenarios"):
        scenarios = [Scenario(**sc) for sc in opts["scenarios"]]
    else:
        scenarios = default_scenarios(
            xis=tuple(opts["xis"]),
            full_scale=opts["full_scale"],
            seed=opts["seed"],
            alpha=opts["alpha"],
        )
        if opts.get("reps") is not None:
            scenarios = [
                Scenario(
                    K=s.K,
                    n=s.n,
                    n_nulls=s.n_nulls,
                    xi=s.xi,
                    variance_mode=s.variance_mode,
                    alpha=s.alpha,
                    reps=opts["reps"],
                    seed=s.seed,
                )
                for s in scenarios
            ]
    rows = run_study(scenarios, threads=opts["threads"])
    write_results_csv(rows, opts["out"])
    if opts.get("plot_data"):
        panel = plot_data_rows(rows)
        with open(opts["plot_data"], "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["n", "variance_mode", "xi", "method", "power", "power_se"]
            )
            writer.writeheader()
            for row in panel:
                writer.writerow(row)


_HANDLERS = {
    "ebh": _cmd_ebh,
    "pbh": _cmd_pbh,
    "by": _cmd_by,
    "epbh": _cmd_epbh,
    "calibrate": _cmd_calibrate,
    "npmle": _cmd_npmle,
    "cui": _cmd_cui,
    "odp": _cmd_odp,
    "derandomize": _cmd_derandomize,
    "merge": _cmd_merge,
    "validate": _cmd_validate,
    "simulate": _cmd_simulate,
}


class _Parser(argparse.ArgumentParser):
    """Usage errors map to exit code 1 (input error), not argparse's 2."""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="compound-evalues",
        description="Multiple testing with compound e-values",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p, with_alpha=True):
        if with_alpha:
            p.add_argument("--alpha", type=float, required=True)
        p.add_argument("--out", help="output JSON path (default: stdout)")
        p.add_argument("--csv", help="optional per-hypothesis CSV output")
        p.add_argument("--config", dest="config_file_override", help="config file overriding flags")

    p = sub.add_parser("ebh", help="e-BH on an e-value CSV")
    p.add_argument("--input", required=True)
    add_common(p)

    p = sub.add_parser("pbh", help="Benjamini-Hochberg on a p-value CSV")
    p.add_argument("--input", required=True)
    add_common(p)

    p = sub.add_parser("by", help="Benjamini-Yekutieli via calibration + e-BH")
    p.add_argument("--input", required=True)
    add_common(p)

    p = sub.add_parser("epbh", help="e-weighted p-BH")
    p.add_argument("--pvalues", required=True)
    p.add_argument("--weights", required=True)
    add_common(p)

    p = sub.add_parser("calibrate", help="convert p-values to e-values or back")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--direction", choices=["p-to-e", "e-to-p"], default="p-to-e")
    p.add_argument("--kind", choices=["power", "by_step"], default="power")
    p.add_argument("--kappa", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=0.1, help="level for the by_step kind")
    p.add_argument("--config", dest="config_file_override")

    p = sub.add_parser("npmle", help="NPMLE of the variance distribution")
    p.add_argument("--input", required=True, help="CSV of sample variances")
    p.add_argument("--nu", type=int, required=True)
    p.add_argument("--grid-min", type=float, default=1e-3)
    p.add_argument("--grid-max", type=float, default=1e3)
    p.add_argument("--grid-size", type=int, default=600)
    p.add_argument("--out", required=True)
    p.add_argument("--config", dest="config_file_override")

    for name, help_text in (
        ("cui", "compound universal inference e-values"),
        ("odp", "data-driven optimal discovery e-values"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--input", required=True, help="raw K x n data matrix CSV")
        p.add_argument("--lam", type=float, required=True, help="standardized alternative mean")
        p.add_argument("--grid-min", type=float, default=1e-3)
        p.add_argument("--grid-max", type=float, default=1e3)
        p.add_argument("--grid-size", type=int, default=600)
        p.add_argument("--out", required=True, help="e-value CSV output")
        p.add_argument("--alpha", type=float, help="also run e-BH at this level")
        p.add_argument("--result", help="rejection JSON output (needs --alpha)")
        p.add_argument("--config", dest="config_file_override")
        if name == "cui":
            p.add_argument("--delta", type=float, default=0.01)

    p = sub.add_parser("derandomize", help="combine FDR runs via implied e-values")
    p.add_argument("--inputs", nargs="+", required=True, help="result JSON files")
    p.add_argument("--k", type=int, required=True, help="global number of hypotheses")
    p.add_argument("--alpha", type=float, required=True, help="level of the input runs")
    p.add_argument("--alphas", type=float, nargs="+", help="per-run levels (overrides --alpha)")
    p.add_argument("--weights", type=float, nargs="+")
    p.add_argument("--out", required=True, help="combined e-value CSV")
    p.add_argument("--result", help="rejection JSON after e-BH at --alpha")
    p.add_argument("--config", dest="config_file_override")

    p = sub.add_parser("merge", help="merge p-values with e-value weights")
    p.add_argument("--pvalues", required=True)
    p.add_argument("--evalues", required=True)
    p.add_argument("--kind", choices=["twice_mean", "geometric"], default="twice_mean")
    p.add_argument("--out")
    p.add_argument("--config", dest="config_file_override")

    p = sub.add_parser("validate", help="Monte Carlo compound-budget checks")
    p.add_argument("--config", dest="config_file", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="run the simultaneous t-test study")
    p.add_argument("--config", dest="config_file_override")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threads", type=int)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--xis", type=float, nargs="+", default=[2.0, 3.0, 4.0, 5.0, 6.0])
    p.add_argument("--full-scale", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--plot-data", dest="plot_data")

    return parser


def dispatch(config: RunConfig) -> int:
    """Run one subcommand; raises on error, returns 0 on success."""
    handler = _HANDLERS.get(config.subcommand)
    if handler is None:
        raise ConfigError(f"unknown subcommand {config.subcommand!r}")
    handler(config.options)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        opts = vars(args)
        override_path = opts.pop("config_file_override", None)
        subcommand = opts.pop("subcommand")
        if override_path:
            overrides = _load_config_file(override_path)
            opts.update(overrides)  # config file wins over flags
        code = dispatch(RunConfig(subcommand=subcommand, options=opts))
    except (DataError, ConfigError, FileNotFoundError, PermissionError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # malformed input must never surface a traceback
        print(f"unexpected failure: {exc}", file=sys.stderr)
        return 2
    return code


if __name__ == "__main__":
    sys.exit(main())
