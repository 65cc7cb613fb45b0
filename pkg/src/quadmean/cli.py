"""Command-line entry point.

Exit codes: 0 success, 1 usage, IO or configuration error, 2 an inequality
violation was found.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy
import sklearn

from . import entropy, lab
from .config import (
    STRUCTURE_KINDS,
    ConfigError,
    build_cost,
    build_experiment,
    build_space,
    build_structure,
    config_hash,
    format_point,
    load_config,
)
from .costs import PowerCost, SquaredDistance
from .errors import QuadmeanError
from .harness import CSV_HEADER, LossTable, aggregate, estimate_mean, fit_rate, run_experiment, tail_check
from .estimators import EstimatorConfig
from .plot import loglog_svg
from .report import ViolationReport
from .spaces import Euclidean, MetricTree, TreePoint

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2
VIOLATION_COLUMNS = ("structure", "space", "seed", "trial", "residual", "y", "z", "q", "p")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _version() -> str:
    try:
        return metadata.version("quadmean")
    except metadata.PackageNotFoundError:
        return "unknown"


# ---------------------------------------------------------------- artifacts


class Run:
    """Collects output files and writes the manifest last."""

    def __init__(self, args, config: dict | None):
        self.args = args
        self.config = config
        self.out = Path(args.out)
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as err:
            raise ConfigError(f"cannot create output directory {self.out}: {err.strerror}") from err
        self.outputs: list[str] = []

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name

    def write_json(self, name: str, data) -> None:
        self.path(name).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")

    def manifest(self, argv: list[str]) -> None:
        settings = {k: v for k, v in sorted(vars(self.args).items()) if k not in ("func", "out")}
        data = {
            "argv": argv,
            "command": self.args.command,
            "settings": settings,
            "config": self.config,
            "config_hash": config_hash({"settings": settings, "config": self.config}),
            "seed": getattr(self.args, "seed", None),
            "outputs": sorted(set(self.outputs)),
            "versions": {
                "quadmean": _version(),
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "scikit-learn": sklearn.__version__,
            },
        }
        (self.out / "manifest.json").write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n")


def _config(args) -> dict | None:
    return load_config(args.config) if getattr(args, "config", None) else None


# ---------------------------------------------------------------- verify


def _space_from_args(args, config):
    if config and "space" in config and args.space is None:
        return build_space(config["space"])
    name = args.space or "euclidean"
    if name == "tripod":
        return MetricTree.tripod()
    if name == "random-tree":
        return MetricTree.random(args.edges, args.tree_seed)
    if name == "euclidean":
        return Euclidean(args.dim)
    if name == "square":
        return Euclidean(2, box=(0.0, 1.0))
    raise UsageError(f"unknown space {name!r}")


def _structure_from_args(args, config, space):
    if args.structure is None:
        if config and "structure" in config:
            return build_structure(config["structure"], space)
        return None
    section = {"kind": args.structure}
    for key in ("alpha", "diam", "weights", "psi", "k"):
        value = getattr(args, key)
        if value is not None:
            section[key] = value
    if args.structure == "min":
        section["base"] = {"kind": "nice"}
    return build_structure(section, space)


def _violation_rows(report: ViolationReport, structure: str, space: str, seed) -> list[list]:
    w = report.witness
    if w is None:
        return []
    if "y" in w:
        points = [format_point(w.get(k)) for k in ("y", "z", "q", "p")]
    else:
        inputs = ";".join(f"{k}={v!r}" for k, v in w.items() if k not in ("trial", "residual"))
        points = [inputs, "", "", ""]
    return [[structure, space, seed, w.get("trial", ""), repr(float(w["residual"])), *points]]


def cmd_verify(args, run: Run) -> int:
    config = run.config
    space = _space_from_args(args, config)
    structure = _structure_from_args(args, config, space)
    lemmas = list(args.lemma or [])
    if lemmas == ["all"]:
        lemmas = ["arithmetic_form", *lab.LEMMAS]
    if structure is None and not lemmas:
        raise UsageError("verify needs --structure, a structure section in --config, or --lemma")
    box = tuple(args.box) if args.box else None
    rows, summaries = [], []
    if structure is not None:
        rep = lab.sweep_structure(space, structure, args.trials, args.seed, args.tol, box)
        print(rep.summary())
        summaries.append({"label": rep.label, "trials": rep.trials, "violations": rep.violations, "worst_residual": rep.worst_residual})
        rows += _violation_rows(rep, repr(structure), repr(space), args.seed)
    for lemma_id in lemmas:
        if lemma_id == "arithmetic_form":
            rep = lab.arithmetic_form_sweep(args.trials, args.seed, args.tol)
        elif lemma_id in lab.LEMMAS:
            rep = lab.lemma_battery(lemma_id, args.trials, args.seed, args.tol)
        else:
            raise UsageError(f"unknown lemma {lemma_id!r}; choose from arithmetic_form, {', '.join(lab.LEMMAS)}")
        rep.label = rep.label or lemma_id
        print(f"{lemma_id}: {rep.violations}/{rep.trials} violations, worst residual {rep.worst_residual:.3e}")
        summaries.append({"label": lemma_id, "trials": rep.trials, "violations": rep.violations, "worst_residual": rep.worst_residual})
        rows += _violation_rows(rep, f"lemma:{lemma_id}", "arithmetic", args.seed)
    with open(run.path("violations.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(VIOLATION_COLUMNS)
        w.writerows(rows)
    run.write_json("report.json", summaries)
    return EXIT_VIOLATION if any(s["violations"] > 0 for s in summaries) else EXIT_OK


# ---------------------------------------------------------------- counterexample


def cmd_counterexample(args, run: Run) -> int:
    if args.which == "tripod":
        eps = 0.02 if args.eps is None else args.eps
        res = lab.tripod_strong_counterexample(args.r, eps, detail=True)
        print(f"required K = {res.required_K:.10g} (left side {res.lhs:.10g}, 2*eps = {2 * eps:.10g})")
        run.write_json("counterexample.json", {"which": "tripod", "r": args.r, "eps": eps, "required_K": res.required_K, "lhs": res.lhs})
    else:
        eps = 1e-5 if args.eps is None else args.eps
        ratio = lab.optimality_case(args.case, args.alpha, eps)
        print(f"case {args.case}, alpha {args.alpha:g}, eps {eps:g}: ratio = {ratio:.10g}")
        run.write_json("counterexample.json", {"which": "optimality", "case": args.case, "alpha": args.alpha, "eps": eps, "ratio": ratio})
    return EXIT_OK


# ---------------------------------------------------------------- mean


def _read_samples(path, space):
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}") from err
    try:
        float(rows[0][0])
    except (ValueError, IndexError):
        rows = rows[1:]
    if not rows:
        raise ConfigError(f"{path}: no samples")
    try:
        if isinstance(space, MetricTree):
            return [TreePoint(int(r[0]), float(r[1])) for r in rows]
        return np.array([[float(v) for v in r] for r in rows])
    except (ValueError, IndexError) as err:
        raise ConfigError(f"{path}: malformed sample row ({err})") from err


def cmd_mean(args, run: Run) -> int:
    config = run.config
    if config and "space" in config and args.space is None:
        space = build_space(config["space"])
    else:
        space = _space_from_args(args, None)
    samples = _read_samples(args.input, space)
    if isinstance(space, Euclidean) and args.space is None and not (config and "space" in config):
        space = Euclidean(samples.shape[1])
    if config and "cost" in config:
        cost = build_cost(config["cost"], space)
    else:
        cost = SquaredDistance() if args.two_alpha == 2.0 else PowerCost(args.two_alpha)
    result = estimate_mean(space, cost, samples, EstimatorConfig(method=args.method, tol=args.tol, max_iter=args.max_iter))
    point = format_point(result.point)
    print(f"mean {point} objective {result.objective:.12g} status {result.status.value}")
    run.write_json("mean.json", {"point": point, "objective": result.objective, "iterations": result.iterations, "status": result.status.value})
    return EXIT_OK


# ---------------------------------------------------------------- rates


def cmd_rates(args, run: Run) -> int:
    if run.config is None:
        raise UsageError("rates needs --config with space, cost and experiment sections")
    cfg = build_experiment(run.config)
    if args.seed is not None:
        cfg.seed = args.seed
    table = run_experiment(cfg)
    table.to_csv(run.path("losses.csv"), timing=args.timing)
    fit = fit_rate(table, args.statistic, args.quantile, cfg.kappa)
    run.path("rate.json").write_text(fit.to_json() + "\n")
    print(f"slope {fit.slope:.6f} +- {fit.stderr:.6f} (r2 {fit.r2:.6f}) from the {args.statistic} loss")
    n_max = cfg.n_grid[-1]
    if table.at(n_max).size >= 500:
        tail = tail_check(table, n_max, args.loss_exponent, args.zeta, args.gamma_minus, args.beta)
        run.write_json("tail.json", {"n": n_max, "slope": tail.slope, "theoretical_slope": tail.theoretical_slope, "points": tail.points})
        print(f"tail slope at n={n_max}: {tail.slope:.4f} (bound {tail.theoretical_slope:g})")
    return EXIT_OK


# ---------------------------------------------------------------- entropy


def _region(args):
    if args.region == "interval":
        return entropy.interval_points(-args.radius, args.radius, args.spacing)
    return entropy.ball_points(args.dim, args.radius, args.spacing)


def cmd_entropy(args, run: Run) -> int:
    action = args.action
    if action == "eta":
        value = entropy.eta(args.beta, args.n)
        print(f"eta = {value:.12g}")
        result = {"beta": args.beta, "n": args.n, "eta": value}
    elif action == "covering":
        value = entropy.covering_number(_region(args), args.r)
        print(f"covering number = {value}")
        result = {"region": args.region, "dim": args.dim, "radius": args.radius, "r": args.r, "covering_number": value}
    elif action == "entrn":
        value = entropy.entrn_estimate(_region(args), args.n)
        print(f"entrn = {value:.12g}")
        result = {"region": args.region, "dim": args.dim, "radius": args.radius, "n": args.n, "entrn": value}
    elif action == "fit":
        section = (run.config or {}).get("entropy")
        if not section:
            raise UsageError("entropy fit needs --config with an entropy section")
        spacing = min(section["r_grid"]) / 4.0
        dim = int(section.get("dim", args.dim))
        fit = entropy.entropy_fit(
            lambda delta: entropy.ball_points(dim, delta, spacing),
            section["delta_grid"],
            section["r_grid"],
            section.get("model", "power"),
        )
        print(f"c_e = {fit.c_e_hat:.6g}, beta = {fit.beta_hat:.6g}, max residual {fit.max_residual:.3g}")
        result = {"model": fit.model, "c_e_hat": fit.c_e_hat, "beta_hat": fit.beta_hat, "max_residual": fit.max_residual}
    else:
        pred = entropy.rate_prediction(args.gamma, args.alpha_ent, args.beta, args.n, args.mode, args.kappa)
        print(f"eta {pred.eta_value:.6g}, loss exponent {pred.loss_exponent:.6g}, predicted rate {pred.predicted_rate:.6g}")
        if pred.schedule:
            print(f"schedule R_n = {pred.schedule['R_n']:.6g}, xi_n = {pred.schedule['xi_n']:.6g}")
        result = {"eta": pred.eta_value, "loss_exponent": pred.loss_exponent, "predicted_rate": pred.predicted_rate, "schedule": pred.schedule}
    run.write_json("entropy.json", result)
    return EXIT_OK


# ---------------------------------------------------------------- report


def cmd_report(args, run: Run) -> int:
    try:
        table = LossTable.from_csv(args.input)
    except OSError as err:
        raise ConfigError(f"cannot read {args.input}: {err.strerror}") from err
    series = {}
    for stat in ("mean", "median"):
        ns, values = aggregate(table, stat)
        series[f"{stat} loss"] = (ns.tolist(), values.tolist())
    svg = loglog_svg(series, title=args.title)
    run.path(args.output).write_text(svg)
    print(f"wrote {run.out / args.output}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="quadmean", description="Quadruple inequalities and Fréchet mean rates.")
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", default=".", help="output directory (default: current directory)")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("verify", parents=[common], help="randomized inequality sweeps and lemma checks")
    p.add_argument("--structure", choices=STRUCTURE_KINDS)
    p.add_argument("--space", choices=("tripod", "random-tree", "euclidean", "square"))
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--edges", type=int, default=8)
    p.add_argument("--tree-seed", type=int, default=8)
    p.add_argument("--alpha", type=float)
    p.add_argument("--diam", type=float)
    p.add_argument("--weights", type=float, nargs="+")
    p.add_argument("--psi", choices=("squared_norm", "coordinate_exponential"))
    p.add_argument("--k", type=int)
    p.add_argument("--box", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--lemma", action="append", help="lemma id, arithmetic_form, or all (repeatable)")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=lab.DEFAULT_TOL)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("counterexample", parents=[common], help="evaluate the tripod or optimality constructions")
    p.add_argument("which", choices=("tripod", "optimality"))
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--eps", type=float)
    p.add_argument("--case", choices=("a", "b", "c"), default="a")
    p.add_argument("--alpha", type=float, default=0.5)
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("mean", parents=[common], help="Fréchet mean of samples in a CSV file")
    p.add_argument("--input", required=True, help="CSV with one point per row (tree rows: edge,offset)")
    p.add_argument("--space", choices=("tripod", "random-tree", "euclidean"))
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--edges", type=int, default=8)
    p.add_argument("--tree-seed", type=int, default=8)
    p.add_argument("--two-alpha", type=float, default=2.0)
    p.add_argument("--method", default="auto")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=1000)
    p.set_defaults(func=cmd_mean)

    p = sub.add_parser("rates", parents=[common], help="Monte Carlo rate experiment")
    p.add_argument("--seed", type=int)
    p.add_argument("--statistic", choices=("mean", "median", "quantile"), default="median")
    p.add_argument("--quantile", type=float)
    p.add_argument("--loss-exponent", type=float, default=1.0)
    p.add_argument("--zeta", type=float, default=2.0)
    p.add_argument("--gamma-minus", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--timing", action="store_true", help="record runtimes (outputs then differ between runs)")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("entropy", parents=[common], help="covering numbers, entrn, eta, fits and rate predictions")
    p.add_argument("action", choices=("eta", "covering", "entrn", "fit", "predict"))
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--n", type=float, default=100)
    p.add_argument("--region", choices=("interval", "ball"), default="ball")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--r", type=float, default=0.5)
    p.add_argument("--spacing", type=float, default=0.01)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--alpha-ent", type=float, default=0.5)
    p.add_argument("--mode", choices=("direct", "scheduled"), default="direct")
    p.add_argument("--kappa", type=float)
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("report", parents=[common], help="log-log SVG plot of a loss table")
    p.add_argument("--input", required=True, help=f"loss CSV with header {','.join(CSV_HEADER)}")
    p.add_argument("--output", default="report.svg")
    p.add_argument("--title", default="loss versus sample size")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        run = Run(args, _config(args))
        code = args.func(args, run)
        run.manifest(argv)
        return code
    except UsageError as err:
        print(f"quadmean: usage error: {err}", file=sys.stderr)
        return EXIT_ERROR
    except ConfigError as err:
        print(f"quadmean: config error: {err}", file=sys.stderr)
        return EXIT_ERROR
    except (QuadmeanError, ValueError, OSError) as err:
        print(f"quadmean: error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
