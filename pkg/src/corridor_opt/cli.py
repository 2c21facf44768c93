"""Command-line driver.

Exit codes: 0 success, 1 invalid input (including missing files and bad
flags), 2 numerical failure, 3 a failed gradient check or partition
verification.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from corridor_opt.gradcheck import ATOL, run_gradcheck
from corridor_opt.objectives import Evaluator, LinkBudget, NumericalError, ObjectiveKind
from corridor_opt.optimizer import optimize
from corridor_opt.partition import (
    Partition,
    assign_best_rss,
    export_partition_csv,
    verify_partition_optimality,
)
from corridor_opt.report import (
    build_report,
    point_metrics,
    read_column_csv,
    scenario_digest,
    write_run,
)
from corridor_opt.scenario import ALGORITHMS, ScenarioError, build_samples, load_scenario

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_CHECK = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags, which would collide with the
    # numerical-failure code
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _load(path):
    """Scenario, its digest and the declared algorithm (or None)."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"scenario file not found: {path}")
    scenario = load_scenario(path)
    raw = json.loads(path.read_text())
    return scenario, scenario_digest(raw), raw.get("algorithm")


def _spec_for(scenario, algo):
    if algo is None:
        return scenario.objective
    kind = ObjectiveKind(ALGORITHMS[algo])
    return replace(scenario.objective, kind=kind)


def _samples(scenario):
    return build_samples(scenario.regions, scenario.deployment, scenario.optimizer.seed)


def _read_vector(path, column, n):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"file not found: {path}")
    values = read_column_csv(path, column)
    if len(values) != n:
        raise ValueError(f"{path}: expected {n} rows, found {len(values)}")
    return values


def _read_partition(path, n_points, n_bs):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"file not found: {path}")
    with open(path, newline="") as fh:
        ids = [int(row["bs_index"]) for row in csv.DictReader(fh)]
    if len(ids) != n_points:
        raise ValueError(f"{path}: expected {n_points} rows, found {len(ids)}")
    a = np.array(ids) - 1
    if a.min() < 0 or a.max() >= n_bs:
        raise ValueError(f"{path}: bs_index outside 1..{n_bs}")
    return Partition(a)


def cmd_optimize(args) -> int:
    scenario, digest, declared = _load(args.scenario)
    algo = args.algo or declared
    if algo is None:
        raise ValueError("no algorithm: pass --algo or set 'algorithm' in the scenario")
    spec = _spec_for(scenario, algo)
    config = scenario.optimizer if args.seed is None else replace(scenario.optimizer, seed=args.seed)
    samples = _samples(scenario)
    dep = scenario.deployment
    budget = LinkBudget(samples, dep)

    def stream(record):
        print(json.dumps(record), file=sys.stderr, flush=True)

    run = optimize(spec, samples, dep, config, args.restarts, budget, stream if args.stream else None)
    final = run.deployment(dep)
    metrics = point_metrics(samples, final, spec.sigma2, run.partition.assignment, budget)
    report = build_report(samples, final, spec, run.objective, digest, run, metrics)
    report.extra.update(seed=run.seed, restarts=args.restarts)
    out = Path(args.out)
    write_run(out, report, samples, final, metrics, args.emit)
    if args.emit == "csv":
        export_partition_csv(out / "partition.csv", run.partition, samples, final)
    print(json.dumps({"objective": run.objective, "termination": run.termination, "out": str(out)}))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    scenario, digest, declared = _load(args.scenario)
    spec = _spec_for(scenario, args.algo or declared)
    dep = scenario.deployment
    n = len(dep)
    tilts = _read_vector(args.tilts, "tilt_deg", n)
    powers = _read_vector(args.powers, "power_dbm", n)
    if np.any(powers > dep.rho_max):
        raise ValueError(f"powers exceed rho_max = {dep.rho_max} dBm")
    dep = dep.configured(tilts, powers, powers >= scenario.optimizer.active_threshold)
    samples = _samples(scenario)
    budget = LinkBudget(samples, dep)
    partition = assign_best_rss(samples, dep, budget)
    objective = Evaluator(spec, samples, dep, budget).value(tilts, powers, partition.assignment)
    metrics = point_metrics(samples, dep, spec.sigma2, partition.assignment, budget)
    report = build_report(samples, dep, spec, objective, digest, metrics=metrics)
    report.extra["objective_kind"] = spec.kind.value
    if args.out:
        write_run(args.out, report, samples, dep, metrics, args.emit)
    print(json.dumps({"objective": objective, "objective_kind": spec.kind.value, "means": report.means}))
    return EXIT_OK


def cmd_grad_check(args) -> int:
    scenario, _, _ = _load(args.scenario)
    seed = scenario.optimizer.seed if args.seed is None else args.seed
    checked, failures = run_gradcheck(args.trials, seed, args.tol, ATOL, scenario.deployment.pattern)
    for f in failures[:20]:
        print(
            f"trial {f.trial} {f.kind} d/d{f.variable}[{f.component}]: analytic {f.analytic:.9g} vs numeric {f.numeric:.9g}",
            file=sys.stderr,
        )
    print(json.dumps({"trials": args.trials, "components": checked, "failures": len(failures)}))
    return EXIT_OK if not failures else EXIT_CHECK


def cmd_verify_partition(args) -> int:
    scenario, _, _ = _load(args.scenario)
    dep = scenario.deployment
    n = len(dep)
    tilts = dep.tilts if args.tilts is None else _read_vector(args.tilts, "tilt_deg", n)
    powers = dep.powers if args.powers is None else _read_vector(args.powers, "power_dbm", n)
    dep = dep.configured(tilts, powers)
    samples = _samples(scenario)
    budget = LinkBudget(samples, dep)
    if args.partition:
        partition = _read_partition(args.partition, len(samples), n)
    else:
        partition = assign_best_rss(samples, dep, budget)
    results = {
        kind.value: verify_partition_optimality(partition, samples, dep, replace(scenario.objective, kind=kind), budget)
        for kind in ObjectiveKind
    }
    print(json.dumps(results))
    if not all(results.values()):
        print("partition is not optimal for: " + ", ".join(k for k, ok in results.items() if not ok), file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="corridor-opt", description="Tilt and power optimization for ground users and UAV corridors.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("optimize", help="run one of the four algorithms")
    p.add_argument("--scenario", required=True)
    p.add_argument("--algo", choices=sorted(ALGORITHMS))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--emit", choices=("csv", "json"), default="csv")
    p.add_argument("--stream", action="store_true", help="print one JSON line per outer iteration to stderr")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("evaluate", help="metrics for a fixed configuration")
    p.add_argument("--scenario", required=True)
    p.add_argument("--tilts", required=True, help="CSV with a tilt_deg column (e.g. config.csv)")
    p.add_argument("--powers", required=True, help="CSV with a power_dbm column (e.g. config.csv)")
    p.add_argument("--algo", choices=sorted(ALGORITHMS), help="objective to report (default: the scenario's)")
    p.add_argument("--out")
    p.add_argument("--emit", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("grad-check", help="finite-difference check of all analytic gradients")
    p.add_argument("--scenario", required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("verify-partition", help="single-point exchange test for all four objectives")
    p.add_argument("--scenario", required=True)
    p.add_argument("--tilts")
    p.add_argument("--powers")
    p.add_argument("--partition", help="partition CSV (default: strongest-RSS assignment)")
    p.set_defaults(func=cmd_verify_partition)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "restarts", 1) < 1:
            raise UsageError("--restarts must be >= 1")
        if getattr(args, "trials", 1) < 1:
            raise UsageError("--trials must be >= 1")
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UsageError, ScenarioError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
