"""Per-user metrics, weighted CDFs and run exports.

Floating values are written with 9 significant digits; that is the
round-trip precision of every exported file.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from corridor_opt.objectives import LinkBudget, ObjectiveSpec

POPULATIONS = ("ground", "uav")
FLOAT_FMT = "{:.9g}"


def fmt(x) -> str:
    return FLOAT_FMT.format(float(x))


@dataclass(frozen=True)
class CdfSeries:
    """Weighted empirical CDF: sorted distinct values and cumulative mass."""

    values: np.ndarray
    cum_weights: np.ndarray
    metric: str = ""
    population: str = ""

    def __call__(self, x) -> np.ndarray:
        """CDF evaluated at ``x`` (right-continuous step function)."""
        idx = np.searchsorted(self.values, np.asarray(x, dtype=float), side="right")
        padded = np.concatenate([[0.0], self.cum_weights])
        return padded[idx]

    def quantile(self, p) -> np.ndarray:
        """Smallest value whose cumulative mass reaches ``p``."""
        p = np.asarray(p, dtype=float)
        idx = np.searchsorted(self.cum_weights, p - 1e-12, side="left")
        return self.values[np.minimum(idx, len(self.values) - 1)]


def population_mask(samples, population: str | None) -> np.ndarray:
    if population is None or population == "all":
        return np.ones(len(samples), dtype=bool)
    if population == "ground":
        return samples.is_ground
    if population == "uav":
        return ~samples.is_ground
    raise ValueError(f"unknown population {population!r}")


def compute_cdf(values, weights, mask=None, metric: str = "", population: str = "") -> CdfSeries:
    """Weighted CDF of ``values`` restricted to ``mask``, renormalized to 1.

    Raises
    ------
    ValueError
        If the selected population is empty or carries no weight.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if mask is not None:
        values, weights = values[mask], weights[mask]
    total = math.fsum(weights)
    if len(values) == 0 or not total > 0:
        raise ValueError(f"empty population {population!r}")
    order = np.argsort(values, kind="stable")
    values, weights = values[order], weights[order]
    distinct, start = np.unique(values, return_index=True)
    mass = np.add.reduceat(weights, start)
    cum = np.cumsum(mass) / total
    cum[-1] = 1.0
    return CdfSeries(distinct, cum, metric, population)


@dataclass
class PointMetrics:
    serving: np.ndarray
    rss_dbm: np.ndarray
    sinr_db: np.ndarray


def point_metrics(samples, dep, sigma2: float, assignment=None, budget: LinkBudget | None = None) -> PointMetrics:
    """Serving BS, serving RSS and SINR at every sample point.

    Without an explicit ``assignment`` each point is served by its
    strongest BS.
    """
    budget = budget if budget is not None else LinkBudget(samples, dep)
    rss = budget.rss_dbm(dep.tilts, dep.powers)
    a = np.argmax(rss, axis=1) if assignment is None else np.asarray(assignment)
    idx = np.arange(len(a))
    own = rss[idx, a]
    lin = np.power(10.0, rss / 10.0)
    lin[idx, a] = 0.0
    with np.errstate(divide="ignore"):
        sinr = own - 10.0 * np.log10(lin.sum(axis=1) + sigma2)
    return PointMetrics(a, own, sinr)


def population_mean(values, samples, population: str) -> float:
    mask = population_mask(samples, population)
    if not mask.any():
        return float("nan")
    w = samples.weight[mask]
    return math.fsum(values[mask] * w) / math.fsum(w)


@dataclass
class RunReport:
    scenario_digest: str
    algorithm: str
    objective: float
    tilts: np.ndarray
    powers: np.ndarray
    active: np.ndarray
    trace: list[float]
    means: dict[str, float]
    cdfs: dict[tuple[str, str], CdfSeries]
    termination: str = ""
    outer_iterations: int = 0
    inner_truncations: int = 0
    wall_clock: float = 0.0
    extra: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "scenario_digest": self.scenario_digest,
            "algorithm": self.algorithm,
            "objective": self.objective,
            "termination": self.termination,
            "outer_iterations": self.outer_iterations,
            "inner_truncations": self.inner_truncations,
            "means": self.means,
            "active_bs": int(np.sum(self.active)),
            "wall_clock_s": self.wall_clock,
            **self.extra,
        }


def scenario_digest(data) -> str:
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def build_report(samples, dep, spec: ObjectiveSpec, objective: float, digest: str = "", run=None, metrics: PointMetrics | None = None, budget=None) -> RunReport:
    """Assemble means and CDFs for a configured deployment.

    ``run`` (an :class:`~corridor_opt.optimizer.OptimizerRun`) supplies the
    trace and iteration counts when the report describes an optimization.
    """
    assignment = None if run is None else run.partition.assignment
    metrics = metrics or point_metrics(samples, dep, spec.sigma2, assignment, budget)
    means, cdfs = {}, {}
    for pop in POPULATIONS:
        mask = population_mask(samples, pop)
        for name, vals in (("rss", metrics.rss_dbm), ("sinr", metrics.sinr_db)):
            means[f"{name}_{pop}_db"] = population_mean(vals, samples, pop)
            if mask.any():
                cdfs[(name, pop)] = compute_cdf(vals, samples.weight, mask, name, pop)
    return RunReport(
        scenario_digest=digest,
        algorithm="" if run is None else run.algorithm,
        objective=objective,
        tilts=dep.tilts,
        powers=dep.powers,
        active=dep.active,
        trace=[] if run is None else list(run.trace),
        means=means,
        cdfs=cdfs,
        termination="" if run is None else run.termination,
        outer_iterations=0 if run is None else run.outer_iterations,
        inner_truncations=0 if run is None else run.inner_truncations,
        wall_clock=0.0 if run is None else run.elapsed,
    )


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_config_csv(path, dep) -> None:
    rows = (
        [bs.id, fmt(bs.position[0]), fmt(bs.position[1]), fmt(bs.height), fmt(bs.azimuth), fmt(bs.tilt), fmt(bs.power), int(bs.active)]
        for bs in dep.base_stations
    )
    _write_rows(Path(path), ["bs_id", "x", "y", "height", "azimuth", "tilt_deg", "power_dbm", "active"], rows)


def write_metrics_csv(path, samples, dep, metrics: PointMetrics) -> None:
    ids = [bs.id for bs in dep.base_stations]
    rows = (
        [fmt(x), fmt(y), fmt(z), tag, fmt(w), ids[a], fmt(r), fmt(s)]
        for (x, y), z, tag, w, a, r, s in zip(
            samples.xy, samples.height, samples.tags, samples.weight, metrics.serving, metrics.rss_dbm, metrics.sinr_db
        )
    )
    _write_rows(Path(path), ["x", "y", "z", "region", "weight", "serving_bs", "rss_dbm", "sinr_db"], rows)


def write_cdf_csv(path, cdf: CdfSeries) -> None:
    _write_rows(Path(path), ["value", "cum_weight"], ([fmt(v), fmt(c)] for v, c in zip(cdf.values, cdf.cum_weights)))


def write_trace_csv(path, trace) -> None:
    _write_rows(Path(path), ["outer_iter", "objective"], ([i, fmt(v)] for i, v in enumerate(trace)))


def write_run(out_dir, report: RunReport, samples, dep, metrics: PointMetrics, emit: str = "csv") -> list[Path]:
    """Write a run to ``out_dir`` and return the written paths.

    ``emit="csv"`` writes ``config.csv``, ``metrics.csv``,
    ``cdf_<metric>_<population>.csv``, ``trace.csv`` and a ``report.json``
    summary; ``emit="json"`` writes everything into ``report.json``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if emit == "csv":
        write_config_csv(out / "config.csv", dep)
        write_metrics_csv(out / "metrics.csv", samples, dep, metrics)
        for (name, pop), cdf in sorted(report.cdfs.items()):
            write_cdf_csv(out / f"cdf_{name}_{pop}.csv", cdf)
        if report.trace:
            write_trace_csv(out / "trace.csv", report.trace)
        written += sorted(out.glob("*.csv"))
        payload = report.summary()
    elif emit == "json":
        payload = report.summary()
        payload["base_stations"] = [
            {"bs_id": bs.id, "x": bs.position[0], "y": bs.position[1], "height": bs.height, "azimuth": bs.azimuth,
             "tilt_deg": bs.tilt, "power_dbm": bs.power, "active": bs.active}
            for bs in dep.base_stations
        ]
        payload["trace"] = list(report.trace)
        payload["cdfs"] = {
            f"{name}_{pop}": {"value": cdf.values.tolist(), "cum_weight": cdf.cum_weights.tolist()}
            for (name, pop), cdf in sorted(report.cdfs.items())
        }
    else:
        raise ValueError(f"unknown emit format {emit!r}")
    path = out / "report.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    written.append(path)
    return written


def read_column_csv(path, column: str) -> np.ndarray:
    """One numeric column of a CSV file, ordered by ``bs_id`` when present."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no rows")
    if column not in rows[0]:
        raise ValueError(f"{path}: missing column {column!r}")
    if "bs_id" in rows[0]:
        rows.sort(key=lambda r: int(r["bs_id"]))
    return np.array([float(r[column]) for r in rows])
