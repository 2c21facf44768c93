"""Cell partitioning: every sample point is served by its strongest BS."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np

from corridor_opt.objectives import (
    LinkBudget,
    ObjectiveKind,
    ObjectiveSpec,
    gamma_mp,
    gamma_sm,
)

_generation = itertools.count(1)


@dataclass(frozen=True, eq=False)
class Partition:
    """0-based serving-BS index per sample point.

    ``generation`` increases with every partition built by this module so
    that caches keyed on it can be invalidated.
    """

    assignment: np.ndarray
    generation: int = field(default_factory=lambda: next(_generation))

    def __post_init__(self):
        a = np.array(self.assignment, dtype=np.intp)
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    def __len__(self):
        return len(self.assignment)

    def cell_mass(self, weights, n_bs: int) -> np.ndarray:
        return np.bincount(self.assignment, weights=weights, minlength=n_bs)


def rss_table(samples, dep, budget: LinkBudget | None = None) -> np.ndarray:
    budget = budget if budget is not None else LinkBudget(samples, dep)
    return budget.rss_dbm(dep.tilts, dep.powers)


def assign_best_rss(samples, dep, budget: LinkBudget | None = None) -> Partition:
    """Assign each point to the BS with the highest RSS (lowest index on ties)."""
    return Partition(np.argmax(rss_table(samples, dep, budget), axis=1))


def random_partition(n_points: int, n_bs: int, seed: int) -> Partition:
    rng = np.random.default_rng(seed)
    return Partition(rng.integers(0, n_bs, size=n_points))


def candidate_metrics(spec: ObjectiveSpec, rss: np.ndarray) -> np.ndarray:
    """Metric at every point for every possible serving BS, shape (P, N).

    The interference for candidate ``n`` is the sum over the other BSs,
    formed from prefix and suffix sums rather than ``total - own``.
    """
    if spec.kind is ObjectiveKind.RSS:
        return rss
    lin = np.power(10.0, rss / 10.0)
    zero = np.zeros((len(lin), 1))
    before = np.hstack([zero, np.cumsum(lin, axis=1)[:, :-1]])
    after = np.hstack([np.cumsum(lin[:, ::-1], axis=1)[:, ::-1][:, 1:], zero])
    denom = before + after + spec.sigma2
    with np.errstate(divide="ignore"):
        if spec.kind is ObjectiveKind.SINR:
            return rss - 10.0 * np.log10(denom)
        sinr = lin / denom
    if spec.kind is ObjectiveKind.MP:
        return gamma_mp(sinr, spec.mu, spec.nu)
    return gamma_sm(sinr, spec.alpha, spec.nu, spec.xi)


def verify_partition_optimality(partition, samples, dep, objective: ObjectiveSpec, budget=None, rtol: float = 1e-12) -> bool:
    """Exchange test: no single point gains by switching to another BS.

    The objective is a sum of per-point terms whose value depends only on
    the point's own server, so moving point ``q`` from its server to BS
    ``n`` changes the objective by ``w_q * (m_q(n) - m_q(current))``. The
    partition is optimal iff no such change is positive (up to ``rtol``).
    """
    table = candidate_metrics(objective, rss_table(samples, dep, budget))
    a = np.asarray(getattr(partition, "assignment", partition))
    current = table[np.arange(len(a)), a]
    best = table.max(axis=1)
    slack = rtol * np.maximum(1.0, np.abs(current))
    return bool(np.all(best - current <= slack))


def export_partition_csv(path, partition, samples, dep) -> None:
    """Rows of ``x, y, z, region_tag, weight, bs_index`` (1-based BS ids)."""
    ids = [bs.id for bs in dep.base_stations]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "z", "region_tag", "weight", "bs_index"])
        for (x, y), z, tag, w, n in zip(samples.xy, samples.height, samples.tags, samples.weight, partition.assignment):
            writer.writerow([f"{x:.9g}", f"{y:.9g}", f"{z:.9g}", tag, f"{w:.9g}", ids[n]])
