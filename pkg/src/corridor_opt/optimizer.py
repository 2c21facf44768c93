"""Alternating optimization of cell partitions, tilts and powers.

Each outer iteration (i) re-partitions by strongest RSS, (ii) runs
gradient ascent on the tilts and, for interference-aware objectives,
(iii) projected gradient ascent on the powers. Learning rates restart at
their initial values every outer iteration and decay by ``kappa`` before
every step.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from corridor_opt.objectives import (
    Evaluator,
    LinkBudget,
    NumericalError,
    ObjectiveKind,
    ObjectiveSpec,
)
from corridor_opt.partition import Partition, assign_best_rss, random_partition

TILT_BOUNDS = (-90.0, 90.0)
MAX_HALVINGS = 60


@dataclass(frozen=True)
class OptimizerConfig:
    """Learning rates, thresholds and initial state.

    ``init_power=None`` starts the RSS algorithm at ``rho_max`` and the
    power-allocating algorithms at 0 dBm. BSs whose final power falls
    below ``active_threshold`` (dBm) are reported inactive.
    """

    eta0_theta: float = 0.01
    eta0_rho: float = 0.01
    kappa: float = 0.999
    eps1: float = 1e-8
    eps2: float = 1e-8
    eps3: float = 1e-8
    rho_max: float = 43.0
    max_outer: int = 500
    max_inner: int = 5000
    seed: int = 0
    init_tilt: float = 0.0
    init_power: float | None = None
    active_threshold: float = -20.0

    def __post_init__(self):
        for name in ("eta0_theta", "eta0_rho"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if not 0 < self.kappa < 1:
            raise ValueError("kappa must lie in (0, 1)")
        for name in ("eps1", "eps2", "eps3"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("max_outer", "max_inner"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                raise ValueError(f"{name} must be an integer >= 1")
            object.__setattr__(self, name, int(getattr(self, name)))
        object.__setattr__(self, "seed", int(self.seed))
        if not TILT_BOUNDS[0] <= self.init_tilt <= TILT_BOUNDS[1]:
            raise ValueError("init_tilt outside [-90, 90]")
        if self.init_power is not None and self.init_power > self.rho_max:
            raise ValueError("init_power exceeds rho_max")

    def initial_power(self, kind: ObjectiveKind) -> float:
        if self.init_power is not None:
            return self.init_power
        return self.rho_max if kind is ObjectiveKind.RSS else 0.0


@dataclass
class AscentResult:
    x: np.ndarray
    value: float
    iterations: int
    truncated: bool
    deltas: list[float] = field(default_factory=list)


def relative_improvement(new: float, old: float) -> float:
    return (new - old) / max(abs(old), 1e-12)


def ascend(
    objective: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0,
    eta0: float,
    kappa: float,
    eps: float,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
    max_iter: int = 5000,
) -> AscentResult:
    """Decaying-step (projected) gradient ascent.

    ``objective(x)`` returns the value and gradient at ``x``. Each
    iteration decays the step size by ``kappa``, steps along the gradient,
    projects, and stops once the relative improvement drops below ``eps``.
    A step that lowers the objective is undone and retried with half the
    step size, so the returned value is never below the starting value.

    Returns
    -------
    AscentResult
        ``truncated`` is set when ``max_iter`` iterations ran without
        meeting the threshold.
    """
    project = project or (lambda v: v)
    x = np.array(x0, dtype=float)
    fs, grad = objective(x)
    eta = eta0
    deltas = []
    for it in range(1, max_iter + 1):
        eta *= kappa
        for _ in range(MAX_HALVINGS):
            cand = project(x + eta * grad)
            fe, cand_grad = objective(cand)
            if fe >= fs:
                break
            eta *= 0.5
        else:
            cand, fe, cand_grad = x, fs, grad
        rel = relative_improvement(fe, fs)
        deltas.append(fe - fs)
        x, fs, grad = cand, fe, cand_grad
        if rel < eps:
            return AscentResult(x, fs, it, False, deltas)
    return AscentResult(x, fs, max_iter, True, deltas)


@dataclass
class OptimizerRun:
    """Final configuration and convergence record of one optimization run.

    ``trace[0]`` is the objective at the initial (random) partition; entry
    ``k`` is the value after outer iteration ``k``. ``objective`` is the
    value after a final re-partition of the returned tilts and powers.
    """

    algorithm: str
    spec: ObjectiveSpec
    tilts: np.ndarray
    powers: np.ndarray
    partition: Partition
    objective: float
    trace: list[float]
    step_log: list[dict]
    termination: str
    outer_iterations: int
    inner_truncations: int
    active: np.ndarray
    seed: int
    elapsed: float = 0.0

    def deployment(self, dep):
        return dep.configured(self.tilts, self.powers, self.active)


ALGORITHM_NAMES = {
    ObjectiveKind.RSS: "max-rss-vat",
    ObjectiveKind.SINR: "max-sinr-pa-vat",
    ObjectiveKind.MP: "mp-pa-vat",
    ObjectiveKind.SM: "smm-pa-vat",
}


def _check_finite(value, tilts, powers, where):
    if not math.isfinite(value):
        raise NumericalError(
            f"non-finite objective {value} {where}; tilts={np.array2string(tilts, precision=3)}, "
            f"powers={np.array2string(powers, precision=3)}"
        )


def _alternate(spec, samples, dep, config, with_power, budget=None, callback=None) -> OptimizerRun:
    started = time.perf_counter()
    budget = budget if budget is not None else LinkBudget(samples, dep)
    ev = Evaluator(spec, samples, dep, budget)
    n_bs = len(dep)
    tilts = np.full(n_bs, float(config.init_tilt))
    powers = np.full(n_bs, float(config.initial_power(spec.kind)))
    partition = random_partition(len(samples), n_bs, config.seed)
    rho_max = config.rho_max
    outer_eps = config.eps3 if with_power else config.eps2

    clip_tilts = lambda x: np.clip(x, *TILT_BOUNDS)
    clip_powers = lambda x: np.minimum(x, rho_max)

    value = ev.value(tilts, powers, partition.assignment)
    _check_finite(value, tilts, powers, "at the initial state")
    trace = [value]
    step_log = []
    truncations = 0
    termination = "max_outer"
    outer = 0
    for outer in range(1, config.max_outer + 1):
        old = value
        partition = assign_best_rss(samples, dep.configured(tilts, powers), budget)
        res = ascend(ev.tilt_block(powers, partition.assignment), tilts, config.eta0_theta, config.kappa, config.eps1, clip_tilts, config.max_inner)
        tilts = res.x
        record = {"outer": outer, "tilt_steps": res.iterations, "tilt_deltas": res.deltas}
        truncations += res.truncated
        value = res.value
        if with_power:
            frozen = ev.with_tilts(tilts)
            power_block = lambda x: frozen.value_and_grad(x, partition.assignment)
            res = ascend(power_block, powers, config.eta0_rho, config.kappa, config.eps2, clip_powers, config.max_inner)
            powers = res.x
            record.update(power_steps=res.iterations, power_deltas=res.deltas)
            truncations += res.truncated
            value = res.value
        _check_finite(value, tilts, powers, f"at outer iteration {outer}")
        trace.append(value)
        step_log.append(record)
        if callback is not None:
            callback(
                {
                    "outer": outer,
                    "objective": value,
                    "relative_improvement": relative_improvement(value, old),
                    "active_bs": int(np.sum(powers >= config.active_threshold)),
                    "min_power_dbm": float(powers.min()),
                }
            )
        if relative_improvement(value, old) < outer_eps:
            termination = "converged"
            break

    partition = assign_best_rss(samples, dep.configured(tilts, powers), budget)
    final = ev.value(tilts, powers, partition.assignment)
    return OptimizerRun(
        algorithm=ALGORITHM_NAMES[spec.kind],
        spec=spec,
        tilts=tilts,
        powers=powers,
        partition=partition,
        objective=final,
        trace=trace,
        step_log=step_log,
        termination=termination,
        outer_iterations=outer,
        inner_truncations=truncations,
        active=powers >= config.active_threshold,
        seed=config.seed,
        elapsed=time.perf_counter() - started,
    )


def run_max_rss_vat(samples, dep, config: OptimizerConfig, budget=None, callback=None) -> OptimizerRun:
    """Tilt optimization for mean RSS with every BS at full power."""
    if config.init_power is not None and config.init_power != config.rho_max:
        raise ValueError("the RSS algorithm runs every BS at rho_max")
    spec = ObjectiveSpec(kind=ObjectiveKind.RSS)
    return _alternate(spec, samples, dep, config, with_power=False, budget=budget, callback=callback)


def run_pa_vat(spec: ObjectiveSpec, samples, dep, config: OptimizerConfig, budget=None, callback=None) -> OptimizerRun:
    """Joint power allocation and tilt optimization for SINR, MP or SM.

    ``spec.kind`` selects Max-SINR-PA-VAT, MP-PA-VAT or SMM-PA-VAT.
    """
    if not spec.has_power_gradient:
        raise ValueError("power allocation needs an interference-aware objective (sinr, mp or sm)")
    return _alternate(spec, samples, dep, config, with_power=True, budget=budget, callback=callback)


def optimize(spec: ObjectiveSpec, samples, dep, config: OptimizerConfig, restarts: int = 1, budget=None, callback=None) -> OptimizerRun:
    """Run the algorithm matching ``spec.kind``; keep the best of ``restarts`` seeds.

    Restart ``k`` uses seed ``config.seed + k``; ties keep the earlier seed.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    budget = budget if budget is not None else LinkBudget(samples, dep)
    best = None
    for k in range(restarts):
        cfg = config if k == 0 else _with_seed(config, config.seed + k)
        if spec.kind is ObjectiveKind.RSS:
            run = run_max_rss_vat(samples, dep, cfg, budget, callback)
        else:
            run = run_pa_vat(spec, samples, dep, cfg, budget, callback)
        if best is None or run.objective > best.objective:
            best = run
    return best


def _with_seed(config: OptimizerConfig, seed: int) -> OptimizerConfig:
    from dataclasses import replace

    return replace(config, seed=seed)
