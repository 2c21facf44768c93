"""Finite-difference check of the analytic tilt and power gradients.

Central differences are formed per sample point, ``sum_q w_q (m_q(x+h) -
m_q(x-h)) / 2h`` with compensated summation, which keeps the rounding
error of the difference well below the comparison tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from corridor_opt.channel import AntennaPattern, BaseStation
from corridor_opt.objectives import (
    DEFAULT_NOISE_DBM,
    Evaluator,
    LinkBudget,
    ObjectiveKind,
    ObjectiveSpec,
    dbm_to_mw,
)
from corridor_opt.scenario import GROUND, Deployment, SampleSet

FD_STEP = 1e-4
RTOL = 1e-5
ATOL = 1e-9

# (kind, variable) pairs with a closed-form gradient
GRADIENTS = (
    (ObjectiveKind.RSS, "theta"),
    (ObjectiveKind.SINR, "theta"),
    (ObjectiveKind.SINR, "rho"),
    (ObjectiveKind.MP, "theta"),
    (ObjectiveKind.MP, "rho"),
    (ObjectiveKind.SM, "theta"),
    (ObjectiveKind.SM, "rho"),
)


@dataclass
class RandomState:
    samples: SampleSet
    deployment: Deployment
    assignment: np.ndarray
    sigma2: float
    mp: tuple[float, float]
    sm: tuple[float, float, float]

    def spec(self, kind: ObjectiveKind) -> ObjectiveSpec:
        mu, nu_mp = self.mp
        alpha, nu_sm, xi = self.sm
        if kind is ObjectiveKind.MP:
            return ObjectiveSpec(kind, self.sigma2, mu=mu, nu=nu_mp)
        if kind is ObjectiveKind.SM:
            return ObjectiveSpec(kind, self.sigma2, nu=nu_sm, alpha=alpha, xi=xi)
        return ObjectiveSpec(kind, self.sigma2)


def random_state(rng: np.random.Generator, pattern: AntennaPattern | None = None, sigma2: float | None = None) -> RandomState:
    """A small random network: 3-9 BSs, 30-100 points, mixed ground and UAV.

    Tilts are drawn from [-30, 30] degrees and powers from [0, 43] dBm; the
    frozen partition is a uniformly random assignment. ``sigma2=None``
    picks 0 or the default noise floor with equal odds.
    """
    pattern = pattern or AntennaPattern()
    n_bs = int(rng.integers(3, 10))
    n_pts = int(rng.integers(30, 101))
    stations = tuple(
        BaseStation(
            id=i + 1,
            position=tuple(rng.uniform(-400, 400, 2)),
            height=float(rng.uniform(20, 35)),
            azimuth=float(rng.uniform(-180, 180)),
            tilt=float(rng.uniform(-30, 30)),
            power=float(rng.uniform(0, 43)),
        )
        for i in range(n_bs)
    )
    uav = rng.random(n_pts) < 0.5
    weight = rng.uniform(0.1, 1.0, n_pts)
    samples = SampleSet(
        xy=rng.uniform(-600, 600, (n_pts, 2)),
        height=np.where(uav, rng.uniform(100, 160, n_pts), 1.5),
        weight=weight / math.fsum(weight),
        region=np.where(uav, 0, GROUND),
        region_names=("corridor",),
        los=rng.random((n_pts, n_bs)) < 0.3,
    )
    if sigma2 is None:
        sigma2 = 0.0 if rng.random() < 0.5 else dbm_to_mw(DEFAULT_NOISE_DBM)
    return RandomState(
        samples=samples,
        deployment=Deployment(stations, pattern),
        assignment=rng.integers(0, n_bs, n_pts),
        sigma2=sigma2,
        mp=(float(rng.uniform(0, 0.5)), float(rng.uniform(0, 1))),
        sm=(float(rng.uniform(0.5, 1.5)), float(rng.uniform(0.3, 1)), float(rng.uniform(0.5, 1))),
    )


def fd_gradient(ev: Evaluator, tilts, powers, assignment, variable: str, h: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient with the partition held fixed."""
    w = ev.budget.weight
    base = (np.asarray(tilts, float), np.asarray(powers, float))
    which = 0 if variable == "theta" else 1
    out = np.empty(len(base[which]))
    for n in range(len(out)):
        plus, minus = [b.copy() for b in base], [b.copy() for b in base]
        plus[which][n] += h
        minus[which][n] -= h
        mp = ev.point_state(*plus, assignment).metric
        mm = ev.point_state(*minus, assignment).metric
        out[n] = math.fsum(w * (mp - mm)) / (2.0 * h)
    return out


@dataclass
class GradCheckFailure:
    trial: int
    kind: str
    variable: str
    component: int
    analytic: float
    numeric: float


def check_state(state: RandomState, trial: int = 0, rtol: float = RTOL, atol: float = ATOL) -> tuple[int, list[GradCheckFailure]]:
    """Compare all seven gradients at one state; returns (#components, failures)."""
    dep = state.deployment
    budget = LinkBudget(state.samples, dep)
    checked, failures = 0, []
    for kind, variable in GRADIENTS:
        ev = Evaluator(state.spec(kind), state.samples, dep, budget)
        _, g_theta, g_rho = ev.value_and_grad(dep.tilts, dep.powers, state.assignment)
        analytic = g_theta if variable == "theta" else g_rho
        numeric = fd_gradient(ev, dep.tilts, dep.powers, state.assignment, variable)
        bad = np.abs(analytic - numeric) > np.maximum(rtol * np.abs(numeric), atol)
        checked += len(analytic)
        failures += [
            GradCheckFailure(trial, kind.value, variable, int(n), float(analytic[n]), float(numeric[n]))
            for n in np.flatnonzero(bad)
        ]
    return checked, failures


def run_gradcheck(trials: int, seed: int = 0, rtol: float = RTOL, atol: float = ATOL, pattern=None, sigma2=None):
    """Check ``trials`` random states; returns (#components checked, failures)."""
    rng = np.random.default_rng(seed)
    checked, failures = 0, []
    for t in range(trials):
        c, f = check_state(random_state(rng, pattern, sigma2), t, rtol, atol)
        checked += c
        failures += f
    return checked, failures
