"""Network performance functions and their analytic gradients.

Four per-user metrics are supported, each averaged with the sample
weights over the cell of the serving BS:

* ``rss``  -- received power of the serving BS in dBm;
* ``sinr`` -- SINR in dB;
* ``mp``   -- max-product proxy ``-ln(mu + 1 / (S + nu))``;
* ``sm``   -- soft max-min proxy ``-exp(alpha / (S + nu) ** xi)``;

where ``S`` is the linear SINR. Gradients are taken with the partition
held fixed. Every metric ``m`` depends on the tilts and powers only through
the per-BS received powers, which gives the common structure

    d m / d RSS_dBm(serving)  = own
    d m / d RSS_dBm(other n)  = -own * RSS_lin(n) / (I + noise)

with ``own = S * m'(S) * ln(10) / 10`` (``own = 1`` for ``rss`` and
``sinr``), ``I`` the interference at the point, ``d RSS_dBm(n) / d tilt_n =
(24 / theta_3db**2) * (elevation - tilt_n)`` and ``d RSS_dBm(n) / d
power_n = 1``. All logarithms inside the proxies are natural.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from corridor_opt._kernels import KIND_CODES, sinr_chunk
from corridor_opt.channel import (
    GUE_LOS,
    GUE_NLOS,
    UAV_LOS,
    ChannelDomainError,
    azimuth_deg,
    elevation_deg,
)

LN10_OVER_10 = math.log(10.0) / 10.0
DEFAULT_NOISE_DBM = -104.0
CHUNK_POINTS = 4096
THREADS_ENV = "CORRIDOR_OPT_THREADS"


class NumericalError(ArithmeticError):
    """A performance function or gradient evaluated to a non-finite value."""


class ObjectiveKind(str, enum.Enum):
    RSS = "rss"
    SINR = "sinr"
    MP = "mp"
    SM = "sm"


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


@dataclass(frozen=True)
class ObjectiveSpec:
    """Which performance function to use and its hyperparameters.

    ``sigma2`` is the noise power in linear mW. ``mu`` only affects ``mp``;
    ``nu`` is shared by ``mp`` and ``sm``; ``alpha`` and ``xi`` only affect
    ``sm``.
    """

    kind: ObjectiveKind = ObjectiveKind.SINR
    sigma2: float = dbm_to_mw(DEFAULT_NOISE_DBM)
    mu: float = 0.1
    nu: float = 0.1
    alpha: float = 1.0
    xi: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "kind", ObjectiveKind(self.kind))
        if not self.sigma2 >= 0:
            raise ValueError(f"sigma2 must be >= 0, got {self.sigma2}")
        if not self.mu >= 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if not self.nu >= 0:
            raise ValueError(f"nu must be >= 0, got {self.nu}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not 0 < self.xi <= 1:
            raise ValueError(f"xi must lie in (0, 1], got {self.xi}")

    @property
    def has_power_gradient(self) -> bool:
        return self.kind is not ObjectiveKind.RSS


# ---------------------------------------------------------------------------
# scalar metric transforms of the linear SINR
# ---------------------------------------------------------------------------


def gamma_mp(sinr_lin, mu: float, nu: float):
    sinr_lin = np.asarray(sinr_lin, dtype=float)
    return -np.log(mu + 1.0 / (sinr_lin + nu))


def gamma_sm(sinr_lin, alpha: float, nu: float, xi: float):
    sinr_lin = np.asarray(sinr_lin, dtype=float)
    return -np.exp(alpha / (sinr_lin + nu) ** xi)


# ---------------------------------------------------------------------------
# link budget
# ---------------------------------------------------------------------------


class LinkBudget:
    """Tilt- and power-independent link terms for a (samples, deployment) pair.

    Attributes
    ----------
    elevation : ndarray, shape (P, N)
        Elevation of each point seen from each BS, degrees.
    static_db : ndarray, shape (P, N)
        ``A_max + horizontal gain - pathloss``; the received power in dBm is
        ``static_db + power - vslope * (elevation - tilt) ** 2``.
    vslope : float
        ``12 / theta_3db ** 2``.
    """

    def __init__(self, samples, deployment):
        pos = deployment.positions
        dx = samples.xy[:, None, 0] - pos[None, :, 0]
        dy = samples.xy[:, None, 1] - pos[None, :, 1]
        dh = samples.height[:, None] - deployment.heights[None, :]
        d3 = np.sqrt(dx**2 + dy**2 + dh**2)
        if np.any(d3 == 0):
            q, n = np.argwhere(d3 == 0)[0]
            raise ChannelDomainError(f"sample point {q} is co-located with BS {n + 1}")
        pattern = deployment.pattern
        az = deployment.azimuths[None, :]
        phi = azimuth_deg(dx, dy, az)
        self.elevation = elevation_deg(dx, dy, dh)
        self.vslope = 12.0 / pattern.theta_3db**2
        a, b = link_constants(samples, len(deployment))
        self.static_db = pattern.a_max - 12.0 / pattern.phi_3db**2 * (phi - az) ** 2 - (a + b * np.log10(d3))
        self.weight = samples.weight
        self.n_points, self.n_bs = self.elevation.shape
        for arr in (self.elevation, self.static_db):
            arr.setflags(write=False)

    def rss_dbm(self, tilts, powers, rows=slice(None)) -> np.ndarray:
        delta = self.elevation[rows] - tilts
        return self.static_db[rows] + powers - self.vslope * delta * delta


def link_constants(samples, n_bs: int) -> tuple[np.ndarray, np.ndarray]:
    """Per (point, BS) pathloss intercept and slope from region tag and LoS label."""
    ground = samples.is_ground[:, None]
    if samples.los is None:
        los = np.zeros((len(samples), n_bs), dtype=bool)
    else:
        if samples.los.shape[1] != n_bs:
            raise ValueError(f"LoS labels cover {samples.los.shape[1]} BSs, deployment has {n_bs}")
        los = samples.los
    a = np.where(ground, np.where(los, GUE_LOS.a, GUE_NLOS.a), UAV_LOS.a)
    b = np.where(ground, np.where(los, GUE_LOS.b, GUE_NLOS.b), UAV_LOS.b)
    return a, b


# ---------------------------------------------------------------------------
# chunked evaluation
# ---------------------------------------------------------------------------


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError(f"{THREADS_ENV} must be >= 0, got {n}")
    return n or (os.cpu_count() or 1)


def _chunks(n_points: int) -> list[slice]:
    return [slice(i, min(i + CHUNK_POINTS, n_points)) for i in range(0, n_points, CHUNK_POINTS)]


def _map_chunks(fn, n_points: int) -> list:
    """Apply ``fn`` to fixed point chunks; order of results is chunk order.

    Chunk boundaries do not depend on the worker count, so reductions over
    the returned list are bit-identical for any thread setting.
    """
    chunks = _chunks(n_points)
    workers = min(worker_count(), len(chunks))
    if workers <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, chunks))


@dataclass
class PointState:
    """Per-point quantities at one (tilts, powers, assignment) state."""

    metric: np.ndarray
    rss_serving: np.ndarray
    sinr_lin: np.ndarray | None = None
    interference: np.ndarray | None = None


_NO_BASE = np.empty((0, 0))


class Evaluator:
    """Evaluates one performance function on a fixed (samples, deployment).

    Tilts, powers and the assignment are passed per call so the optimizer
    can reuse the precomputed :class:`LinkBudget`.
    """

    def __init__(self, spec: ObjectiveSpec, samples, deployment, budget: LinkBudget | None = None):
        self.spec = spec
        self.samples = samples
        self.budget = budget if budget is not None else LinkBudget(samples, deployment)
        self.weight = np.asarray(samples.weight, dtype=float)

    # -- per-chunk kernels --------------------------------------------------

    def _serving_rss(self, tilts, powers, assignment, rows):
        b = self.budget
        a = assignment[rows]
        idx = np.arange(len(a))
        delta = b.elevation[rows][idx, a] - tilts[a]
        return b.static_db[rows][idx, a] + powers[a] - b.vslope * delta * delta

    def _rss_chunk(self, tilts, powers, assignment, rows):
        b = self.budget
        w = self.weight[rows]
        a = assignment[rows]
        own = self._serving_rss(tilts, powers, assignment, rows)
        delta_own = b.elevation[rows][np.arange(len(a)), a] - tilts[a]
        g_theta = np.bincount(a, weights=w * delta_own, minlength=b.n_bs) * (2.0 * b.vslope)
        g_rho = np.bincount(a, weights=w, minlength=b.n_bs)
        return PointState(own, own), g_theta, g_rho

    def _sinr_chunk(self, tilts, powers, assignment, rows, want_theta, want_rho, base=_NO_BASE, pw=None):
        b, spec = self.budget, self.spec
        n = rows.stop - rows.start
        out = [np.empty(n) for _ in range(4)]
        g_theta, g_rho = np.zeros(b.n_bs), np.zeros(b.n_bs)
        bad = sinr_chunk(
            b.elevation[rows], b.static_db[rows], b.vslope, tilts, powers,
            base[rows] if base.shape[0] else base, powers if pw is None else pw,
            assignment[rows], self.weight[rows],
            KIND_CODES[spec.kind.value], spec.sigma2, spec.mu, spec.nu, spec.alpha, spec.xi,
            want_theta, want_rho, *out, g_theta, g_rho,
        )  # fmt: skip
        if bad >= 0:
            raise ChannelDomainError(f"SINR undefined at point {rows.start + bad}: zero interference and zero noise")
        metric, own, sinr, interference = out
        return PointState(metric, own, sinr, interference), g_theta, g_rho

    def _chunk(self, tilts, powers, assignment, rows, want_theta=False, want_rho=False, base=_NO_BASE, pw=None):
        if self.spec.kind is ObjectiveKind.RSS:
            return self._rss_chunk(tilts, powers, assignment, rows)
        return self._sinr_chunk(tilts, powers, assignment, rows, want_theta, want_rho, base, pw)

    def _reduce(self, parts):
        total = math.fsum(math.fsum(self.weight[rows] * p[0].metric) for rows, p in parts)
        g_theta = np.sum([p[1] for _, p in parts], axis=0)
        g_rho = np.sum([p[2] for _, p in parts], axis=0)
        if not (math.isfinite(total) and np.all(np.isfinite(g_theta)) and np.all(np.isfinite(g_rho))):
            raise NumericalError(f"{self.spec.kind.value} objective or gradient is not finite")
        return total, g_theta, g_rho

    def _run(self, **kw):
        return _map_chunks(lambda rows: (rows, self._chunk(rows=rows, **kw)), self.budget.n_points)

    # -- public ------------------------------------------------------------

    def point_state(self, tilts, powers, assignment) -> PointState:
        tilts, powers, assignment = _prep(tilts, powers, assignment)
        parts = [p[0] for _, p in self._run(tilts=tilts, powers=powers, assignment=assignment)]
        if len(parts) == 1:
            return parts[0]
        cat = lambda name: None if getattr(parts[0], name) is None else np.concatenate([getattr(p, name) for p in parts])
        return PointState(cat("metric"), cat("rss_serving"), cat("sinr_lin"), cat("interference"))

    def value(self, tilts, powers, assignment) -> float:
        tilts, powers, assignment = _prep(tilts, powers, assignment)
        total = self._reduce(self._run(tilts=tilts, powers=powers, assignment=assignment))[0]
        if not math.isfinite(total):
            raise NumericalError(f"{self.spec.kind.value} objective is not finite ({total})")
        return total

    def value_and_grad(self, tilts, powers, assignment):
        """Objective value with tilt and power gradients (both length N)."""
        tilts, powers, assignment = _prep(tilts, powers, assignment)
        parts = self._run(tilts=tilts, powers=powers, assignment=assignment, want_theta=True, want_rho=True)
        return self._reduce(parts)

    def tilt_block(self, powers, assignment):
        """Callable ``tilts -> (value, g_theta)`` with powers and partition fixed."""
        powers = np.asarray(powers, dtype=float)
        assignment = np.asarray(assignment, dtype=np.intp)
        if self.spec.kind is ObjectiveKind.RSS:
            return RssTiltBlock(self, powers, assignment)
        return lambda tilts: self.value_and_grad(tilts, powers, assignment)[:2]

    def with_tilts(self, tilts) -> "PowerEvaluator":
        """Evaluator specialised to fixed tilts, for the power block."""
        return PowerEvaluator(self, np.asarray(tilts, dtype=float))


class RssTiltBlock:
    """Mean RSS as a function of the tilts for a fixed partition.

    Within a cell the objective is quadratic in that cell's tilt:
    ``sum w (e - t)^2 = spread + mass * (t - centroid)^2`` with ``e`` the
    users' elevations, so one evaluation costs O(N) instead of O(points).
    """

    def __init__(self, ev: Evaluator, powers: np.ndarray, assignment: np.ndarray):
        b = ev.budget
        w = ev.weight
        a = assignment
        idx = np.arange(len(a))
        elev = b.elevation[idx, a]
        n = b.n_bs
        self.vslope = b.vslope
        self.mass = np.bincount(a, weights=w, minlength=n)
        first = np.bincount(a, weights=w * elev, minlength=n)
        self.centroid = np.divide(first, self.mass, out=np.zeros(n), where=self.mass > 0)
        dev = elev - self.centroid[a]
        spread = math.fsum(w * dev * dev)
        self.const = math.fsum(w * (b.static_db[idx, a] + powers[a])) - self.vslope * spread

    def __call__(self, tilts):
        d = np.asarray(tilts, dtype=float) - self.centroid
        value = self.const - self.vslope * math.fsum(self.mass * d * d)
        if not math.isfinite(value):
            raise NumericalError(f"rss objective is not finite ({value})")
        return value, -2.0 * self.vslope * self.mass * d


class PowerEvaluator:
    """Objective and power gradient with the tilts held fixed.

    Caches the linear gain of every (point, BS) pair at 0 dBm, so a power
    step costs one multiply per pair instead of an exponential.
    """

    def __init__(self, ev: Evaluator, tilts: np.ndarray):
        self.ev = ev
        self.tilts = tilts
        b = ev.budget
        self.base = _NO_BASE
        if ev.spec.kind is not ObjectiveKind.RSS:
            delta = b.elevation - tilts
            self.base = np.exp((b.static_db - b.vslope * delta * delta) * LN10_OVER_10)

    def value_and_grad(self, powers, assignment):
        """Returns ``(value, g_rho)``."""
        _, powers, assignment = _prep(self.tilts, powers, assignment)
        pw = np.exp(powers * LN10_OVER_10)
        parts = self.ev._run(tilts=self.tilts, powers=powers, assignment=assignment, want_rho=True, base=self.base, pw=pw)
        total, _, g_rho = self.ev._reduce(parts)
        return total, g_rho


def _prep(tilts, powers, assignment):
    return (
        np.asarray(tilts, dtype=float),
        np.asarray(powers, dtype=float),
        np.asarray(assignment, dtype=np.intp),
    )


# ---------------------------------------------------------------------------
# functional interface
# ---------------------------------------------------------------------------


def _assignment(partition):
    return getattr(partition, "assignment", partition)


def eval_objective(spec: ObjectiveSpec, partition, samples, dep, budget: LinkBudget | None = None) -> float:
    """Weighted average of the chosen metric over all sample points."""
    ev = Evaluator(spec, samples, dep, budget)
    return ev.value(dep.tilts, dep.powers, _assignment(partition))


def grad_theta(spec: ObjectiveSpec, partition, samples, dep, budget: LinkBudget | None = None) -> np.ndarray:
    """Partial derivatives of the objective w.r.t. each tilt, per degree."""
    ev = Evaluator(spec, samples, dep, budget)
    return ev.value_and_grad(dep.tilts, dep.powers, _assignment(partition))[1]


def grad_rho(spec: ObjectiveSpec, partition, samples, dep, budget: LinkBudget | None = None) -> np.ndarray:
    """Partial derivatives of the objective w.r.t. each power, per dB.

    Raises
    ------
    NotImplementedError
        For the RSS objective, whose optimum is always full power.
    """
    if not spec.has_power_gradient:
        raise NotImplementedError("power optimization is trivial for the RSS objective (use rho_max)")
    ev = Evaluator(spec, samples, dep, budget)
    return ev.value_and_grad(dep.tilts, dep.powers, _assignment(partition))[2]


def pointwise_metric(spec: ObjectiveSpec, partition, samples, dep, budget: LinkBudget | None = None) -> np.ndarray:
    """Per-point metric values (unweighted), in sample order."""
    ev = Evaluator(spec, samples, dep, budget)
    return ev.point_state(dep.tilts, dep.powers, _assignment(partition)).metric
