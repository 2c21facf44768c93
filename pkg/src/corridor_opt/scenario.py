"""Deployments, target regions, and the weighted sample grid.

The user density over the target region is discretized into a finite
set of weighted points (a midpoint Riemann sum per region); every
network-wide average in this package is a weighted sum over that set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from corridor_opt.channel import AntennaPattern, BaseStation, sample_los_labels

if TYPE_CHECKING:
    from corridor_opt.objectives import ObjectiveSpec
    from corridor_opt.optimizer import OptimizerConfig

SECTOR_AZIMUTHS = (0.0, 120.0, -120.0)  # 240 degrees mapped into [-180, 180]


class ScenarioError(ValueError):
    """Invalid scenario content; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class Deployment:
    base_stations: tuple[BaseStation, ...]
    pattern: AntennaPattern = AntennaPattern()
    rho_max: float = 43.0

    def __post_init__(self):
        object.__setattr__(self, "base_stations", tuple(self.base_stations))
        if not self.base_stations:
            raise ValueError("deployment needs at least one base station")
        for bs in self.base_stations:
            if bs.power > self.rho_max:
                raise ValueError(f"BS {bs.id}: power {bs.power} exceeds rho_max {self.rho_max}")

    def __len__(self):
        return len(self.base_stations)

    @property
    def positions(self) -> np.ndarray:
        return np.array([bs.position for bs in self.base_stations], dtype=float)

    @property
    def heights(self) -> np.ndarray:
        return np.array([bs.height for bs in self.base_stations], dtype=float)

    @property
    def azimuths(self) -> np.ndarray:
        return np.array([bs.azimuth for bs in self.base_stations], dtype=float)

    @property
    def tilts(self) -> np.ndarray:
        return np.array([bs.tilt for bs in self.base_stations], dtype=float)

    @property
    def powers(self) -> np.ndarray:
        return np.array([bs.power for bs in self.base_stations], dtype=float)

    @property
    def active(self) -> np.ndarray:
        return np.array([bs.active for bs in self.base_stations], dtype=bool)

    def configured(self, tilts=None, powers=None, active=None) -> "Deployment":
        """Copy with new tilts/powers/active flags (arrays of length N)."""
        n = len(self)
        tilts = self.tilts if tilts is None else np.broadcast_to(np.asarray(tilts, float), (n,))
        powers = self.powers if powers is None else np.broadcast_to(np.asarray(powers, float), (n,))
        active = self.active if active is None else np.broadcast_to(np.asarray(active, bool), (n,))
        stations = tuple(
            replace(bs, tilt=float(t), power=float(p), active=bool(a))
            for bs, t, p, a in zip(self.base_stations, tilts, powers, active)
        )
        return replace(self, base_stations=stations)


def hex_sites(rings: int, isd: float) -> np.ndarray:
    """Site positions of a hexagonal layout, center first, ring by ring."""
    if rings < 0:
        raise ValueError(f"rings must be >= 0, got {rings}")
    # axial directions walked around each ring, starting east of the ring's corner
    directions = [(-1, 1), (-1, 0), (0, -1), (1, -1), (1, 0), (0, 1)]
    axial = [(0, 0)]
    for k in range(1, rings + 1):
        i, j = k, 0
        for di, dj in directions:
            for _ in range(k):
                axial.append((i, j))
                i, j = i + di, j + dj
    basis = np.array([[1.0, 0.0], [0.5, math.sqrt(3.0) / 2.0]])
    return isd * np.array(axial, dtype=float) @ basis


def build_hex_deployment(
    rings: int = 2,
    isd: float = 500.0,
    height: float = 25.0,
    pattern: AntennaPattern | None = None,
    rho_max: float = 43.0,
    tilt: float = 0.0,
    power: float | None = None,
) -> Deployment:
    """Three-sector hexagonal deployment.

    Site ``k`` (1-based) hosts BSs ``3k-2, 3k-1, 3k`` with azimuths
    0, 120 and 240 (= -120) degrees. ``rings=2`` gives 19 sites / 57 BSs.
    """
    pattern = pattern or AntennaPattern()
    power = rho_max if power is None else power
    stations = []
    for site in hex_sites(rings, isd):
        for az in SECTOR_AZIMUTHS:
            stations.append(
                BaseStation(
                    id=len(stations) + 1,
                    position=(site[0], site[1]),
                    height=height,
                    azimuth=az,
                    tilt=tilt,
                    power=power,
                )
            )
    return Deployment(tuple(stations), pattern, rho_max)


@dataclass(frozen=True)
class Rect:
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError(f"degenerate rectangle {self}")

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def contains(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return (
            (xy[..., 0] >= self.xmin)
            & (xy[..., 0] <= self.xmax)
            & (xy[..., 1] >= self.ymin)
            & (xy[..., 1] <= self.ymax)
        )


@dataclass(frozen=True)
class Corridor:
    name: str
    rect: Rect
    height: float


@dataclass(frozen=True)
class RegionSpec:
    """Ground rectangle, UAV corridors, mixing ratio and grid resolution.

    ``mixing_ratio`` is the ground share of the user density. ``los_model``
    is ``"nlos"`` (every ground link NLoS) or ``"probabilistic"`` (labels
    drawn from the 3GPP LoS probability).
    """

    ground: Rect
    ground_height: float = 1.5
    corridors: tuple[Corridor, ...] = ()
    mixing_ratio: float = 0.5
    ground_step: float = 25.0
    corridor_step: float = 10.0
    los_model: str = "nlos"

    def __post_init__(self):
        object.__setattr__(self, "corridors", tuple(self.corridors))
        if not 0.0 <= self.mixing_ratio <= 1.0:
            raise ValueError(f"mixing ratio {self.mixing_ratio} outside [0, 1]")
        names = [c.name for c in self.corridors]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate corridor names in {names}")
        if self.los_model not in ("nlos", "probabilistic"):
            raise ValueError(f"unknown los_model {self.los_model!r}")


def case_study_regions(mixing_ratio: float = 0.5, **kwargs) -> RegionSpec:
    """1.5 km ground square plus four corridors at 150 m / 120 m."""
    corridors = (
        Corridor("Q1", Rect(-770.0, -730.0, -1000.0, 1000.0), 150.0),
        Corridor("Q2", Rect(-1000.0, 1000.0, -770.0, -730.0), 120.0),
        Corridor("Q3", Rect(-1000.0, 1000.0, 730.0, 770.0), 120.0),
        Corridor("Q4", Rect(730.0, 770.0, -1000.0, 1000.0), 150.0),
    )
    return RegionSpec(
        ground=Rect(-750.0, 750.0, -750.0, 750.0),
        ground_height=1.5,
        corridors=corridors,
        mixing_ratio=mixing_ratio,
        **kwargs,
    )


GROUND = -1


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Weighted evaluation points.

    ``region`` holds ``-1`` for ground points and the corridor index
    otherwise; ``los`` is an optional (n_points, n_bs) boolean matrix.
    """

    xy: np.ndarray
    height: np.ndarray
    weight: np.ndarray
    region: np.ndarray
    region_names: tuple[str, ...] = ()
    los: np.ndarray | None = None

    def __post_init__(self):
        for name in ("xy", "height", "weight"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        region = np.array(self.region, dtype=int)
        region.setflags(write=False)
        object.__setattr__(self, "region", region)
        if self.xy.ndim != 2 or self.xy.shape[1] != 2:
            raise ValueError("xy must have shape (n, 2)")
        n = len(self.xy)
        if not (self.height.shape == self.weight.shape == self.region.shape == (n,)):
            raise ValueError("sample arrays have inconsistent lengths")
        if n == 0:
            raise ValueError("empty sample set")
        if np.any(self.weight <= 0):
            raise ValueError("sample weights must be positive")
        if self.los is not None:
            los = np.array(self.los, dtype=bool)
            if los.ndim != 2 or los.shape[0] != n:
                raise ValueError("los labels must have shape (n_points, n_bs)")
            los.setflags(write=False)
            object.__setattr__(self, "los", los)

    def __len__(self):
        return len(self.xy)

    @property
    def is_ground(self) -> np.ndarray:
        return self.region == GROUND

    @property
    def tags(self) -> list[str]:
        return ["ground" if r == GROUND else self.region_names[r] for r in self.region]

    def with_los(self, labels) -> "SampleSet":
        return replace(self, los=labels)


def _midpoints(lo: float, hi: float, step: float) -> tuple[np.ndarray, float]:
    if not step > 0:
        raise ValueError(f"grid step must be positive, got {step}")
    n = max(1, int(math.ceil((hi - lo) / step - 1e-9)))
    width = (hi - lo) / n
    return lo + width * (np.arange(n) + 0.5), width


def _grid(rect: Rect, step: float) -> tuple[np.ndarray, float]:
    xs, wx = _midpoints(rect.xmin, rect.xmax, step)
    ys, wy = _midpoints(rect.ymin, rect.ymax, step)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()]), wx * wy


def build_sample_grid(
    regions: RegionSpec,
    ground_step: float | None = None,
    corridor_step: float | None = None,
) -> SampleSet:
    """Midpoint grid over the ground rectangle and every corridor.

    Ground cells carry mass ``r * cell_area / area(ground)``; corridor
    cells carry ``(1 - r) * cell_area / total_corridor_area``. Corridors are
    gridded independently, so crossing corridors contribute one point each.
    Regions with zero share are omitted and weights are renormalized.
    """
    ground_step = regions.ground_step if ground_step is None else ground_step
    corridor_step = regions.corridor_step if corridor_step is None else corridor_step
    r = regions.mixing_ratio
    xy, height, weight, region = [], [], [], []
    if r > 0:
        pts, cell = _grid(regions.ground, ground_step)
        xy.append(pts)
        height.append(np.full(len(pts), regions.ground_height))
        weight.append(np.full(len(pts), r * cell / regions.ground.area))
        region.append(np.full(len(pts), GROUND))
    if r < 1 and regions.corridors:
        total = math.fsum(c.rect.area for c in regions.corridors)
        for u, corridor in enumerate(regions.corridors):
            pts, cell = _grid(corridor.rect, corridor_step)
            xy.append(pts)
            height.append(np.full(len(pts), corridor.height))
            weight.append(np.full(len(pts), (1.0 - r) * cell / total))
            region.append(np.full(len(pts), u))
    if not xy:
        raise ValueError("no sample points: region set is empty for this mixing ratio")
    weight = np.concatenate(weight)
    weight = weight / math.fsum(weight)
    return SampleSet(
        xy=np.concatenate(xy),
        height=np.concatenate(height),
        weight=weight,
        region=np.concatenate(region),
        region_names=tuple(c.name for c in regions.corridors),
    )


def build_samples(regions: RegionSpec, deployment: Deployment, seed: int = 0) -> SampleSet:
    """Sample grid plus LoS labels when the region spec asks for them."""
    samples = build_sample_grid(regions)
    if regions.los_model == "probabilistic":
        samples = samples.with_los(sample_los_labels(samples, deployment.base_stations, seed))
    return samples


# ---------------------------------------------------------------------------
# scenario files
# ---------------------------------------------------------------------------

ALGORITHMS = {
    "max-rss-vat": "rss",
    "max-sinr-pa-vat": "sinr",
    "mp-pa-vat": "mp",
    "smm-pa-vat": "sm",
}

_DEPLOYMENT_KEYS = {
    "rings": 2,
    "isd": 500.0,
    "height": 25.0,
    "theta_3db": 10.0,
    "phi_3db": 65.0,
    "a_max": 14.0,
    "rho_max": 43.0,
}
_REGION_KEYS = {"ground", "ground_height", "corridors", "mixing_ratio", "ground_step", "corridor_step", "los_model"}
_TOP_KEYS = {"algorithm", "seed", "deployment", "regions", "objective", "optimizer"}


class Scenario(NamedTuple):
    deployment: Deployment
    regions: RegionSpec
    objective: "ObjectiveSpec"
    optimizer: "OptimizerConfig"


def _check_keys(section: str, data: dict, allowed) -> None:
    if not isinstance(data, dict):
        raise ScenarioError(section, "must be an object")
    for key in data:
        if key not in allowed:
            raise ScenarioError(f"{section}.{key}" if section else key, "unknown key")


def _number(path: str, value, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(path, f"expected a number, got {value!r}")
    if integer:
        if int(value) != value:
            raise ScenarioError(path, f"expected an integer, got {value!r}")
        return int(value)
    if not math.isfinite(value):
        raise ScenarioError(path, "must be finite")
    return float(value)


def _rect(path: str, data) -> Rect:
    _check_keys(path, data, {"x", "y"})
    try:
        (x0, x1), (y0, y1) = data["x"], data["y"]
        return Rect(_number(f"{path}.x", x0), _number(f"{path}.x", x1), _number(f"{path}.y", y0), _number(f"{path}.y", y1))
    except KeyError as exc:
        raise ScenarioError(path, f"missing {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(path, str(exc)) from None


def _regions(data: dict) -> RegionSpec:
    _check_keys("regions", data, _REGION_KEYS)
    base = case_study_regions()
    kwargs = {}
    if "ground" in data:
        kwargs["ground"] = _rect("regions.ground", data["ground"])
    if "corridors" in data:
        corridors = []
        if not isinstance(data["corridors"], list):
            raise ScenarioError("regions.corridors", "must be a list")
        seen = set()
        for i, item in enumerate(data["corridors"]):
            path = f"regions.corridors[{i}]"
            _check_keys(path, item, {"name", "x", "y", "height"})
            name = str(item.get("name", f"Q{i + 1}"))
            if name in seen:
                raise ScenarioError(f"{path}.name", f"duplicate corridor name {name!r}")
            seen.add(name)
            rect = _rect(path, {k: item[k] for k in ("x", "y") if k in item})
            corridors.append(Corridor(name, rect, _number(f"{path}.height", item.get("height", 150.0))))
        kwargs["corridors"] = tuple(corridors)
    for key in ("ground_height", "ground_step", "corridor_step"):
        if key in data:
            kwargs[key] = _number(f"regions.{key}", data[key])
            if key.endswith("step") and kwargs[key] <= 0:
                raise ScenarioError(f"regions.{key}", "must be positive")
    if "mixing_ratio" in data:
        r = _number("regions.mixing_ratio", data["mixing_ratio"])
        if not 0.0 <= r <= 1.0:
            raise ScenarioError("regions.mixing_ratio", f"{r} outside [0, 1]")
        kwargs["mixing_ratio"] = r
    if "los_model" in data:
        if data["los_model"] not in ("nlos", "probabilistic"):
            raise ScenarioError("regions.los_model", f"unknown model {data['los_model']!r}")
        kwargs["los_model"] = data["los_model"]
    return replace(base, **kwargs)


def _dataclass_section(name: str, cls, data: dict, defaults: dict | None = None):
    allowed = {f.name for f in fields(cls)}
    _check_keys(name, data, allowed)
    kwargs = dict(defaults or {})
    for key, value in data.items():
        if value is None:
            kwargs[key] = None
        elif isinstance(value, str):
            kwargs[key] = value
        else:
            integer = key in ("max_outer", "max_inner", "seed")
            kwargs[key] = _number(f"{name}.{key}", value, integer=integer)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ScenarioError(name, str(exc)) from None


def parse_scenario(data: dict) -> Scenario:
    """Validate a scenario mapping; missing entries take case-study defaults."""
    from corridor_opt.objectives import ObjectiveSpec
    from corridor_opt.optimizer import OptimizerConfig

    _check_keys("", data, _TOP_KEYS)
    dep = data.get("deployment", {})
    _check_keys("deployment", dep, _DEPLOYMENT_KEYS)
    d = dict(_DEPLOYMENT_KEYS)
    for key, value in dep.items():
        d[key] = _number(f"deployment.{key}", value, integer=(key == "rings"))
    if d["rings"] < 0:
        raise ScenarioError("deployment.rings", "must be >= 0")
    try:
        pattern = AntennaPattern(d["theta_3db"], d["phi_3db"], d["a_max"])
    except ValueError as exc:
        raise ScenarioError("deployment", str(exc)) from None
    deployment = build_hex_deployment(d["rings"], d["isd"], d["height"], pattern, d["rho_max"])

    regions = _regions(data.get("regions", {}))

    obj = dict(data.get("objective", {}))
    algorithm = data.get("algorithm")
    if algorithm is not None:
        if algorithm not in ALGORITHMS:
            raise ScenarioError("algorithm", f"unknown algorithm {algorithm!r}; choose from {sorted(ALGORITHMS)}")
        kind = ALGORITHMS[algorithm]
        if "kind" in obj and obj["kind"] != kind:
            raise ScenarioError("objective.kind", f"{obj['kind']!r} conflicts with algorithm {algorithm!r}")
        obj["kind"] = kind
    objective = _dataclass_section("objective", ObjectiveSpec, obj)

    opt = dict(data.get("optimizer", {}))
    if "seed" in data:
        opt.setdefault("seed", data["seed"])
    optimizer = _dataclass_section("optimizer", OptimizerConfig, opt, {"rho_max": d["rho_max"]})
    if optimizer.rho_max != d["rho_max"]:
        raise ScenarioError("optimizer.rho_max", "must match deployment.rho_max")
    return Scenario(deployment, regions, objective, optimizer)


def load_scenario(path) -> Scenario:
    """Read and validate a JSON scenario file.

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    ScenarioError
        On parse errors or invalid content; the message names the field.
    """
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(str(path), f"JSON parse error: {exc}") from None
    if not isinstance(data, dict):
        raise ScenarioError(str(path), "top level must be an object")
    return parse_scenario(data)
