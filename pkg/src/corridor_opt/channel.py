"""Link-level channel model between a sector antenna and a 3D point.

All angles are in degrees. Linear-domain powers are ``10 ** (dBm / 10)``
(milliwatts), so any noise power passed to :func:`sinr_db` must use the
same convention, e.g. ``10 ** (-104 / 10)`` for a -104 dBm floor.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class ChannelDomainError(ValueError):
    """Raised when a channel quantity is undefined (co-located points, 0/0 SINR)."""


@dataclass(frozen=True)
class AntennaPattern:
    """Parabolic sector pattern: half-power beamwidths and boresight gain."""

    theta_3db: float = 10.0
    phi_3db: float = 65.0
    a_max: float = 14.0

    def __post_init__(self):
        if not self.theta_3db > 0:
            raise ValueError(f"theta_3db must be positive, got {self.theta_3db}")
        if not self.phi_3db > 0:
            raise ValueError(f"phi_3db must be positive, got {self.phi_3db}")


@dataclass(frozen=True)
class BaseStation:
    """One sector antenna.

    Parameters
    ----------
    id : int
        1-based index of the base station within its deployment.
    position : tuple of float
        Ground-plane coordinates in meters.
    height : float
        Antenna height in meters.
    azimuth : float
        Horizontal boresight in degrees, within [-180, 180].
    tilt : float
        Vertical tilt in degrees, within [-90, 90]; positive is uptilt.
    power : float
        Transmit power in dBm.
    active : bool
        Reporting flag only; never used in link computations.
    """

    id: int
    position: tuple[float, float]
    height: float
    azimuth: float
    tilt: float = 0.0
    power: float = 43.0
    active: bool = True

    def __post_init__(self):
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        if not -90.0 <= self.tilt <= 90.0:
            raise ValueError(f"BS {self.id}: tilt {self.tilt} outside [-90, 90]")
        if not -180.0 <= self.azimuth <= 180.0:
            raise ValueError(f"BS {self.id}: azimuth {self.azimuth} outside [-180, 180]")


@dataclass(frozen=True)
class Point3D:
    xy: tuple[float, float]
    height: float

    def __post_init__(self):
        object.__setattr__(self, "xy", (float(self.xy[0]), float(self.xy[1])))
        if not (math.isfinite(self.xy[0]) and math.isfinite(self.xy[1]) and math.isfinite(self.height)):
            raise ValueError(f"non-finite point {self.xy}, {self.height}")


class LinkKind(enum.Enum):
    UAV_LOS = "uav-los"
    GUE_LOS = "gue-los"
    GUE_NLOS = "gue-nlos"


@dataclass(frozen=True)
class LinkClass:
    """Pathloss intercept ``a`` (dB) and slope ``b`` (10x the exponent)."""

    kind: LinkKind
    a: float
    b: float

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError(f"pathloss slope must be positive, got {self.b}")


# 3GPP constants at 2 GHz. UAVs are always in LoS.
LINK_CONSTANTS = {
    LinkKind.UAV_LOS: (34.02, 22.0),
    LinkKind.GUE_LOS: (34.02, 22.0),
    LinkKind.GUE_NLOS: (38.42, 30.0),
}


def link_class(kind: LinkKind) -> LinkClass:
    a, b = LINK_CONSTANTS[kind]
    return LinkClass(kind, a, b)


UAV_LOS = link_class(LinkKind.UAV_LOS)
GUE_LOS = link_class(LinkKind.GUE_LOS)
GUE_NLOS = link_class(LinkKind.GUE_NLOS)

LOS_BREAKPOINT_M = 18.0
LOS_DECAY_M = 63.0


def wrap_azimuth_offset(offset):
    """Map an angle difference into (-180, 180]; +180 wins the tie."""
    offset = np.asarray(offset, dtype=float)
    wrapped = offset - 360.0 * np.ceil((offset - 180.0) / 360.0)
    # the division can round onto an integer just outside the range
    wrapped = np.where(wrapped > 180.0, wrapped - 360.0, wrapped)
    return np.where(wrapped <= -180.0, wrapped + 360.0, wrapped)


def elevation_deg(dx, dy, dh):
    """Elevation angle for horizontal offset (dx, dy) and height offset dh.

    Straight above/below the antenna the angle is ``sign(dh) * 90``.
    """
    horiz = np.hypot(dx, dy)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        theta = np.degrees(np.arctan(dh / horiz))
    return np.where(horiz > 0, theta, np.sign(dh) * 90.0)


def azimuth_deg(dx, dy, boresight):
    """Bearing of (dx, dy) expressed within 180 degrees of ``boresight``.

    A zero horizontal offset returns the boresight itself.
    """
    bearing = np.degrees(np.arctan2(dy, dx))
    phi = boresight + wrap_azimuth_offset(bearing - boresight)
    return np.where(np.hypot(dx, dy) > 0, phi, boresight + np.zeros_like(phi))


def elevation_azimuth(bs: BaseStation, pt: Point3D) -> tuple[float, float]:
    """Elevation and azimuth of ``pt`` as seen from ``bs``, in degrees."""
    dx = pt.xy[0] - bs.position[0]
    dy = pt.xy[1] - bs.position[1]
    theta = elevation_deg(dx, dy, pt.height - bs.height)
    phi = azimuth_deg(dx, dy, bs.azimuth)
    return float(theta), float(phi)


def antenna_gain_db(bs: BaseStation, pattern: AntennaPattern, pt: Point3D) -> float:
    theta, phi = elevation_azimuth(bs, pt)
    vertical = 12.0 / pattern.theta_3db**2 * (theta - bs.tilt) ** 2
    horizontal = 12.0 / pattern.phi_3db**2 * (phi - bs.azimuth) ** 2
    return pattern.a_max - vertical - horizontal


def distance_3d(bs: BaseStation, pt: Point3D) -> float:
    return math.sqrt(
        (pt.xy[0] - bs.position[0]) ** 2
        + (pt.xy[1] - bs.position[1]) ** 2
        + (pt.height - bs.height) ** 2
    )


def pathloss_db(bs: BaseStation, pt: Point3D, link: LinkClass) -> float:
    d = distance_3d(bs, pt)
    if d == 0:
        raise ChannelDomainError(f"point {pt} is co-located with BS {bs.id}")
    return link.a + link.b * math.log10(d)


def rss_dbm(bs: BaseStation, pattern: AntennaPattern, pt: Point3D, link: LinkClass) -> float:
    return bs.power + antenna_gain_db(bs, pattern, pt) - pathloss_db(bs, pt, link)


def sinr_db(
    n: int,
    pt: Point3D,
    all_bs: Sequence[BaseStation],
    links: Sequence[LinkClass],
    sigma2: float,
    pattern: AntennaPattern | None = None,
) -> float:
    """SINR in dB at ``pt`` when served by ``all_bs[n]`` (0-based ``n``).

    ``links[j]`` is the link class between ``pt`` and ``all_bs[j]``;
    ``sigma2`` is the noise power in linear mW.
    """
    if sigma2 < 0:
        raise ValueError(f"noise power must be non-negative, got {sigma2}")
    if pattern is None:
        pattern = AntennaPattern()
    levels = [rss_dbm(bs, pattern, pt, link) for bs, link in zip(all_bs, links)]
    interference = math.fsum(10.0 ** (r / 10.0) for j, r in enumerate(levels) if j != n)
    denom = interference + sigma2
    if denom == 0:
        raise ChannelDomainError("SINR undefined: no interference and zero noise")
    return levels[n] - 10.0 * math.log10(denom)


def los_probability_2d(d):
    """LoS probability for ground links at horizontal distance ``d`` (meters)."""
    d = np.asarray(d, dtype=float)
    safe = np.maximum(d, LOS_BREAKPOINT_M)
    far = LOS_BREAKPOINT_M / safe + (1.0 - LOS_BREAKPOINT_M / safe) * np.exp(-safe / LOS_DECAY_M)
    return np.where(d <= LOS_BREAKPOINT_M, 1.0, far)


def los_probability(pt: Point3D, bs: BaseStation) -> float:
    d = math.hypot(pt.xy[0] - bs.position[0], pt.xy[1] - bs.position[1])
    return float(los_probability_2d(d))


def sample_los_labels(grid, bss: Sequence[BaseStation], seed: int) -> np.ndarray:
    """Draw LoS labels for every (sample point, BS) pair.

    Ground points get one uniform draw per pair and are LoS when the draw
    is at most the LoS probability; corridor points are always LoS.

    Parameters
    ----------
    grid : SampleSet
        Sample points; only ``xy`` and ``is_ground`` are used.
    bss : sequence of BaseStation
    seed : int

    Returns
    -------
    np.ndarray
        Boolean matrix of shape (n_points, n_bs).
    """
    rng = np.random.default_rng(seed)
    pos = np.array([bs.position for bs in bss], dtype=float).reshape(-1, 2)
    xy = np.asarray(grid.xy, dtype=float)
    d = np.hypot(xy[:, None, 0] - pos[None, :, 0], xy[:, None, 1] - pos[None, :, 1])
    u = rng.uniform(0.0, 1.0, size=d.shape)
    labels = u <= los_probability_2d(d)
    labels[~np.asarray(grid.is_ground)] = True
    return labels
