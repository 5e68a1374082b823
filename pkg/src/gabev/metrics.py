"""Standard navigation evaluation: NE, SR, OSR and SPL over episode sets.

NE is measured geodesically by default, consistent with continuous-environment
benchmarks; a Euclidean mode exists for obstacle-free sanity scenes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

from .errors import ContractViolationError
from .sim import DEFAULT_GRID_RESOLUTION, GeodesicField, Scene

DEFAULT_SUCCESS_RADIUS = 3.0


class DistanceMode(Enum):
    GEODESIC = "geodesic"
    EUCLIDEAN = "euclidean"


@dataclass(frozen=True)
class EpisodeResult:
    """Everything needed to score one episode."""

    path: Tuple[Tuple[float, float], ...]  # agent positions, start first
    goal: Tuple[float, float]
    reference_path_length: float  # geodesic start -> goal, meters
    scene: Optional[Scene] = None
    success_radius: float = DEFAULT_SUCCESS_RADIUS

    def __post_init__(self):
        if len(self.path) == 0:
            raise ContractViolationError("path must contain at least the start position")
        if self.reference_path_length < 0 or self.success_radius < 0:
            raise ContractViolationError("lengths and radii must be >= 0")
        object.__setattr__(self, "path", tuple((float(x), float(z)) for x, z in self.path))


def path_length(path: Sequence[Tuple[float, float]]) -> float:
    """Sum of consecutive position distances."""
    total = 0.0
    for (x0, z0), (x1, z1) in zip(path, path[1:]):
        total += math.hypot(x1 - x0, z1 - z0)
    return total


def _goal_field(result: EpisodeResult, resolution: float) -> GeodesicField:
    if result.scene is None:
        raise ContractViolationError("geodesic metrics need the episode's scene")
    return GeodesicField(result.scene, result.goal, resolution=resolution)


def _distance_to_goal(result: EpisodeResult, point, mode: DistanceMode, fld: Optional[GeodesicField]) -> float:
    if mode is DistanceMode.EUCLIDEAN:
        return math.hypot(point[0] - result.goal[0], point[1] - result.goal[1])
    assert fld is not None
    return fld.distance_at(point[0], point[1])


def navigation_error(
    result: EpisodeResult,
    mode: DistanceMode = DistanceMode.GEODESIC,
    resolution: float = DEFAULT_GRID_RESOLUTION,
) -> float:
    """Distance from the final position to the goal; +inf when the final
    position is disconnected from the goal."""
    fld = _goal_field(result, resolution) if mode is DistanceMode.GEODESIC else None
    return _distance_to_goal(result, result.path[-1], mode, fld)


def success(result: EpisodeResult, **kwargs) -> int:
    """1 iff the final position is within the success radius of the goal."""
    return int(navigation_error(result, **kwargs) <= result.success_radius)


def oracle_success(
    result: EpisodeResult,
    mode: DistanceMode = DistanceMode.GEODESIC,
    resolution: float = DEFAULT_GRID_RESOLUTION,
) -> int:
    """1 iff any path point comes within the success radius of the goal."""
    fld = _goal_field(result, resolution) if mode is DistanceMode.GEODESIC else None
    best = min(_distance_to_goal(result, p, mode, fld) for p in result.path)
    return int(best <= result.success_radius)


def spl(result: EpisodeResult, **kwargs) -> float:
    """Success weighted by path length: S * l / max(p, l).

    Defined as 0 on failure; a successful episode with zero reference
    length scores 1.
    """
    s = success(result, **kwargs)
    if not s:
        return 0.0
    ref = result.reference_path_length
    traveled = path_length(result.path)
    if ref == 0.0:
        return 1.0
    return ref / max(traveled, ref)


@dataclass(frozen=True)
class MetricsTable:
    """Aggregate over an episode set. Rates are percentages."""

    count: int
    ne_mean: float  # over episodes with finite NE
    disconnected: int
    sr_pct: float
    osr_pct: float
    spl_pct: float

    def formatted(self) -> dict:
        """Table-style strings: NE to 0.01, rates to 0.1."""
        return {
            "count": self.count,
            "ne": f"{self.ne_mean:.2f}",
            "disconnected": self.disconnected,
            "sr": f"{self.sr_pct:.1f}",
            "osr": f"{self.osr_pct:.1f}",
            "spl": f"{self.spl_pct:.1f}",
        }


def aggregate(
    results: Sequence[EpisodeResult],
    mode: DistanceMode = DistanceMode.GEODESIC,
    resolution: float = DEFAULT_GRID_RESOLUTION,
) -> MetricsTable:
    """Mean NE / SR / OSR / SPL over a non-empty result set. Episodes whose
    final position is disconnected from the goal are excluded from the NE
    mean and counted separately."""
    if not results:
        raise ContractViolationError("cannot aggregate an empty result set")
    nes: List[float] = []
    disconnected = 0
    sr_total = 0
    osr_total = 0
    spl_total = 0.0
    for r in results:
        fld = _goal_field(r, resolution) if mode is DistanceMode.GEODESIC else None
        ne = _distance_to_goal(r, r.path[-1], mode, fld)
        if math.isinf(ne):
            disconnected += 1
        else:
            nes.append(ne)
        s = int(ne <= r.success_radius)
        sr_total += s
        best = min(_distance_to_goal(r, p, mode, fld) for p in r.path)
        osr_total += int(best <= r.success_radius)
        if s:
            ref = r.reference_path_length
            traveled = path_length(r.path)
            spl_total += 1.0 if ref == 0.0 else ref / max(traveled, ref)
    n = len(results)
    return MetricsTable(
        count=n,
        ne_mean=(sum(nes) / len(nes)) if nes else math.inf,
        disconnected=disconnected,
        sr_pct=100.0 * sr_total / n,
        osr_pct=100.0 * osr_total / n,
        spl_pct=100.0 * spl_total / n,
    )
