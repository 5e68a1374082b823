"""Agent-centric BEV grid: binning, sinusoidal position embeddings, per-cell
mean pooling of the two feature streams, and token accounting.

The plane is discretized into an N x N grid of cells of side ``cell_size``
covering [-range_m, range_m) on both the x and z axes. A point at (x, z)
falls into cell i = floor((x + R) / cell_size), j likewise for z; the
intervals are half-open, so a point exactly on a cell's lower edge belongs
to that cell and x = +R falls outside the grid. Only occupied cells produce
tokens, which is what makes the representation compact.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractViolationError
from .features import FeatureMap
from .geometry import (
    CameraIntrinsics,
    DepthMap,
    PointFeatureSet,
    Pose,
    Stream,
    backproject_patch_grid,
    resize_depth,
    world_to_agent,
)

POSITION_EMBEDDING_BASE = 10000.0


class FusionMode(Enum):
    """How the two streams are pooled inside one cell."""

    GLOBAL_MEAN = "global"
    HIERARCHICAL_MEAN = "hierarchical"


class EmbeddingCoords(Enum):
    """Coordinate fed to the sinusoidal embedding: metric cell centers
    (resolution-invariant) or integer grid indices."""

    METRIC = "metric"
    INDEX = "index"


@dataclass(frozen=True)
class BevConfig:
    cell_size: float = 0.25
    range_m: float = 10.0
    embed_dim: int = 64
    fusion: FusionMode = FusionMode.GLOBAL_MEAN
    embedding_coords: EmbeddingCoords = EmbeddingCoords.METRIC
    y_min: Optional[float] = None
    y_max: Optional[float] = None

    def __post_init__(self):
        if self.cell_size <= 0 or self.range_m <= 0:
            raise ContractViolationError("cell_size and range_m must be positive")
        n = round(2.0 * self.range_m / self.cell_size)
        if n < 1 or abs(n * self.cell_size - 2.0 * self.range_m) > 1e-9:
            raise ContractViolationError(
                f"grid does not tile the range: {n} cells of {self.cell_size} m "
                f"do not cover 2 * {self.range_m} m within 1e-9"
            )
        if self.embed_dim < 4 or self.embed_dim % 4 != 0:
            raise ContractViolationError("embed_dim must be >= 4 and divisible by 4")
        if self.y_min is not None and self.y_max is not None and self.y_min > self.y_max:
            raise ContractViolationError("y_min must be <= y_max")

    @property
    def grid_n(self) -> int:
        return round(2.0 * self.range_m / self.cell_size)

    def cell_center(self, i: int, j: int) -> Tuple[float, float]:
        """Metric (x, z) center of cell (i, j) in the agent frame."""
        return (
            -self.range_m + (i + 0.5) * self.cell_size,
            -self.range_m + (j + 0.5) * self.cell_size,
        )


@dataclass
class CellAssignment:
    """Point indices per occupied cell, split by stream, in input order.

    ``members[(i, j)][stream]`` lists indices into the binned point set.
    """

    members: Dict[Tuple[int, int], Dict[Stream, List[int]]]
    discarded_out_of_range: int = 0
    discarded_y_clip: int = 0

    def occupied_cells(self) -> List[Tuple[int, int]]:
        return sorted(self.members.keys())


def bin_points(points: PointFeatureSet, config: BevConfig) -> CellAssignment:
    """Assign agent-frame points to grid cells.

    Out-of-range points are not an error; they are counted in the discard
    tally. When the config carries a y clip window, points outside it are
    discarded too (off by default: all heights share a cell).
    """
    n = config.grid_n
    x = points.points[:, 0]
    y = points.points[:, 1]
    z = points.points[:, 2]
    i = np.floor((x + config.range_m) / config.cell_size).astype(np.int64)
    j = np.floor((z + config.range_m) / config.cell_size).astype(np.int64)
    in_range = (i >= 0) & (i < n) & (j >= 0) & (j < n)
    keep = in_range
    y_clipped = 0
    if config.y_min is not None or config.y_max is not None:
        in_y = np.ones(len(points), dtype=bool)
        if config.y_min is not None:
            in_y &= y >= config.y_min
        if config.y_max is not None:
            in_y &= y <= config.y_max
        y_clipped = int(np.count_nonzero(in_range & ~in_y))
        keep = in_range & in_y
    members: Dict[Tuple[int, int], Dict[Stream, List[int]]] = {}
    src = points.source
    for idx in np.nonzero(keep)[0]:
        cell = (int(i[idx]), int(j[idx]))
        per_stream = members.get(cell)
        if per_stream is None:
            per_stream = {Stream.VISUAL: [], Stream.GEOMETRY: []}
            members[cell] = per_stream
        per_stream[Stream(int(src[idx]))].append(int(idx))
    return CellAssignment(
        members=members,
        discarded_out_of_range=int(np.count_nonzero(~in_range)),
        discarded_y_clip=y_clipped,
    )


def position_embedding(i: int, j: int, center_x: float, center_z: float, config: BevConfig) -> np.ndarray:
    """Continuous 2-D sinusoidal embedding of a cell's agent-centric position.

    The first half encodes the x coordinate, the second half z. Channel
    pair k within a half is (sin(c / base^(4k/embed_dim)),
    cos(c / base^(4k/embed_dim))) with base 10000, so every entry lies in
    [-1, 1] and the origin embeds to the alternating pattern [0, 1, 0, 1, ...].
    """
    d = config.embed_dim
    if d < 4 or d % 4 != 0:
        raise ContractViolationError("embed_dim must be >= 4 and divisible by 4")
    if config.embedding_coords is EmbeddingCoords.INDEX:
        cx, cz = float(i), float(j)
    else:
        cx, cz = float(center_x), float(center_z)
    k = np.arange(d // 4, dtype=np.float64)
    freq = POSITION_EMBEDDING_BASE ** (4.0 * k / d)
    out = np.empty(d, dtype=np.float64)
    half = d // 2
    out[0:half:2] = np.sin(cx / freq)
    out[1:half:2] = np.cos(cx / freq)
    out[half::2] = np.sin(cz / freq)
    out[half + 1 :: 2] = np.cos(cz / freq)
    return out


@dataclass(frozen=True, eq=False)
class BevToken:
    """One occupied cell: pooled feature plus position embedding."""

    cell: Tuple[int, int]
    feature: np.ndarray  # (d,) float32
    count_visual: int
    count_geometry: int
    center: Tuple[float, float]


@dataclass(frozen=True, eq=False)
class BevMap:
    """Occupied-cell tokens in row-major ascending (i, j) order."""

    tokens: Tuple[BevToken, ...]
    config: BevConfig
    step_index: int = 0

    def __len__(self) -> int:
        return len(self.tokens)

    def feature_matrix(self) -> np.ndarray:
        if not self.tokens:
            return np.zeros((0, self.config.embed_dim), dtype=np.float32)
        return np.stack([t.feature for t in self.tokens])

    def cells_array(self) -> np.ndarray:
        return np.array([t.cell for t in self.tokens], dtype=np.int64).reshape(-1, 2)

    def centers_array(self) -> np.ndarray:
        return np.array([t.center for t in self.tokens], dtype=np.float64).reshape(-1, 2)


def _canonical_order(points: PointFeatureSet, indices: List[int]) -> List[int]:
    """Sort member indices by (frame_index, patch_index)."""
    return sorted(indices, key=lambda k: (int(points.frame_index[k]), int(points.patch_index[k])))


def aggregate(assignment: CellAssignment, points: PointFeatureSet, config: BevConfig) -> BevMap:
    """Pool member features per occupied cell and add the position embedding.

    Summation order is fixed: within each stream ascending (frame_index,
    patch_index), visual stream before geometry. That makes the result
    independent of input permutation, bit for bit.

    GLOBAL_MEAN averages all members regardless of stream.
    HIERARCHICAL_MEAN averages each stream first, then takes the unweighted
    mean of the stream means that are present.
    """
    d = points.dim
    if config.embed_dim != d:
        raise ContractViolationError(
            f"embed_dim {config.embed_dim} must equal the feature dim {d} so the "
            "embedding can be added to the pooled feature"
        )
    feats = points.features.astype(np.float64)
    tokens: List[BevToken] = []
    for cell in assignment.occupied_cells():
        per_stream = assignment.members[cell]
        vis = _canonical_order(points, per_stream[Stream.VISUAL])
        geo = _canonical_order(points, per_stream[Stream.GEOMETRY])
        n_vis, n_geo = len(vis), len(geo)
        if n_vis + n_geo == 0:
            continue
        if config.fusion is FusionMode.GLOBAL_MEAN:
            total = np.zeros(d, dtype=np.float64)
            for k in vis:
                total += feats[k]
            for k in geo:
                total += feats[k]
            pooled = total / float(n_vis + n_geo)
        else:
            stream_means = []
            for group in (vis, geo):
                if not group:
                    continue
                s = np.zeros(d, dtype=np.float64)
                for k in group:
                    s += feats[k]
                stream_means.append(s / float(len(group)))
            pooled = stream_means[0] if len(stream_means) == 1 else (stream_means[0] + stream_means[1]) / 2.0
        center = config.cell_center(*cell)
        emb = position_embedding(cell[0], cell[1], center[0], center[1], config)
        tokens.append(
            BevToken(
                cell=cell,
                feature=(pooled + emb).astype(np.float32),
                count_visual=n_vis,
                count_geometry=n_geo,
                center=center,
            )
        )
    return BevMap(tokens=tuple(tokens), config=config)


@dataclass(frozen=True, eq=False)
class BevFrame:
    """One historical observation ready for BEV construction. The geometry
    feature map must already be projected to the visual feature dim."""

    visual: FeatureMap
    geometry: FeatureMap
    depth: DepthMap
    pose: Pose


@dataclass(frozen=True)
class TokenStats:
    """Accounting for one BEV build."""

    tokens: int
    frames: int
    dense_baseline: int  # frames * visual_rows * visual_cols patch tokens
    points_visual: int
    points_geometry: int
    discarded_out_of_range: int
    discarded_y_clip: int

    def as_dict(self) -> dict:
        return {
            "tokens": self.tokens,
            "frames": self.frames,
            "dense_baseline": self.dense_baseline,
            "points_visual": self.points_visual,
            "points_geometry": self.points_geometry,
            "discarded_out_of_range": self.discarded_out_of_range,
            "discarded_y_clip": self.discarded_y_clip,
        }


def project_frame_points(
    frame: BevFrame,
    visual_intrinsics: CameraIntrinsics,
    geometry_intrinsics: CameraIntrinsics,
    frame_index: int,
) -> PointFeatureSet:
    """Back-project both streams of one frame into the world frame, resizing
    the frame's depth to each stream's grid. Visual points precede geometry
    points in the returned set."""
    if frame.visual.dim != frame.geometry.dim:
        raise ContractViolationError(
            f"geometry stream dim {frame.geometry.dim} must already match the "
            f"visual dim {frame.visual.dim} (project it first)"
        )
    depth_v = resize_depth(frame.depth, frame.visual.rows, frame.visual.cols)
    depth_g = resize_depth(frame.depth, frame.geometry.rows, frame.geometry.cols)
    pts_v = backproject_patch_grid(frame.visual, depth_v, visual_intrinsics, frame.pose, frame_index)
    pts_g = backproject_patch_grid(frame.geometry, depth_g, geometry_intrinsics, frame.pose, frame_index)
    return PointFeatureSet.concat([pts_v, pts_g])


def build_ga_bev(
    history: Sequence[BevFrame],
    current_agent_pose: Pose,
    visual_intrinsics: CameraIntrinsics,
    geometry_intrinsics: CameraIntrinsics,
    config: BevConfig,
) -> Tuple[BevMap, TokenStats]:
    """Full tokenization of a window of historical frames.

    Back-projects both streams of every frame, re-expresses all points in
    the current agent frame, bins them and pools per cell. An empty result
    (all depths invalid or out of range) is a valid outcome, not an error.
    """
    if not history:
        raise ContractViolationError("history must contain at least one frame")
    sets = [
        project_frame_points(f, visual_intrinsics, geometry_intrinsics, idx)
        for idx, f in enumerate(history)
    ]
    combined = PointFeatureSet.concat(sets)
    agent_points = world_to_agent(combined, current_agent_pose)
    assignment = bin_points(agent_points, config)
    bev = aggregate(assignment, agent_points, config)
    stats = TokenStats(
        tokens=len(bev),
        frames=len(history),
        dense_baseline=len(history) * history[0].visual.rows * history[0].visual.cols,
        points_visual=int(np.count_nonzero(combined.source == int(Stream.VISUAL))),
        points_geometry=int(np.count_nonzero(combined.source == int(Stream.GEOMETRY))),
        discarded_out_of_range=assignment.discarded_out_of_range,
        discarded_y_clip=assignment.discarded_y_clip,
    )
    return bev, stats


def token_count(bev_map: BevMap) -> int:
    """Number of retained (occupied-cell) tokens."""
    return len(bev_map)


def cell_of_points(points: PointFeatureSet, config: BevConfig) -> Dict[Tuple[int, int, int], Tuple[int, int]]:
    """Map provenance key (stream, frame_index, patch_index) -> cell for
    every in-range point. Used to compare runs, e.g. clean vs noisy."""
    n = config.grid_n
    x = points.points[:, 0]
    z = points.points[:, 2]
    i = np.floor((x + config.range_m) / config.cell_size).astype(np.int64)
    j = np.floor((z + config.range_m) / config.cell_size).astype(np.int64)
    ok = (i >= 0) & (i < n) & (j >= 0) & (j < n)
    out: Dict[Tuple[int, int, int], Tuple[int, int]] = {}
    for idx in np.nonzero(ok)[0]:
        key = (int(points.source[idx]), int(points.frame_index[idx]), int(points.patch_index[idx]))
        out[key] = (int(i[idx]), int(j[idx]))
    return out


def reassignment_fraction(
    clean: Dict[Tuple[int, int, int], Tuple[int, int]],
    noisy: Dict[Tuple[int, int, int], Tuple[int, int]],
) -> Tuple[float, int, int]:
    """Fraction of points surviving both runs whose cell changed.

    Returns (fraction, changed, survivors); the fraction is 0.0 when no
    point survives both runs.
    """
    survivors = 0
    changed = 0
    for key, cell in clean.items():
        other = noisy.get(key)
        if other is None:
            continue
        survivors += 1
        if other != cell:
            changed += 1
    return (changed / survivors if survivors else 0.0), changed, survivors
