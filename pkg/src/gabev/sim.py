"""Synthetic continuous environment: rectangular rooms with box obstacles,
analytic ray-cast depth, discrete agent kinematics, grid geodesics and
seeded sensor noise.

The room is a closed axis-aligned volume: floor at y = 0, ceiling at
y = -ceiling_height (y points down, so up is negative). Obstacles are
boxes standing on the floor. The agent is a disc of configurable radius
moving on the floor plane; heading 0 points along +z and positive turns
are to the left (counterclockwise seen from above).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np

from .errors import ContractViolationError, SceneError
from .geometry import CameraIntrinsics, DepthMap, Pose

DEFAULT_STEP_M = 0.25
DEFAULT_TURN_DEG = 15.0
DEFAULT_AGENT_RADIUS = 0.18
DEFAULT_CAMERA_HEIGHT = 1.25
DEFAULT_MAX_RANGE = 20.0
DEFAULT_COLLISION_MARGIN = 1e-3
DEFAULT_GRID_RESOLUTION = 0.05


class Action(Enum):
    FORWARD = "forward"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"
    STOP = "stop"

    @classmethod
    def from_name(cls, name: str) -> "Action":
        for a in cls:
            if a.value == name:
                return a
        raise ContractViolationError(f"unknown action name {name!r}")


@dataclass(frozen=True)
class Box:
    """Axis-aligned obstacle footprint on (x, z), extruded up from the floor."""

    x_min: float
    x_max: float
    z_min: float
    z_max: float
    height: float

    def __post_init__(self):
        if self.x_min >= self.x_max or self.z_min >= self.z_max or self.height <= 0:
            raise SceneError(f"box must have positive extents: {self}")

    def contains(self, x: float, z: float) -> bool:
        return self.x_min <= x <= self.x_max and self.z_min <= z <= self.z_max

    def distance(self, x: float, z: float) -> float:
        """Euclidean distance from a point to the footprint (0 inside)."""
        dx = max(self.x_min - x, 0.0, x - self.x_max)
        dz = max(self.z_min - z, 0.0, z - self.z_max)
        return math.hypot(dx, dz)


@dataclass(frozen=True)
class Scene:
    """Closed rectangular room with box obstacles."""

    x_min: float
    x_max: float
    z_min: float
    z_max: float
    obstacles: Tuple[Box, ...] = ()
    ceiling_height: float = 2.5

    def __post_init__(self):
        if self.x_min >= self.x_max or self.z_min >= self.z_max:
            raise SceneError("scene bounds must have positive extents")
        if self.ceiling_height <= 0:
            raise SceneError("ceiling height must be positive")
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        for box in self.obstacles:
            if (
                box.x_min < self.x_min
                or box.x_max > self.x_max
                or box.z_min < self.z_min
                or box.z_max > self.z_max
            ):
                raise SceneError(f"obstacle extends outside the room bounds: {box}")

    def in_bounds(self, x: float, z: float, clearance: float = 0.0) -> bool:
        return (
            self.x_min + clearance <= x <= self.x_max - clearance
            and self.z_min + clearance <= z <= self.z_max - clearance
        )

    def is_free(self, x: float, z: float, clearance: float = 0.0) -> bool:
        """True when a disc of radius ``clearance`` at (x, z) overlaps nothing."""
        if not self.in_bounds(x, z, clearance):
            return False
        return all(box.distance(x, z) > clearance for box in self.obstacles)


@dataclass(frozen=True)
class AgentState:
    """Floor-plane position plus heading in radians, normalized to [-pi, pi)."""

    x: float
    z: float
    heading: float

    def __post_init__(self):
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @property
    def position(self) -> Tuple[float, float]:
        return (self.x, self.z)


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian sensor-noise magnitudes; all zero means no perturbation."""

    depth_sigma: float = 0.0
    pose_sigma: float = 0.0
    rot_sigma_deg: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.depth_sigma < 0 or self.pose_sigma < 0 or self.rot_sigma_deg < 0:
            raise ContractViolationError("noise sigmas must be >= 0")

    @property
    def is_zero(self) -> bool:
        return self.depth_sigma == 0.0 and self.pose_sigma == 0.0 and self.rot_sigma_deg == 0.0


def wrap_angle(theta: float) -> float:
    """Normalize an angle to [-pi, pi)."""
    out = math.remainder(theta, 2.0 * math.pi)
    if out >= math.pi:
        out -= 2.0 * math.pi
    if out < -math.pi:
        out += 2.0 * math.pi
    return out


def heading_forward(heading: float) -> Tuple[float, float]:
    """Unit forward direction on the floor plane for a heading."""
    return (-math.sin(heading), math.cos(heading))


def yaw_rotation(theta: float) -> np.ndarray:
    """World rotation matrix for a heading; heading 0 faces +z and a
    positive angle turns left."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]], dtype=np.float64)


def camera_pose(state: AgentState, camera_height: float = DEFAULT_CAMERA_HEIGHT) -> Pose:
    """Pose of the forward-facing camera mounted at the agent's position.

    The camera sits ``camera_height`` meters above the floor; up is -y, so
    the translation's y component is negative.
    """
    return Pose(yaw_rotation(state.heading), np.array([state.x, -camera_height, state.z]))


def heading_of_pose(pose: Pose) -> float:
    """Yaw extracted from a camera pose's forward axis."""
    fwd = pose.rotation[:, 2]
    return math.atan2(-fwd[0], fwd[2])


# ---------------------------------------------------------------------------
# Depth rendering


def _ray_box_span(origin: np.ndarray, dirs: np.ndarray, box_min, box_max):
    """Slab intersection spans for rays origin + t * dirs against one box.

    Returns (t_enter, t_exit) arrays; a ray misses when t_enter > t_exit.
    Grazing rays (parallel to a face they lie on) are treated as misses.
    """
    bmin = np.asarray(box_min, dtype=np.float64)
    bmax = np.asarray(box_max, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (bmin - origin) / dirs
        t2 = (bmax - origin) / dirs
    lo = np.minimum(t1, t2)
    hi = np.maximum(t1, t2)
    lo = np.where(np.isnan(lo), -np.inf, lo)
    hi = np.where(np.isnan(hi), np.inf, hi)
    enter = lo.max(axis=1)
    exit_ = hi.min(axis=1)
    return enter, exit_


def render_depth(
    scene: Scene,
    pose: Pose,
    intrinsics: CameraIntrinsics,
    rows: int,
    cols: int,
    max_range: float = DEFAULT_MAX_RANGE,
) -> DepthMap:
    """Analytic z-depth through the pixel centers of a rows x cols grid.

    Ray directions are K^-1 [u, v, 1], unnormalized, so the ray parameter
    of the nearest hit *is* the planar depth: a fronto-parallel wall 2 m
    ahead reads 2.0 at every pixel that sees it, regardless of the pixel's
    off-axis angle. Pixels whose nearest hit lies beyond ``max_range``
    (or that hit nothing) are marked invalid.
    """
    if rows < 1 or cols < 1:
        raise ContractViolationError("render grid dimensions must be >= 1")
    origin = pose.translation
    ox, oy, oz = float(origin[0]), float(origin[1]), float(origin[2])
    if not (-scene.ceiling_height < oy < 0.0):
        raise SceneError(f"camera height {-oy} is outside the room's vertical extent")
    if not scene.in_bounds(ox, oz):
        raise SceneError("camera is outside the room bounds")
    for box in scene.obstacles:
        if box.contains(ox, oz) and -box.height <= oy <= 0.0:
            raise SceneError("camera is inside an obstacle")

    u = (np.arange(cols, dtype=np.float64) + 0.5) * (intrinsics.width / cols)
    v = (np.arange(rows, dtype=np.float64) + 0.5) * (intrinsics.height / rows)
    uu = np.broadcast_to(u[None, :], (rows, cols)).ravel()
    vv = np.broadcast_to(v[:, None], (rows, cols)).ravel()
    dirs_cam = np.stack(
        [(uu - intrinsics.cx) / intrinsics.fx, (vv - intrinsics.cy) / intrinsics.fy, np.ones_like(uu)],
        axis=1,
    )
    dirs = dirs_cam @ pose.rotation.T

    # The camera is inside the room volume: the nearest surface along each
    # ray is either the room shell (exit point) or an obstacle entry.
    room_enter, room_exit = _ray_box_span(
        origin, dirs, (scene.x_min, -scene.ceiling_height, scene.z_min), (scene.x_max, 0.0, scene.z_max)
    )
    nearest = np.where(room_exit > 0.0, room_exit, np.inf)
    for box in scene.obstacles:
        enter, exit_ = _ray_box_span(
            origin, dirs, (box.x_min, -box.height, box.z_min), (box.x_max, 0.0, box.z_max)
        )
        hit = (enter > 0.0) & (enter <= exit_)
        nearest = np.where(hit & (enter < nearest), enter, nearest)

    depth = nearest.reshape(rows, cols)
    valid = np.isfinite(depth) & (depth <= max_range)
    values = np.where(valid, depth, 0.0).astype(np.float32)
    return DepthMap(values=values, mask=valid)


# ---------------------------------------------------------------------------
# Agent kinematics


def _ray_rect_span_2d(px, pz, dx, dz, x0, x1, z0, z1):
    enter = -math.inf
    exit_ = math.inf
    for p, d, lo, hi in ((px, dx, x0, x1), (pz, dz, z0, z1)):
        if d == 0.0:
            if p < lo or p > hi:
                return math.inf, -math.inf
            continue
        t1 = (lo - p) / d
        t2 = (hi - p) / d
        if t1 > t2:
            t1, t2 = t2, t1
        enter = max(enter, t1)
        exit_ = min(exit_, t2)
    return enter, exit_


def _ray_circle_enter(px, pz, dx, dz, cx, cz, r) -> float:
    """Smallest t >= 0 where the unit-direction ray meets the circle, else inf."""
    mx, mz = px - cx, pz - cz
    b = mx * dx + mz * dz
    c = mx * mx + mz * mz - r * r
    disc = b * b - c
    if disc < 0.0:
        return math.inf
    root = math.sqrt(disc)
    t = -b - root
    if t >= 0.0:
        return t
    t = -b + root
    return t if t >= 0.0 else math.inf


def max_free_travel(scene: Scene, x: float, z: float, dx: float, dz: float, radius: float) -> float:
    """Distance a disc of the given radius can slide along (dx, dz) before
    touching a wall or obstacle. Direction must be a unit vector."""
    best = math.inf
    # Room walls: the disc center must stay inside the bounds shrunk by the
    # radius; leaving that inner rectangle is the wall contact.
    enter, exit_ = _ray_rect_span_2d(
        x, z, dx, dz, scene.x_min + radius, scene.x_max - radius, scene.z_min + radius, scene.z_max - radius
    )
    if exit_ >= enter and exit_ >= 0.0:
        best = min(best, exit_)
    else:
        best = 0.0
    # Obstacles: disc vs box equals point vs box expanded by the radius with
    # quarter-circle corners.
    for box in scene.obstacles:
        candidates = []
        for rect in (
            (box.x_min - radius, box.x_max + radius, box.z_min, box.z_max),
            (box.x_min, box.x_max, box.z_min - radius, box.z_max + radius),
        ):
            enter, exit_ = _ray_rect_span_2d(x, z, dx, dz, *rect)
            if enter <= exit_ and exit_ >= 0.0:
                candidates.append(max(enter, 0.0))
        for cx in (box.x_min, box.x_max):
            for cz in (box.z_min, box.z_max):
                candidates.append(_ray_circle_enter(x, z, dx, dz, cx, cz, radius))
        if candidates:
            best = min(best, min(candidates))
    return best


def step(
    scene: Scene,
    state: AgentState,
    action: Action,
    step_m: float = DEFAULT_STEP_M,
    turn_deg: float = DEFAULT_TURN_DEG,
    agent_radius: float = DEFAULT_AGENT_RADIUS,
    margin: float = DEFAULT_COLLISION_MARGIN,
) -> AgentState:
    """Apply one discrete action. A blocked forward step stops at the
    contact distance minus ``margin`` (no sliding); the post-state is
    always collision free."""
    if action is Action.STOP:
        return state
    if action is Action.TURN_LEFT:
        return AgentState(state.x, state.z, state.heading + math.radians(turn_deg))
    if action is Action.TURN_RIGHT:
        return AgentState(state.x, state.z, state.heading - math.radians(turn_deg))
    dx, dz = heading_forward(state.heading)
    free = max_free_travel(scene, state.x, state.z, dx, dz, agent_radius)
    move = min(step_m, max(0.0, free - margin))
    return AgentState(state.x + move * dx, state.z + move * dz, state.heading)


# ---------------------------------------------------------------------------
# Grid geodesics

_SQRT2 = math.sqrt(2.0)
_NEIGHBORS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


class GeodesicField:
    """Shortest-path distances from every free cell to a goal point on an
    8-connected grid rasterization of the scene's free space."""

    def __init__(self, scene: Scene, goal: Tuple[float, float], resolution: float = DEFAULT_GRID_RESOLUTION,
                 clearance: float = 0.0):
        if resolution <= 0:
            raise ContractViolationError("grid resolution must be positive")
        self.scene = scene
        self.resolution = resolution
        self.clearance = clearance
        self.nx = max(1, int(round((scene.x_max - scene.x_min) / resolution)))
        self.nz = max(1, int(round((scene.z_max - scene.z_min) / resolution)))
        self.free = self._rasterize_free()
        gi, gj = self.cell_of(goal[0], goal[1])
        if not scene.is_free(goal[0], goal[1]):
            raise SceneError(f"goal {goal} is not in free space")
        gi, gj = self._nearest_free_cell(gi, gj)
        self.goal_cell = (gi, gj)
        self.dist = self._dijkstra(gi, gj)

    def _rasterize_free(self) -> np.ndarray:
        xs = self.scene.x_min + (np.arange(self.nx, dtype=np.float64) + 0.5) * self.resolution
        zs = self.scene.z_min + (np.arange(self.nz, dtype=np.float64) + 0.5) * self.resolution
        gx = np.broadcast_to(xs[:, None], (self.nx, self.nz))
        gz = np.broadcast_to(zs[None, :], (self.nx, self.nz))
        free = (
            (gx >= self.scene.x_min + self.clearance)
            & (gx <= self.scene.x_max - self.clearance)
            & (gz >= self.scene.z_min + self.clearance)
            & (gz <= self.scene.z_max - self.clearance)
        )
        for box in self.scene.obstacles:
            ddx = np.maximum(np.maximum(box.x_min - gx, 0.0), gx - box.x_max)
            ddz = np.maximum(np.maximum(box.z_min - gz, 0.0), gz - box.z_max)
            free &= np.hypot(ddx, ddz) > self.clearance
        return free

    def cell_of(self, x: float, z: float) -> Tuple[int, int]:
        i = int(math.floor((x - self.scene.x_min) / self.resolution))
        j = int(math.floor((z - self.scene.z_min) / self.resolution))
        return (min(max(i, 0), self.nx - 1), min(max(j, 0), self.nz - 1))

    def cell_center(self, i: int, j: int) -> Tuple[float, float]:
        return (
            self.scene.x_min + (i + 0.5) * self.resolution,
            self.scene.z_min + (j + 0.5) * self.resolution,
        )

    def _nearest_free_cell(self, i: int, j: int, max_ring: int = 8) -> Tuple[int, int]:
        if self.free[i, j]:
            return (i, j)
        for ring in range(1, max_ring + 1):
            best = None
            for di in range(-ring, ring + 1):
                for dj in range(-ring, ring + 1):
                    if max(abs(di), abs(dj)) != ring:
                        continue
                    ni, nj = i + di, j + dj
                    if 0 <= ni < self.nx and 0 <= nj < self.nz and self.free[ni, nj]:
                        d2 = di * di + dj * dj
                        if best is None or d2 < best[0]:
                            best = (d2, ni, nj)
            if best is not None:
                return (best[1], best[2])
        raise SceneError("no free cell near the requested position")

    def _dijkstra(self, gi: int, gj: int) -> np.ndarray:
        from scipy.sparse import coo_matrix
        from scipy.sparse.csgraph import dijkstra as cs_dijkstra

        free = self.free
        node = np.full((self.nx, self.nz), -1, dtype=np.int64)
        fi, fj = np.nonzero(free)
        n_free = fi.size
        node[fi, fj] = np.arange(n_free)
        rows, cols, costs = [], [], []
        # One direction per undirected edge; csgraph symmetrizes.
        for di, dj, cost in ((1, 0, self.resolution), (0, 1, self.resolution),
                             (1, 1, self.resolution * _SQRT2), (1, -1, self.resolution * _SQRT2)):
            src_i = slice(max(0, -di), self.nx - max(0, di))
            src_j = slice(max(0, -dj), self.nz - max(0, dj))
            dst_i = slice(max(0, di), self.nx - max(0, -di))
            dst_j = slice(max(0, dj), self.nz - max(0, -dj))
            ok = free[src_i, src_j] & free[dst_i, dst_j]
            a = node[src_i, src_j][ok]
            b = node[dst_i, dst_j][ok]
            rows.append(a)
            cols.append(b)
            costs.append(np.full(a.size, cost))
        graph = coo_matrix(
            (np.concatenate(costs), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_free, n_free),
        ).tocsr()
        flat = cs_dijkstra(graph, directed=False, indices=node[gi, gj])
        dist = np.full((self.nx, self.nz), np.inf)
        dist[fi, fj] = flat
        return dist

    def distance_at(self, x: float, z: float) -> float:
        """Geodesic distance from a point to the goal; +inf when disconnected."""
        i, j = self.cell_of(x, z)
        if not self.free[i, j]:
            i, j = self._nearest_free_cell(i, j)
        return float(self.dist[i, j])

    def descend(self, x: float, z: float, lookahead_cells: int = 4) -> Tuple[float, float]:
        """Follow the distance gradient ``lookahead_cells`` steps downhill and
        return that cell's center. Falls back to the current cell center at
        the goal or in a dead field."""
        i, j = self.cell_of(x, z)
        if not self.free[i, j]:
            i, j = self._nearest_free_cell(i, j)
        for _ in range(lookahead_cells):
            best = (self.dist[i, j], i, j)
            for di, dj in _NEIGHBORS:
                ni, nj = i + di, j + dj
                if 0 <= ni < self.nx and 0 <= nj < self.nz and self.free[ni, nj]:
                    if self.dist[ni, nj] < best[0]:
                        best = (self.dist[ni, nj], ni, nj)
            if (best[1], best[2]) == (i, j):
                break
            i, j = best[1], best[2]
        return self.cell_center(i, j)


def geodesic_distance(
    scene: Scene,
    a: Tuple[float, float],
    b: Tuple[float, float],
    resolution: float = DEFAULT_GRID_RESOLUTION,
    clearance: float = 0.0,
) -> float:
    """Shortest 8-connected grid path length between two free points;
    +inf when they are disconnected."""
    if not scene.is_free(a[0], a[1]):
        raise SceneError(f"start {a} is not in free space")
    field = GeodesicField(scene, b, resolution=resolution, clearance=clearance)
    return field.distance_at(a[0], a[1])


# ---------------------------------------------------------------------------
# Sensor noise

_STREAM_DEPTH = 1
_STREAM_POSE = 2


def _rng(spec: NoiseSpec, frame_index: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([spec.seed & 0x7FFFFFFFFFFFFFFF, frame_index, stream])


def inject_depth_noise(depth: DepthMap, spec: NoiseSpec, frame_index: int = 0) -> DepthMap:
    """Add i.i.d. Gaussian noise to every valid pixel, clamped to >= 0.
    A zero sigma returns the input unchanged (same object)."""
    if spec.depth_sigma == 0.0:
        return depth
    rng = _rng(spec, frame_index, _STREAM_DEPTH)
    noise = rng.normal(0.0, spec.depth_sigma, size=depth.values.shape)
    vals = depth.values.astype(np.float64) + noise
    vals = np.maximum(vals, 0.0)
    vals = np.where(depth.mask, vals, 0.0)
    return DepthMap(values=vals.astype(np.float32), mask=depth.mask)


def inject_pose_noise(pose: Pose, spec: NoiseSpec, frame_index: int = 0) -> Pose:
    """Gaussian noise on the translation components plus a Gaussian yaw
    perturbation about the vertical axis. Zero sigmas return the input."""
    if spec.pose_sigma == 0.0 and spec.rot_sigma_deg == 0.0:
        return pose
    rng = _rng(spec, frame_index, _STREAM_POSE)
    translation = np.asarray(pose.translation, dtype=np.float64).copy()
    if spec.pose_sigma > 0.0:
        translation = translation + rng.normal(0.0, spec.pose_sigma, size=3)
    rotation = pose.rotation
    if spec.rot_sigma_deg > 0.0:
        dyaw = rng.normal(0.0, math.radians(spec.rot_sigma_deg))
        rotation = yaw_rotation(dyaw) @ rotation
    return Pose(rotation, translation)
