"""Camera model, depth-guided back-projection and rigid transforms.

Conventions used throughout the package:

* Camera frame: x right, y down, z forward (pinhole optical axis is +z).
* World frame: same handedness. The ground plane is (x, z); y is the
  vertical axis and points down, so heights above the floor are negative
  y values.
* Depth values are planar z-depth (distance along the optical axis),
  never Euclidean ray length.
* All coordinate math runs in float64; feature payloads stay float32.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import TYPE_CHECKING

import numpy as np

from .errors import ContractViolationError, PoseValidationError

if TYPE_CHECKING:  # pragma: no cover
    from .features import FeatureMap

ORTHONORMAL_TOL = 1e-9


class Stream(IntEnum):
    """Which encoder a feature vector came from."""

    VISUAL = 0
    GEOMETRY = 1


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters in pixel units for a width x height image."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ContractViolationError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ContractViolationError("image dimensions must be >= 1")
        if not (0.0 <= self.cx <= self.width) or not (0.0 <= self.cy <= self.height):
            raise ContractViolationError("principal point must lie inside the image")

    @classmethod
    def from_hfov(cls, hfov_deg: float, width: int, height: int) -> "CameraIntrinsics":
        """Square-pixel intrinsics from a horizontal field of view.

        fx is chosen so the image spans ``hfov_deg`` horizontally; the
        principal point sits at the image center.
        """
        if not (0.0 < hfov_deg < 180.0):
            raise ContractViolationError("horizontal FOV must be in (0, 180) degrees")
        fx = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
        return cls(fx=fx, fy=fx, cx=width / 2.0, cy=height / 2.0, width=width, height=height)

    def matrix(self) -> np.ndarray:
        """3x3 intrinsic matrix."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]],
            dtype=np.float64,
        )


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform mapping camera/body coordinates into the world frame.

    ``rotation`` is a 3x3 orthonormal matrix with determinant +1,
    ``translation`` the frame origin in world coordinates (meters).
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.ascontiguousarray(np.asarray(self.rotation, dtype=np.float64))
        t = np.ascontiguousarray(np.asarray(self.translation, dtype=np.float64))
        if r.shape != (3, 3):
            raise PoseValidationError(f"rotation must be 3x3, got {r.shape}")
        if t.size != 3:
            raise PoseValidationError(f"translation must have 3 entries, got {t.size}")
        t = t.reshape(3)
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(t)):
            raise PoseValidationError("pose entries must be finite")
        ortho_err = np.abs(r.T @ r - np.eye(3)).max()
        if ortho_err > ORTHONORMAL_TOL:
            raise PoseValidationError(
                f"rotation not orthonormal (max |R^T R - I| = {ortho_err:.3e})"
            )
        det = float(np.linalg.det(r))
        if abs(det - 1.0) > ORTHONORMAL_TOL:
            raise PoseValidationError(f"rotation determinant must be +1, got {det!r}")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Map (n, 3) local-frame points into the world frame: R p + t."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def inverse_transform(self, points: np.ndarray) -> np.ndarray:
        """Map (n, 3) world-frame points into this frame: R^T (p - t)."""
        pts = np.asarray(points, dtype=np.float64)
        return (pts - self.translation) @ self.rotation


def compose(a: Pose, b: Pose) -> Pose:
    """Composite pose that applies ``b`` first, then ``a``."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(p: Pose) -> Pose:
    """Inverse pose: compose(p, invert(p)) is the identity."""
    rt = p.rotation.T
    return Pose(rt, -(rt @ p.translation))


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Planar z-depths in meters on a row-major grid, with a validity mask.

    Invalid entries are stored as 0.0 and flagged in ``mask``; arithmetic
    never sees NaN sentinels. Values are float32 (the sensor/persistence
    dtype); geometry operations promote to float64 internally.
    """

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=np.float32))
        if vals.ndim != 2 or vals.size == 0:
            raise ContractViolationError(f"depth values must be a non-empty 2-D grid, got shape {vals.shape}")
        mask = np.ascontiguousarray(np.asarray(self.mask, dtype=bool))
        if mask.shape != vals.shape:
            raise ContractViolationError("mask shape must match values shape")
        if not np.all(np.isfinite(vals[mask])):
            raise ContractViolationError("valid depth entries must be finite")
        if np.any(vals[mask] < 0.0):
            raise ContractViolationError("valid depth entries must be >= 0")
        vals = np.where(mask, vals, np.float32(0.0))
        vals.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def full(cls, rows: int, cols: int, value: float) -> "DepthMap":
        return cls(np.full((rows, cols), value, dtype=np.float32), np.ones((rows, cols), dtype=bool))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    # width/height follow image conventions: width counts columns.
    @property
    def width(self) -> int:
        return self.cols

    @property
    def height(self) -> int:
        return self.rows


@dataclass(frozen=True, eq=False)
class PointFeatureSet:
    """World- or agent-frame 3-D points paired with feature vectors.

    ``source`` tags each point with the stream it came from, and
    (frame_index, patch_index) record provenance so downstream reductions
    can use a canonical order regardless of construction order.
    """

    points: np.ndarray       # (n, 3) float64
    features: np.ndarray     # (n, d) float32
    source: np.ndarray       # (n,) uint8, values from Stream
    frame_index: np.ndarray  # (n,) int32
    patch_index: np.ndarray  # (n,) int32

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        feats = np.ascontiguousarray(np.asarray(self.features, dtype=np.float32))
        src = np.ascontiguousarray(np.asarray(self.source, dtype=np.uint8))
        frame = np.ascontiguousarray(np.asarray(self.frame_index, dtype=np.int32))
        patch = np.ascontiguousarray(np.asarray(self.patch_index, dtype=np.int32))
        n = pts.shape[0]
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ContractViolationError(f"points must be (n, 3), got {pts.shape}")
        if feats.ndim != 2 or feats.shape[0] != n:
            raise ContractViolationError("features must be (n, d) parallel to points")
        if src.shape != (n,) or frame.shape != (n,) or patch.shape != (n,):
            raise ContractViolationError("provenance arrays must be parallel to points")
        if not np.all(np.isfinite(pts)):
            raise ContractViolationError("points must be finite")
        if not np.all(np.isfinite(feats)):
            raise ContractViolationError("features must be finite")
        for arr in (pts, feats, src, frame, patch):
            arr.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "frame_index", frame)
        object.__setattr__(self, "patch_index", patch)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @classmethod
    def empty(cls, dim: int) -> "PointFeatureSet":
        return cls(
            np.zeros((0, 3), dtype=np.float64),
            np.zeros((0, dim), dtype=np.float32),
            np.zeros(0, dtype=np.uint8),
            np.zeros(0, dtype=np.int32),
            np.zeros(0, dtype=np.int32),
        )

    @classmethod
    def concat(cls, sets: "list[PointFeatureSet]") -> "PointFeatureSet":
        """Concatenate sets in the given order. All feature dims must agree."""
        if not sets:
            raise ContractViolationError("cannot concatenate an empty list of point sets")
        dims = {s.dim for s in sets}
        if len(dims) != 1:
            raise ContractViolationError(f"mixed feature dims {sorted(dims)} cannot be combined")
        return cls(
            np.concatenate([s.points for s in sets]),
            np.concatenate([s.features for s in sets]),
            np.concatenate([s.source for s in sets]),
            np.concatenate([s.frame_index for s in sets]),
            np.concatenate([s.patch_index for s in sets]),
        )


def grid_pixel_centers(rows: int, cols: int, width: float, height: float):
    """Pixel coordinates of the centers of a rows x cols grid laid over a
    width x height image: u = (c + 0.5) * width / cols and likewise for v.

    Returns (u, v) arrays of shape (rows, cols).
    """
    u = (np.arange(cols, dtype=np.float64) + 0.5) * (width / cols)
    v = (np.arange(rows, dtype=np.float64) + 0.5) * (height / rows)
    return np.broadcast_to(u[None, :], (rows, cols)), np.broadcast_to(v[:, None], (rows, cols))


def backproject_patch_grid(
    features: "FeatureMap",
    depth: DepthMap,
    intrinsics: CameraIntrinsics,
    pose: Pose,
    frame_index: int = 0,
) -> PointFeatureSet:
    """Lift a grid of patch features into world-frame 3-D points.

    Each valid patch (row r, col c) is placed at its center pixel
    (u, v) = ((c + 0.5) * width / cols, (r + 0.5) * height / rows) and
    back-projected with the pinhole model:

        p = R * (K^-1 [u, v, 1]^T * D(r, c)) + t

    Patches whose depth is invalid or exactly zero carry no spatial
    information and are dropped.
    """
    if (features.rows, features.cols) != (depth.rows, depth.cols):
        raise ContractViolationError(
            f"feature grid {features.rows}x{features.cols} does not match "
            f"depth grid {depth.rows}x{depth.cols}"
        )
    rows, cols = depth.rows, depth.cols
    u, v = grid_pixel_centers(rows, cols, intrinsics.width, intrinsics.height)
    keep = (depth.mask & (depth.values > 0.0)).ravel()
    d = depth.values.astype(np.float64).ravel()[keep]
    xn = ((u - intrinsics.cx) / intrinsics.fx).ravel()[keep]
    yn = ((v - intrinsics.cy) / intrinsics.fy).ravel()[keep]
    cam = np.stack([xn * d, yn * d, d], axis=1)
    world = cam @ pose.rotation.T + pose.translation
    patch = np.nonzero(keep)[0].astype(np.int32)
    feats = features.data.reshape(rows * cols, features.dim)[keep]
    return PointFeatureSet(
        points=world,
        features=np.ascontiguousarray(feats),
        source=np.full(patch.shape, int(features.stream), dtype=np.uint8),
        frame_index=np.full(patch.shape, int(frame_index), dtype=np.int32),
        patch_index=patch,
    )


def world_to_agent(points: PointFeatureSet, agent_pose: Pose) -> PointFeatureSet:
    """Re-express world-frame points in the agent frame: p' = R^T (p - t)."""
    return PointFeatureSet(
        points=agent_pose.inverse_transform(points.points),
        features=points.features,
        source=points.source,
        frame_index=points.frame_index,
        patch_index=points.patch_index,
    )


# Bicubic resampling uses the Keys cubic-convolution kernel with a = -0.5,
# clamp-to-edge boundaries and pixel-center alignment, fixed so results are
# reproducible bit-for-bit across implementations.
_KEYS_A = -0.5


def _keys_kernel(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    ax2 = ax * ax
    ax3 = ax2 * ax
    a = _KEYS_A
    inner = (a + 2.0) * ax3 - (a + 3.0) * ax2 + 1.0
    outer = a * ax3 - 5.0 * a * ax2 + 8.0 * a * ax - 4.0 * a
    w = np.where(ax <= 1.0, inner, np.where(ax < 2.0, outer, 0.0))
    return w


def _resample_axis(src_n: int, dst_n: int):
    """Per-output tap indices (clamped to the edge) and kernel weights."""
    pos = (np.arange(dst_n, dtype=np.float64) + 0.5) * (src_n / dst_n) - 0.5
    i0 = np.floor(pos).astype(np.int64)
    taps = i0[:, None] + np.arange(-1, 3)
    weights = _keys_kernel(pos[:, None] - taps)
    idx = np.clip(taps, 0, src_n - 1)
    return idx, weights


def resize_depth(depth: DepthMap, target_h: int, target_w: int) -> DepthMap:
    """Bicubic resample of a depth map onto a target_h x target_w grid.

    Any output sample whose 4x4 support (after edge clamping) touches an
    invalid source pixel is marked invalid. Outputs are clamped to >= 0.
    """
    if target_h < 1 or target_w < 1:
        raise ContractViolationError("resize target dimensions must be >= 1")
    src = depth.values.astype(np.float64)
    ridx, rw = _resample_axis(depth.rows, target_h)
    cidx, cw = _resample_axis(depth.cols, target_w)

    # Separable passes: rows first, then columns.
    rowpass = np.einsum("dk,dkw->dw", rw, src[ridx, :])
    out = np.einsum("ck,hck->hc", cw, rowpass[:, cidx])

    rowvalid = depth.mask[ridx, :].all(axis=1)
    valid = rowvalid[:, cidx].all(axis=2)

    out = np.maximum(out, 0.0)
    return DepthMap(values=out.astype(np.float32), mask=valid)
