"""Bit-exact persistence: trajectory archives, scene JSON and BEV exports.

An archive is a directory holding ``manifest.json``, ``actions.json``,
optionally ``episode.json``, and per-frame tensor blobs. Every round trip
through these formats is bitwise; byte layouts are spelled out in
docs/formats.md.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import binformat
from .bev import BevMap
from .errors import (
    ConfigError,
    FormatError,
    MissingFileError,
    ShapeMismatchError,
    VersionMismatchError,
)
from .features import FeatureMap
from .geometry import DepthMap, Pose, Stream
from .sim import Action, Box, Scene

SCHEMA_VERSION = 1

MANIFEST_NAME = "manifest.json"
ACTIONS_NAME = "actions.json"
EPISODE_NAME = "episode.json"


def dump_json(path, obj) -> None:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_json(path):
    p = Path(path)
    if not p.exists():
        raise MissingFileError(f"missing file: {p}")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{p.name}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


@dataclass(frozen=True, eq=False)
class ArchiveFrame:
    """One recorded observation: clean sensor data plus the true camera pose."""

    depth: DepthMap
    visual: FeatureMap
    geometry: FeatureMap
    pose: Pose


@dataclass(eq=False)
class TrajectoryArchive:
    """In-memory image of an archive directory."""

    manifest: dict
    frames: List[ArchiveFrame]
    actions: List[Action]
    episode_info: Optional[dict] = None


def _pose_to_array(pose: Pose) -> np.ndarray:
    # Row-major 3x3 rotation then translation: 12 float64 values. Matrices
    # rather than quaternions, so there is no sign convention to drift.
    return np.concatenate([pose.rotation.reshape(9), pose.translation])


def _pose_from_array(arr: np.ndarray, name: str) -> Pose:
    if arr.shape != (12,):
        raise ShapeMismatchError(f"{name}: pose blob must hold 12 values, got shape {arr.shape}")
    return Pose(arr[:9].reshape(3, 3), arr[9:])


def write_archive(path, archive: TrajectoryArchive) -> None:
    """Write an archive directory; overwrites files already present."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = dict(archive.manifest)
    manifest["schema_version"] = SCHEMA_VERSION
    manifest["frame_count"] = len(archive.frames)
    dump_json(root / MANIFEST_NAME, manifest)
    dump_json(root / ACTIONS_NAME, [a.value for a in archive.actions])
    if archive.episode_info is not None:
        dump_json(root / EPISODE_NAME, archive.episode_info)
    for k, frame in enumerate(archive.frames):
        binformat.write_tensor(root / f"depth_{k:05d}.bin", frame.depth.values)
        binformat.write_tensor(
            root / f"depth_mask_{k:05d}.bin", frame.depth.mask.astype(np.float32)
        )
        binformat.write_tensor(root / f"feat_v_{k:05d}.bin", frame.visual.data)
        binformat.write_tensor(root / f"feat_g_{k:05d}.bin", frame.geometry.data)
        binformat.write_tensor(root / f"pose_{k:05d}.bin", _pose_to_array(frame.pose))


def _read_blob(root: Path, name: str) -> np.ndarray:
    p = root / name
    if not p.exists():
        raise MissingFileError(f"archive blob missing: {name}")
    try:
        return binformat.tensor_from_bytes(p.read_bytes(), name=name)
    except FormatError:
        raise
    except OSError as exc:
        raise FormatError(f"{name}: {exc}") from exc


def read_archive(path) -> TrajectoryArchive:
    """Load and validate an archive directory. Errors name the offending file."""
    root = Path(path)
    manifest = load_json(root / MANIFEST_NAME)
    version = manifest.get("schema_version")
    if version != SCHEMA_VERSION:
        raise VersionMismatchError(f"{MANIFEST_NAME}: unsupported schema_version {version!r}")
    count = manifest.get("frame_count")
    if not isinstance(count, int) or count < 0:
        raise ShapeMismatchError(f"{MANIFEST_NAME}: frame_count must be a non-negative int")
    actions_raw = load_json(root / ACTIONS_NAME)
    if not isinstance(actions_raw, list):
        raise ShapeMismatchError(f"{ACTIONS_NAME}: expected a JSON list")
    actions = [Action.from_name(a) for a in actions_raw]
    episode_info = load_json(root / EPISODE_NAME) if (root / EPISODE_NAME).exists() else None

    frames: List[ArchiveFrame] = []
    for k in range(count):
        depth_vals = _read_blob(root, f"depth_{k:05d}.bin")
        mask_vals = _read_blob(root, f"depth_mask_{k:05d}.bin")
        if mask_vals.shape != depth_vals.shape:
            raise ShapeMismatchError(
                f"depth_mask_{k:05d}.bin: mask shape {mask_vals.shape} does not match depth {depth_vals.shape}"
            )
        feat_v = _read_blob(root, f"feat_v_{k:05d}.bin")
        feat_g = _read_blob(root, f"feat_g_{k:05d}.bin")
        if feat_v.ndim != 3:
            raise ShapeMismatchError(f"feat_v_{k:05d}.bin: expected rank 3, got {feat_v.ndim}")
        if feat_g.ndim != 3:
            raise ShapeMismatchError(f"feat_g_{k:05d}.bin: expected rank 3, got {feat_g.ndim}")
        pose = _pose_from_array(_read_blob(root, f"pose_{k:05d}.bin"), f"pose_{k:05d}.bin")
        frames.append(
            ArchiveFrame(
                depth=DepthMap(values=depth_vals, mask=mask_vals != 0.0),
                visual=FeatureMap(data=feat_v, stream=Stream.VISUAL),
                geometry=FeatureMap(data=feat_g, stream=Stream.GEOMETRY),
                pose=pose,
            )
        )
    return TrajectoryArchive(manifest=manifest, frames=frames, actions=actions, episode_info=episode_info)


# ---------------------------------------------------------------------------
# Scene JSON


def scene_to_dict(scene: Scene) -> dict:
    return {
        "bounds": [scene.x_min, scene.x_max, scene.z_min, scene.z_max],
        "ceiling_height": scene.ceiling_height,
        "obstacles": [
            {"x_min": b.x_min, "x_max": b.x_max, "z_min": b.z_min, "z_max": b.z_max, "height": b.height}
            for b in scene.obstacles
        ],
    }


def scene_from_dict(data: dict) -> Scene:
    if not isinstance(data, dict):
        raise ConfigError("scene: expected a JSON object")
    bounds = data.get("bounds")
    if not (isinstance(bounds, list) and len(bounds) == 4 and all(isinstance(v, (int, float)) for v in bounds)):
        raise ConfigError("scene.bounds: expected [x_min, x_max, z_min, z_max]")
    boxes = []
    for idx, entry in enumerate(data.get("obstacles", [])):
        if not isinstance(entry, dict):
            raise ConfigError(f"scene.obstacles[{idx}]: expected an object")
        try:
            boxes.append(
                Box(
                    x_min=float(entry["x_min"]),
                    x_max=float(entry["x_max"]),
                    z_min=float(entry["z_min"]),
                    z_max=float(entry["z_max"]),
                    height=float(entry["height"]),
                )
            )
        except KeyError as exc:
            raise ConfigError(f"scene.obstacles[{idx}]: missing key {exc}") from exc
    return Scene(
        x_min=float(bounds[0]),
        x_max=float(bounds[1]),
        z_min=float(bounds[2]),
        z_max=float(bounds[3]),
        obstacles=tuple(boxes),
        ceiling_height=float(data.get("ceiling_height", 2.5)),
    )


def save_scene(scene: Scene, path) -> None:
    dump_json(path, scene_to_dict(scene))


def load_scene(path) -> Scene:
    return scene_from_dict(load_json(path))


# ---------------------------------------------------------------------------
# BEV exports


def format_float(x: float) -> str:
    """Shortest decimal that parses back to the same float64."""
    return repr(float(x))


def export_bev_csv(bev_map: BevMap, path) -> None:
    """Token table: one row per occupied cell in ascending (i, j) order.

    Feature columns are written with round-trip precision: parsing a value
    as float64 and rounding to float32 recovers the stored bits.
    """
    d = bev_map.config.embed_dim
    header = "i,j,center_x,center_z,count_visual,count_geometry," + ",".join(
        f"f{k}" for k in range(d)
    )
    lines = [header]
    for tok in bev_map.tokens:
        feats = ",".join(format_float(v) for v in tok.feature.astype(np.float64))
        lines.append(
            f"{tok.cell[0]},{tok.cell[1]},{format_float(tok.center[0])},{format_float(tok.center[1])},"
            f"{tok.count_visual},{tok.count_geometry},{feats}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def export_occupancy_pgm(bev_map: BevMap, path) -> None:
    """Binary P5 image, N x N: 0 for empty cells, 255 for occupied ones.
    Scanline r, column c corresponds to cell (i=c, j=r)."""
    n = bev_map.config.grid_n
    grid = np.zeros((n, n), dtype=np.uint8)
    for tok in bev_map.tokens:
        i, j = tok.cell
        grid[j, i] = 255
    headerbytes = f"P5\n{n} {n}\n255\n".encode("ascii")
    Path(path).write_bytes(headerbytes + grid.tobytes(order="C"))
