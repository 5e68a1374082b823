"""Window construction shared by live episodes and archive tokenization.

A "frame" is captured once per dialogue round; a BEV build consumes the most
recent frames (up to the history capacity) and re-centers everything on the
newest frame's pose. Sensor noise, when enabled, is injected here, keyed by
each frame's capture number, so a frame reads identically every time it is
revisited and a clean run can be compared against a noisy one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .bev import (
    BevConfig,
    BevFrame,
    BevMap,
    CellAssignment,
    TokenStats,
    aggregate,
    bin_points,
    project_frame_points,
)
from .errors import ContractViolationError
from .features import FeatureMap, MlpProjection, project_geometry_features
from .geometry import (
    CameraIntrinsics,
    DepthMap,
    PointFeatureSet,
    Pose,
    Stream,
    world_to_agent,
)
from .io import TrajectoryArchive
from .sim import NoiseSpec, inject_depth_noise, inject_pose_noise


@dataclass(frozen=True, eq=False)
class FrameRecord:
    """One captured observation, pre-projection. ``geometry`` may be raw
    (encoder dim) or already projected to the visual dim."""

    frame_number: int  # capture counter; keys the noise streams
    step_index: int    # action step at capture time
    depth: DepthMap
    visual: FeatureMap
    geometry: FeatureMap
    pose: Pose


@dataclass(frozen=True, eq=False)
class WindowBuild:
    """One BEV build plus the intermediates needed for analysis."""

    window_index: int
    frame_number: int  # newest frame in the window
    step_index: int
    history_len: int
    bev: BevMap
    stats: TokenStats
    points: PointFeatureSet  # agent-frame points that were binned
    assignment: CellAssignment


def build_window(
    window_index: int,
    frames: Sequence[FrameRecord],
    mlp: Optional[MlpProjection],
    visual_intrinsics: CameraIntrinsics,
    geometry_intrinsics: CameraIntrinsics,
    config: BevConfig,
    noise: Optional[NoiseSpec] = None,
) -> WindowBuild:
    """Tokenize one window. ``frames`` is the history, oldest first; the last
    entry is the current frame whose (possibly noise-perturbed) pose defines
    the agent frame. Geometry maps whose dim differs from the visual dim are
    passed through the projection head, which must then be provided."""
    if not frames:
        raise ContractViolationError("window must contain at least one frame")
    bev_frames: List[BevFrame] = []
    noisy_poses: List[Pose] = []
    for frame in frames:
        depth = frame.depth
        pose = frame.pose
        if noise is not None and not noise.is_zero:
            depth = inject_depth_noise(depth, noise, frame.frame_number)
            pose = inject_pose_noise(pose, noise, frame.frame_number)
        geometry = frame.geometry
        if geometry.dim != frame.visual.dim:
            if mlp is None:
                raise ContractViolationError(
                    "geometry features are unprojected but no projection head was given"
                )
            geometry = project_geometry_features(geometry, mlp)
        bev_frames.append(BevFrame(visual=frame.visual, geometry=geometry, depth=depth, pose=pose))
        noisy_poses.append(pose)

    current_pose = noisy_poses[-1]
    sets = [
        project_frame_points(f, visual_intrinsics, geometry_intrinsics, idx)
        for idx, f in enumerate(bev_frames)
    ]
    combined = PointFeatureSet.concat(sets)
    agent_points = world_to_agent(combined, current_pose)
    assignment = bin_points(agent_points, config)
    bev = aggregate(assignment, agent_points, config)
    stats = TokenStats(
        tokens=len(bev),
        frames=len(frames),
        dense_baseline=len(frames) * frames[-1].visual.rows * frames[-1].visual.cols,
        points_visual=int(np.count_nonzero(combined.source == int(Stream.VISUAL))),
        points_geometry=int(np.count_nonzero(combined.source == int(Stream.GEOMETRY))),
        discarded_out_of_range=assignment.discarded_out_of_range,
        discarded_y_clip=assignment.discarded_y_clip,
    )
    return WindowBuild(
        window_index=window_index,
        frame_number=frames[-1].frame_number,
        step_index=frames[-1].step_index,
        history_len=len(frames),
        bev=bev,
        stats=stats,
        points=agent_points,
        assignment=assignment,
    )


def frames_from_archive(archive: TrajectoryArchive) -> List[FrameRecord]:
    """Wrap archive frames as FrameRecords; capture numbers follow storage
    order and step indices are reconstructed from the recorded cadence."""
    cadence = archive.manifest.get("cadence", {})
    per_round = int(cadence.get("actions_per_round", 4))
    return [
        FrameRecord(
            frame_number=k,
            step_index=k * per_round,
            depth=f.depth,
            visual=f.visual,
            geometry=f.geometry,
            pose=f.pose,
        )
        for k, f in enumerate(archive.frames)
    ]


def window_frame_numbers(frame_count: int, rounds_per_bev: int) -> List[int]:
    """Capture numbers at which a BEV build happens: every
    ``rounds_per_bev``-th frame, starting with the first."""
    if rounds_per_bev < 1:
        raise ContractViolationError("rounds_per_bev must be >= 1")
    return [k for k in range(frame_count) if k % rounds_per_bev == 0]


def iter_window_builds(
    frames: Sequence[FrameRecord],
    rounds_per_bev: int,
    history_frames: int,
    mlp: Optional[MlpProjection],
    visual_intrinsics: CameraIntrinsics,
    geometry_intrinsics: CameraIntrinsics,
    config: BevConfig,
    noise: Optional[NoiseSpec] = None,
) -> List[WindowBuild]:
    """Replay every build of a recorded frame sequence at the given cadence."""
    if history_frames < 1:
        raise ContractViolationError("history_frames must be >= 1")
    builds = []
    for w, fnum in enumerate(window_frame_numbers(len(frames), rounds_per_bev)):
        history = frames[max(0, fnum + 1 - history_frames) : fnum + 1]
        builds.append(
            build_window(
                w, history, mlp, visual_intrinsics, geometry_intrinsics, config, noise
            )
        )
    return builds
