"""Two-round dialogue navigation loop with a fixed BEV refresh cadence.

Each dialogue round captures one front-view frame and asks the policy for a
block of actions. The BEV map is rebuilt only at window boundaries, once
every ``actions_per_round * rounds_per_bev`` actions (8 by default); the
second round of a window reuses the cached map. The model behind the policy
is out of scope here, so the policy interface is a plain callable and this
module ships scripted stand-ins: a geodesic-descent oracle, a log replayer
and a seeded wanderer.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .bev import BevConfig, BevMap
from .errors import ContractViolationError, ProtocolError
from .features import (
    FeatureMap,
    MlpProjection,
    derive_seed,
    stub_3dfm_encode,
    stub_visual_encode,
)
from .geometry import CameraIntrinsics
from .metrics import DEFAULT_SUCCESS_RADIUS, EpisodeResult
from .pipeline import FrameRecord, WindowBuild, build_window
from .sim import (
    DEFAULT_AGENT_RADIUS,
    DEFAULT_CAMERA_HEIGHT,
    DEFAULT_COLLISION_MARGIN,
    DEFAULT_GRID_RESOLUTION,
    DEFAULT_MAX_RANGE,
    DEFAULT_STEP_M,
    DEFAULT_TURN_DEG,
    Action,
    AgentState,
    GeodesicField,
    NoiseSpec,
    Scene,
    camera_pose,
    render_depth,
    step as sim_step,
    wrap_angle,
)
from . import io as gio


@dataclass(frozen=True)
class Cadence:
    """Dialogue structure: actions per round, rounds per BEV rebuild."""

    actions_per_round: int = 4
    rounds_per_bev: int = 2

    def __post_init__(self):
        if self.actions_per_round < 1 or self.rounds_per_bev < 1:
            raise ContractViolationError("cadence values must be >= 1")

    @property
    def window(self) -> int:
        return self.actions_per_round * self.rounds_per_bev


def bev_refresh_due(step_index: int, cadence: Cadence) -> bool:
    """True exactly at window boundaries (step 0, window, 2*window, ...)."""
    if step_index < 0:
        raise ContractViolationError("step_index must be >= 0")
    return step_index % cadence.window == 0


@dataclass(frozen=True)
class Kinematics:
    step_m: float = DEFAULT_STEP_M
    turn_deg: float = DEFAULT_TURN_DEG
    agent_radius: float = DEFAULT_AGENT_RADIUS
    margin: float = DEFAULT_COLLISION_MARGIN


@dataclass(frozen=True)
class Episode:
    instruction: str
    scene: Scene
    start: AgentState
    goal: Tuple[float, float]
    max_steps: int = 64
    cadence: Cadence = Cadence()
    history_frames: int = 8

    def __post_init__(self):
        if self.max_steps < 1:
            raise ContractViolationError("max_steps must be >= 1")
        if self.history_frames < 1:
            raise ContractViolationError("history_frames must be >= 1")


@dataclass(frozen=True, eq=False)
class PolicyQuery:
    """Inputs handed to a policy for one dialogue round.

    Round 0 of a window carries the freshly built map; round 1 reuses the
    same map object and additionally sees the previous round's actions and
    front view. ``agent_state`` is privileged simulator state for scripted
    stand-in policies; a learned policy would ignore it.
    """

    instruction: str
    bev: BevMap
    current_features: FeatureMap
    round_in_window: int
    step_index: int
    agent_state: AgentState
    prior_actions: Optional[Tuple[Action, ...]] = None
    prior_features: Optional[FeatureMap] = None


Policy = Callable[[PolicyQuery], Sequence[Action]]


@dataclass(frozen=True, eq=False)
class SensorRig:
    """Observation synthesis plus BEV build settings for a run."""

    intrinsics: CameraIntrinsics
    depth_rows: int
    depth_cols: int
    visual_rows: int
    visual_cols: int
    visual_dim: int
    geometry_rows: int
    geometry_cols: int
    geometry_dim: int
    mlp: MlpProjection
    bev_config: BevConfig
    visual_seed: int
    geometry_seed: int
    camera_height: float = DEFAULT_CAMERA_HEIGHT
    max_range: float = DEFAULT_MAX_RANGE
    kinematics: Kinematics = Kinematics()
    noise: Optional[NoiseSpec] = None

    def observe(self, scene: Scene, state: AgentState, frame_number: int, step_index: int) -> FrameRecord:
        pose = camera_pose(state, self.camera_height)
        depth = render_depth(scene, pose, self.intrinsics, self.depth_rows, self.depth_cols, self.max_range)
        visual = stub_visual_encode(frame_number, self.visual_rows, self.visual_cols, self.visual_dim, self.visual_seed)
        geometry = stub_3dfm_encode(frame_number, self.geometry_rows, self.geometry_cols, self.geometry_dim, self.geometry_seed)
        return FrameRecord(
            frame_number=frame_number,
            step_index=step_index,
            depth=depth,
            visual=visual,
            geometry=geometry,
            pose=pose,
        )

    def build(self, frames: Sequence[FrameRecord], window_index: int) -> WindowBuild:
        return build_window(
            window_index,
            frames,
            self.mlp,
            self.intrinsics,
            self.intrinsics,
            self.bev_config,
            self.noise,
        )


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    step_start: int
    window_index: int
    actions: Tuple[Action, ...]


@dataclass(eq=False)
class TrajectoryRecord:
    """Everything produced by one episode run."""

    episode: Episode
    states: List[AgentState]   # length = len(actions) + 1
    actions: List[Action]
    frames: List[FrameRecord]
    builds: List[WindowBuild]
    rounds: List[RoundRecord]
    noise: Optional[NoiseSpec] = None

    def path(self) -> List[Tuple[float, float]]:
        return [(s.x, s.z) for s in self.states]

    def token_counts(self) -> List[int]:
        return [b.stats.tokens for b in self.builds]


def run_episode(episode: Episode, policy: Policy, rig: SensorRig) -> TrajectoryRecord:
    """Execute the dialogue loop until Stop or max_steps.

    Per round: capture a frame, rebuild the BEV iff the step counter sits on
    a window boundary, query the policy and execute its actions. Actions a
    policy returns after Stop are discarded, and Stop ends the episode, so
    it appears at most once and only as the final recorded action.
    """
    state = episode.start
    cadence = episode.cadence
    ring: deque = deque(maxlen=episode.history_frames)
    states: List[AgentState] = [state]
    actions: List[Action] = []
    all_frames: List[FrameRecord] = []
    builds: List[WindowBuild] = []
    rounds: List[RoundRecord] = []
    step_index = 0
    frame_number = 0
    stopped = False
    current_build: Optional[WindowBuild] = None
    prev_frame: Optional[FrameRecord] = None
    prev_actions: Optional[Tuple[Action, ...]] = None

    while not stopped and step_index < episode.max_steps:
        frame = rig.observe(episode.scene, state, frame_number, step_index)
        ring.append(frame)
        all_frames.append(frame)
        frame_number += 1

        if bev_refresh_due(step_index, cadence):
            current_build = rig.build(list(ring), window_index=len(builds))
            builds.append(current_build)
        assert current_build is not None
        round_in_window = (step_index // cadence.actions_per_round) % cadence.rounds_per_bev

        query = PolicyQuery(
            instruction=episode.instruction,
            bev=current_build.bev,
            current_features=frame.visual,
            round_in_window=round_in_window,
            step_index=step_index,
            agent_state=state,
            prior_actions=prev_actions if round_in_window > 0 else None,
            prior_features=prev_frame.visual if (round_in_window > 0 and prev_frame is not None) else None,
        )
        returned = policy(query)
        returned = list(returned)
        if len(returned) != cadence.actions_per_round or not all(isinstance(a, Action) for a in returned):
            raise ProtocolError(
                f"policy must return exactly {cadence.actions_per_round} actions, got {returned!r}"
            )

        round_start = step_index
        executed: List[Action] = []
        for action in returned:
            if step_index >= episode.max_steps:
                break
            state = sim_step(
                episode.scene,
                state,
                action,
                step_m=rig.kinematics.step_m,
                turn_deg=rig.kinematics.turn_deg,
                agent_radius=rig.kinematics.agent_radius,
                margin=rig.kinematics.margin,
            )
            states.append(state)
            actions.append(action)
            executed.append(action)
            step_index += 1
            if action is Action.STOP:
                stopped = True
                break
        rounds.append(
            RoundRecord(
                round_index=len(rounds),
                step_start=round_start,
                window_index=current_build.window_index,
                actions=tuple(executed),
            )
        )
        prev_frame = frame
        prev_actions = tuple(executed)

    return TrajectoryRecord(
        episode=episode,
        states=states,
        actions=actions,
        frames=all_frames,
        builds=builds,
        rounds=rounds,
        noise=rig.noise,
    )


# ---------------------------------------------------------------------------
# Scripted policies


def make_oracle_policy(
    scene: Scene,
    goal: Tuple[float, float],
    kinematics: Kinematics = Kinematics(),
    actions_per_round: int = 4,
    stop_radius: float = 1.0,
    resolution: float = DEFAULT_GRID_RESOLUTION,
    clearance: Optional[float] = None,
) -> Policy:
    """Greedy geodesic descent: turn toward the next downhill waypoint when
    the heading error exceeds half a turn increment, otherwise move forward;
    Stop once within ``stop_radius`` of the goal.

    Discretized motion can still pinch against an inflated obstacle corner,
    so a forward probe that barely moves switches the policy into a committed
    rotation (kept in the same direction) until forward clears again.
    """
    if clearance is None:
        clearance = kinematics.agent_radius + 0.10
    fld = GeodesicField(scene, goal, resolution=resolution, clearance=clearance)
    threshold = math.radians(kinematics.turn_deg) / 2.0
    escape: Dict[str, Optional[Action]] = {"dir": None}

    def advance(state: AgentState, action: Action) -> AgentState:
        return sim_step(
            scene,
            state,
            action,
            step_m=kinematics.step_m,
            turn_deg=kinematics.turn_deg,
            agent_radius=kinematics.agent_radius,
            margin=kinematics.margin,
        )

    def blocked(state: AgentState) -> bool:
        probe = advance(state, Action.FORWARD)
        return math.hypot(probe.x - state.x, probe.z - state.z) < 0.5 * kinematics.step_m

    def policy(query: PolicyQuery) -> List[Action]:
        state = query.agent_state
        out: List[Action] = []
        done = False
        for _ in range(actions_per_round):
            if done or fld.distance_at(state.x, state.z) <= stop_radius:
                out.append(Action.STOP)
                done = True
                continue
            wx, wz = fld.descend(state.x, state.z)
            dx, dz = wx - state.x, wz - state.z
            err = 0.0
            if math.hypot(dx, dz) >= 1e-9:
                err = wrap_angle(math.atan2(-dx, dz) - state.heading)
            if escape["dir"] is not None:
                if blocked(state):
                    action = escape["dir"]
                else:
                    action = Action.FORWARD
                    escape["dir"] = None
            elif err > threshold:
                action = Action.TURN_LEFT
            elif err < -threshold:
                action = Action.TURN_RIGHT
            else:
                action = Action.FORWARD
                if blocked(state):
                    escape["dir"] = Action.TURN_LEFT if err >= 0.0 else Action.TURN_RIGHT
                    action = escape["dir"]
            out.append(action)
            state = advance(state, action)
        return out

    return policy


def make_replay_policy(action_log: Sequence[Action], actions_per_round: int = 4) -> Policy:
    """Replay a recorded action log in blocks. A final partial block is
    padded with Stop; querying past the end is a protocol error."""
    log = list(action_log)
    cursor = {"pos": 0}

    def policy(query: PolicyQuery) -> List[Action]:
        pos = cursor["pos"]
        if pos >= len(log):
            raise ProtocolError("replay log exhausted")
        chunk = log[pos : pos + actions_per_round]
        cursor["pos"] = pos + len(chunk)
        while len(chunk) < actions_per_round:
            chunk = chunk + [Action.STOP]
        return chunk

    return policy


def make_wander_policy(
    scene: Scene,
    seed: int,
    kinematics: Kinematics = Kinematics(),
    actions_per_round: int = 4,
) -> Policy:
    """Deterministic explorer that never stops: mostly walks forward, turns
    away from walls when blocked, and occasionally scans. Useful for
    generating fixed-length trajectories."""
    counter = {"q": 0, "turns_left": 0, "turn_dir": Action.TURN_LEFT}

    def draws(q: int) -> Tuple[float, int]:
        h = derive_seed(seed, 7001, q)
        u = ((h >> 40) & 0xFFFFFF) / float(1 << 24)
        return u, h

    def policy(query: PolicyQuery) -> List[Action]:
        state = query.agent_state
        out: List[Action] = []
        for _ in range(actions_per_round):
            u, h = draws(counter["q"])
            counter["q"] += 1
            if counter["turns_left"] > 0:
                action = counter["turn_dir"]
                counter["turns_left"] -= 1
            else:
                probe = sim_step(
                    scene,
                    state,
                    Action.FORWARD,
                    step_m=kinematics.step_m,
                    turn_deg=kinematics.turn_deg,
                    agent_radius=kinematics.agent_radius,
                    margin=kinematics.margin,
                )
                moved = math.hypot(probe.x - state.x, probe.z - state.z)
                if moved < 0.6 * kinematics.step_m:
                    counter["turn_dir"] = Action.TURN_LEFT if u < 0.5 else Action.TURN_RIGHT
                    counter["turns_left"] = 3 + (h % 6)
                    action = counter["turn_dir"]
                    counter["turns_left"] -= 1
                elif u < 0.12:
                    action = Action.TURN_LEFT if (h >> 8) % 2 == 0 else Action.TURN_RIGHT
                else:
                    action = Action.FORWARD
            out.append(action)
            state = sim_step(
                scene,
                state,
                action,
                step_m=kinematics.step_m,
                turn_deg=kinematics.turn_deg,
                agent_radius=kinematics.agent_radius,
                margin=kinematics.margin,
            )
        return out

    return policy


# ---------------------------------------------------------------------------
# Record -> evaluation / persistence


def episode_result(
    record: TrajectoryRecord,
    success_radius: float = DEFAULT_SUCCESS_RADIUS,
    resolution: float = DEFAULT_GRID_RESOLUTION,
) -> EpisodeResult:
    """Package a trajectory for the metrics module. The reference length is
    the geodesic from start to goal in the episode's scene."""
    ep = record.episode
    fld = GeodesicField(ep.scene, ep.goal, resolution=resolution)
    ref = fld.distance_at(ep.start.x, ep.start.z)
    return EpisodeResult(
        path=tuple(record.path()),
        goal=ep.goal,
        reference_path_length=ref,
        scene=ep.scene,
        success_radius=success_radius,
    )


def record_to_archive(record: TrajectoryRecord, rig: SensorRig, seeds: Optional[Dict[str, int]] = None) -> gio.TrajectoryArchive:
    """Assemble the on-disk archive image for a run: clean sensor frames,
    the action log, and a manifest that pins every knob needed to rebuild
    the BEV maps bit-for-bit."""
    ep = record.episode
    manifest = {
        "cadence": {
            "actions_per_round": ep.cadence.actions_per_round,
            "rounds_per_bev": ep.cadence.rounds_per_bev,
        },
        "history_frames": ep.history_frames,
        "intrinsics": {
            "fx": rig.intrinsics.fx,
            "fy": rig.intrinsics.fy,
            "cx": rig.intrinsics.cx,
            "cy": rig.intrinsics.cy,
            "width": rig.intrinsics.width,
            "height": rig.intrinsics.height,
        },
        "dims": {
            "depth": [rig.depth_rows, rig.depth_cols],
            "visual": [rig.visual_rows, rig.visual_cols, rig.visual_dim],
            "geometry": [rig.geometry_rows, rig.geometry_cols, rig.geometry_dim],
        },
        "mlp": {
            "in_dim": rig.mlp.in_dim,
            "hidden_dim": rig.mlp.hidden_dim,
            "out_dim": rig.mlp.out_dim,
        },
        "bev": {
            "cell_size": rig.bev_config.cell_size,
            "range_m": rig.bev_config.range_m,
            "embed_dim": rig.bev_config.embed_dim,
            "fusion": rig.bev_config.fusion.value,
            "embedding_coords": rig.bev_config.embedding_coords.value,
        },
        "camera": {"height": rig.camera_height, "max_range": rig.max_range},
        "kinematics": {
            "step_m": rig.kinematics.step_m,
            "turn_deg": rig.kinematics.turn_deg,
            "agent_radius": rig.kinematics.agent_radius,
            "margin": rig.kinematics.margin,
        },
        "geometry_projected": False,
        "seeds": dict(seeds or {}),
    }
    episode_info = {
        "instruction": ep.instruction,
        "scene": gio.scene_to_dict(ep.scene),
        "start": {"x": ep.start.x, "z": ep.start.z, "heading": ep.start.heading},
        "goal": [ep.goal[0], ep.goal[1]],
        "max_steps": ep.max_steps,
        "summary": {
            "steps": len(record.actions),
            "final": {"x": record.states[-1].x, "z": record.states[-1].z, "heading": record.states[-1].heading},
            "token_counts": record.token_counts(),
            "builds": [
                {"window_index": b.window_index, "step_index": b.step_index, **b.stats.as_dict()}
                for b in record.builds
            ],
        },
    }
    frames = [
        gio.ArchiveFrame(depth=f.depth, visual=f.visual, geometry=f.geometry, pose=f.pose)
        for f in record.frames
    ]
    return gio.TrajectoryArchive(
        manifest=manifest,
        frames=frames,
        actions=list(record.actions),
        episode_info=episode_info,
    )
