"""Run configuration: one JSON file, flag-overridable, validated with
key-path error messages (and line/column positions for syntax errors)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Tuple

from .bev import BevConfig, EmbeddingCoords, FusionMode
from .episode import Cadence, Kinematics, SensorRig
from .errors import ConfigError
from .features import MlpProjection, derive_seed
from .geometry import CameraIntrinsics
from .sim import NoiseSpec

# Seed-stream tags: one root seed fans out into independent streams.
SEED_VISUAL = 1
SEED_GEOMETRY = 2
SEED_MLP = 3
SEED_EPISODES = 4


@dataclass(frozen=True)
class CameraConfig:
    width: int = 64
    height: int = 64
    hfov_deg: float = 60.0
    camera_height: float = 1.25
    max_range: float = 20.0
    depth_rows: int = 64
    depth_cols: int = 64

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics.from_hfov(self.hfov_deg, self.width, self.height)


@dataclass(frozen=True)
class FeatureDims:
    visual: Tuple[int, int, int] = (16, 16, 64)
    geometry: Tuple[int, int, int] = (24, 24, 128)
    hidden_dim: int = 256


@dataclass(frozen=True)
class EpisodeDefaults:
    max_steps: int = 64
    goal_band: Tuple[float, float] = (2.5, 6.0)
    stop_radius: float = 1.0
    success_radius: float = 3.0
    retry_cap: int = 100


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    bev: BevConfig = field(default_factory=BevConfig)
    cadence: Cadence = field(default_factory=Cadence)
    history_frames: int = 8
    features: FeatureDims = field(default_factory=FeatureDims)
    camera: CameraConfig = field(default_factory=CameraConfig)
    kinematics: Kinematics = field(default_factory=Kinematics)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    episodes: EpisodeDefaults = field(default_factory=EpisodeDefaults)

    def make_mlp(self) -> MlpProjection:
        return MlpProjection.seeded(
            in_dim=self.features.geometry[2],
            hidden_dim=self.features.hidden_dim,
            out_dim=self.features.visual[2],
            seed=derive_seed(self.seed, SEED_MLP),
        )

    def make_rig(self, noise: Optional[NoiseSpec] = None) -> SensorRig:
        vr, vc, vd = self.features.visual
        gr, gc, gd = self.features.geometry
        spec = self.noise if noise is None else noise
        return SensorRig(
            intrinsics=self.camera.intrinsics(),
            depth_rows=self.camera.depth_rows,
            depth_cols=self.camera.depth_cols,
            visual_rows=vr,
            visual_cols=vc,
            visual_dim=vd,
            geometry_rows=gr,
            geometry_cols=gc,
            geometry_dim=gd,
            mlp=self.make_mlp(),
            bev_config=self.bev,
            visual_seed=derive_seed(self.seed, SEED_VISUAL),
            geometry_seed=derive_seed(self.seed, SEED_GEOMETRY),
            camera_height=self.camera.camera_height,
            max_range=self.camera.max_range,
            kinematics=self.kinematics,
            noise=None if spec.is_zero else spec,
        )

    def seeds_dict(self) -> dict:
        return {
            "root": self.seed,
            "visual": derive_seed(self.seed, SEED_VISUAL),
            "geometry": derive_seed(self.seed, SEED_GEOMETRY),
            "mlp": derive_seed(self.seed, SEED_MLP),
        }


def _expect(data: dict, path: str, key: str, types, default):
    value = data.get(key, default)
    if value is None and default is None:
        return None
    if not isinstance(value, types) or isinstance(value, bool) and types is not bool:
        raise ConfigError(f"{path}.{key}: expected {getattr(types, '__name__', types)}, got {value!r}")
    return value


def _check_keys(data: dict, path: str, allowed: set):
    unknown = set(data.keys()) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")


def _triple(data, path: str, key: str, default):
    value = data.get(key, list(default))
    if not (isinstance(value, list) and len(value) == 3 and all(isinstance(v, int) and v >= 1 for v in value)):
        raise ConfigError(f"{path}.{key}: expected [rows, cols, dim] positive ints")
    return tuple(value)


def run_config_from_dict(data: dict, path: str = "config") -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    _check_keys(
        data,
        path,
        {"seed", "bev", "cadence", "history_frames", "features", "camera", "kinematics", "noise", "episodes"},
    )
    try:
        seed = _expect(data, path, "seed", int, 0)

        bev_d = data.get("bev", {})
        _check_keys(bev_d, f"{path}.bev", {"cell_size", "range_m", "embed_dim", "fusion", "embedding_coords", "y_min", "y_max"})
        fusion_name = _expect(bev_d, f"{path}.bev", "fusion", str, "global")
        try:
            fusion = FusionMode(fusion_name)
        except ValueError:
            raise ConfigError(f"{path}.bev.fusion: must be 'global' or 'hierarchical', got {fusion_name!r}")
        coords_name = _expect(bev_d, f"{path}.bev", "embedding_coords", str, "metric")
        try:
            coords = EmbeddingCoords(coords_name)
        except ValueError:
            raise ConfigError(f"{path}.bev.embedding_coords: must be 'metric' or 'index', got {coords_name!r}")
        bev = BevConfig(
            cell_size=float(_expect(bev_d, f"{path}.bev", "cell_size", (int, float), 0.25)),
            range_m=float(_expect(bev_d, f"{path}.bev", "range_m", (int, float), 10.0)),
            embed_dim=_expect(bev_d, f"{path}.bev", "embed_dim", int, 64),
            fusion=fusion,
            embedding_coords=coords,
            y_min=bev_d.get("y_min"),
            y_max=bev_d.get("y_max"),
        )

        cad_d = data.get("cadence", {})
        _check_keys(cad_d, f"{path}.cadence", {"actions_per_round", "rounds_per_bev"})
        cadence = Cadence(
            actions_per_round=_expect(cad_d, f"{path}.cadence", "actions_per_round", int, 4),
            rounds_per_bev=_expect(cad_d, f"{path}.cadence", "rounds_per_bev", int, 2),
        )

        feat_d = data.get("features", {})
        _check_keys(feat_d, f"{path}.features", {"visual", "geometry", "hidden_dim"})
        features = FeatureDims(
            visual=_triple(feat_d, f"{path}.features", "visual", (16, 16, 64)),
            geometry=_triple(feat_d, f"{path}.features", "geometry", (24, 24, 128)),
            hidden_dim=_expect(feat_d, f"{path}.features", "hidden_dim", int, 256),
        )

        cam_d = data.get("camera", {})
        _check_keys(
            cam_d,
            f"{path}.camera",
            {"width", "height", "hfov_deg", "camera_height", "max_range", "depth_rows", "depth_cols"},
        )
        camera = CameraConfig(
            width=_expect(cam_d, f"{path}.camera", "width", int, 64),
            height=_expect(cam_d, f"{path}.camera", "height", int, 64),
            hfov_deg=float(_expect(cam_d, f"{path}.camera", "hfov_deg", (int, float), 60.0)),
            camera_height=float(_expect(cam_d, f"{path}.camera", "camera_height", (int, float), 1.25)),
            max_range=float(_expect(cam_d, f"{path}.camera", "max_range", (int, float), 20.0)),
            depth_rows=_expect(cam_d, f"{path}.camera", "depth_rows", int, 64),
            depth_cols=_expect(cam_d, f"{path}.camera", "depth_cols", int, 64),
        )

        kin_d = data.get("kinematics", {})
        _check_keys(kin_d, f"{path}.kinematics", {"step_m", "turn_deg", "agent_radius", "margin"})
        kinematics = Kinematics(
            step_m=float(_expect(kin_d, f"{path}.kinematics", "step_m", (int, float), 0.25)),
            turn_deg=float(_expect(kin_d, f"{path}.kinematics", "turn_deg", (int, float), 15.0)),
            agent_radius=float(_expect(kin_d, f"{path}.kinematics", "agent_radius", (int, float), 0.18)),
            margin=float(_expect(kin_d, f"{path}.kinematics", "margin", (int, float), 1e-3)),
        )

        noise_d = data.get("noise", {})
        _check_keys(noise_d, f"{path}.noise", {"depth_sigma", "pose_sigma", "rot_sigma_deg", "seed"})
        noise = NoiseSpec(
            depth_sigma=float(_expect(noise_d, f"{path}.noise", "depth_sigma", (int, float), 0.0)),
            pose_sigma=float(_expect(noise_d, f"{path}.noise", "pose_sigma", (int, float), 0.0)),
            rot_sigma_deg=float(_expect(noise_d, f"{path}.noise", "rot_sigma_deg", (int, float), 0.0)),
            seed=_expect(noise_d, f"{path}.noise", "seed", int, 0),
        )

        ep_d = data.get("episodes", {})
        _check_keys(ep_d, f"{path}.episodes", {"max_steps", "goal_band", "stop_radius", "success_radius", "retry_cap"})
        band = ep_d.get("goal_band", [2.5, 6.0])
        if not (isinstance(band, list) and len(band) == 2 and all(isinstance(v, (int, float)) for v in band)):
            raise ConfigError(f"{path}.episodes.goal_band: expected [min_m, max_m]")
        episodes = EpisodeDefaults(
            max_steps=_expect(ep_d, f"{path}.episodes", "max_steps", int, 64),
            goal_band=(float(band[0]), float(band[1])),
            stop_radius=float(_expect(ep_d, f"{path}.episodes", "stop_radius", (int, float), 1.0)),
            success_radius=float(_expect(ep_d, f"{path}.episodes", "success_radius", (int, float), 3.0)),
            retry_cap=_expect(ep_d, f"{path}.episodes", "retry_cap", int, 100),
        )
    except ConfigError:
        raise
    except Exception as exc:  # invariant failures from the component types
        raise ConfigError(f"{path}: {exc}") from exc
    return RunConfig(
        seed=seed,
        bev=bev,
        cadence=cadence,
        history_frames=_expect(data, path, "history_frames", int, 8),
        features=features,
        camera=camera,
        kinematics=kinematics,
        noise=noise,
        episodes=episodes,
    )


def load_run_config(path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return run_config_from_dict(data, path=str(p))


def apply_flag_overrides(cfg: RunConfig, args) -> RunConfig:
    """Command-line flags win over the config file."""
    out = cfg
    if getattr(args, "seed", None) is not None:
        out = replace(out, seed=args.seed)
    bev = out.bev
    bev_changed = False
    if getattr(args, "cell_size", None) is not None:
        bev = replace(bev, cell_size=args.cell_size)
        bev_changed = True
    if getattr(args, "range", None) is not None:
        bev = replace(bev, range_m=args.range)
        bev_changed = True
    if getattr(args, "fusion", None) is not None:
        bev = replace(bev, fusion=FusionMode(args.fusion))
        bev_changed = True
    if bev_changed:
        out = replace(out, bev=bev)
    if getattr(args, "history", None) is not None:
        if args.history < 1:
            raise ConfigError("--history must be >= 1")
        out = replace(out, history_frames=args.history)
    if getattr(args, "cadence", None) is not None:
        per_round = out.cadence.actions_per_round
        if args.cadence < 1 or args.cadence % per_round != 0:
            raise ConfigError(
                f"--cadence must be a positive multiple of actions_per_round ({per_round}), got {args.cadence}"
            )
        out = replace(out, cadence=Cadence(per_round, args.cadence // per_round))
    ns = out.noise
    noise_changed = False
    for flag, fld in (("noise_depth", "depth_sigma"), ("noise_pose", "pose_sigma"), ("noise_rot", "rot_sigma_deg")):
        val = getattr(args, flag, None)
        if val is not None:
            ns = replace(ns, **{fld: val})
            noise_changed = True
    if noise_changed:
        out = replace(out, noise=ns)
    return out
