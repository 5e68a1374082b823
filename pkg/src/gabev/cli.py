"""Operator command line: simulate episodes, tokenize archives, evaluate
runs and benchmark token growth.

Every command is a pure function of its inputs, configuration and seed;
re-running writes byte-identical output trees. Exit codes: 0 success,
1 usage or configuration error, 2 data error, 3 internal invariant
violation. ``GABEV_LOG`` (debug/info/warning) controls verbosity.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import __version__, binformat
from . import io as gio
from .bev import BevConfig, EmbeddingCoords, FusionMode, cell_of_points, reassignment_fraction
from .config import (
    RunConfig,
    SEED_EPISODES,
    apply_flag_overrides,
    load_run_config,
)
from .episode import (
    Cadence,
    Episode,
    Kinematics,
    SensorRig,
    episode_result,
    make_oracle_policy,
    make_replay_policy,
    record_to_archive,
    run_episode,
)
from .errors import ConfigError, FormatError, GabevError, SceneError
from .features import MlpProjection, load_mlp_weights
from .geometry import CameraIntrinsics, Pose
from .metrics import EpisodeResult, MetricsTable, aggregate, path_length
from .pipeline import frames_from_archive, iter_window_builds, build_window
from .sim import AgentState, GeodesicField, NoiseSpec, Scene, step as sim_step

log = logging.getLogger("gabev")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors map to exit code 1, not argparse's 2
        raise ConfigError(message)


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run configuration JSON; flags override it")
    p.add_argument("--seed", type=int, help="root seed for all randomness")
    p.add_argument("--jobs", type=int, default=1, help="episode-level parallelism")
    p.add_argument("--cell-size", type=float, help="BEV cell size in meters")
    p.add_argument("--range", type=float, help="BEV half-range in meters")
    p.add_argument("--history", type=int, help="history ring capacity in frames")
    p.add_argument("--cadence", type=int, help="BEV update interval in actions")
    p.add_argument("--fusion", choices=["global", "hierarchical"], help="per-cell fusion strategy")
    p.add_argument("--noise-depth", type=float, help="depth noise sigma, meters")
    p.add_argument("--noise-pose", type=float, help="pose translation noise sigma, meters")
    p.add_argument("--noise-rot", type=float, help="yaw noise sigma, degrees")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gabev", description=__doc__)
    parser.add_argument("--version", action="version", version=f"gabev {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate episodes with the oracle policy and archive them")
    _add_common_flags(p)
    p.add_argument("--scene", required=True, help="scene JSON file")
    p.add_argument("--episodes", type=int, default=1, help="number of episodes")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tokenize", help="rebuild BEV token maps from an archive")
    _add_common_flags(p)
    p.add_argument("--archive", required=True, help="archive directory")
    p.add_argument("--weights", help="projection-head weight file (default: seeded init from the manifest)")
    p.add_argument("--single-window", action="store_true",
                   help="one build over all frames instead of the recorded cadence")
    p.add_argument("--agent-pose", help="12-value f64 tensor blob overriding the agent pose (single-window mode)")
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("evaluate", help="score archived or live episodes")
    _add_common_flags(p)
    p.add_argument("--archives", help="directory of archives (or one archive)")
    p.add_argument("--scene", help="scene JSON for live evaluation")
    p.add_argument("--episodes", type=int, default=1, help="live episodes to run")
    p.add_argument("--policy", choices=["oracle"], default="oracle", help="live policy")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="token accumulation curves across grid sizes and histories")
    _add_common_flags(p)
    p.add_argument("--archives", required=True, help="directory of archives (or one archive)")
    p.add_argument("--cell-sizes", default="0.5,0.25,0.125", help="comma-separated cell sizes")
    p.add_argument("--histories", default="", help="comma-separated history capacities (default: recorded)")
    p.set_defaults(func=cmd_benchmark)

    return parser


def _setup_logging() -> None:
    level_name = os.environ.get("GABEV_LOG", "warning").upper()
    level = getattr(logging, level_name, logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, SceneError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GabevError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    return 0


def _load_cfg(args) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    return apply_flag_overrides(cfg, args)


# ---------------------------------------------------------------------------
# simulate


def sample_episode(scene: Scene, cfg: RunConfig, index: int) -> Tuple[AgentState, Tuple[float, float]]:
    """Deterministic start/goal pair with geodesic distance in the configured
    band. Unreachable or out-of-band draws are retried up to the cap."""
    from .sim import geodesic_distance

    rng = np.random.default_rng([cfg.seed & 0x7FFFFFFFFFFFFFFF, SEED_EPISODES, index])
    clearance = cfg.kinematics.agent_radius + 0.02
    lo, hi = cfg.episodes.goal_band
    for _ in range(cfg.episodes.retry_cap):
        sx = rng.uniform(scene.x_min, scene.x_max)
        sz = rng.uniform(scene.z_min, scene.z_max)
        heading = rng.uniform(-math.pi, math.pi)
        gx = rng.uniform(scene.x_min, scene.x_max)
        gz = rng.uniform(scene.z_min, scene.z_max)
        if not scene.is_free(sx, sz, clearance) or not scene.is_free(gx, gz, clearance):
            continue
        dist = geodesic_distance(scene, (sx, sz), (gx, gz), clearance=clearance)
        if lo <= dist <= hi:
            return AgentState(sx, sz, heading), (gx, gz)
    raise SceneError(
        f"could not sample a start/goal pair with geodesic distance in [{lo}, {hi}] "
        f"after {cfg.episodes.retry_cap} attempts"
    )


def _simulate_one(task) -> dict:
    cfg, scene, index, out_dir = task
    start, goal = sample_episode(scene, cfg, index)
    ep = Episode(
        instruction=f"navigate to the goal marker {index}",
        scene=scene,
        start=start,
        goal=goal,
        max_steps=cfg.episodes.max_steps,
        cadence=cfg.cadence,
        history_frames=cfg.history_frames,
    )
    policy = make_oracle_policy(
        scene, goal, cfg.kinematics, cfg.cadence.actions_per_round, stop_radius=cfg.episodes.stop_radius
    )
    rig = cfg.make_rig()
    record = run_episode(ep, policy, rig)
    archive = record_to_archive(record, rig, seeds=cfg.seeds_dict())
    gio.write_archive(Path(out_dir) / f"episode_{index:03d}", archive)
    result = episode_result(record, success_radius=cfg.episodes.success_radius)
    from .metrics import navigation_error, oracle_success, spl, success

    return {
        "episode_id": index,
        "steps": len(record.actions),
        "ne": navigation_error(result),
        "sr": success(result),
        "osr": oracle_success(result),
        "spl": spl(result),
        "tokens": record.token_counts(),
    }


def _run_tasks(jobs: int, fn, tasks: list) -> list:
    if jobs <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks))


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    scene = gio.load_scene(args.scene)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(cfg, scene, e, str(out)) for e in range(args.episodes)]
    summaries = _run_tasks(args.jobs, _simulate_one, tasks)
    summaries.sort(key=lambda s: s["episode_id"])
    gio.dump_json(out / "run_summary.json", {"episodes": summaries, "seed": cfg.seed})
    sr = 100.0 * sum(s["sr"] for s in summaries) / len(summaries)
    print(f"simulated {len(summaries)} episodes -> {out} (SR {sr:.1f})")
    return 0


# ---------------------------------------------------------------------------
# tokenize


def _manifest_intrinsics(man: dict) -> CameraIntrinsics:
    d = man["intrinsics"]
    return CameraIntrinsics(
        fx=d["fx"], fy=d["fy"], cx=d["cx"], cy=d["cy"], width=d["width"], height=d["height"]
    )


def _manifest_bev(man: dict) -> BevConfig:
    d = man["bev"]
    return BevConfig(
        cell_size=d["cell_size"],
        range_m=d["range_m"],
        embed_dim=d["embed_dim"],
        fusion=FusionMode(d["fusion"]),
        embedding_coords=EmbeddingCoords(d["embedding_coords"]),
        y_min=d.get("y_min"),
        y_max=d.get("y_max"),
    )


def _manifest_cadence(man: dict) -> Cadence:
    d = man.get("cadence", {})
    return Cadence(d.get("actions_per_round", 4), d.get("rounds_per_bev", 2))


def _manifest_kinematics(man: dict) -> Kinematics:
    d = man.get("kinematics", {})
    return Kinematics(
        step_m=d.get("step_m", 0.25),
        turn_deg=d.get("turn_deg", 15.0),
        agent_radius=d.get("agent_radius", 0.18),
        margin=d.get("margin", 1e-3),
    )


def _manifest_mlp(man: dict, weights_path: Optional[str]) -> Optional[MlpProjection]:
    if man.get("geometry_projected"):
        return None
    if weights_path:
        return load_mlp_weights(weights_path)
    mlp_d = man["mlp"]
    seed = man.get("seeds", {}).get("mlp")
    if seed is None:
        raise FormatError("manifest.json: seeds.mlp missing and no --weights given")
    return MlpProjection.seeded(mlp_d["in_dim"], mlp_d["hidden_dim"], mlp_d["out_dim"], seed)


def _tokenize_settings(man: dict, args):
    """Archive manifest supplies the base settings; flags override the
    BEV/cadence/history/noise knobs (data-defining dims stay pinned)."""
    bev_cfg = _manifest_bev(man)
    if args.cell_size is not None:
        bev_cfg = replace(bev_cfg, cell_size=args.cell_size)
    if args.range is not None:
        bev_cfg = replace(bev_cfg, range_m=args.range)
    if args.fusion is not None:
        bev_cfg = replace(bev_cfg, fusion=FusionMode(args.fusion))
    cadence = _manifest_cadence(man)
    if args.cadence is not None:
        if args.cadence < 1 or args.cadence % cadence.actions_per_round != 0:
            raise ConfigError(
                f"--cadence must be a positive multiple of actions_per_round "
                f"({cadence.actions_per_round}), got {args.cadence}"
            )
        cadence = Cadence(cadence.actions_per_round, args.cadence // cadence.actions_per_round)
    history = man.get("history_frames", 8)
    if args.history is not None:
        history = args.history
    noise = None
    if any(v is not None for v in (args.noise_depth, args.noise_pose, args.noise_rot)):
        noise = NoiseSpec(
            depth_sigma=args.noise_depth or 0.0,
            pose_sigma=args.noise_pose or 0.0,
            rot_sigma_deg=args.noise_rot or 0.0,
            seed=args.seed if args.seed is not None else man.get("seeds", {}).get("root", 0),
        )
        if noise.is_zero:
            noise = None
    return bev_cfg, cadence, history, noise


def cmd_tokenize(args) -> int:
    archive = gio.read_archive(args.archive)
    man = archive.manifest
    bev_cfg, cadence, history, noise = _tokenize_settings(man, args)
    intr = _manifest_intrinsics(man)
    mlp = _manifest_mlp(man, args.weights)
    frames = frames_from_archive(archive)
    if not frames:
        raise FormatError(f"{args.archive}: archive holds no frames")

    if args.single_window:
        if args.agent_pose:
            pose_arr = binformat.read_tensor(args.agent_pose)
            if pose_arr.shape != (12,):
                raise FormatError(f"{args.agent_pose}: agent pose blob must hold 12 values")
            agent_pose = Pose(pose_arr[:9].reshape(3, 3), pose_arr[9:])
            # Re-center on the requested pose by appending it as the build
            # frame's pose: build_window re-centers on the last frame.
            last = frames[-1]
            frames = list(frames[:-1]) + [
                replace_frame_pose(last, agent_pose)
            ]
        builds = [build_window(0, frames, mlp, intr, intr, bev_cfg, noise)]
    else:
        builds = iter_window_builds(
            frames, cadence.rounds_per_bev, history, mlp, intr, intr, bev_cfg, noise
        )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for b in builds:
        gio.export_bev_csv(b.bev, out / f"window_{b.window_index:05d}.csv")
        gio.export_occupancy_pgm(b.bev, out / f"window_{b.window_index:05d}.pgm")
        rows.append(
            {
                "window_index": b.window_index,
                "frame_number": b.frame_number,
                "step_index": b.step_index,
                "history_len": b.history_len,
                **b.stats.as_dict(),
            }
        )
    totals = {
        "windows": len(rows),
        "tokens_mean": sum(r["tokens"] for r in rows) / len(rows),
        "dense_baseline_mean": sum(r["dense_baseline"] for r in rows) / len(rows),
    }
    gio.dump_json(out / "stats.json", {"windows": rows, "totals": totals})
    print(f"tokenized {len(rows)} windows -> {out} (mean tokens {totals['tokens_mean']:.1f})")
    return 0


def replace_frame_pose(frame, pose: Pose):
    from .pipeline import FrameRecord

    return FrameRecord(
        frame_number=frame.frame_number,
        step_index=frame.step_index,
        depth=frame.depth,
        visual=frame.visual,
        geometry=frame.geometry,
        pose=pose,
    )


# ---------------------------------------------------------------------------
# evaluate


def _archive_dirs(root: str) -> List[Path]:
    base = Path(root)
    if (base / gio.MANIFEST_NAME).exists():
        return [base]
    dirs = sorted(p for p in base.iterdir() if p.is_dir() and (p / gio.MANIFEST_NAME).exists())
    if not dirs:
        raise FormatError(f"{root}: no archives found")
    return dirs


def _evaluate_archive(task) -> dict:
    path, success_radius, noise_flags = task
    archive = gio.read_archive(path)
    info = archive.episode_info
    if info is None:
        raise FormatError(f"{path}: archive lacks episode.json; cannot evaluate")
    man = archive.manifest
    scene = gio.scene_from_dict(info["scene"])
    kin = _manifest_kinematics(man)
    state = AgentState(info["start"]["x"], info["start"]["z"], info["start"]["heading"])
    path_pts = [(state.x, state.z)]
    for action in archive.actions:
        state = sim_step(
            scene, state, action,
            step_m=kin.step_m, turn_deg=kin.turn_deg, agent_radius=kin.agent_radius, margin=kin.margin,
        )
        path_pts.append((state.x, state.z))
    goal = (info["goal"][0], info["goal"][1])
    fld = GeodesicField(scene, goal)
    ref = fld.distance_at(info["start"]["x"], info["start"]["z"])
    result = EpisodeResult(
        path=tuple(path_pts), goal=goal, reference_path_length=ref, scene=scene,
        success_radius=success_radius,
    )
    from .metrics import navigation_error, oracle_success, spl, success

    intr = _manifest_intrinsics(man)
    bev_cfg = _manifest_bev(man)
    cadence = _manifest_cadence(man)
    history = man.get("history_frames", 8)
    mlp = _manifest_mlp(man, None)
    frames = frames_from_archive(archive)
    clean_builds = iter_window_builds(frames, cadence.rounds_per_bev, history, mlp, intr, intr, bev_cfg, None)
    tokens = [b.stats.tokens for b in clean_builds]
    row = {
        "episode_id": Path(path).name,
        "ne": navigation_error(result),
        "sr": success(result),
        "osr": oracle_success(result),
        "spl": spl(result),
        "steps": len(archive.actions),
        "tokens_mean": (sum(tokens) / len(tokens)) if tokens else 0.0,
        "_result": result,
    }
    depth_s, pose_s, rot_s, noise_seed = noise_flags
    if depth_s or pose_s or rot_s:
        spec = NoiseSpec(depth_sigma=depth_s, pose_sigma=pose_s, rot_sigma_deg=rot_s,
                         seed=noise_seed if noise_seed is not None else man.get("seeds", {}).get("root", 0))
        noisy_builds = iter_window_builds(frames, cadence.rounds_per_bev, history, mlp, intr, intr, bev_cfg, spec)
        changed = survivors = 0
        for cb, nb in zip(clean_builds, noisy_builds):
            _, ch, sv = reassignment_fraction(
                cell_of_points(cb.points, bev_cfg), cell_of_points(nb.points, bev_cfg)
            )
            changed += ch
            survivors += sv
        row["cell_reassignment_fraction"] = (changed / survivors) if survivors else 0.0
        row["noisy_tokens_mean"] = (
            sum(b.stats.tokens for b in noisy_builds) / len(noisy_builds) if noisy_builds else 0.0
        )
    return row


def _write_results_csv(out: Path, rows: List[dict]) -> None:
    lines = ["episode_id,ne,sr,osr,spl,steps,tokens_mean"]
    for r in rows:
        lines.append(
            f"{r['episode_id']},{r['ne']:.4f},{r['sr']},{r['osr']},{r['spl']:.4f},"
            f"{r['steps']},{r['tokens_mean']:.2f}"
        )
    (out / "results.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_aggregate_csv(out: Path, table: MetricsTable) -> None:
    f = table.formatted()
    lines = [
        "count,ne,disconnected,sr,osr,spl",
        f"{f['count']},{f['ne']},{f['disconnected']},{f['sr']},{f['osr']},{f['spl']}",
    ]
    (out / "aggregate.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    noise_flags = (args.noise_depth or 0.0, args.noise_pose or 0.0, args.noise_rot or 0.0, args.seed)

    if args.archives:
        dirs = _archive_dirs(args.archives)
        tasks = [(str(d), cfg.episodes.success_radius, noise_flags) for d in dirs]
        rows = _run_tasks(args.jobs, _evaluate_archive, tasks)
    elif args.scene:
        scene = gio.load_scene(args.scene)
        tasks = [(cfg, scene, e) for e in range(args.episodes)]
        rows = _run_tasks(args.jobs, _evaluate_live_one, tasks)
    else:
        raise ConfigError("evaluate needs --archives or --scene")
    rows.sort(key=lambda r: str(r["episode_id"]))
    results = [r.pop("_result") for r in rows]
    _write_results_csv(out, rows)
    table = aggregate(results)
    _write_aggregate_csv(out, table)
    if any(("cell_reassignment_fraction" in r) for r in rows):
        gio.dump_json(
            out / "noise_analysis.json",
            {
                "episodes": [
                    {
                        "episode_id": r["episode_id"],
                        "cell_reassignment_fraction": r.get("cell_reassignment_fraction"),
                        "noisy_tokens_mean": r.get("noisy_tokens_mean"),
                    }
                    for r in rows
                ]
            },
        )
    f = table.formatted()
    print(f"evaluated {table.count} episodes -> {out} (NE {f['ne']}, SR {f['sr']}, SPL {f['spl']})")
    return 0


def _evaluate_live_one(task) -> dict:
    cfg, scene, index = task
    start, goal = sample_episode(scene, cfg, index)
    ep = Episode(
        instruction=f"navigate to the goal marker {index}",
        scene=scene,
        start=start,
        goal=goal,
        max_steps=cfg.episodes.max_steps,
        cadence=cfg.cadence,
        history_frames=cfg.history_frames,
    )
    policy = make_oracle_policy(
        scene, goal, cfg.kinematics, cfg.cadence.actions_per_round, stop_radius=cfg.episodes.stop_radius
    )
    record = run_episode(ep, policy, cfg.make_rig())
    result = episode_result(record, success_radius=cfg.episodes.success_radius)
    from .metrics import navigation_error, oracle_success, spl, success

    tokens = record.token_counts()
    return {
        "episode_id": f"live_{index:03d}",
        "ne": navigation_error(result),
        "sr": success(result),
        "osr": oracle_success(result),
        "spl": spl(result),
        "steps": len(record.actions),
        "tokens_mean": (sum(tokens) / len(tokens)) if tokens else 0.0,
        "_result": result,
    }


# ---------------------------------------------------------------------------
# benchmark


def _parse_float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"bad numeric list {text!r}: {exc}") from exc


def cmd_benchmark(args) -> int:
    dirs = _archive_dirs(args.archives)
    cell_sizes = _parse_float_list(args.cell_sizes)
    if not cell_sizes:
        raise ConfigError("--cell-sizes must name at least one value")
    histories = [int(v) for v in args.histories.split(",") if v.strip() != ""] if args.histories else []
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    lines = [
        "episode_id,cell_size,history_frames,window_index,step_index,frames_seen,"
        "dense_cumulative,ga_window_tokens"
    ]
    for d in dirs:
        archive = gio.read_archive(d)
        man = archive.manifest
        intr = _manifest_intrinsics(man)
        cadence = _manifest_cadence(man)
        mlp = _manifest_mlp(man, None)
        frames = frames_from_archive(archive)
        vr, vc, _ = man["dims"]["visual"]
        hist_values = histories or [man.get("history_frames", 8)]
        for cell in cell_sizes:
            bev_cfg = replace(_manifest_bev(man), cell_size=cell)
            for hist in hist_values:
                builds = iter_window_builds(
                    frames, cadence.rounds_per_bev, hist, mlp, intr, intr, bev_cfg, None
                )
                for b in builds:
                    frames_seen = b.frame_number + 1
                    lines.append(
                        f"{d.name},{gio.format_float(cell)},{hist},{b.window_index},"
                        f"{b.step_index},{frames_seen},{frames_seen * vr * vc},{b.stats.tokens}"
                    )
    (out / "token_curves.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"benchmarked {len(dirs)} archives -> {out / 'token_curves.csv'}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
