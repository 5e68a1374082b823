/** In-process-style bridge to the native BEV tokenizer.
 *
 * The caller hands over contiguous numeric buffers (depth, two feature
 * streams, poses); the bridge materializes them as a trajectory archive in
 * a temporary directory, drives the native CLI's single-window tokenize
 * over it, and parses the exported token table back into typed arrays.
 * Numerically the result IS the native path's output: the same bits the
 * core library produces in process.
 */

import { execFileSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { writeArchive, writePoseBlob } from "./archive.js";
import { parseBevCsv } from "./csv.js";
import { BridgeExecutionError, BridgeFormatError, BridgeValidationError } from "./errors.js";
import type {
  BevBuildResult,
  BuildOptions,
  CameraIntrinsics,
  DepthGrid,
  FeatureGrid,
  FrameInput,
  GridConfig,
  TokenStats,
} from "./types.js";

export { loadConfig } from "./config.js";
export { BridgeExecutionError, BridgeFormatError, BridgeValidationError } from "./errors.js";
export { decodeTensor, encodeTensor } from "./blob.js";
export type {
  BevBuildResult,
  BuildOptions,
  CameraIntrinsics,
  DepthGrid,
  FeatureGrid,
  FrameInput,
  GridConfig,
  TokenStats,
} from "./types.js";

export const BINDINGS_VERSION = "0.1.0";

const GRID_DEFAULTS: Required<GridConfig> = {
  cellSize: 0.25,
  rangeM: 10.0,
  embedDim: 64,
  fusion: "global",
  embeddingCoords: "metric",
  yMin: null,
  yMax: null,
};

function checkFeatureGrid(grid: FeatureGrid, name: string): void {
  if (!(grid.data instanceof Float32Array)) {
    throw new BridgeValidationError(`${name}.data: expected Float32Array`);
  }
  if (!Number.isInteger(grid.rows) || !Number.isInteger(grid.cols) || !Number.isInteger(grid.dim)) {
    throw new BridgeValidationError(`${name}: rows/cols/dim must be integers`);
  }
  if (grid.rows < 1 || grid.cols < 1 || grid.dim < 1) {
    throw new BridgeValidationError(`${name}: rows/cols/dim must be >= 1`);
  }
  if (grid.data.length !== grid.rows * grid.cols * grid.dim) {
    throw new BridgeValidationError(
      `${name}.data: has ${grid.data.length} values, shape needs ${grid.rows * grid.cols * grid.dim}`,
    );
  }
}

function checkDepthGrid(depth: DepthGrid, name: string): void {
  if (!(depth.values instanceof Float32Array)) {
    throw new BridgeValidationError(`${name}.values: expected Float32Array`);
  }
  if (!Number.isInteger(depth.rows) || !Number.isInteger(depth.cols) || depth.rows < 1 || depth.cols < 1) {
    throw new BridgeValidationError(`${name}: rows/cols must be positive integers`);
  }
  if (depth.values.length !== depth.rows * depth.cols) {
    throw new BridgeValidationError(
      `${name}.values: has ${depth.values.length} values, shape needs ${depth.rows * depth.cols}`,
    );
  }
  if (depth.mask !== undefined) {
    if (!(depth.mask instanceof Uint8Array)) {
      throw new BridgeValidationError(`${name}.mask: expected Uint8Array`);
    }
    if (depth.mask.length !== depth.rows * depth.cols) {
      throw new BridgeValidationError(`${name}.mask: length must match rows * cols`);
    }
  }
}

function checkPose(pose: Float64Array, name: string): void {
  if (!(pose instanceof Float64Array)) {
    throw new BridgeValidationError(`${name}: expected Float64Array`);
  }
  if (pose.length !== 12) {
    throw new BridgeValidationError(`${name}: expected 12 values (row-major 3x3 rotation, translation)`);
  }
  for (let i = 0; i < 12; i++) {
    if (!Number.isFinite(pose[i])) {
      throw new BridgeValidationError(`${name}: entries must be finite`);
    }
  }
}

function checkIntrinsics(intr: CameraIntrinsics): void {
  if (!(intr.fx > 0) || !(intr.fy > 0)) {
    throw new BridgeValidationError("intrinsics: focal lengths must be positive");
  }
  if (!Number.isInteger(intr.width) || !Number.isInteger(intr.height) || intr.width < 1 || intr.height < 1) {
    throw new BridgeValidationError("intrinsics: width/height must be positive integers");
  }
}

export function validateFrames(frames: FrameInput[], intrinsics: CameraIntrinsics): void {
  if (!Array.isArray(frames) || frames.length === 0) {
    throw new BridgeValidationError("frames: must contain at least one frame");
  }
  checkIntrinsics(intrinsics);
  const first = frames[0];
  frames.forEach((frame, k) => {
    const name = `frames[${k}]`;
    checkFeatureGrid(frame.visual, `${name}.visual`);
    checkFeatureGrid(frame.geometry, `${name}.geometry`);
    checkDepthGrid(frame.depth, `${name}.depth`);
    checkPose(frame.pose, `${name}.pose`);
    if (frame.geometry.dim !== frame.visual.dim) {
      throw new BridgeValidationError(
        `${name}.geometry: dim ${frame.geometry.dim} must match the visual dim ` +
          `${frame.visual.dim} (project geometry features before the call)`,
      );
    }
    for (const [field, a, b] of [
      ["visual", frame.visual.rows, first.visual.rows],
      ["visual", frame.visual.cols, first.visual.cols],
      ["geometry", frame.geometry.rows, first.geometry.rows],
      ["geometry", frame.geometry.cols, first.geometry.cols],
      ["depth", frame.depth.rows, first.depth.rows],
      ["depth", frame.depth.cols, first.depth.cols],
    ] as const) {
      if (a !== b) {
        throw new BridgeValidationError(`${name}.${field}: grid shape differs from frames[0]`);
      }
    }
  });
}

/** Tokenize one window of frames. The newest frame's pose defines the
 * agent frame unless an explicit agentPose (12 float64) is given. */
export function buildGaBev(
  frames: FrameInput[],
  agentPose: Float64Array | null,
  options: BuildOptions,
): BevBuildResult {
  validateFrames(frames, options.intrinsics);
  if (agentPose !== null) {
    checkPose(agentPose, "agentPose");
  }
  const grid: Required<GridConfig> = { ...GRID_DEFAULTS, ...(options.grid ?? {}) };
  const python = options.python ?? "python3";
  const work = mkdtempSync(join(tmpdir(), "gabev-bridge-"));
  try {
    const archiveDir = join(work, "archive");
    const outDir = join(work, "out");
    writeArchive(archiveDir, frames, options.intrinsics, grid);
    const argv = [
      "-m",
      "gabev",
      "tokenize",
      "--archive",
      archiveDir,
      "--single-window",
      "--out",
      outDir,
    ];
    if (agentPose !== null) {
      const posePath = join(work, "agent_pose.bin");
      writePoseBlob(posePath, agentPose);
      argv.push("--agent-pose", posePath);
    }
    try {
      execFileSync(python, argv, {
        env: { ...process.env, ...(options.env ?? {}) },
        stdio: ["ignore", "pipe", "pipe"],
      });
    } catch (err) {
      const e = err as { status?: number; stderr?: Buffer; message: string };
      throw new BridgeExecutionError(
        `native tokenizer failed: ${e.stderr?.toString() ?? e.message}`,
        e.status ?? null,
        e.stderr?.toString() ?? "",
      );
    }
    const statsDoc = JSON.parse(readFileSync(join(outDir, "stats.json"), "utf-8")) as {
      windows: TokenStats[];
    };
    if (!statsDoc.windows || statsDoc.windows.length !== 1) {
      throw new BridgeFormatError("stats.json: expected exactly one window in single-window mode");
    }
    const csv = readFileSync(join(outDir, "window_00000.csv"), "utf-8");
    return parseBevCsv(csv, statsDoc.windows[0]);
  } finally {
    if (!options.keepTemp) {
      rmSync(work, { recursive: true, force: true });
    }
  }
}

export interface VersionInfo {
  bindings: string;
  core: string | null;
}

/** Bridge version plus the native package version (null if unreachable). */
export function version(python = "python3", env?: Record<string, string>): VersionInfo {
  let core: string | null = null;
  try {
    core = execFileSync(python, ["-m", "gabev", "--version"], {
      env: { ...process.env, ...(env ?? {}) },
      stdio: ["ignore", "pipe", "pipe"],
    })
      .toString()
      .trim();
  } catch {
    core = null;
  }
  return { bindings: BINDINGS_VERSION, core };
}
