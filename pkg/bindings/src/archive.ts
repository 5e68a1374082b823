/** Writes a trajectory-archive directory understood by the native
 * tokenizer. The bridge always stores already-projected geometry features,
 * so the archive is marked geometry_projected and no projection head is
 * needed on the native side. */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { encodeTensor } from "./blob.js";
import type { CameraIntrinsics, FrameInput, GridConfig } from "./types.js";

function pad5(n: number): string {
  return n.toString().padStart(5, "0");
}

function canonicalJson(obj: unknown): string {
  const sort = (value: unknown): unknown => {
    if (Array.isArray(value)) return value.map(sort);
    if (value !== null && typeof value === "object") {
      const out: Record<string, unknown> = {};
      for (const key of Object.keys(value as Record<string, unknown>).sort()) {
        out[key] = sort((value as Record<string, unknown>)[key]);
      }
      return out;
    }
    return value;
  };
  return JSON.stringify(sort(obj), null, 2) + "\n";
}

export function writeArchive(
  dir: string,
  frames: FrameInput[],
  intrinsics: CameraIntrinsics,
  grid: Required<GridConfig>,
): void {
  mkdirSync(dir, { recursive: true });
  const first = frames[0];
  const manifest = {
    schema_version: 1,
    frame_count: frames.length,
    cadence: { actions_per_round: 4, rounds_per_bev: 2 },
    history_frames: Math.max(frames.length, 1),
    intrinsics,
    dims: {
      depth: [first.depth.rows, first.depth.cols],
      visual: [first.visual.rows, first.visual.cols, first.visual.dim],
      geometry: [first.geometry.rows, first.geometry.cols, first.geometry.dim],
    },
    bev: {
      cell_size: grid.cellSize,
      range_m: grid.rangeM,
      embed_dim: grid.embedDim,
      fusion: grid.fusion,
      embedding_coords: grid.embeddingCoords,
      y_min: grid.yMin,
      y_max: grid.yMax,
    },
    geometry_projected: true,
    seeds: {},
  };
  writeFileSync(join(dir, "manifest.json"), canonicalJson(manifest));
  writeFileSync(join(dir, "actions.json"), canonicalJson([]));
  frames.forEach((frame, k) => {
    const { depth, visual, geometry, pose } = frame;
    const maskData = new Float32Array(depth.rows * depth.cols);
    if (depth.mask) {
      for (let i = 0; i < maskData.length; i++) maskData[i] = depth.mask[i] ? 1.0 : 0.0;
    } else {
      maskData.fill(1.0);
    }
    writeFileSync(join(dir, `depth_${pad5(k)}.bin`), encodeTensor([depth.rows, depth.cols], depth.values));
    writeFileSync(join(dir, `depth_mask_${pad5(k)}.bin`), encodeTensor([depth.rows, depth.cols], maskData));
    writeFileSync(
      join(dir, `feat_v_${pad5(k)}.bin`),
      encodeTensor([visual.rows, visual.cols, visual.dim], visual.data),
    );
    writeFileSync(
      join(dir, `feat_g_${pad5(k)}.bin`),
      encodeTensor([geometry.rows, geometry.cols, geometry.dim], geometry.data),
    );
    writeFileSync(join(dir, `pose_${pad5(k)}.bin`), encodeTensor([12], pose));
  });
}

export function writePoseBlob(path: string, pose: Float64Array): void {
  writeFileSync(path, encodeTensor([12], pose));
}
