/** Shared test plumbing: deterministic input generation and access to the
 * native package (driven through python3 with PYTHONPATH pointing at the
 * repository's src/). */

import { execFileSync } from "node:child_process";
import { existsSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import type { CameraIntrinsics, FrameInput } from "../src/types.js";

const HERE = dirname(fileURLToPath(import.meta.url));
export const REPO_ROOT = join(HERE, "..", "..");
export const PY_SRC = join(REPO_ROOT, "src");
export const PYTHON = process.env.GABEV_PYTHON ?? "python3";
export const PY_ENV = { PYTHONPATH: PY_SRC };

if (!existsSync(join(PY_SRC, "gabev"))) {
  throw new Error(`native package sources not found at ${PY_SRC}`);
}

export function runPython(code: string): string {
  return execFileSync(PYTHON, ["-c", code], {
    env: { ...process.env, ...PY_ENV },
    stdio: ["ignore", "pipe", "pipe"],
  }).toString();
}

/** SplitMix64 over BigInt: a small deterministic generator for test data. */
export class SplitMix {
  private state: bigint;
  private static readonly MASK = (1n << 64n) - 1n;

  constructor(seed: number) {
    this.state = BigInt(seed) & SplitMix.MASK;
  }

  nextU64(): bigint {
    this.state = (this.state + 0x9e3779b97f4a7c15n) & SplitMix.MASK;
    let z = this.state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & SplitMix.MASK;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & SplitMix.MASK;
    return z ^ (z >> 31n);
  }

  /** Uniform float in [0, 1). */
  next(): number {
    return Number(this.nextU64() >> 11n) / 2 ** 53;
  }

  /** Uniform float in [lo, hi). */
  uniform(lo: number, hi: number): number {
    return lo + (hi - lo) * this.next();
  }
}

export const INTRINSICS: CameraIntrinsics = {
  fx: 27.712812921102035,
  fy: 27.712812921102035,
  cx: 16.0,
  cy: 16.0,
  width: 32,
  height: 32,
};

function yawPose(rng: SplitMix): Float64Array {
  const theta = rng.uniform(-Math.PI, Math.PI);
  const c = Math.cos(theta);
  const s = Math.sin(theta);
  const x = rng.uniform(-1.5, 1.5);
  const z = rng.uniform(-1.5, 1.5);
  // Row-major rotation matching the native yaw convention, then translation.
  return new Float64Array([c, 0, -s, 0, 1, 0, s, 0, c, x, -1.25, z]);
}

export function randomFrame(rng: SplitMix, dims = { v: [4, 4, 8], g: [6, 6, 8], d: [8, 8] }): FrameInput {
  const [vr, vc, vd] = dims.v;
  const [gr, gc, gd] = dims.g;
  const [dr, dc] = dims.d;
  const visual = new Float32Array(vr * vc * vd);
  for (let i = 0; i < visual.length; i++) visual[i] = Math.fround(rng.uniform(-1, 1));
  const geometry = new Float32Array(gr * gc * gd);
  for (let i = 0; i < geometry.length; i++) geometry[i] = Math.fround(rng.uniform(-1, 1));
  const depth = new Float32Array(dr * dc);
  for (let i = 0; i < depth.length; i++) depth[i] = Math.fround(rng.uniform(0.4, 6.0));
  return {
    visual: { rows: vr, cols: vc, dim: vd, data: visual },
    geometry: { rows: gr, cols: gc, dim: gd, data: geometry },
    depth: { rows: dr, cols: dc, values: depth },
    pose: yawPose(rng),
  };
}

export function randomFrames(seed: number, count: number): FrameInput[] {
  const rng = new SplitMix(seed);
  return Array.from({ length: count }, () => randomFrame(rng));
}
