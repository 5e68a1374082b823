/** Loader for the native run-configuration JSON (the same file the CLI's
 * --config flag accepts). Validation is shallow but path-aware; the native
 * side re-validates everything on use. */

import { readFileSync } from "node:fs";

import { BridgeFormatError } from "./errors.js";

export interface RunConfigJson {
  seed?: number;
  bev?: Record<string, unknown>;
  cadence?: Record<string, unknown>;
  history_frames?: number;
  features?: Record<string, unknown>;
  camera?: Record<string, unknown>;
  kinematics?: Record<string, unknown>;
  noise?: Record<string, unknown>;
  episodes?: Record<string, unknown>;
}

const TOP_LEVEL_KEYS = new Set([
  "seed",
  "bev",
  "cadence",
  "history_frames",
  "features",
  "camera",
  "kinematics",
  "noise",
  "episodes",
]);

export function loadConfig(path: string): RunConfigJson {
  let parsed: unknown;
  try {
    parsed = JSON.parse(readFileSync(path, "utf-8"));
  } catch (err) {
    throw new BridgeFormatError(`${path}: ${(err as Error).message}`);
  }
  if (parsed === null || typeof parsed !== "object" || Array.isArray(parsed)) {
    throw new BridgeFormatError(`${path}: expected a JSON object`);
  }
  const obj = parsed as Record<string, unknown>;
  for (const key of Object.keys(obj)) {
    if (!TOP_LEVEL_KEYS.has(key)) {
      throw new BridgeFormatError(`${path}: unknown key ${JSON.stringify(key)}`);
    }
  }
  if ("seed" in obj && typeof obj.seed !== "number") {
    throw new BridgeFormatError(`${path}: seed must be a number`);
  }
  for (const section of ["bev", "cadence", "features", "camera", "kinematics", "noise", "episodes"]) {
    if (section in obj && (typeof obj[section] !== "object" || obj[section] === null)) {
      throw new BridgeFormatError(`${path}: ${section} must be an object`);
    }
  }
  return obj as RunConfigJson;
}
