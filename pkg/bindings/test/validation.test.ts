/** Boundary validation: errors must name the offending argument and fire
 * before any native process is spawned. */

import { expect, test } from "vitest";

import { buildGaBev, BridgeValidationError, validateFrames } from "../src/index.js";
import { INTRINSICS, randomFrames } from "./helpers.js";

test("empty frame list is rejected like the native precondition", () => {
  expect(() => buildGaBev([], null, { intrinsics: INTRINSICS })).toThrow(BridgeValidationError);
  expect(() => buildGaBev([], null, { intrinsics: INTRINSICS })).toThrow(/frames/);
});

test("wrong depth dtype names the depth argument", () => {
  const frames = randomFrames(3, 1);
  // Float64Array where Float32Array is required.
  (frames[0].depth as unknown as { values: Float64Array }).values = new Float64Array(64);
  expect(() => validateFrames(frames, INTRINSICS)).toThrow(/frames\[0\]\.depth/);
});

test("feature length mismatch names the stream", () => {
  const frames = randomFrames(4, 1);
  frames[0].visual.data = new Float32Array(7);
  expect(() => validateFrames(frames, INTRINSICS)).toThrow(/frames\[0\]\.visual\.data/);
});

test("geometry dim must match visual dim", () => {
  const frames = randomFrames(5, 1);
  const g = frames[0].geometry;
  frames[0].geometry = { rows: g.rows, cols: g.cols, dim: g.dim + 1, data: new Float32Array(g.rows * g.cols * (g.dim + 1)) };
  expect(() => validateFrames(frames, INTRINSICS)).toThrow(/geometry.*dim/);
});

test("pose length and finiteness are checked", () => {
  const frames = randomFrames(6, 1);
  frames[0].pose = new Float64Array(9);
  expect(() => validateFrames(frames, INTRINSICS)).toThrow(/frames\[0\]\.pose/);
  const frames2 = randomFrames(7, 1);
  frames2[0].pose[3] = Number.NaN;
  expect(() => validateFrames(frames2, INTRINSICS)).toThrow(/finite/);
});

test("mask length is validated", () => {
  const frames = randomFrames(8, 1);
  frames[0].depth.mask = new Uint8Array(3);
  expect(() => validateFrames(frames, INTRINSICS)).toThrow(/mask/);
});
