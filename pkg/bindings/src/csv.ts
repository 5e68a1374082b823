/** Parser for the native BEV token CSV export. Feature columns are written
 * with round-trip precision: Number(text) recovers the exact float64, and
 * Math.fround of that recovers the stored float32 bit pattern. */

import { BridgeFormatError } from "./errors.js";
import type { BevBuildResult, TokenStats } from "./types.js";

export function parseBevCsv(text: string, stats: TokenStats): BevBuildResult {
  const lines = text.split("\n").filter((line) => line.length > 0);
  if (lines.length === 0) {
    throw new BridgeFormatError("bev csv: missing header line");
  }
  const header = lines[0].split(",");
  if (header[0] !== "i" || header[1] !== "j" || header[4] !== "count_visual") {
    throw new BridgeFormatError(`bev csv: unexpected header ${lines[0]}`);
  }
  const dim = header.length - 6;
  if (dim < 1 || header[6] !== "f0") {
    throw new BridgeFormatError("bev csv: feature columns missing");
  }
  const count = lines.length - 1;
  const tokens = new Float32Array(count * dim);
  const cells = new Int32Array(count * 2);
  const centers = new Float64Array(count * 2);
  const contributors = new Int32Array(count * 2);
  for (let r = 0; r < count; r++) {
    const cols = lines[r + 1].split(",");
    if (cols.length !== header.length) {
      throw new BridgeFormatError(`bev csv: row ${r} has ${cols.length} columns, expected ${header.length}`);
    }
    cells[2 * r] = Number.parseInt(cols[0], 10);
    cells[2 * r + 1] = Number.parseInt(cols[1], 10);
    centers[2 * r] = Number(cols[2]);
    centers[2 * r + 1] = Number(cols[3]);
    contributors[2 * r] = Number.parseInt(cols[4], 10);
    contributors[2 * r + 1] = Number.parseInt(cols[5], 10);
    for (let k = 0; k < dim; k++) {
      tokens[r * dim + k] = Math.fround(Number(cols[6 + k]));
    }
  }
  return { count, dim, tokens, cells, centers, contributors, stats };
}
