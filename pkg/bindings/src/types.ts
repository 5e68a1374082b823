/** Array contract shared by every bridge call: contiguous row-major
 * buffers, float32 for sensor payloads, float64 for poses. Buffers are
 * read during the call and never retained. */

export interface FeatureGrid {
  rows: number;
  cols: number;
  dim: number;
  /** rows * cols * dim float32 values, row-major. */
  data: Float32Array;
}

export interface DepthGrid {
  rows: number;
  cols: number;
  /** rows * cols float32 planar z-depths in meters. */
  values: Float32Array;
  /** Optional validity mask, 1 byte per pixel; omitted means all valid. */
  mask?: Uint8Array;
}

export interface FrameInput {
  visual: FeatureGrid;
  /** Must already share the visual feature dim (projected upstream). */
  geometry: FeatureGrid;
  depth: DepthGrid;
  /** 12 float64 values: row-major 3x3 rotation, then translation. */
  pose: Float64Array;
}

export interface CameraIntrinsics {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
}

export interface GridConfig {
  cellSize?: number;
  rangeM?: number;
  embedDim?: number;
  fusion?: "global" | "hierarchical";
  embeddingCoords?: "metric" | "index";
  yMin?: number | null;
  yMax?: number | null;
}

export interface BuildOptions {
  intrinsics: CameraIntrinsics;
  grid?: GridConfig;
  /** Python executable running the native package; default "python3". */
  python?: string;
  /** Extra environment for the native process (e.g. PYTHONPATH). */
  env?: Record<string, string>;
  /** Keep the temporary work directory (for debugging). */
  keepTemp?: boolean;
}

export interface TokenStats {
  tokens: number;
  frames: number;
  dense_baseline: number;
  points_visual: number;
  points_geometry: number;
  discarded_out_of_range: number;
  discarded_y_clip: number;
  [key: string]: number;
}

export interface BevBuildResult {
  /** Number of occupied-cell tokens (rows of the arrays below). */
  count: number;
  /** count x dim float32 token features, row-major. */
  tokens: Float32Array;
  /** Token feature dimensionality. */
  dim: number;
  /** count x 2 int32 cell indices (i, j), row-major. */
  cells: Int32Array;
  /** count x 2 float64 metric cell centers (x, z), row-major. */
  centers: Float64Array;
  /** Per-stream contributor counts, count x 2 (visual, geometry). */
  contributors: Int32Array;
  stats: TokenStats;
}
