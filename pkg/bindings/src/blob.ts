/** Tensor-blob codec, byte-compatible with the native persistence layer
 * (see docs/formats.md in the core repository): 16-byte magic, u32 rank,
 * rank x u64 dims, u8 dtype code (1 = f32, 2 = f64), row-major payload,
 * everything little-endian. */

import { BridgeFormatError } from "./errors.js";

export const TENSOR_MAGIC = Buffer.from([
  0x47, 0x41, 0x42, 0x45, 0x56, 0x54, 0x45, 0x4e, // "GABEVTEN"
  0, 0, 0, 0, 0, 0, 0, 1,
]);

export const DTYPE_F32 = 1;
export const DTYPE_F64 = 2;

export interface Tensor {
  dims: number[];
  data: Float32Array | Float64Array;
}

function elementCount(dims: number[]): number {
  return dims.reduce((a, b) => a * b, 1);
}

export function encodeTensor(dims: number[], data: Float32Array | Float64Array): Buffer {
  const count = elementCount(dims);
  if (data.length !== count) {
    throw new BridgeFormatError(
      `tensor payload has ${data.length} elements, dims ${JSON.stringify(dims)} need ${count}`,
    );
  }
  const isF32 = data instanceof Float32Array;
  const header = Buffer.alloc(TENSOR_MAGIC.length + 4 + 8 * dims.length + 1);
  TENSOR_MAGIC.copy(header, 0);
  let off = TENSOR_MAGIC.length;
  header.writeUInt32LE(dims.length, off);
  off += 4;
  for (const d of dims) {
    header.writeBigUInt64LE(BigInt(d), off);
    off += 8;
  }
  header.writeUInt8(isF32 ? DTYPE_F32 : DTYPE_F64, off);
  // TypedArray views are little-endian on every platform node supports.
  const payload = Buffer.from(data.buffer, data.byteOffset, data.byteLength);
  return Buffer.concat([header, payload]);
}

export function decodeTensor(buf: Buffer, name = "tensor"): Tensor {
  if (buf.length < TENSOR_MAGIC.length + 4 + 1) {
    throw new BridgeFormatError(`${name}: shorter than the fixed header`);
  }
  if (!buf.subarray(0, TENSOR_MAGIC.length).equals(TENSOR_MAGIC)) {
    throw new BridgeFormatError(`${name}: bad tensor magic`);
  }
  let off = TENSOR_MAGIC.length;
  const rank = buf.readUInt32LE(off);
  off += 4;
  if (rank > 8) throw new BridgeFormatError(`${name}: implausible rank ${rank}`);
  if (buf.length < off + 8 * rank + 1) {
    throw new BridgeFormatError(`${name}: header truncated`);
  }
  const dims: number[] = [];
  for (let i = 0; i < rank; i++) {
    dims.push(Number(buf.readBigUInt64LE(off)));
    off += 8;
  }
  const code = buf.readUInt8(off);
  off += 1;
  const count = elementCount(dims);
  const itemSize = code === DTYPE_F32 ? 4 : code === DTYPE_F64 ? 8 : 0;
  if (itemSize === 0) throw new BridgeFormatError(`${name}: unknown dtype code ${code}`);
  const expected = count * itemSize;
  const payload = buf.subarray(off);
  if (payload.length < expected) {
    throw new BridgeFormatError(`${name}: payload has ${payload.length} bytes, expected ${expected}`);
  }
  if (payload.length > expected) {
    throw new BridgeFormatError(`${name}: trailing bytes after payload`);
  }
  // Copy out so the result does not alias the file buffer.
  const bytes = Buffer.alloc(expected);
  payload.copy(bytes, 0);
  const view =
    code === DTYPE_F32
      ? new Float32Array(bytes.buffer, bytes.byteOffset, count)
      : new Float64Array(bytes.buffer, bytes.byteOffset, count);
  return { dims, data: view };
}
