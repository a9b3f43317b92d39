import { ShapeError } from "./errors.js";

/**
 * Array codec for the wire format: float64 values, little-endian,
 * base64-encoded. Endianness is written explicitly rather than assumed
 * from the host.
 */

/** Encode numbers as base64 little-endian float64 bytes. */
export function encodeFloat64(values: ArrayLike<number>): string {
  const view = new DataView(new ArrayBuffer(values.length * 8));
  for (let i = 0; i < values.length; i++) {
    view.setFloat64(i * 8, Number(values[i]), true);
  }
  return Buffer.from(view.buffer).toString("base64");
}

/**
 * Decode base64 little-endian float64 bytes.
 *
 * Length mismatches surface as ShapeError naming `what`, so a truncated
 * or mislabeled payload fails loudly instead of silently reshaping.
 */
export function decodeFloat64(
  b64: string,
  expectedLength: number,
  what: string,
): Float64Array {
  const bytes = Buffer.from(b64, "base64");
  if (bytes.length % 8 !== 0) {
    throw new ShapeError(
      `${what}: byte length ${bytes.length} is not a multiple of 8`,
    );
  }
  const n = bytes.length / 8;
  if (n !== expectedLength) {
    throw new ShapeError(
      `${what}: expected ${expectedLength} float64 values, got ${n}`,
    );
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.length);
  const out = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    out[i] = view.getFloat64(i * 8, true);
  }
  return out;
}
