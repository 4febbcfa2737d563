/**
 * Deterministic pseudo-random projection weights.
 *
 * Extractor versions pin their weights by seeding from a version tag, so
 * re-exports are bit-stable for as long as the tag is unchanged.
 */

/** FNV-1a 32-bit hash of a string. */
export function fnv1a(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h >>> 0;
}

/** mulberry32: small, fast, and good enough for fixed feature projections. */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** rows x cols weights, uniform in +-1/sqrt(cols), seeded by the tag. */
export function projectionMatrix(tag: string, rows: number, cols: number): Float64Array {
  const rand = mulberry32(fnv1a(tag));
  const bound = 1.0 / Math.sqrt(cols);
  const out = new Float64Array(rows * cols);
  for (let i = 0; i < out.length; i++) {
    out[i] = (rand() * 2.0 - 1.0) * bound;
  }
  return out;
}

/** Bias vector companion to {@link projectionMatrix}. */
export function projectionBias(tag: string, rows: number): Float64Array {
  const rand = mulberry32(fnv1a(tag + "/bias"));
  const out = new Float64Array(rows);
  for (let i = 0; i < rows; i++) {
    out[i] = rand() * 0.2 - 0.1;
  }
  return out;
}

/** relu(W x + b) with W given row-major. */
export function projectRelu(
  weights: Float64Array,
  bias: Float64Array,
  x: Float64Array,
  rows: number,
  cols: number,
): Float64Array {
  const out = new Float64Array(rows);
  for (let r = 0; r < rows; r++) {
    let acc = bias[r];
    const base = r * cols;
    for (let c = 0; c < cols; c++) {
      acc += weights[base + c] * x[c];
    }
    out[r] = acc > 0 ? acc : 0;
  }
  return out;
}
