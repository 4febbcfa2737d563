/**
 * Spatio-temporal feature extraction behind the --c3d flag.
 *
 * Consecutive sampled frames are differenced per cell; the per-cell
 * motion energies are lifted to a 512-d vector by a version-pinned
 * projection and written to a sidecar file, leaving the main feature
 * file untouched (the primary pipeline does not consume these).
 */

import { Frame } from "./ppm.js";
import { GRID, resizeToCanvas } from "./visual.js";
import { projectRelu, projectionBias, projectionMatrix } from "./rng.js";

export const MOTION_EXTRACTOR_ID = "motionproj-v1";
export const MOTION_DIM = 512;

const CANVAS = 224;
const CELL = CANVAS / GRID;
const STATS_DIM = GRID * GRID;

const WEIGHTS = projectionMatrix(`${MOTION_EXTRACTOR_ID}/vec`, MOTION_DIM, STATS_DIM);
const BIAS = projectionBias(`${MOTION_EXTRACTOR_ID}/vec`, MOTION_DIM);

function cellMotion(prev: Float64Array, next: Float64Array): Float64Array {
  const stats = new Float64Array(STATS_DIM);
  for (let cy = 0; cy < GRID; cy++) {
    for (let cx = 0; cx < GRID; cx++) {
      let acc = 0;
      for (let y = cy * CELL; y < (cy + 1) * CELL; y++) {
        for (let x = cx * CELL; x < (cx + 1) * CELL; x++) {
          const i = (y * CANVAS + x) * 3;
          acc += Math.abs(next[i] - prev[i]) + Math.abs(next[i + 1] - prev[i + 1])
               + Math.abs(next[i + 2] - prev[i + 2]);
        }
      }
      stats[cy * GRID + cx] = acc / (CELL * CELL * 3);
    }
  }
  return stats;
}

/** 512-d motion vector over one segment's sampled frames, f32. */
export function extractMotionSegment(frames: Frame[]): Float32Array {
  const canvases: Float64Array[] = [];
  const cache = new Map<Frame, Float64Array>();
  for (const frame of frames) {
    let canvas = cache.get(frame);
    if (!canvas) {
      canvas = resizeToCanvas(frame);
      cache.set(frame, canvas);
    }
    canvases.push(canvas);
  }
  const acc = new Float64Array(STATS_DIM);
  for (let i = 1; i < canvases.length; i++) {
    const stats = cellMotion(canvases[i - 1], canvases[i]);
    for (let j = 0; j < STATS_DIM; j++) acc[j] += stats[j];
  }
  for (let j = 0; j < STATS_DIM; j++) acc[j] /= Math.max(1, canvases.length - 1);
  const vec = projectRelu(WEIGHTS, BIAS, acc, MOTION_DIM, STATS_DIM);
  const out = new Float32Array(MOTION_DIM);
  for (let i = 0; i < MOTION_DIM; i++) out[i] = Math.fround(vec[i]);
  return out;
}

/** Sidecar layout: "AVC3", u32 T, u32 dim, then T x dim f32. */
export function writeMotionSidecar(segments: Float32Array[]): Buffer {
  const head = Buffer.alloc(12);
  head.write("AVC3", 0, "ascii");
  head.writeUInt32LE(segments.length, 4);
  head.writeUInt32LE(MOTION_DIM, 8);
  const parts = [head];
  for (const seg of segments) {
    const buf = Buffer.alloc(seg.length * 4);
    for (let i = 0; i < seg.length; i++) buf.writeFloatLE(seg[i], i * 4);
    parts.push(buf);
  }
  return Buffer.concat(parts);
}
