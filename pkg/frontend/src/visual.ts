/**
 * Visual feature extraction: one 512-channel 7x7 map per 1s segment.
 *
 * Each sampled frame is resized to 224x224, split into the 7x7 cell grid,
 * and every cell's local statistics (color moments, an oriented-gradient
 * histogram, and sub-block luminances) are lifted to 512 channels by a
 * version-pinned random projection with a relu. The 16 frame maps of a
 * segment are averaged into the segment map.
 */

import { Frame } from "./ppm.js";
import { projectRelu, projectionBias, projectionMatrix } from "./rng.js";

export const VISUAL_EXTRACTOR_ID = "blockproj-v1";
export const VISUAL_CHANNELS = 512;
export const GRID = 7;
export const REGIONS = GRID * GRID;
export const FRAMES_PER_SEGMENT = 16;

const CANVAS = 224;
const CELL = CANVAS / GRID; // 32
const GRAD_BINS = 8;
const STATS_DIM = 6 + GRAD_BINS + 4 + 27; // moments + gradients + sub-blocks + color histogram

const WEIGHTS = projectionMatrix(`${VISUAL_EXTRACTOR_ID}/map`, VISUAL_CHANNELS, STATS_DIM);
const BIAS = projectionBias(`${VISUAL_EXTRACTOR_ID}/map`, VISUAL_CHANNELS);

/** Bilinear resize to the square working canvas, RGB interleaved. */
export function resizeToCanvas(frame: Frame): Float64Array {
  const out = new Float64Array(CANVAS * CANVAS * 3);
  const sx = frame.width / CANVAS;
  const sy = frame.height / CANVAS;
  for (let y = 0; y < CANVAS; y++) {
    const fy = Math.min((y + 0.5) * sy - 0.5, frame.height - 1);
    const y0 = Math.max(0, Math.floor(fy));
    const y1 = Math.min(frame.height - 1, y0 + 1);
    const wy = Math.max(0, fy - y0);
    for (let x = 0; x < CANVAS; x++) {
      const fx = Math.min((x + 0.5) * sx - 0.5, frame.width - 1);
      const x0 = Math.max(0, Math.floor(fx));
      const x1 = Math.min(frame.width - 1, x0 + 1);
      const wx = Math.max(0, fx - x0);
      for (let c = 0; c < 3; c++) {
        const p00 = frame.pixels[(y0 * frame.width + x0) * 3 + c];
        const p01 = frame.pixels[(y0 * frame.width + x1) * 3 + c];
        const p10 = frame.pixels[(y1 * frame.width + x0) * 3 + c];
        const p11 = frame.pixels[(y1 * frame.width + x1) * 3 + c];
        const top = p00 + (p01 - p00) * wx;
        const bot = p10 + (p11 - p10) * wx;
        out[(y * CANVAS + x) * 3 + c] = top + (bot - top) * wy;
      }
    }
  }
  return out;
}

function cellStats(canvas: Float64Array, cellX: number, cellY: number): Float64Array {
  const stats = new Float64Array(STATS_DIM);
  const x0 = cellX * CELL;
  const y0 = cellY * CELL;
  const n = CELL * CELL;

  // channel means and standard deviations
  const sum = [0, 0, 0];
  const sumSq = [0, 0, 0];
  for (let y = y0; y < y0 + CELL; y++) {
    for (let x = x0; x < x0 + CELL; x++) {
      for (let c = 0; c < 3; c++) {
        const v = canvas[(y * CANVAS + x) * 3 + c];
        sum[c] += v;
        sumSq[c] += v * v;
      }
    }
  }
  for (let c = 0; c < 3; c++) {
    const mean = sum[c] / n;
    stats[c] = mean;
    stats[3 + c] = Math.sqrt(Math.max(0, sumSq[c] / n - mean * mean));
  }

  // oriented gradient histogram over luminance, magnitude weighted
  const lum = (x: number, y: number) => {
    const i = (y * CANVAS + x) * 3;
    return 0.299 * canvas[i] + 0.587 * canvas[i + 1] + 0.114 * canvas[i + 2];
  };
  for (let y = y0 + 1; y < y0 + CELL - 1; y++) {
    for (let x = x0 + 1; x < x0 + CELL - 1; x++) {
      const gx = lum(x + 1, y) - lum(x - 1, y);
      const gy = lum(x, y + 1) - lum(x, y - 1);
      const mag = Math.sqrt(gx * gx + gy * gy);
      if (mag === 0) continue;
      const angle = Math.atan2(gy, gx); // -pi..pi
      let bin = Math.floor(((angle + Math.PI) / (2 * Math.PI)) * GRAD_BINS);
      if (bin === GRAD_BINS) bin = 0;
      stats[6 + bin] += mag / n;
    }
  }

  // 2x2 sub-block luminance means
  const half = CELL / 2;
  for (let by = 0; by < 2; by++) {
    for (let bx = 0; bx < 2; bx++) {
      let acc = 0;
      for (let y = y0 + by * half; y < y0 + (by + 1) * half; y++) {
        for (let x = x0 + bx * half; x < x0 + (bx + 1) * half; x++) {
          acc += lum(x, y);
        }
      }
      stats[6 + GRAD_BINS + by * 2 + bx] = acc / (half * half);
    }
  }

  // 3x3x3 color histogram
  const histBase = 6 + GRAD_BINS + 4;
  for (let y = y0; y < y0 + CELL; y++) {
    for (let x = x0; x < x0 + CELL; x++) {
      const i = (y * CANVAS + x) * 3;
      const r = Math.min(2, Math.floor(canvas[i] * 3));
      const g = Math.min(2, Math.floor(canvas[i + 1] * 3));
      const b = Math.min(2, Math.floor(canvas[i + 2] * 3));
      stats[histBase + r * 9 + g * 3 + b] += 1 / n;
    }
  }
  return stats;
}

/** 512 x 49 feature map of one frame, regions innermost. */
export function frameFeatureMap(frame: Frame): Float64Array {
  const canvas = resizeToCanvas(frame);
  const map = new Float64Array(VISUAL_CHANNELS * REGIONS);
  for (let cy = 0; cy < GRID; cy++) {
    for (let cx = 0; cx < GRID; cx++) {
      const region = cy * GRID + cx;
      const feats = projectRelu(WEIGHTS, BIAS, cellStats(canvas, cx, cy),
                                VISUAL_CHANNELS, STATS_DIM);
      for (let c = 0; c < VISUAL_CHANNELS; c++) {
        map[c * REGIONS + region] = feats[c];
      }
    }
  }
  return map;
}

/**
 * Indices of the 16 frames sampled for one segment, center-aligned within
 * each sixteenth of the second.
 */
export function sampleFrameIndices(segment: number, fps: number, frameCount: number): number[] {
  const out: number[] = [];
  for (let j = 0; j < FRAMES_PER_SEGMENT; j++) {
    const t = segment + (j + 0.5) / FRAMES_PER_SEGMENT;
    const idx = Math.min(frameCount - 1, Math.max(0, Math.floor(t * fps)));
    out.push(idx);
  }
  return out;
}

/** Average the sampled frame maps into the segment map, rounded to f32. */
export function extractVisualSegment(frames: Frame[]): Float32Array {
  if (frames.length !== FRAMES_PER_SEGMENT) {
    throw new Error(`expected ${FRAMES_PER_SEGMENT} sampled frames, got ${frames.length}`);
  }
  const acc = new Float64Array(VISUAL_CHANNELS * REGIONS);
  const cache = new Map<Frame, Float64Array>();
  for (const frame of frames) {
    let map = cache.get(frame);
    if (!map) {
      map = frameFeatureMap(frame);
      cache.set(frame, map);
    }
    for (let i = 0; i < acc.length; i++) acc[i] += map[i];
  }
  const out = new Float32Array(acc.length);
  for (let i = 0; i < acc.length; i++) {
    out[i] = Math.fround(acc[i] / FRAMES_PER_SEGMENT);
  }
  return out;
}
