/**
 * Audio feature extraction: a 128-d embedding per 1s segment, plus an
 * optional spatial map block.
 *
 * Each second is framed into a 96-step, 64-bin log-mel patch (Hann
 * window, 512-point FFT, triangular mel filters to the Nyquist). The
 * embedding projects the patch's per-bin time statistics through a
 * version-pinned relu projection; the spatial variant pools the patch
 * into 64 mel channels over 12 time regions and keeps the pre-projection
 * log energies.
 */

import { AudioTrack } from "./wav.js";
import { projectRelu, projectionBias, projectionMatrix } from "./rng.js";

export const AUDIO_EXTRACTOR_ID = "melproj-v1";
export const AUDIO_SPATIAL_ID = "logmel-pool-v1";
export const AUDIO_DIM = 128;
export const MEL_FRAMES = 96;
export const MEL_BINS = 64;
export const SPATIAL_CHANNELS = MEL_BINS;
export const SPATIAL_REGIONS = 12;

const FFT_SIZE = 512;
const POOLED_DIM = 2 * MEL_BINS;

const WEIGHTS = projectionMatrix(`${AUDIO_EXTRACTOR_ID}/embed`, AUDIO_DIM, POOLED_DIM);
const BIAS = projectionBias(`${AUDIO_EXTRACTOR_ID}/embed`, AUDIO_DIM);

const HANN = (() => {
  const w = new Float64Array(FFT_SIZE);
  for (let i = 0; i < FFT_SIZE; i++) {
    w[i] = 0.5 - 0.5 * Math.cos((2 * Math.PI * i) / (FFT_SIZE - 1));
  }
  return w;
})();

/** In-place iterative radix-2 FFT over interleaved re/im arrays. */
function fft(re: Float64Array, im: Float64Array): void {
  const n = re.length;
  for (let i = 1, j = 0; i < n; i++) {
    let bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      [re[i], re[j]] = [re[j], re[i]];
      [im[i], im[j]] = [im[j], im[i]];
    }
  }
  for (let len = 2; len <= n; len <<= 1) {
    const angle = (-2 * Math.PI) / len;
    const wRe = Math.cos(angle);
    const wIm = Math.sin(angle);
    for (let i = 0; i < n; i += len) {
      let curRe = 1;
      let curIm = 0;
      for (let k = 0; k < len / 2; k++) {
        const uRe = re[i + k];
        const uIm = im[i + k];
        const vRe = re[i + k + len / 2] * curRe - im[i + k + len / 2] * curIm;
        const vIm = re[i + k + len / 2] * curIm + im[i + k + len / 2] * curRe;
        re[i + k] = uRe + vRe;
        im[i + k] = uIm + vIm;
        re[i + k + len / 2] = uRe - vRe;
        im[i + k + len / 2] = uIm - vIm;
        const nextRe = curRe * wRe - curIm * wIm;
        curIm = curRe * wIm + curIm * wRe;
        curRe = nextRe;
      }
    }
  }
}

function melFilterCenters(sampleRate: number): Float64Array {
  const toMel = (hz: number) => 2595 * Math.log10(1 + hz / 700);
  const toHz = (mel: number) => 700 * (10 ** (mel / 2595) - 1);
  const top = toMel(sampleRate / 2);
  const centers = new Float64Array(MEL_BINS + 2);
  for (let i = 0; i < MEL_BINS + 2; i++) {
    centers[i] = toHz((top * i) / (MEL_BINS + 1));
  }
  return centers;
}

/** 96x64 log-mel patch for the 1s segment starting at ``segment`` seconds. */
export function logMelPatch(track: AudioTrack, segment: number): Float64Array {
  const { sampleRate, samples } = track;
  const patch = new Float64Array(MEL_FRAMES * MEL_BINS);
  const centers = melFilterCenters(sampleRate);
  const binHz = sampleRate / FFT_SIZE;
  const re = new Float64Array(FFT_SIZE);
  const im = new Float64Array(FFT_SIZE);
  const segStart = Math.floor(segment * sampleRate);

  for (let f = 0; f < MEL_FRAMES; f++) {
    const start = segStart + Math.floor((f * sampleRate) / MEL_FRAMES);
    for (let i = 0; i < FFT_SIZE; i++) {
      const s = start + i < samples.length ? samples[start + i] : 0;
      re[i] = s * HANN[i];
      im[i] = 0;
    }
    fft(re, im);
    for (let m = 0; m < MEL_BINS; m++) {
      const lo = centers[m];
      const mid = centers[m + 1];
      const hi = centers[m + 2];
      let energy = 0;
      const kLo = Math.max(1, Math.ceil(lo / binHz));
      const kHi = Math.min(FFT_SIZE / 2, Math.floor(hi / binHz));
      for (let k = kLo; k <= kHi; k++) {
        const hz = k * binHz;
        const weight = hz <= mid ? (hz - lo) / (mid - lo || 1) : (hi - hz) / (hi - mid || 1);
        if (weight <= 0) continue;
        energy += weight * (re[k] * re[k] + im[k] * im[k]);
      }
      patch[f * MEL_BINS + m] = Math.log(energy + 1e-6);
    }
  }
  return patch;
}

/** 128-d embedding of one segment's log-mel patch, rounded to f32. */
export function extractAudioSegment(patch: Float64Array): Float32Array {
  const pooled = new Float64Array(POOLED_DIM);
  for (let m = 0; m < MEL_BINS; m++) {
    let sum = 0;
    let sumSq = 0;
    for (let f = 0; f < MEL_FRAMES; f++) {
      const v = patch[f * MEL_BINS + m];
      sum += v;
      sumSq += v * v;
    }
    const mean = sum / MEL_FRAMES;
    pooled[m] = mean;
    pooled[MEL_BINS + m] = Math.sqrt(Math.max(0, sumSq / MEL_FRAMES - mean * mean));
  }
  const emb = projectRelu(WEIGHTS, BIAS, pooled, AUDIO_DIM, POOLED_DIM);
  const out = new Float32Array(AUDIO_DIM);
  for (let i = 0; i < AUDIO_DIM; i++) out[i] = Math.fround(emb[i]);
  return out;
}

/** 64-channel x 12-region pooled spatial map of the patch, f32. */
export function extractAudioSpatial(patch: Float64Array): Float32Array {
  const out = new Float32Array(SPATIAL_CHANNELS * SPATIAL_REGIONS);
  const per = MEL_FRAMES / SPATIAL_REGIONS; // 8 frames per region
  for (let c = 0; c < SPATIAL_CHANNELS; c++) {
    for (let r = 0; r < SPATIAL_REGIONS; r++) {
      let acc = 0;
      for (let f = r * per; f < (r + 1) * per; f++) {
        acc += patch[f * MEL_BINS + c];
      }
      out[c * SPATIAL_REGIONS + r] = Math.fround(acc / per);
    }
  }
  return out;
}
