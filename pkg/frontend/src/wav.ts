/** RIFF/WAV decoding, PCM 16-bit only, mixed down to mono. */

import { MediaDecodeError } from "./ppm.js";

export interface AudioTrack {
  sampleRate: number;
  /** Mono samples in -1..1. */
  samples: Float64Array;
}

export function parseWav(raw: Buffer): AudioTrack {
  if (raw.length < 12 || raw.toString("ascii", 0, 4) !== "RIFF" ||
      raw.toString("ascii", 8, 12) !== "WAVE") {
    throw new MediaDecodeError("not a RIFF/WAVE file");
  }
  let pos = 12;
  let sampleRate = 0;
  let channels = 0;
  let bits = 0;
  let data: Buffer | null = null;
  while (pos + 8 <= raw.length) {
    const id = raw.toString("ascii", pos, pos + 4);
    const size = raw.readUInt32LE(pos + 4);
    const body = pos + 8;
    if (body + size > raw.length) {
      throw new MediaDecodeError(`truncated WAV chunk ${id}`);
    }
    if (id === "fmt ") {
      const format = raw.readUInt16LE(body);
      channels = raw.readUInt16LE(body + 2);
      sampleRate = raw.readUInt32LE(body + 4);
      bits = raw.readUInt16LE(body + 14);
      if (format !== 1 || bits !== 16) {
        throw new MediaDecodeError(`unsupported WAV encoding (format ${format}, ${bits}-bit)`);
      }
    } else if (id === "data") {
      data = raw.subarray(body, body + size);
    }
    pos = body + size + (size % 2);
  }
  if (!sampleRate || !channels || !data) {
    throw new MediaDecodeError("WAV missing fmt or data chunk");
  }
  const frames = Math.floor(data.length / (2 * channels));
  const samples = new Float64Array(frames);
  for (let i = 0; i < frames; i++) {
    let acc = 0;
    for (let ch = 0; ch < channels; ch++) {
      acc += data.readInt16LE((i * channels + ch) * 2);
    }
    samples[i] = acc / channels / 32768;
  }
  return { sampleRate, samples };
}
