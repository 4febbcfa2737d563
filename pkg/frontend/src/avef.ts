/**
 * AVEF feature-file serialization (the primary pipeline's wire format).
 *
 * Little-endian: "AVEF", u16 version=1, u32 T/d_v/k/d_a/C, u16-prefixed
 * UTF-8 video id, T visual maps (d_v*k f32, regions innermost), T audio
 * vectors (d_a f32), T segment label u16s, video label u16, then an
 * optional "AEXT" block (u32 c_a, u32 k_a, T spatial maps of c_a*k_a f32).
 */

export interface AvefRecord {
  videoId: string;
  numClasses: number;
  /** One (d_v * k) f32 map per segment, regions innermost. */
  visual: Float32Array[];
  visualChannels: number;
  visualRegions: number;
  /** One d_a f32 vector per segment. */
  audio: Float32Array[];
  segmentLabels: number[];
  videoLabel: number;
  audioSpatial?: {
    channels: number;
    regions: number;
    maps: Float32Array[];
  };
}

export function encodeAvef(record: AvefRecord): Buffer {
  const t = record.visual.length;
  if (record.audio.length !== t || record.segmentLabels.length !== t) {
    throw new Error("segment counts disagree across fields");
  }
  const id = Buffer.from(record.videoId, "utf-8");
  const audioDim = record.audio[0].length;

  const header = Buffer.alloc(4 + 2 + 20 + 2);
  header.write("AVEF", 0, "ascii");
  header.writeUInt16LE(1, 4);
  header.writeUInt32LE(t, 6);
  header.writeUInt32LE(record.visualChannels, 10);
  header.writeUInt32LE(record.visualRegions, 14);
  header.writeUInt32LE(audioDim, 18);
  header.writeUInt32LE(record.numClasses, 22);
  header.writeUInt16LE(id.length, 26);

  const parts: Buffer[] = [header, id];
  for (const map of record.visual) {
    if (map.length !== record.visualChannels * record.visualRegions) {
      throw new Error("visual map size disagrees with declared dimensions");
    }
    parts.push(f32Buffer(map));
  }
  for (const vec of record.audio) {
    if (vec.length !== audioDim) throw new Error("ragged audio vectors");
    parts.push(f32Buffer(vec));
  }
  const labels = Buffer.alloc(2 * t + 2);
  record.segmentLabels.forEach((label, i) => {
    checkLabel(label, record.numClasses);
    labels.writeUInt16LE(label, 2 * i);
  });
  checkLabel(record.videoLabel, record.numClasses);
  labels.writeUInt16LE(record.videoLabel, 2 * t);
  parts.push(labels);

  if (record.audioSpatial) {
    const { channels, regions, maps } = record.audioSpatial;
    if (maps.length !== t) throw new Error("spatial map count disagrees with T");
    const ext = Buffer.alloc(12);
    ext.write("AEXT", 0, "ascii");
    ext.writeUInt32LE(channels, 4);
    ext.writeUInt32LE(regions, 8);
    parts.push(ext);
    for (const map of maps) {
      if (map.length !== channels * regions) {
        throw new Error("spatial map size disagrees with declared dimensions");
      }
      parts.push(f32Buffer(map));
    }
  }
  return Buffer.concat(parts);
}

function f32Buffer(values: Float32Array): Buffer {
  const buf = Buffer.alloc(values.length * 4);
  for (let i = 0; i < values.length; i++) buf.writeFloatLE(values[i], i * 4);
  return buf;
}

function checkLabel(label: number, numClasses: number): void {
  if (!Number.isInteger(label) || label < 0 || label >= numClasses) {
    throw new Error(`label ${label} outside [0, ${numClasses})`);
  }
}
