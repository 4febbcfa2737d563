/**
 * The per-video export pipeline and corpus driver.
 *
 * An input corpus is a directory of per-video subdirectories, each with
 * a frames/ folder of P6 PPMs (lexicographic order = time order) and an
 * audio.wav PCM-16 track. Optional per-video files: media.json
 * ({"fps": N} override) and labels.json ({"num_classes", "class",
 * "interval": [start, end]} with an inclusive 0-based segment interval).
 * Unlabeled videos are written as all-background with the 29-class
 * default vocabulary.
 *
 * Every write is atomic (temp file + rename) and every video lands in
 * the manifest, including skipped ones with their decode failure.
 */

import * as fs from "node:fs/promises";
import * as path from "node:path";

import { encodeAvef } from "./avef.js";
import {
  AUDIO_EXTRACTOR_ID,
  AUDIO_SPATIAL_ID,
  SPATIAL_CHANNELS,
  SPATIAL_REGIONS,
  extractAudioSegment,
  extractAudioSpatial,
  logMelPatch,
} from "./audio.js";
import {
  MOTION_EXTRACTOR_ID,
  extractMotionSegment,
  writeMotionSidecar,
} from "./motion.js";
import { Frame, MediaDecodeError, parsePpm } from "./ppm.js";
import {
  FRAMES_PER_SEGMENT,
  REGIONS,
  VISUAL_CHANNELS,
  VISUAL_EXTRACTOR_ID,
  extractVisualSegment,
  sampleFrameIndices,
} from "./visual.js";
import { parseWav } from "./wav.js";

export const DEFAULT_NUM_CLASSES = 29; // 28 event classes plus background
export const FRAME_ALIGNMENT = "center";

export interface ExportOptions {
  fps: number;
  audioSpatial: boolean;
  c3d: boolean;
  concurrency: number;
}

export const DEFAULT_OPTIONS: ExportOptions = {
  fps: 8,
  audioSpatial: false,
  c3d: false,
  concurrency: 2,
};

export interface ManifestEntry {
  id: string;
  fps?: number;
  frames?: number;
  segments?: number;
  frame_alignment?: string;
  extractors?: Record<string, string>;
  audio_spatial?: boolean;
  c3d?: boolean;
  labels?: "provided" | "background-default";
  skipped?: string;
}

interface Labels {
  numClasses: number;
  cls: number;
  interval: [number, number] | null;
}

async function readLabels(videoDir: string): Promise<Labels | null> {
  let raw: string;
  try {
    raw = await fs.readFile(path.join(videoDir, "labels.json"), "utf-8");
  } catch {
    return null;
  }
  let parsed;
  try {
    parsed = JSON.parse(raw);
  } catch (error) {
    throw new MediaDecodeError(`malformed labels.json: ${error}`);
  }
  if (!Number.isInteger(parsed.num_classes) || !Number.isInteger(parsed.class)) {
    throw new MediaDecodeError("labels.json needs integer num_classes and class");
  }
  return {
    numClasses: parsed.num_classes,
    cls: parsed.class,
    interval: parsed.interval ?? null,
  };
}

async function readFps(videoDir: string, fallback: number): Promise<number> {
  try {
    const raw = await fs.readFile(path.join(videoDir, "media.json"), "utf-8");
    const parsed = JSON.parse(raw);
    return parsed.fps > 0 ? parsed.fps : fallback;
  } catch {
    return fallback;
  }
}

export interface VideoExport {
  avef: Buffer;
  motion: Buffer | null;
  entry: ManifestEntry;
  /** Index entry for the output corpus' own manifest.jsonl. */
  corpusEntry: { id: string; class: number; interval: [number, number] | null };
}

/** Decode and featurize one video directory. Throws MediaDecodeError. */
export async function exportVideo(videoDir: string, opts: ExportOptions): Promise<VideoExport> {
  const id = path.basename(videoDir);
  const fps = await readFps(videoDir, opts.fps);

  const framesDir = path.join(videoDir, "frames");
  const frameNames = (await fs.readdir(framesDir)).filter((n) => n.endsWith(".ppm")).sort();
  if (frameNames.length === 0) throw new MediaDecodeError("no frames");
  const frames: Frame[] = [];
  for (const name of frameNames) {
    frames.push(parsePpm(await fs.readFile(path.join(framesDir, name))));
  }
  const track = parseWav(await fs.readFile(path.join(videoDir, "audio.wav")));

  const segments = Math.min(
    Math.floor(frames.length / fps),
    Math.floor(track.samples.length / track.sampleRate),
  );
  if (segments < 1) throw new MediaDecodeError("media shorter than one segment");

  const labels = await readLabels(videoDir);
  const numClasses = labels ? labels.numClasses : DEFAULT_NUM_CLASSES;
  const background = numClasses - 1;
  const segmentLabels = new Array<number>(segments).fill(background);
  let videoLabel = background;
  if (labels) {
    videoLabel = labels.cls;
    if (labels.interval) {
      const [s, e] = labels.interval;
      for (let t = Math.max(0, s); t <= Math.min(segments - 1, e); t++) {
        segmentLabels[t] = labels.cls;
      }
    }
  }

  const visual: Float32Array[] = [];
  const audio: Float32Array[] = [];
  const spatial: Float32Array[] = [];
  const motion: Float32Array[] = [];
  for (let seg = 0; seg < segments; seg++) {
    const sampled = sampleFrameIndices(seg, fps, frames.length).map((i) => frames[i]);
    visual.push(extractVisualSegment(sampled));
    const patch = logMelPatch(track, seg);
    audio.push(extractAudioSegment(patch));
    if (opts.audioSpatial) spatial.push(extractAudioSpatial(patch));
    if (opts.c3d) motion.push(extractMotionSegment(sampled));
  }

  const avef = encodeAvef({
    videoId: id,
    numClasses,
    visual,
    visualChannels: VISUAL_CHANNELS,
    visualRegions: REGIONS,
    audio,
    segmentLabels,
    videoLabel,
    audioSpatial: opts.audioSpatial
      ? { channels: SPATIAL_CHANNELS, regions: SPATIAL_REGIONS, maps: spatial }
      : undefined,
  });

  const extractors: Record<string, string> = {
    visual: VISUAL_EXTRACTOR_ID,
    audio: AUDIO_EXTRACTOR_ID,
  };
  if (opts.audioSpatial) extractors.audio_spatial = AUDIO_SPATIAL_ID;
  if (opts.c3d) extractors.c3d = MOTION_EXTRACTOR_ID;

  let interval: [number, number] | null = null;
  for (let t = 0; t < segments; t++) {
    if (segmentLabels[t] !== background) {
      interval = interval === null ? [t, t] : [interval[0], t];
    }
  }

  return {
    avef,
    motion: opts.c3d ? writeMotionSidecar(motion) : null,
    entry: {
      id,
      fps,
      frames: frames.length,
      segments,
      frame_alignment: FRAME_ALIGNMENT,
      extractors,
      audio_spatial: opts.audioSpatial,
      c3d: opts.c3d,
      labels: labels ? "provided" : "background-default",
    },
    corpusEntry: { id, class: videoLabel, interval },
  };
}

async function atomicWrite(target: string, payload: Buffer | string): Promise<void> {
  const tmp = `${target}.tmp`;
  await fs.writeFile(tmp, payload);
  await fs.rename(tmp, target);
}

export interface CorpusResult {
  exported: number;
  skipped: number;
  manifestPath: string;
}

/** Export every video subdirectory of inDir; one manifest line each. */
export async function exportCorpus(
  inDir: string,
  outDir: string,
  manifestPath: string,
  opts: ExportOptions = DEFAULT_OPTIONS,
): Promise<CorpusResult> {
  const dirents = await fs.readdir(inDir, { withFileTypes: true });
  const videoDirs = dirents.filter((d) => d.isDirectory()).map((d) => d.name).sort();
  await fs.mkdir(outDir, { recursive: true });
  await fs.mkdir(path.dirname(path.resolve(manifestPath)), { recursive: true });

  const entries: ManifestEntry[] = new Array(videoDirs.length);
  const corpusEntries: (object | null)[] = new Array(videoDirs.length).fill(null);
  let exported = 0;
  let skipped = 0;
  let next = 0;

  const worker = async () => {
    while (next < videoDirs.length) {
      const index = next++;
      const name = videoDirs[index];
      try {
        const result = await exportVideo(path.join(inDir, name), opts);
        await atomicWrite(path.join(outDir, `${name}.avef`), result.avef);
        if (result.motion) {
          await atomicWrite(path.join(outDir, `${name}.c3d`), result.motion);
        }
        entries[index] = result.entry;
        corpusEntries[index] = result.corpusEntry;
        exported++;
      } catch (error) {
        const fsError = (error as NodeJS.ErrnoException).code !== undefined;
        if (error instanceof MediaDecodeError || fsError) {
          entries[index] = { id: name, skipped: String((error as Error).message) };
          skipped++;
        } else {
          throw error;
        }
      }
    }
  };
  await Promise.all(
    Array.from({ length: Math.max(1, opts.concurrency) }, () => worker()),
  );

  await atomicWrite(manifestPath, entries.map((e) => JSON.stringify(e)).join("\n") + "\n");
  // the output directory doubles as a corpus for the primary pipeline
  const indexLines = corpusEntries.filter((e) => e !== null)
    .map((e) => JSON.stringify(e)).join("\n");
  await atomicWrite(path.join(outDir, "manifest.jsonl"),
                    indexLines.length ? indexLines + "\n" : "");
  return { exported, skipped, manifestPath };
}
