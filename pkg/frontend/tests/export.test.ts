import * as fs from "node:fs/promises";
import * as os from "node:os";
import * as path from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { DEFAULT_OPTIONS, exportCorpus, exportVideo } from "../dist/export.js";
import { writeVideoDir } from "./media";

let root: string;

beforeAll(async () => {
  root = await fs.mkdtemp(path.join(os.tmpdir(), "avloc-export-"));
});

afterAll(async () => {
  await fs.rm(root, { recursive: true, force: true });
});

async function makeCorpus(name: string, withBroken = false): Promise<string> {
  const inDir = path.join(root, name);
  await writeVideoDir(inDir, {
    id: "clip_a", seconds: 3, fps: 8, sampleRate: 8000,
    labels: { num_classes: 4, class: 1, interval: [1, 2] },
  });
  await writeVideoDir(inDir, {
    id: "clip_b", seconds: 2, fps: 4, sampleRate: 4000,
    pattern: (f, x, y) => [255 - x * 4, (y * 9 + f * 11) % 256, 40],
    tone: (t) => 0.3 * Math.sin(2 * Math.PI * 880 * t),
  });
  if (withBroken) {
    const broken = path.join(inDir, "clip_c", "frames");
    await fs.mkdir(broken, { recursive: true });
    await fs.writeFile(path.join(broken, "frame_00000.ppm"), Buffer.from("garbage"));
    await fs.writeFile(path.join(inDir, "clip_c", "audio.wav"), Buffer.from("xx"));
  }
  return inDir;
}

describe("corpus export", () => {
  it("writes one feature file per video plus both manifests", async () => {
    const inDir = await makeCorpus("basic");
    const outDir = path.join(root, "basic-out");
    const manifest = path.join(root, "basic-manifest.jsonl");
    const result = await exportCorpus(inDir, outDir, manifest, DEFAULT_OPTIONS);
    expect(result.exported).toBe(2);
    expect(result.skipped).toBe(0);

    const files = (await fs.readdir(outDir)).sort();
    expect(files).toEqual(["clip_a.avef", "clip_b.avef", "manifest.jsonl"]);

    const entries = (await fs.readFile(manifest, "utf-8")).trim().split("\n")
      .map((l) => JSON.parse(l));
    expect(entries).toHaveLength(2);
    for (const entry of entries) {
      expect(entry.extractors.visual).toBe("blockproj-v1");
      expect(entry.extractors.audio).toBe("melproj-v1");
      expect(entry.frame_alignment).toBe("center");
    }
    expect(entries[0].labels).toBe("provided");
    expect(entries[0].segments).toBe(3);
    expect(entries[1].labels).toBe("background-default");
    expect(entries[1].segments).toBe(2);

    const index = (await fs.readFile(path.join(outDir, "manifest.jsonl"), "utf-8"))
      .trim().split("\n").map((l) => JSON.parse(l));
    expect(index).toEqual([
      { id: "clip_a", class: 1, interval: [1, 2] },
      { id: "clip_b", class: 28, interval: null },
    ]);
  });

  it("re-export is bit-stable under pinned extractor versions", async () => {
    const inDir = await makeCorpus("stable");
    const out1 = path.join(root, "stable-out1");
    const out2 = path.join(root, "stable-out2");
    await exportCorpus(inDir, out1, path.join(root, "m1.jsonl"), DEFAULT_OPTIONS);
    await exportCorpus(inDir, out2, path.join(root, "m2.jsonl"),
                       { ...DEFAULT_OPTIONS, concurrency: 1 });
    for (const name of ["clip_a.avef", "clip_b.avef"]) {
      const a = await fs.readFile(path.join(out1, name));
      const b = await fs.readFile(path.join(out2, name));
      expect(a.equals(b)).toBe(true);
    }
  });

  it("skips undecodable videos with a manifest note", async () => {
    const inDir = await makeCorpus("broken", true);
    const outDir = path.join(root, "broken-out");
    const manifest = path.join(root, "broken-manifest.jsonl");
    const result = await exportCorpus(inDir, outDir, manifest, DEFAULT_OPTIONS);
    expect(result.exported).toBe(2);
    expect(result.skipped).toBe(1);
    const entries = (await fs.readFile(manifest, "utf-8")).trim().split("\n")
      .map((l) => JSON.parse(l));
    const broken = entries.find((e) => e.id === "clip_c");
    expect(broken.skipped).toBeTruthy();
    expect(await fs.readdir(outDir)).not.toContain("clip_c.avef");
    // the corpus index only lists exported videos
    const index = (await fs.readFile(path.join(outDir, "manifest.jsonl"), "utf-8"))
      .trim().split("\n").map((l) => JSON.parse(l));
    expect(index.map((e: { id: string }) => e.id)).toEqual(["clip_a", "clip_b"]);
  });

  it("emits the audio spatial block and c3d sidecar only when asked", async () => {
    const inDir = await makeCorpus("flags");
    const plain = await exportVideo(path.join(inDir, "clip_a"), DEFAULT_OPTIONS);
    const extra = await exportVideo(path.join(inDir, "clip_a"),
                                    { ...DEFAULT_OPTIONS, audioSpatial: true, c3d: true });
    expect(plain.avef.includes(Buffer.from("AEXT"))).toBe(false);
    expect(extra.avef.includes(Buffer.from("AEXT"))).toBe(true);
    expect(plain.motion).toBeNull();
    expect(extra.motion).not.toBeNull();
    expect(extra.motion!.subarray(0, 4).toString("ascii")).toBe("AVC3");
    expect(extra.entry.extractors!.audio_spatial).toBe("logmel-pool-v1");
    expect(extra.entry.extractors!.c3d).toBe("motionproj-v1");
    // spatial block adds c_a * k_a f32 per segment plus the 12-byte header
    expect(extra.avef.length).toBe(plain.avef.length + 12 + 3 * 64 * 12 * 4);
  });

  it("labels outside the clip are clamped and background fills the rest", async () => {
    const inDir = path.join(root, "clamp");
    await writeVideoDir(inDir, {
      id: "clip_d", seconds: 2, fps: 4, sampleRate: 4000,
      labels: { num_classes: 3, class: 0, interval: [1, 9] },
    });
    const result = await exportVideo(path.join(inDir, "clip_d"), DEFAULT_OPTIONS);
    expect(result.corpusEntry).toEqual({ id: "clip_d", class: 0, interval: [1, 1] });
  });
});
