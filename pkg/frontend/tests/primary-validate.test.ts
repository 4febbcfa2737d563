/**
 * Cross-language acceptance: every exported file must satisfy the primary
 * toolkit's validate command and dimension contract (512x7x7 visual maps,
 * 128-d audio vectors), and re-export must be bit-stable.
 */

import { execFileSync } from "node:child_process";
import * as fs from "node:fs/promises";
import * as os from "node:os";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { DEFAULT_OPTIONS, exportCorpus } from "../dist/export.js";
import { writeVideoDir } from "./media";

const REPO_ROOT = path.resolve(path.dirname(fileURLToPath(import.meta.url)), "..", "..");

let root: string;
let outDir: string;

function runPrimary(args: string[]): { code: number; stdout: string } {
  try {
    const stdout = execFileSync("python3", ["-m", "avloc.cli", ...args], {
      cwd: REPO_ROOT,
      encoding: "utf-8",
      env: { ...process.env, PYTHONPATH: path.join(REPO_ROOT, "src") },
    });
    return { code: 0, stdout };
  } catch (error) {
    const e = error as { status?: number; stdout?: string };
    return { code: e.status ?? 1, stdout: e.stdout ?? "" };
  }
}

beforeAll(async () => {
  root = await fs.mkdtemp(path.join(os.tmpdir(), "avloc-accept-"));
  const inDir = path.join(root, "media");
  await writeVideoDir(inDir, {
    id: "val_a", seconds: 3, fps: 8, sampleRate: 8000,
    labels: { num_classes: 5, class: 2, interval: [0, 1] },
  });
  await writeVideoDir(inDir, {
    id: "val_b", seconds: 2, fps: 8, sampleRate: 16000,
    tone: (t) => 0.2 * Math.sin(2 * Math.PI * 523 * t) + 0.1 * Math.sin(2 * Math.PI * 1319 * t),
  });
  outDir = path.join(root, "corpus");
  await exportCorpus(inDir, outDir, path.join(root, "export.jsonl"),
                     { ...DEFAULT_OPTIONS, audioSpatial: true });
}, 120000);

afterAll(async () => {
  await fs.rm(root, { recursive: true, force: true });
});

describe("primary-pipeline acceptance", () => {
  it("each exported file passes the primary validate command", async () => {
    for (const name of (await fs.readdir(outDir)).filter((n) => n.endsWith(".avef"))) {
      const result = runPrimary(["validate", path.join(outDir, name)]);
      expect(result.code, `${name}: ${result.stdout}`).toBe(0);
      const summary = JSON.parse(result.stdout.trim());
      expect(summary.kind).toBe("features");
    }
  });

  it("the exported directory passes corpus-level validation", () => {
    const result = runPrimary(["validate", outDir]);
    expect(result.code).toBe(0);
    expect(JSON.parse(result.stdout.trim()).videos).toBe(2);
  });

  it("visual blocks are 512x7x7 and audio vectors 128-d", async () => {
    for (const name of ["val_a.avef", "val_b.avef"]) {
      const raw = await fs.readFile(path.join(outDir, name));
      expect(raw.subarray(0, 4).toString("ascii")).toBe("AVEF");
      expect(raw.readUInt16LE(4)).toBe(1);
      expect(raw.readUInt32LE(10)).toBe(512); // channels
      expect(raw.readUInt32LE(14)).toBe(49);  // 7x7 regions
      expect(raw.readUInt32LE(18)).toBe(128); // audio dim
    }
  });

  it("re-export with pinned extractor versions is bit-stable", async () => {
    const again = path.join(root, "corpus2");
    await exportCorpus(path.join(root, "media"), again, path.join(root, "export2.jsonl"),
                       { ...DEFAULT_OPTIONS, audioSpatial: true });
    for (const name of ["val_a.avef", "val_b.avef"]) {
      const a = await fs.readFile(path.join(outDir, name));
      const b = await fs.readFile(path.join(again, name));
      expect(a.equals(b)).toBe(true);
    }
  }, 120000);
});
