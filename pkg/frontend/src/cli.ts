#!/usr/bin/env node
/**
 * avloc-export: turn raw media directories into AVEF feature corpora.
 *
 *   avloc-export export --in media/ --out corpus/ --manifest export.jsonl
 *                       [--fps 8] [--audio-spatial] [--c3d] [--concurrency 2]
 */

import { DEFAULT_OPTIONS, exportCorpus } from "./export.js";

function usage(): never {
  console.error(
    "usage: avloc-export export --in <dir> --out <dir> --manifest <path>\n" +
    "                           [--fps N] [--audio-spatial] [--c3d] [--concurrency N]",
  );
  process.exit(2);
}

export async function main(argv: string[]): Promise<number> {
  if (argv[0] !== "export") usage();
  const opts = { ...DEFAULT_OPTIONS };
  let inDir = "";
  let outDir = "";
  let manifest = "";
  for (let i = 1; i < argv.length; i++) {
    const arg = argv[i];
    const value = () => {
      if (i + 1 >= argv.length) usage();
      return argv[++i];
    };
    switch (arg) {
      case "--in": inDir = value(); break;
      case "--out": outDir = value(); break;
      case "--manifest": manifest = value(); break;
      case "--fps": opts.fps = Number(value()); break;
      case "--concurrency": opts.concurrency = Number(value()); break;
      case "--audio-spatial": opts.audioSpatial = true; break;
      case "--c3d": opts.c3d = true; break;
      default: usage();
    }
  }
  if (!inDir || !outDir || !manifest || !(opts.fps > 0)) usage();
  try {
    const result = await exportCorpus(inDir, outDir, manifest, opts);
    console.log(JSON.stringify({
      command: "export",
      exported: result.exported,
      skipped: result.skipped,
      out: outDir,
      manifest: result.manifestPath,
    }));
    return result.exported > 0 ? 0 : 3;
  } catch (error) {
    console.error(`error: ${(error as Error).message}`);
    return 3;
  }
}

const isDirectRun = process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "");
if (isDirectRun) {
  main(process.argv.slice(2)).then((code) => process.exit(code));
}
