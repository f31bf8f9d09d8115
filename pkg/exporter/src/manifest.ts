/**
 * Export manifest: per-file byte counts and SHA-256 digests plus the
 * dataset's headline counts. Written as manifest.json next to the
 * bundle files; the manifest never lists itself, so its own digest is
 * well defined. Two exports of the same source data produce identical
 * manifests — the writers are deterministic and carry no timestamps.
 */

import { createHash } from "node:crypto";
import { readFileSync, writeFileSync } from "node:fs";
import { join } from "node:path";

export interface ManifestCounts {
  classes: number;
  edges: number;
  features: number;
  nodes: number;
}

export interface FileEntry {
  bytes: number;
  sha256: string;
}

export interface Manifest {
  counts: ManifestCounts;
  dataset: string;
  files: Record<string, FileEntry>;
}

export const MANIFEST_NAME = "manifest.json";

export function sha256Hex(data: Uint8Array): string {
  return createHash("sha256").update(data).digest("hex");
}

/** Hash the named files inside `dir` and assemble the manifest object. */
export function buildManifest(
  dir: string,
  dataset: string,
  counts: ManifestCounts,
  fileNames: string[],
): Manifest {
  const files: Record<string, FileEntry> = {};
  for (const name of [...fileNames].sort()) {
    const data = readFileSync(join(dir, name));
    files[name] = { bytes: data.length, sha256: sha256Hex(data) };
  }
  return { counts, dataset, files };
}

/** Serialize with sorted keys and 2-space indent, Python-style. */
export function manifestJson(m: Manifest): string {
  const fileLines = Object.keys(m.files)
    .sort()
    .map((name) => {
      const f = m.files[name]!;
      return (
        `    ${JSON.stringify(name)}: {\n` +
        `      "bytes": ${f.bytes},\n` +
        `      "sha256": "${f.sha256}"\n` +
        "    }"
      );
    });
  return (
    "{\n" +
    '  "counts": {\n' +
    `    "classes": ${m.counts.classes},\n` +
    `    "edges": ${m.counts.edges},\n` +
    `    "features": ${m.counts.features},\n` +
    `    "nodes": ${m.counts.nodes}\n` +
    "  },\n" +
    `  "dataset": ${JSON.stringify(m.dataset)},\n` +
    '  "files": {\n' +
    fileLines.join(",\n") +
    "\n  }\n" +
    "}\n"
  );
}

export function writeManifest(dir: string, m: Manifest): void {
  writeFileSync(join(dir, MANIFEST_NAME), manifestJson(m));
}

export function readManifest(dir: string): Manifest {
  return JSON.parse(readFileSync(join(dir, MANIFEST_NAME), "utf-8")) as Manifest;
}
