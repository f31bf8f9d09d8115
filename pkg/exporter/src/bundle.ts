/**
 * Byte-exact writers for the graph-bundle directory format consumed by
 * the krd trainer:
 *
 *   meta.json     {"name", "num_classes", "num_features", "num_nodes"},
 *                 2-space indent, sorted keys, trailing newline
 *   features.bin  row-major little-endian float32, exactly 4*N*d bytes
 *   labels.csv    one integer per line (-1 = unlabeled), each "\n"-terminated
 *   edges.csv     "u,v" per line with u < v, sorted, deduplicated, no header;
 *                 empty file when the graph has no edges
 *   splits.json   {"inductive", "observed_unlabeled", "test", "train", "val"},
 *                 single line, sorted keys, ", "/": " separators, newline
 *
 * The JSON shapes replicate Python's json.dumps output byte for byte so
 * bundles written here are indistinguishable from ones written by the
 * trainer itself.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

export interface BundleData {
  name: string;
  numNodes: number;
  numFeatures: number;
  numClasses: number;
  features: Float32Array;
  labels: Int32Array;
  edges: Array<[number, number]>;
}

export interface SplitData {
  train: number[];
  val: number[];
  test: number[];
  observedUnlabeled: number[];
  inductive: number[];
}

/** ASCII-only JSON string literal, matching Python's ensure_ascii output. */
function jsonString(s: string): string {
  let out = '"';
  for (const ch of s) {
    const code = ch.codePointAt(0)!;
    if (ch === '"') out += '\\"';
    else if (ch === "\\") out += "\\\\";
    else if (code < 0x20 || code > 0x7e) {
      if (code > 0xffff) {
        // surrogate pair, as Python escapes astral code points
        const v = code - 0x10000;
        out += `\\u${(0xd800 + (v >> 10)).toString(16).padStart(4, "0")}`;
        out += `\\u${(0xdc00 + (v & 0x3ff)).toString(16).padStart(4, "0")}`;
      } else {
        out += `\\u${code.toString(16).padStart(4, "0")}`;
      }
    } else {
      out += ch;
    }
  }
  return out + '"';
}

export function metaJson(b: BundleData): string {
  return (
    "{\n" +
    `  "name": ${jsonString(b.name)},\n` +
    `  "num_classes": ${b.numClasses},\n` +
    `  "num_features": ${b.numFeatures},\n` +
    `  "num_nodes": ${b.numNodes}\n` +
    "}\n"
  );
}

export function splitsJson(s: SplitData): string {
  const arr = (ids: number[]) => `[${ids.join(", ")}]`;
  return (
    "{" +
    `"inductive": ${arr(s.inductive)}, ` +
    `"observed_unlabeled": ${arr(s.observedUnlabeled)}, ` +
    `"test": ${arr(s.test)}, ` +
    `"train": ${arr(s.train)}, ` +
    `"val": ${arr(s.val)}` +
    "}\n"
  );
}

export function labelsCsv(labels: Int32Array): string {
  let out = "";
  for (const y of labels) out += `${y}\n`;
  return out;
}

export function edgesCsv(edges: Array<[number, number]>): string {
  if (edges.length === 0) return "";
  let out = "";
  for (const [u, v] of edges) out += `${u},${v}\n`;
  return out;
}

export function featuresBytes(features: Float32Array): Uint8Array {
  const probe = new Uint8Array(Float32Array.of(1).buffer);
  if (probe[3] === 0x3f) {
    // little-endian host: the typed array's backing store is already the format
    return new Uint8Array(features.buffer, features.byteOffset, features.byteLength);
  }
  const out = new Uint8Array(features.length * 4);
  const view = new DataView(out.buffer);
  for (let i = 0; i < features.length; i++) view.setFloat32(i * 4, features[i]!, true);
  return out;
}

/** File names inside a bundle directory, in manifest order. */
export const BUNDLE_FILES = [
  "edges.csv",
  "features.bin",
  "labels.csv",
  "meta.json",
  "splits.json",
] as const;

/** Write all five bundle files; returns the file names written. */
export function writeBundle(outDir: string, data: BundleData, splits: SplitData): string[] {
  if (data.features.length !== data.numNodes * data.numFeatures) {
    throw new Error(
      `feature buffer holds ${data.features.length} values, ` +
        `expected ${data.numNodes} x ${data.numFeatures}`,
    );
  }
  if (data.labels.length !== data.numNodes) {
    throw new Error(`label count ${data.labels.length} != num_nodes ${data.numNodes}`);
  }
  mkdirSync(outDir, { recursive: true });
  writeFileSync(join(outDir, "meta.json"), metaJson(data));
  writeFileSync(join(outDir, "features.bin"), featuresBytes(data.features));
  writeFileSync(join(outDir, "labels.csv"), labelsCsv(data.labels));
  writeFileSync(join(outDir, "edges.csv"), edgesCsv(data.edges));
  writeFileSync(join(outDir, "splits.json"), splitsJson(splits));
  return [...BUNDLE_FILES];
}
