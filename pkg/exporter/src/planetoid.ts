/**
 * Reader for the Planetoid citation-dataset distribution format: eight
 * files named ind.<dataset>.{x,y,tx,ty,allx,ally,graph,test.index}.
 *
 * x/tx/allx are pickled scipy CSR matrices (train / test / train+extra
 * features), y/ty/ally the matching one-hot label matrices, graph a
 * pickled adjacency dict, and test.index the graph positions of the tx
 * rows, one per line in file order. The canonical public split is
 * implicit in the layout: train = the first len(y) nodes, validation =
 * the next `valSize`, test = the sorted test indices.
 *
 * Index ranges not covered by any file (gaps inside the test block,
 * which occur in Citeseer) become isolated nodes with zero features and
 * label -1, excluded from every split.
 */

import { readFileSync } from "node:fs";
import { join } from "node:path";
import { unpickle } from "./pickle.js";
import { MinimalSparseCSR, NDArray, planetoidResolver } from "./numpy.js";

/** The source files are present but do not look like Planetoid data. */
export class FormatError extends Error {}

export interface PlanetoidData {
  numNodes: number;
  numFeatures: number;
  numClasses: number;
  /** numNodes x numFeatures, row-major. */
  features: Float32Array;
  /** Per-node class id, -1 for unlabeled gap nodes. */
  labels: Int32Array;
  /** Undirected edges, canonical u < v, sorted, deduplicated. */
  edges: Array<[number, number]>;
  trainIdx: number[];
  valIdx: number[];
  testIdx: number[];
}

export interface LoadOptions {
  /** Validation-split size of the public split (nodes after the train block). */
  valSize?: number;
}

function loadPickled(sourceDir: string, file: string): unknown {
  let buf: Uint8Array;
  try {
    buf = readFileSync(join(sourceDir, file));
  } catch (err) {
    throw new FormatError(`cannot read ${file}: ${(err as Error).message}`);
  }
  return unpickle(buf, planetoidResolver);
}

function expectCSR(value: unknown, file: string): MinimalSparseCSR {
  if (!(value instanceof MinimalSparseCSR)) {
    throw new FormatError(`${file} does not contain a CSR matrix`);
  }
  return value;
}

function expectLabelMatrix(value: unknown, file: string): NDArray {
  if (!(value instanceof NDArray) || value.shape.length !== 2) {
    throw new FormatError(`${file} does not contain a 2-D array`);
  }
  return value;
}

function readTestIndex(sourceDir: string, file: string): number[] {
  let text: string;
  try {
    text = readFileSync(join(sourceDir, file), "utf-8");
  } catch (err) {
    throw new FormatError(`cannot read ${file}: ${(err as Error).message}`);
  }
  const out: number[] = [];
  for (const line of text.split("\n")) {
    const t = line.trim();
    if (t === "") continue;
    if (!/^\d+$/.test(t)) throw new FormatError(`${file} has a non-integer line: '${t}'`);
    out.push(Number(t));
  }
  if (out.length === 0) throw new FormatError(`${file} is empty`);
  return out;
}

/** First index of the row maximum; -1 when the row is all zeros. */
function argmaxRow(flat: number[], cols: number, row: number, file: string): number {
  let best = -1;
  let bestV = 0;
  for (let j = 0; j < cols; j++) {
    const v = flat[row * cols + j]!;
    if (v < 0) throw new FormatError(`${file} has a negative one-hot entry at row ${row}`);
    if (v > bestV) {
      bestV = v;
      best = j;
    }
  }
  return best;
}

/** Load and assemble one Planetoid dataset from its eight source files. */
export function loadPlanetoid(
  sourceDir: string,
  dataset: string,
  opts: LoadOptions = {},
): PlanetoidData {
  const valSize = opts.valSize ?? 500;
  const f = (suffix: string) => `ind.${dataset}.${suffix}`;

  const x = expectCSR(loadPickled(sourceDir, f("x")), f("x"));
  const tx = expectCSR(loadPickled(sourceDir, f("tx")), f("tx"));
  const allx = expectCSR(loadPickled(sourceDir, f("allx")), f("allx"));
  const y = expectLabelMatrix(loadPickled(sourceDir, f("y")), f("y"));
  const ty = expectLabelMatrix(loadPickled(sourceDir, f("ty")), f("ty"));
  const ally = expectLabelMatrix(loadPickled(sourceDir, f("ally")), f("ally"));
  const graph = loadPickled(sourceDir, f("graph"));
  if (!(graph instanceof Map)) throw new FormatError(`${f("graph")} is not an adjacency dict`);
  const testIndex = readTestIndex(sourceDir, f("test.index"));

  // --- structural checks tying the eight files together -----------------
  const d = allx.cols;
  const numClasses = ally.shape[1]!;
  if (x.cols !== d || tx.cols !== d) {
    throw new FormatError(
      `feature widths disagree: x=${x.cols} tx=${tx.cols} allx=${d}`,
    );
  }
  if (y.shape[1] !== numClasses || ty.shape[1] !== numClasses) {
    throw new FormatError(
      `label widths disagree: y=${y.shape[1]} ty=${ty.shape[1]} ally=${numClasses}`,
    );
  }
  if (x.rows !== y.shape[0]) {
    throw new FormatError(`x has ${x.rows} rows but y has ${y.shape[0]}`);
  }
  if (tx.rows !== ty.shape[0]) {
    throw new FormatError(`tx has ${tx.rows} rows but ty has ${ty.shape[0]}`);
  }
  if (allx.rows !== ally.shape[0]) {
    throw new FormatError(`allx has ${allx.rows} rows but ally has ${ally.shape[0]}`);
  }
  if (tx.rows !== testIndex.length) {
    throw new FormatError(
      `tx has ${tx.rows} rows but test.index lists ${testIndex.length} nodes`,
    );
  }

  const sortedTest = [...testIndex].sort((a, b) => a - b);
  for (let i = 1; i < sortedTest.length; i++) {
    if (sortedTest[i] === sortedTest[i - 1]) {
      throw new FormatError(`test.index repeats node ${sortedTest[i]}`);
    }
  }
  const minTest = sortedTest[0]!;
  const maxTest = sortedTest[sortedTest.length - 1]!;
  if (minTest !== allx.rows) {
    throw new FormatError(
      `test block starts at ${minTest} but allx has ${allx.rows} rows; ` +
        "the files do not form a contiguous node numbering",
    );
  }
  const numNodes = maxTest + 1;
  if (x.rows + valSize > allx.rows) {
    throw new FormatError(
      `train (${x.rows}) + val (${valSize}) exceeds the ${allx.rows} non-test nodes`,
    );
  }

  // --- features and labels ----------------------------------------------
  const features = new Float32Array(numNodes * d);
  features.set(allx.toDenseFloat32(), 0);
  const txDense = tx.toDenseFloat32();

  const labels = new Int32Array(numNodes).fill(-1);
  const allyFlat = ally.toNumberArray();
  for (let i = 0; i < allx.rows; i++) {
    labels[i] = argmaxRow(allyFlat, numClasses, i, f("ally"));
  }
  // Node testIndex[k] (file order) carries tx row k and ty row k.
  const tyFlat = ty.toNumberArray();
  for (let k = 0; k < testIndex.length; k++) {
    const node = testIndex[k]!;
    if (node < allx.rows || node >= numNodes) {
      throw new FormatError(`test.index node ${node} outside [${allx.rows}, ${numNodes})`);
    }
    features.set(txDense.subarray(k * d, (k + 1) * d), node * d);
    labels[node] = argmaxRow(tyFlat, numClasses, k, f("ty"));
  }

  // The train block must agree between y and ally.
  const yFlat = y.toNumberArray();
  for (let i = 0; i < y.shape[0]!; i++) {
    const fromY = argmaxRow(yFlat, numClasses, i, f("y"));
    if (fromY !== labels[i]) {
      throw new FormatError(
        `train node ${i} labeled ${fromY} in ${f("y")} but ${labels[i]} in ${f("ally")}`,
      );
    }
  }

  // --- edges --------------------------------------------------------------
  const seen = new Set<number>();
  const edges: Array<[number, number]> = [];
  for (const [uRaw, neighbors] of graph) {
    if (typeof uRaw !== "number" || !Number.isInteger(uRaw)) {
      throw new FormatError(`${f("graph")} has a non-integer node key`);
    }
    if (!Array.isArray(neighbors)) {
      throw new FormatError(`${f("graph")} entry for node ${uRaw} is not a list`);
    }
    for (const vRaw of neighbors) {
      if (typeof vRaw !== "number" || !Number.isInteger(vRaw)) {
        throw new FormatError(`${f("graph")} has a non-integer neighbor of node ${uRaw}`);
      }
      if (uRaw < 0 || uRaw >= numNodes || vRaw < 0 || vRaw >= numNodes) {
        throw new FormatError(
          `${f("graph")} edge (${uRaw}, ${vRaw}) outside [0, ${numNodes})`,
        );
      }
      if (uRaw === vRaw) continue; // self-loops are dropped
      const a = Math.min(uRaw, vRaw);
      const b = Math.max(uRaw, vRaw);
      const key = a * numNodes + b;
      if (!seen.has(key)) {
        seen.add(key);
        edges.push([a, b]);
      }
    }
  }
  edges.sort((p, q) => p[0] - q[0] || p[1] - q[1]);

  // --- public split -------------------------------------------------------
  const trainIdx = Array.from({ length: x.rows }, (_, i) => i);
  const valIdx = Array.from({ length: valSize }, (_, i) => x.rows + i);

  return {
    numNodes,
    numFeatures: d,
    numClasses,
    features,
    labels,
    edges,
    trainIdx,
    valIdx,
    testIdx: sortedTest,
  };
}
