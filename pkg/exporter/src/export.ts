/**
 * End-to-end export: read a Planetoid source directory, assemble the
 * graph, validate the headline counts against the published dataset
 * statistics, and write a bundle directory plus manifest.
 */

import { loadPlanetoid } from "./planetoid.js";
import { writeBundle, SplitData } from "./bundle.js";
import { buildManifest, writeManifest, Manifest, ManifestCounts } from "./manifest.js";

/** The assembled graph contradicts the expected dataset statistics. */
export class ExportError extends Error {}

/**
 * Published statistics (nodes / undirected edges / feature width /
 * classes) for the named benchmark datasets. Any export under one of
 * these names must match its row exactly.
 */
export const DATASET_STATS: Record<string, ManifestCounts> = {
  cora: { nodes: 2708, edges: 5278, features: 1433, classes: 7 },
  citeseer: { nodes: 3327, edges: 4614, features: 3703, classes: 6 },
  pubmed: { nodes: 19717, edges: 44324, features: 500, classes: 3 },
  photo: { nodes: 7650, edges: 119081, features: 745, classes: 8 },
  cs: { nodes: 18333, edges: 81894, features: 6805, classes: 15 },
  physics: { nodes: 34493, edges: 247962, features: 8415, classes: 5 },
  "ogbn-arxiv": { nodes: 169343, edges: 1166243, features: 128, classes: 40 },
};

/** Datasets with a source-format reader: the Planetoid-distributed three. */
export const SUPPORTED_DATASETS = ["cora", "citeseer", "pubmed"] as const;

export interface ExportOptions {
  /** Validation-split size of the public split (default 500). */
  valSize?: number;
  /**
   * Counts the assembled graph must match. Defaults to the published
   * statistics for known dataset names; pass null to skip the check.
   */
  expectedCounts?: ManifestCounts | null;
}

function checkCounts(dataset: string, expected: ManifestCounts, actual: ManifestCounts): void {
  const mismatches: string[] = [];
  for (const field of ["nodes", "edges", "features", "classes"] as const) {
    if (actual[field] !== expected[field]) {
      mismatches.push(`${field}: expected ${expected[field]}, got ${actual[field]}`);
    }
  }
  if (mismatches.length > 0) {
    throw new ExportError(
      `${dataset} does not match the published statistics — ${mismatches.join("; ")}`,
    );
  }
}

/** Export one dataset. Returns the manifest that was written. */
export function exportDataset(
  dataset: string,
  sourceDir: string,
  outDir: string,
  opts: ExportOptions = {},
): Manifest {
  const data = loadPlanetoid(sourceDir, dataset, { valSize: opts.valSize });
  const actual: ManifestCounts = {
    classes: data.numClasses,
    edges: data.edges.length,
    features: data.numFeatures,
    nodes: data.numNodes,
  };
  const expected =
    opts.expectedCounts === undefined ? DATASET_STATS[dataset] ?? null : opts.expectedCounts;
  if (expected !== null) checkCounts(dataset, expected, actual);

  // Public split; every node outside train/val/test lands in the
  // observed-unlabeled pool, matching the trainer's own split builder.
  const inSplit = new Uint8Array(data.numNodes);
  for (const ids of [data.trainIdx, data.valIdx, data.testIdx]) {
    for (const i of ids) inSplit[i] = 1;
  }
  const observed: number[] = [];
  for (let i = 0; i < data.numNodes; i++) {
    if (inSplit[i] === 0) observed.push(i);
  }
  const splits: SplitData = {
    train: data.trainIdx,
    val: data.valIdx,
    test: data.testIdx,
    observedUnlabeled: observed,
    inductive: [],
  };

  const files = writeBundle(
    outDir,
    {
      name: dataset,
      numNodes: data.numNodes,
      numFeatures: data.numFeatures,
      numClasses: data.numClasses,
      features: data.features,
      labels: data.labels,
      edges: data.edges,
    },
    splits,
  );
  const manifest = buildManifest(outDir, dataset, actual, files);
  writeManifest(outDir, manifest);
  return manifest;
}
