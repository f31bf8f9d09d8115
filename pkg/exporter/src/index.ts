/** Public API of the Planetoid-to-bundle exporter. */

export { unpickle, latin1, latin1Bytes, PickleError } from "./pickle.js";
export type { PyGlobal, GlobalResolver } from "./pickle.js";
export { DType, NDArray, MinimalSparseCSR, planetoidResolver } from "./numpy.js";
export { loadPlanetoid, FormatError } from "./planetoid.js";
export type { PlanetoidData, LoadOptions } from "./planetoid.js";
export {
  writeBundle,
  metaJson,
  splitsJson,
  labelsCsv,
  edgesCsv,
  featuresBytes,
  BUNDLE_FILES,
} from "./bundle.js";
export type { BundleData, SplitData } from "./bundle.js";
export {
  buildManifest,
  manifestJson,
  writeManifest,
  readManifest,
  sha256Hex,
  MANIFEST_NAME,
} from "./manifest.js";
export type { Manifest, ManifestCounts, FileEntry } from "./manifest.js";
export { exportDataset, ExportError, DATASET_STATS, SUPPORTED_DATASETS } from "./export.js";
export type { ExportOptions } from "./export.js";
