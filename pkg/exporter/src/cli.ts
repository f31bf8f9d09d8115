#!/usr/bin/env node
/**
 * Command-line entry point.
 *
 * Usage: krd-export <dataset> --source <dir> --out <dir> [--val-size N]
 *
 * <dataset> is one of: cora, citeseer, pubmed. --source points at a
 * directory holding the eight ind.<dataset>.* files (this tool never
 * downloads anything); --out receives the bundle directory.
 *
 * Exit codes: 0 success, 1 usage error, 2 data/format/count error.
 */

import { parseArgs } from "node:util";
import { pathToFileURL } from "node:url";
import { ExportError, exportDataset, SUPPORTED_DATASETS } from "./export.js";
import { FormatError } from "./planetoid.js";
import { PickleError } from "./pickle.js";

const USAGE =
  "usage: krd-export <dataset> --source <dir> --out <dir> [--val-size N]\n" +
  `  datasets: ${[...SUPPORTED_DATASETS].sort().join(", ")}`;

export function main(argv: string[]): number {
  let parsed: ReturnType<typeof parseArgs>;
  try {
    parsed = parseArgs({
      args: argv,
      allowPositionals: true,
      options: {
        source: { type: "string" },
        out: { type: "string" },
        "val-size": { type: "string" },
        help: { type: "boolean", short: "h" },
      },
    });
  } catch (err) {
    console.error((err as Error).message);
    console.error(USAGE);
    return 1;
  }
  if (parsed.values["help"]) {
    console.log(USAGE);
    return 0;
  }
  const [dataset, ...extra] = parsed.positionals;
  const source = parsed.values["source"] as string | undefined;
  const out = parsed.values["out"] as string | undefined;
  if (dataset === undefined || extra.length > 0 || !source || !out) {
    console.error(USAGE);
    return 1;
  }
  if (!(SUPPORTED_DATASETS as readonly string[]).includes(dataset)) {
    console.error(`unknown dataset '${dataset}'`);
    console.error(USAGE);
    return 1;
  }
  let valSize: number | undefined;
  const rawVal = parsed.values["val-size"] as string | undefined;
  if (rawVal !== undefined) {
    valSize = Number(rawVal);
    if (!Number.isInteger(valSize) || valSize < 0) {
      console.error(`--val-size must be a non-negative integer, got '${rawVal}'`);
      return 1;
    }
  }

  try {
    const manifest = exportDataset(dataset, source, out, { valSize });
    const c = manifest.counts;
    console.log(
      `${dataset}: ${c.nodes} nodes, ${c.edges} edges, ` +
        `${c.features} features, ${c.classes} classes`,
    );
    const n = Object.keys(manifest.files).length;
    console.log(`wrote ${out} (${n} files + manifest.json)`);
    return 0;
  } catch (err) {
    if (
      err instanceof ExportError ||
      err instanceof FormatError ||
      err instanceof PickleError
    ) {
      console.error(`error: ${err.message}`);
      return 2;
    }
    throw err;
  }
}

const entry = process.argv[1];
if (entry !== undefined && pathToFileURL(entry).href === import.meta.url) {
  process.exit(main(process.argv.slice(2)));
}
