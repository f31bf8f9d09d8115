import { spawnSync } from "node:child_process";
import { existsSync, mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, afterEach, describe, expect, it, vi } from "vitest";
import { main } from "../src/cli.js";

const fixtureDir = (name: string) =>
  fileURLToPath(new URL(`./fixtures/${name}`, import.meta.url));

const scratch = mkdtempSync(join(tmpdir(), "krd-cli-"));
afterAll(() => rmSync(scratch, { recursive: true, force: true }));

function run(args: string[]): { code: number; out: string; err: string } {
  const outLines: string[] = [];
  const errLines: string[] = [];
  const logSpy = vi.spyOn(console, "log").mockImplementation((...a) => {
    outLines.push(a.join(" "));
  });
  const errSpy = vi.spyOn(console, "error").mockImplementation((...a) => {
    errLines.push(a.join(" "));
  });
  try {
    const code = main(args);
    return { code, out: outLines.join("\n"), err: errLines.join("\n") };
  } finally {
    logSpy.mockRestore();
    errSpy.mockRestore();
  }
}

afterEach(() => vi.restoreAllMocks());

describe("argument handling", () => {
  it("prints usage and exits 1 when arguments are missing", () => {
    const res = run([]);
    expect(res.code).toBe(1);
    expect(res.err).toContain("usage: krd-export");
  });

  it("rejects unknown datasets", () => {
    const res = run(["mini", "--source", "x", "--out", "y"]);
    expect(res.code).toBe(1);
    expect(res.err).toContain("unknown dataset 'mini'");
    expect(res.err).toContain("citeseer, cora, pubmed");
  });

  it("rejects unknown flags", () => {
    const res = run(["cora", "--source", "x", "--out", "y", "--frobnicate"]);
    expect(res.code).toBe(1);
  });

  it("rejects a malformed --val-size", () => {
    const res = run(["cora", "--source", "x", "--out", "y", "--val-size", "many"]);
    expect(res.code).toBe(1);
    expect(res.err).toContain("--val-size");
  });

  it("prints usage on --help and exits 0", () => {
    const res = run(["--help"]);
    expect(res.code).toBe(0);
    expect(res.out).toContain("usage: krd-export");
  });
});

describe("export runs", () => {
  it("exports the cora-shaped fixture and reports the counts", () => {
    const out = join(scratch, "cora");
    const res = run(["cora", "--source", fixtureDir("cora_shaped"), "--out", out]);
    expect(res.code, res.err).toBe(0);
    expect(res.out).toContain("cora: 2708 nodes, 5278 edges, 1433 features, 7 classes");
    expect(existsSync(join(out, "manifest.json"))).toBe(true);
  });

  it("exits 2 on unreadable or malformed source data", () => {
    const res = run(["cora", "--source", scratch, "--out", join(scratch, "nope")]);
    expect(res.code).toBe(2);
    expect(res.err).toContain("error:");
  });
});

const distCli = fileURLToPath(new URL("../dist/cli.js", import.meta.url));

describe.skipIf(!existsSync(distCli))("compiled entry point", () => {
  it("runs end to end as a child process", () => {
    const out = join(scratch, "cora-dist");
    const res = spawnSync(
      process.execPath,
      [distCli, "cora", "--source", fixtureDir("cora_shaped"), "--out", out],
      { encoding: "utf-8" },
    );
    expect(res.status, res.stderr).toBe(0);
    expect(res.stdout).toContain("2708 nodes");
    expect(existsSync(join(out, "manifest.json"))).toBe(true);
  });

  it("signals usage errors with exit code 1", () => {
    const res = spawnSync(process.execPath, [distCli], { encoding: "utf-8" });
    expect(res.status).toBe(1);
  });
});
