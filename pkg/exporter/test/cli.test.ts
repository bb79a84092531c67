import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { beforeEach, describe, expect, it } from "vitest";

import { Io, main } from "../src/cli";

let dir: string;
let storeFile: string;

const STORE = [
  "1\t0\t<EMPTY>",
  "2\t0\t<PAD>",
  "3\t12\tuser <*> logged in",
  "4\t5\tdisk <*> nearly full",
].join("\n") + "\n";

beforeEach(() => {
  dir = fs.mkdtempSync(path.join(os.tmpdir(), "cli-"));
  storeFile = path.join(dir, "templates.tsv");
  fs.writeFileSync(storeFile, STORE);
});

interface RunResult {
  code: number;
  out: string[];
  err: string[];
}

function run(...argv: string[]): RunResult {
  const out: string[] = [];
  const err: string[] = [];
  const io: Io = { out: (line) => out.push(line), err: (line) => err.push(line) };
  return { code: main(argv, io), out, err };
}

function exportArgs(kind: string, out: string, ...extra: string[]): string[] {
  return ["export", "--store", storeFile, "--kind", kind, "--out", out, ...extra];
}

describe("export", () => {
  it("writes a static table with one row per token and a meta sidecar", () => {
    const out = path.join(dir, "static.vec");
    const result = run(...exportArgs("static", out));
    expect(result.code).toBe(0);
    expect(result.out[0]).toMatch(/wrote .*static\.vec: 6 rows, dim 300 \(ft-hash\)/);

    const lines = fs.readFileSync(out, "utf-8").trimEnd().split("\n");
    expect(lines[0]).toBe("6 300");
    expect(lines.slice(1).map((l) => l.split(" ")[0])).toEqual([
      "disk",
      "full",
      "in",
      "logged",
      "nearly",
      "user",
    ]);

    const meta = JSON.parse(fs.readFileSync(out + ".meta.json", "utf-8"));
    expect(meta).toEqual({ kind: "static", model: "ft-hash", dim: 300, rows: 6, store: storeFile });
  });

  it("writes a contextual table keyed T#<id> at dim 768", () => {
    const out = path.join(dir, "ctx.vec");
    const result = run(...exportArgs("contextual", out));
    expect(result.code).toBe(0);

    const lines = fs.readFileSync(out, "utf-8").trimEnd().split("\n");
    expect(lines[0]).toBe("2 768");
    expect(lines.slice(1).map((l) => l.split(" ")[0])).toEqual(["T#3", "T#4"]);

    const meta = JSON.parse(fs.readFileSync(out + ".meta.json", "utf-8"));
    expect(meta.pooling).toBe("second_to_last_mean");
    expect(meta.dim).toBe(768);
  });

  it("re-exports byte-identically", () => {
    const first = path.join(dir, "a.vec");
    const second = path.join(dir, "b.vec");
    expect(run(...exportArgs("contextual", first)).code).toBe(0);
    expect(run(...exportArgs("contextual", second)).code).toBe(0);
    expect(fs.readFileSync(first)).toEqual(fs.readFileSync(second));
  });

  it("honours --dim and --model overrides", () => {
    const out = path.join(dir, "small.vec");
    const result = run(...exportArgs("static", out, "--model", "w2v-hash", "--dim", "8"));
    expect(result.code).toBe(0);
    expect(fs.readFileSync(out, "utf-8").split("\n")[0]).toBe("6 8");
    const meta = JSON.parse(fs.readFileSync(out + ".meta.json", "utf-8"));
    expect(meta.model).toBe("w2v-hash");
  });

  it("changes the output under --pooling pooler", () => {
    const mean = path.join(dir, "mean.vec");
    const pooled = path.join(dir, "pooled.vec");
    run(...exportArgs("contextual", mean));
    expect(run(...exportArgs("contextual", pooled, "--pooling", "pooler")).code).toBe(0);
    expect(fs.readFileSync(mean)).not.toEqual(fs.readFileSync(pooled));
  });

  it("fails usage when a required flag is missing", () => {
    const result = run("export", "--kind", "static", "--out", path.join(dir, "x.vec"));
    expect(result.code).toBe(2);
    expect(result.err[0]).toContain("--store is required");
  });

  it("rejects unknown kinds", () => {
    const result = run(...exportArgs("tokenish", path.join(dir, "x.vec")));
    expect(result.code).toBe(2);
    expect(result.err[0]).toContain("--kind");
  });

  it("rejects --pooling for static export", () => {
    const result = run(...exportArgs("static", path.join(dir, "x.vec"), "--pooling", "pooler"));
    expect(result.code).toBe(2);
    expect(result.err[0]).toContain("contextual export only");
  });

  it("fails loudly on an unknown model family", () => {
    const result = run(...exportArgs("static", path.join(dir, "x.vec"), "--model", "glove-6b"));
    expect(result.code).toBe(1);
    expect(result.err[0]).toMatch(/glove-6b.*not available/);
    expect(fs.existsSync(path.join(dir, "x.vec"))).toBe(false);
  });

  it("propagates template store errors", () => {
    fs.writeFileSync(storeFile, "broken\n");
    const result = run(...exportArgs("static", path.join(dir, "x.vec")));
    expect(result.code).toBe(1);
    expect(result.err[0]).toMatch(/templates\.tsv:1/);
  });

  it("rejects unknown flags", () => {
    const result = run(...exportArgs("static", path.join(dir, "x.vec"), "--fast"));
    expect(result.code).toBe(2);
  });
});

describe("validate", () => {
  it("summarizes a file the exporter just wrote", () => {
    const out = path.join(dir, "static.vec");
    run(...exportArgs("static", out));
    const result = run("validate", out);
    expect(result.code).toBe(0);
    expect(result.out[0]).toBe("ok: 6 rows, dim 300");
  });

  it("fails on a corrupted file", () => {
    const file = path.join(dir, "bad.vec");
    fs.writeFileSync(file, "2 2\na 1 2\na 3 4\n");
    const result = run("validate", file);
    expect(result.code).toBe(1);
    expect(result.err[0]).toContain("duplicate key");
  });

  it("requires exactly one argument", () => {
    expect(run("validate").code).toBe(2);
    expect(run("validate", "a", "b").code).toBe(2);
  });
});

describe("command dispatch", () => {
  it("prints usage and fails when invoked bare", () => {
    const result = run();
    expect(result.code).toBe(2);
    expect(result.out[0]).toContain("usage:");
  });

  it("prints usage successfully under --help", () => {
    expect(run("--help").code).toBe(0);
  });

  it("rejects unknown commands", () => {
    const result = run("frobnicate");
    expect(result.code).toBe(2);
    expect(result.err[0]).toContain("unknown command");
  });
});
