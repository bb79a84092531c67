import { describe, expect, it, vi } from "vitest";

import {
  ExportJob,
  MAX_TOKENS,
  checkModel,
  encodeTemplate,
  encodeToken,
  exportContextualTemplates,
  exportStaticTokens,
} from "../src/encode";
import { parseStore } from "../src/store";

function staticJob(over: Partial<ExportJob> = {}): ExportJob {
  return { kind: "static", model: "ft-hash", dim: 16, pooling: "second_to_last_mean", ...over };
}

function contextualJob(over: Partial<ExportJob> = {}): ExportJob {
  return {
    kind: "contextual",
    model: "ctx-hash",
    dim: 16,
    pooling: "second_to_last_mean",
    ...over,
  };
}

function norm(vec: Float64Array): number {
  return Math.sqrt([...vec].reduce((acc, v) => acc + v * v, 0));
}

describe("checkModel", () => {
  it("accepts the known family prefixes per kind", () => {
    checkModel("static", "ft-hash-300");
    checkModel("static", "w2v-hash-300");
    checkModel("contextual", "ctx-hash-768");
  });

  it("rejects families that do not match the kind", () => {
    expect(() => checkModel("static", "ctx-hash")).toThrow(/not available for static/);
    expect(() => checkModel("contextual", "ft-hash")).toThrow(/not available for contextual/);
  });

  it("rejects unknown families loudly, naming the alternatives", () => {
    expect(() => checkModel("static", "glove-6b")).toThrow(/ft-\*, w2v-\*/);
    expect(() => checkModel("contextual", "bert-base")).toThrow(/ctx-\*/);
  });
});

describe("encodeToken", () => {
  it("composes fasttext-style vectors for any token, never zero", () => {
    for (const token of ["user", "x", "1234", "blk_-99", "<*>"]) {
      const vec = encodeToken("ft-hash", token, 32);
      expect(vec).toHaveLength(32);
      expect(norm(vec)).toBeCloseTo(1, 9);
    }
  });

  it("maps non-alphabetic tokens to zero under w2v models", () => {
    expect(norm(encodeToken("w2v-hash", "user", 32))).toBeGreaterThan(0);
    expect(norm(encodeToken("w2v-hash", "1234", 32))).toBe(0);
    expect(norm(encodeToken("w2v-hash", "blk_-99", 32))).toBe(0);
  });

  it("is deterministic and model-sensitive", () => {
    const a = encodeToken("ft-hash", "user", 16);
    expect([...encodeToken("ft-hash", "user", 16)]).toEqual([...a]);
    expect([...encodeToken("ft-other", "user", 16)]).not.toEqual([...a]);
  });

  it("gives related spellings nearby vectors via shared n-grams", () => {
    const dot = (a: Float64Array, b: Float64Array) =>
      [...a].reduce((acc, v, i) => acc + v * b[i], 0);
    const base = encodeToken("ft-hash", "connection", 64);
    const related = encodeToken("ft-hash", "connections", 64);
    const unrelated = encodeToken("ft-hash", "zqxv", 64);
    expect(dot(base, related)).toBeGreaterThan(dot(base, unrelated));
  });
});

describe("exportStaticTokens", () => {
  const templates = parseStore("3\t1\tuser <*> login\n4\t2\tdisk <*>\n", "s");

  it("emits one row per vocabulary token in sorted order", () => {
    const rows = exportStaticTokens(templates, staticJob());
    expect(rows.map(([key]) => key)).toEqual(["disk", "login", "user"]);
    for (const [, vec] of rows) {
      expect(vec).toHaveLength(16);
    }
  });

  it("honours the requested dimension", () => {
    const rows = exportStaticTokens(templates, staticJob({ dim: 5 }));
    expect(rows[0][1]).toHaveLength(5);
  });

  it("refuses contextual model families", () => {
    expect(() => exportStaticTokens(templates, staticJob({ model: "ctx-hash" }))).toThrow(
      /not available/
    );
  });
});

describe("encodeTemplate", () => {
  const warn = () => {};

  it("depends only on the token sequence, not the template id", () => {
    const a = encodeTemplate(["disk", "full"], contextualJob(), warn, 3);
    const b = encodeTemplate(["disk", "full"], contextualJob(), warn, 99);
    expect([...a]).toEqual([...b]);
  });

  it("is position-sensitive", () => {
    const ab = encodeTemplate(["a", "b"], contextualJob(), warn, 1);
    const ba = encodeTemplate(["b", "a"], contextualJob(), warn, 1);
    expect([...ab]).not.toEqual([...ba]);
  });

  it("truncates past the encoder limit with a warning naming the template", () => {
    const tokens = Array.from({ length: MAX_TOKENS + 5 }, (_, i) => `t${i}`);
    const seen: string[] = [];
    const long = encodeTemplate(tokens, contextualJob(), (m) => seen.push(m), 7);
    expect(seen).toHaveLength(1);
    expect(seen[0]).toMatch(/template 7: 517 tokens .* truncating/);
    const head = encodeTemplate(tokens.slice(0, MAX_TOKENS), contextualJob(), warn, 7);
    expect([...long]).toEqual([...head]);
  });

  it("pooler output differs from the layer mean", () => {
    const mean = encodeTemplate(["a", "b"], contextualJob(), warn, 1);
    const pooled = encodeTemplate(["a", "b"], contextualJob({ pooling: "pooler" }), warn, 1);
    expect([...mean]).not.toEqual([...pooled]);
  });
});

describe("exportContextualTemplates", () => {
  const templates = parseStore(
    "1\t0\t<EMPTY>\n2\t0\t<PAD>\n7\t4\tdisk full\n3\t9\tuser <*> login\n",
    "s"
  );

  it("keys rows T#<id> over real templates in id order", () => {
    const rows = exportContextualTemplates(templates, contextualJob(), () => {});
    expect(rows.map(([key]) => key)).toEqual(["T#3", "T#7"]);
    expect(rows[0][1]).toHaveLength(16);
  });

  it("routes warnings through console.warn by default", () => {
    const spy = vi.spyOn(console, "warn").mockImplementation(() => {});
    const tokens = Array.from({ length: MAX_TOKENS + 1 }, () => "w").join(" ");
    const long = parseStore(`3\t1\t${tokens}\n`, "s");
    exportContextualTemplates(long, contextualJob());
    expect(spy).toHaveBeenCalledOnce();
    spy.mockRestore();
  });
});
