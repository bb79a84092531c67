import * as fs from "node:fs";
import * as path from "node:path";
import { ExportError } from "./errors";
import { Row } from "./encode";

/** Shortest round-trip form; parses back to the identical double. */
function formatValue(v: number): string {
  if (!Number.isFinite(v)) {
    throw new ExportError(`refusing to write non-finite value ${v}`);
  }
  return String(v);
}

export function renderInterchange(rows: Row[], dim: number): string {
  const lines = [`${rows.length} ${dim}`];
  for (const [key, vector] of rows) {
    if (vector.length !== dim) {
      throw new ExportError(
        `row ${JSON.stringify(key)} has ${vector.length} values, expected ${dim}`
      );
    }
    if (/\s/.test(key) || key.length === 0) {
      throw new ExportError(`invalid row key ${JSON.stringify(key)}`);
    }
    const parts = new Array<string>(vector.length);
    for (let i = 0; i < vector.length; i++) {
      parts[i] = formatValue(vector[i]);
    }
    lines.push(`${key} ${parts.join(" ")}`);
  }
  return lines.join("\n") + "\n";
}

/** Write via a sibling temp file and rename so readers never see a torn file. */
export function writeFileAtomic(target: string, content: string): void {
  const dir = path.dirname(target);
  const tmp = path.join(dir, `.${path.basename(target)}.${process.pid}.tmp`);
  fs.writeFileSync(tmp, content, { encoding: "utf-8" });
  try {
    fs.renameSync(tmp, target);
  } catch (err) {
    fs.rmSync(tmp, { force: true });
    throw err;
  }
}

export interface InterchangeSummary {
  count: number;
  dim: number;
  keys: string[];
}

/** Re-read an interchange file and check it is well formed. */
export function validateInterchange(file: string): InterchangeSummary {
  let text: string;
  try {
    text = fs.readFileSync(file, "utf-8");
  } catch (err) {
    throw new ExportError(`cannot read ${file}: ${(err as Error).message}`);
  }
  const lines = text.split("\n");
  const header = (lines[0] ?? "").split(/\s+/).filter((f) => f.length > 0);
  if (header.length !== 2) {
    throw new ExportError(`${file}:1: expected header '<count> <dim>'`);
  }
  const count = Number(header[0]);
  const dim = Number(header[1]);
  if (!Number.isInteger(count) || !Number.isInteger(dim) || count < 0 || dim < 1) {
    throw new ExportError(`${file}:1: invalid count/dim ${header[0]}/${header[1]}`);
  }
  const seen = new Set<string>();
  const keys: string[] = [];
  for (let i = 1; i < lines.length; i++) {
    const fields = lines[i].split(/\s+/).filter((f) => f.length > 0);
    if (fields.length === 0) {
      continue;
    }
    const lineNo = i + 1;
    const key = fields[0];
    if (fields.length - 1 !== dim) {
      throw new ExportError(
        `${file}:${lineNo}: expected ${dim} values for ${JSON.stringify(key)}, ` +
          `got ${fields.length - 1}`
      );
    }
    if (seen.has(key)) {
      throw new ExportError(`${file}:${lineNo}: duplicate key ${JSON.stringify(key)}`);
    }
    seen.add(key);
    keys.push(key);
    for (let j = 1; j < fields.length; j++) {
      const v = Number(fields[j]);
      if (!Number.isFinite(v)) {
        throw new ExportError(
          `${file}:${lineNo}: non-numeric value ${JSON.stringify(fields[j])}`
        );
      }
    }
  }
  if (keys.length !== count) {
    throw new ExportError(
      `${file}: header declares ${count} rows, file holds ${keys.length}`
    );
  }
  return { count, dim, keys };
}
