import * as fs from "node:fs";

import { ExportError } from "./errors";

/** The parser writes one template per line: `<id>\t<match_count>\t<tokens>`. */
export interface StoredTemplate {
  templateId: number;
  matchCount: number;
  tokens: string[];
}

export const WILDCARD = "<*>";

/** Ids 1 and 2 are the empty-template and padding sentinels, never mined. */
const RESERVED_IDS = new Set([1, 2]);

export function parseStore(text: string, source: string): StoredTemplate[] {
  const templates: StoredTemplate[] = [];
  const seen = new Set<number>();
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i];
    if (line === "") {
      continue;
    }
    const where = `${source}:${i + 1}`;
    const parts = line.split("\t");
    if (parts.length !== 3) {
      throw new ExportError(
        `${where}: expected 3 tab-separated fields, got ${parts.length}`
      );
    }
    const templateId = Number(parts[0]);
    const matchCount = Number(parts[1]);
    if (!Number.isInteger(templateId) || !Number.isInteger(matchCount)) {
      throw new ExportError(`${where}: id and count must be integers`);
    }
    if (templateId <= 0) {
      throw new ExportError(`${where}: template id must be positive`);
    }
    if (seen.has(templateId)) {
      throw new ExportError(`${where}: duplicate template id ${templateId}`);
    }
    seen.add(templateId);
    const tokens = parts[2].split(" ");
    if (tokens.length === 1 && tokens[0] === "") {
      throw new ExportError(`${where}: template has no tokens`);
    }
    templates.push({ templateId, matchCount, tokens });
  }
  return templates;
}

export function readStore(path: string): StoredTemplate[] {
  let text: string;
  try {
    text = fs.readFileSync(path, "utf-8");
  } catch (err) {
    throw new ExportError(`cannot read template store ${path}: ${err}`);
  }
  return parseStore(text, path);
}

/** Mined templates only, in id order; the reserved sentinel pair is dropped. */
export function realTemplates(templates: StoredTemplate[]): StoredTemplate[] {
  return templates
    .filter((t) => !RESERVED_IDS.has(t.templateId))
    .sort((a, b) => a.templateId - b.templateId);
}

/** Distinct non-wildcard tokens across templates, sorted for stable output. */
export function vocabulary(templates: StoredTemplate[]): string[] {
  const tokens = new Set<string>();
  for (const t of realTemplates(templates)) {
    for (const token of t.tokens) {
      if (token !== WILDCARD) {
        tokens.add(token);
      }
    }
  }
  return [...tokens].sort();
}
