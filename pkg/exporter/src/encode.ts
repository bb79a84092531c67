import { ExportError } from "./errors";
import { addInto, hashVector, l2Normalize, scaleInto } from "./hash";
import { StoredTemplate, WILDCARD, realTemplates, vocabulary } from "./store";

export type Pooling = "second_to_last_mean" | "pooler";

export interface ExportJob {
  kind: "static" | "contextual";
  model: string;
  dim: number;
  pooling: Pooling;
}

export const DEFAULT_STATIC_MODEL = "ft-hash";
export const DEFAULT_CONTEXTUAL_MODEL = "ctx-hash";
export const DEFAULT_STATIC_DIM = 300;
export const DEFAULT_CONTEXTUAL_DIM = 768;

/** Real encoders cap input length; templates past the cap are truncated. */
export const MAX_TOKENS = 512;

/** Simulated encoder depth; pooling reads the second-to-last layer. */
const N_LAYERS = 12;

const MIN_NGRAM = 3;
const MAX_NGRAM = 6;

export type Row = [string, Float64Array];

function modelFamily(model: string): string {
  const dash = model.indexOf("-");
  return dash < 0 ? model : model.slice(0, dash);
}

export function checkModel(kind: "static" | "contextual", model: string): void {
  const family = modelFamily(model);
  const known = kind === "static" ? ["ft", "w2v"] : ["ctx"];
  if (!known.includes(family)) {
    throw new ExportError(
      `model ${JSON.stringify(model)} is not available for ${kind} export; ` +
        `known ${kind} families: ${known.map((f) => f + "-*").join(", ")}`
    );
  }
}

/** Word2vec-style lookup: alphabetic tokens are in vocabulary, the rest are
 * out of vocabulary and map to the zero vector. */
function w2vVector(model: string, token: string, dim: number): Float64Array {
  if (!/^[A-Za-z]+$/.test(token)) {
    return new Float64Array(dim);
  }
  return hashVector(`${model}|word|${token}`, dim);
}

/** Fasttext-style lookup: the normalized sum of the whole-word vector and
 * every character n-gram (3 to 6) of the boundary-marked token, so no token
 * is ever out of vocabulary. */
function fasttextVector(model: string, token: string, dim: number): Float64Array {
  const out = hashVector(`${model}|word|${token}`, dim);
  const marked = `<${token}>`;
  for (let n = MIN_NGRAM; n <= MAX_NGRAM; n++) {
    for (let i = 0; i + n <= marked.length; i++) {
      addInto(out, hashVector(`${model}|ngram|${marked.slice(i, i + n)}`, dim));
    }
  }
  return l2Normalize(out);
}

export function encodeToken(model: string, token: string, dim: number): Float64Array {
  return modelFamily(model) === "w2v"
    ? w2vVector(model, token, dim)
    : fasttextVector(model, token, dim);
}

/** One row per distinct non-wildcard token across the mined templates. */
export function exportStaticTokens(
  templates: StoredTemplate[],
  job: ExportJob
): Row[] {
  checkModel("static", job.model);
  return vocabulary(templates).map((token) => [
    token,
    encodeToken(job.model, token, job.dim),
  ]);
}

/** Token vector at one simulated encoder layer.  Position-sensitive like a
 * real contextual encoder, but a function of the token sequence only, so
 * identical templates always encode identically whatever their ids. */
function layerVector(
  model: string,
  token: string,
  position: number,
  layer: number,
  dim: number
): Float64Array {
  return hashVector(`${model}|layer${layer}|pos${position}|${token}`, dim);
}

export function encodeTemplate(
  tokens: string[],
  job: ExportJob,
  warn: (message: string) => void,
  templateId: number
): Float64Array {
  let used = tokens;
  if (used.length > MAX_TOKENS) {
    warn(
      `template ${templateId}: ${used.length} tokens exceed the encoder ` +
        `limit of ${MAX_TOKENS}; truncating`
    );
    used = used.slice(0, MAX_TOKENS);
  }
  if (job.pooling === "pooler") {
    return hashVector(`${job.model}|pooler|${used.join(" ")}`, job.dim);
  }
  // mean over token vectors from the second-to-last layer
  const out = new Float64Array(job.dim);
  for (let p = 0; p < used.length; p++) {
    addInto(out, layerVector(job.model, used[p], p, N_LAYERS - 1, job.dim));
  }
  scaleInto(out, 1 / Math.max(used.length, 1));
  return out;
}

/** One row per mined template, keyed `T#<id>`; wildcards are encoded
 * verbatim as part of the template text. */
export function exportContextualTemplates(
  templates: StoredTemplate[],
  job: ExportJob,
  warn: (message: string) => void = (m) => console.warn(m)
): Row[] {
  checkModel("contextual", job.model);
  return realTemplates(templates).map((t) => [
    `T#${t.templateId}`,
    encodeTemplate(t.tokens, job, warn, t.templateId),
  ]);
}

export { WILDCARD };
