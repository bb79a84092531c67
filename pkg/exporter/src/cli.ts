import { parseArgs } from "node:util";
import { ExportError } from "./errors";
import { readStore } from "./store";
import {
  DEFAULT_CONTEXTUAL_DIM,
  DEFAULT_CONTEXTUAL_MODEL,
  DEFAULT_STATIC_DIM,
  DEFAULT_STATIC_MODEL,
  ExportJob,
  Pooling,
  Row,
  exportContextualTemplates,
  exportStaticTokens,
} from "./encode";
import { renderInterchange, validateInterchange, writeFileAtomic } from "./interchange";

const USAGE = `usage:
  logrep-export export --store PATH --kind static|contextual --out PATH
                       [--model ID] [--dim N] [--pooling second_to_last_mean|pooler]
  logrep-export validate PATH

Reads a mined template store (TSV) and writes an embedding interchange file:
a 'N D' header followed by N 'key v1 .. vD' rows.  Static export emits one
row per distinct template token; contextual export emits one row per template
keyed 'T#<id>'.  Exports are deterministic: the same store and flags always
produce the same bytes.`;

export interface Io {
  out: (line: string) => void;
  err: (line: string) => void;
}

const PROCESS_IO: Io = {
  out: (line) => process.stdout.write(line + "\n"),
  err: (line) => process.stderr.write(line + "\n"),
};

function parseDim(raw: string | undefined, fallback: number): number {
  if (raw === undefined) {
    return fallback;
  }
  const dim = Number(raw);
  if (!Number.isInteger(dim) || dim < 1) {
    throw new ExportError(`--dim must be a positive integer, got ${JSON.stringify(raw)}`);
  }
  return dim;
}

function runExport(args: string[], io: Io): number {
  const { values } = parseArgs({
    args,
    options: {
      store: { type: "string" },
      kind: { type: "string" },
      out: { type: "string" },
      model: { type: "string" },
      dim: { type: "string" },
      pooling: { type: "string" },
    },
    allowPositionals: false,
  });
  for (const flag of ["store", "kind", "out"] as const) {
    if (values[flag] === undefined) {
      io.err(`error: --${flag} is required`);
      io.err(USAGE);
      return 2;
    }
  }
  const kind = values.kind as string;
  if (kind !== "static" && kind !== "contextual") {
    io.err(`error: --kind must be 'static' or 'contextual', got ${JSON.stringify(kind)}`);
    return 2;
  }
  if (kind === "static" && values.pooling !== undefined) {
    io.err("error: --pooling applies to contextual export only");
    return 2;
  }
  const pooling = (values.pooling ?? "second_to_last_mean") as string;
  if (pooling !== "second_to_last_mean" && pooling !== "pooler") {
    io.err(
      `error: --pooling must be 'second_to_last_mean' or 'pooler', got ` +
        JSON.stringify(pooling)
    );
    return 2;
  }
  const job: ExportJob = {
    kind,
    model:
      values.model ?? (kind === "static" ? DEFAULT_STATIC_MODEL : DEFAULT_CONTEXTUAL_MODEL),
    dim: parseDim(
      values.dim,
      kind === "static" ? DEFAULT_STATIC_DIM : DEFAULT_CONTEXTUAL_DIM
    ),
    pooling: pooling as Pooling,
  };

  const templates = readStore(values.store as string);
  const rows: Row[] =
    kind === "static"
      ? exportStaticTokens(templates, job)
      : exportContextualTemplates(templates, job, (m) => io.err(`warning: ${m}`));

  const outPath = values.out as string;
  writeFileAtomic(outPath, renderInterchange(rows, job.dim));
  writeFileAtomic(outPath + ".meta.json", renderMeta(values.store as string, job, rows));
  const summary = validateInterchange(outPath);
  io.out(`wrote ${outPath}: ${summary.count} rows, dim ${summary.dim} (${job.model})`);
  return 0;
}

function renderMeta(store: string, job: ExportJob, rows: Row[]): string {
  const meta: Record<string, unknown> = {
    kind: job.kind,
    model: job.model,
    dim: job.dim,
  };
  if (job.kind === "contextual") {
    meta.pooling = job.pooling;
  }
  meta.rows = rows.length;
  meta.store = store;
  return JSON.stringify(meta, null, 2) + "\n";
}

function runValidate(args: string[], io: Io): number {
  const { positionals } = parseArgs({ args, options: {}, allowPositionals: true });
  if (positionals.length !== 1) {
    io.err("error: validate takes exactly one file argument");
    io.err(USAGE);
    return 2;
  }
  const summary = validateInterchange(positionals[0]);
  io.out(`ok: ${summary.count} rows, dim ${summary.dim}`);
  return 0;
}

export function main(argv: string[], io: Io = PROCESS_IO): number {
  const [command, ...rest] = argv;
  try {
    if (command === "export") {
      return runExport(rest, io);
    }
    if (command === "validate") {
      return runValidate(rest, io);
    }
    if (command === undefined || command === "--help" || command === "-h") {
      io.out(USAGE);
      return command === undefined ? 2 : 0;
    }
    io.err(`error: unknown command ${JSON.stringify(command)}`);
    io.err(USAGE);
    return 2;
  } catch (err) {
    if (err instanceof ExportError) {
      io.err(`error: ${err.message}`);
      return 1;
    }
    if (err instanceof TypeError && /option|argument/i.test(err.message)) {
      io.err(`error: ${err.message}`);
      return 2;
    }
    throw err;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
