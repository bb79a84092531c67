"""Render results.csv into review-ready tables and plot-input series.

The markdown report mirrors the usual benchmark layout: one table per
(dataset, parsing, aggregation, window) context with models as row blocks,
representations as columns, precision/recall/F1 sub-rows, the best F1 per
model bolded (ties all bolded) and a Gap column holding max-minus-min F1.

Plot data is CSV only; rendering is left to whatever tool the reader likes.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import EvalError
from .evaluate import gap
from .represent import FeatureMatrix

log = logging.getLogger(__name__)


def read_results(path: str | Path) -> list[dict[str, str]]:
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise EvalError(f"cannot read results {path}: {exc}") from exc
    with fh:
        return list(csv.DictReader(fh))


def _context_key(row: Mapping[str, str]) -> tuple[str, ...]:
    return (
        row["dataset"],
        row.get("parsing", ""),
        row.get("aggregation", ""),
        row.get("window", ""),
        row.get("stride", ""),
    )


def _ordered_unique(values: Sequence[str]) -> list[str]:
    seen: list[str] = []
    for v in values:
        if v not in seen:
            seen.append(v)
    return seen


def emit_report(rows: Sequence[Mapping[str, str]], out_md: str | Path,
                out_csv: str | Path | None = None) -> None:
    """Write the markdown report and a tidy long-form CSV next to it."""
    contexts = _ordered_unique([_context_key(r) for r in rows])
    lines = ["# Benchmark results", ""]
    tidy: list[dict[str, str]] = []
    for ctx in contexts:
        ctx_rows = [r for r in rows if _context_key(r) == ctx]
        dataset, parsing, aggregation, window, stride = ctx
        title = f"## {dataset}"
        knobs = [f"parsing={parsing}"]
        if aggregation and aggregation != "none":
            knobs.append(f"aggregation={aggregation}")
        if window:
            knobs.append(f"window={window}")
            knobs.append(f"stride={stride}")
        lines.append(f"{title} ({', '.join(knobs)})")
        lines.append("")

        reps = _ordered_unique([r["representation"] for r in ctx_rows])
        models = _ordered_unique([r["model"] for r in ctx_rows])
        by_cell = {(r["model"], r["representation"]): r for r in ctx_rows}

        lines.append("| Model | Metric | " + " | ".join(reps) + " | Gap |")
        lines.append("|---|---|" + "---|" * (len(reps) + 1))
        for model in models:
            f1_values = []
            for rep in reps:
                row = by_cell.get((model, rep))
                if row is not None:
                    f1_values.append(float(row["f1"]))
            best_f1 = max(f1_values) if f1_values else None
            gap_text = f"{gap(f1_values):.3f}" if len(f1_values) >= 2 else ""
            for metric, column in (("P", "precision"), ("R", "recall"), ("F1", "f1")):
                cells = []
                for rep in reps:
                    row = by_cell.get((model, rep))
                    if row is None:
                        cells.append("-")
                        continue
                    value = float(row[column])
                    text = f"{value:.3f}"
                    if row.get("degenerate") == "1":
                        text += "~"
                    if metric == "F1" and best_f1 is not None and value == best_f1:
                        text = f"**{text}**"
                    cells.append(text)
                first = model if metric == "P" else ""
                tail = gap_text if metric == "F1" else ""
                lines.append(f"| {first} | {metric} | " + " | ".join(cells) + f" | {tail} |")
            for rep in reps:
                row = by_cell.get((model, rep))
                if row is None:
                    continue
                tidy.append(
                    {
                        "dataset": dataset,
                        "parsing": parsing,
                        "aggregation": aggregation,
                        "window": window,
                        "stride": stride,
                        "model": model,
                        "representation": rep,
                        "precision": row["precision"],
                        "recall": row["recall"],
                        "f1": row["f1"],
                        "degenerate": row.get("degenerate", "0"),
                        "best_f1": "1" if float(row["f1"]) == best_f1 else "0",
                        "gap": gap_text,
                    }
                )
        lines.append("")
    lines.append("Cells marked `~` had a zero denominator in some metric.")
    lines.append("")

    out_md = Path(out_md)
    out_md.parent.mkdir(parents=True, exist_ok=True)
    out_md.write_text("\n".join(lines), encoding="utf-8")
    if out_csv is None:
        out_csv = out_md.with_suffix(".csv")
    with open(out_csv, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=[
                "dataset", "parsing", "aggregation", "window", "stride", "model",
                "representation", "precision", "recall", "f1", "degenerate",
                "best_f1", "gap",
            ],
            lineterminator="\n",
        )
        writer.writeheader()
        writer.writerows(tidy)


def emit_window_sweep(rows: Sequence[Mapping[str, str]], out_path: str | Path) -> int:
    """One point per windowed cell: F1 against window size for each series."""
    windowed = [r for r in rows if r.get("window")]
    windowed.sort(
        key=lambda r: (
            r["dataset"], r["model"], r["representation"],
            r.get("aggregation", ""), r.get("parsing", ""), int(r["window"]),
        )
    )
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["dataset", "model", "representation", "aggregation", "parsing", "window", "f1"]
        )
        for r in windowed:
            writer.writerow(
                [
                    r["dataset"], r["model"], r["representation"],
                    r.get("aggregation", ""), r.get("parsing", ""),
                    r["window"], r["f1"],
                ]
            )
    return len(windowed)


def emit_parsing_pairs(rows: Sequence[Mapping[str, str]], out_path: str | Path) -> int:
    """Paired parsed/unparsed F1 for every cell present under both modes."""
    by_key: dict[tuple, dict[str, str]] = {}
    for r in rows:
        key = (
            r["dataset"], r["model"], r["representation"],
            r.get("aggregation", ""), r.get("window", ""), r.get("stride", ""),
        )
        by_key.setdefault(key, {})[r.get("parsing", "")] = r["f1"]
    pairs = [
        key + (modes["parsed"], modes["unparsed"])
        for key, modes in sorted(by_key.items())
        if "parsed" in modes and "unparsed" in modes
    ]
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [
                "dataset", "model", "representation", "aggregation",
                "window", "stride", "f1_parsed", "f1_unparsed",
            ]
        )
        writer.writerows(pairs)
    return len(pairs)


def emit_scatter_sample(
    matrix: FeatureMatrix,
    out_path: str | Path,
    seed: int = 0,
    per_class: int = 200,
) -> int:
    """Sample up to ``per_class`` rows per label for external projection tools.

    Classes with fewer rows are emitted whole with a warning.  Output format
    matches the matrix export (``label,f0,...``).
    """
    rng = np.random.RandomState(seed)
    chosen: list[int] = []
    for label in (1, 0):
        idx = np.nonzero(matrix.labels == label)[0]
        if len(idx) <= per_class:
            if len(idx) < per_class:
                log.warning(
                    "scatter sample: only %d rows with label %d (wanted %d)",
                    len(idx), label, per_class,
                )
            chosen.extend(idx.tolist())
        else:
            chosen.extend(sorted(rng.choice(idx, size=per_class, replace=False).tolist()))
    with open(out_path, "w", encoding="utf-8") as fh:
        n_features = matrix.rows.shape[1]
        fh.write("label," + ",".join(f"f{i}" for i in range(n_features)) + "\n")
        for i in chosen:
            fh.write(
                str(int(matrix.labels[i]))
                + ","
                + ",".join(repr(float(v)) for v in matrix.rows[i])
                + "\n"
            )
    return len(chosen)
