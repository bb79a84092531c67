"""Grid execution: parse, group, split, fit, train, score, one row per cell.

A cell is (dataset, model, representation, aggregation, parsing mode, window,
stride).  The runner walks cells in configuration order, reusing parsed
corpora, fitted pipelines and built matrices across cells that share them.
Each finished cell appends one row to results.csv immediately, so an
interrupted run resumes by skipping rows that already exist.  Failing cells
are recorded in failures.csv and the grid keeps going.

With workers > 1 the train/predict stage runs in a thread pool; rows are
still written in submission order so the results file is byte-identical to a
sequential run.
"""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from . import corpus as corpus_mod
from . import parser as parser_mod
from . import represent
from .config import DatasetConfig, ExperimentConfig, ModelEntry, RepresentationConfig
from .errors import ConfigError, LogrepError
from .evaluate import confusion, merge_window_predictions, prf1
from .models import ModelSpec, predict, train
from .represent import EmbeddingTable, FeatureMatrix, Pipeline

log = logging.getLogger(__name__)

RESULTS_HEADER = [
    "dataset", "model", "representation", "aggregation", "parsing",
    "window", "stride", "precision", "recall", "f1", "degenerate",
]
FAILURES_HEADER = [
    "dataset", "model", "representation", "aggregation", "parsing",
    "window", "stride", "error",
]


@dataclass(frozen=True)
class Cell:
    dataset: str
    model: str
    representation: str
    aggregation: str
    parsing: str
    window: int | None = None
    stride: int | None = None

    def key(self) -> tuple[str, ...]:
        return (
            self.dataset, self.model, self.representation, self.aggregation,
            self.parsing,
            "" if self.window is None else str(self.window),
            "" if self.stride is None else str(self.stride),
        )


def enumerate_cells(config: ExperimentConfig) -> list[Cell]:
    """All valid cells in deterministic configuration order.

    The aggregation axis only applies to static token embeddings (the other
    representations have a single fixed token->event step), and window-level
    models pair only with event-capable representations.
    """
    cells: list[Cell] = []
    for ds in config.datasets:
        for parsing in config.parsing_modes:
            for rep in config.representations:
                aggs = config.aggregations if rep.kind == "static_embedding" else ["none"]
                for agg in aggs:
                    for model in config.models:
                        if model.window_level:
                            if not rep.event_capable:
                                continue
                            for w in config.window_sizes or [ds.window]:
                                stride = config.stride or ds.stride or w
                                cells.append(
                                    Cell(ds.name, model.name, rep.name, agg,
                                         parsing, w, stride)
                                )
                        else:
                            cells.append(
                                Cell(ds.name, model.name, rep.name, agg, parsing)
                            )
    if not cells:
        raise ConfigError("configuration produces an empty grid")
    return cells


@dataclass
class PreparedData:
    store: parser_mod.TemplateStore
    template_ids: dict[int, int]
    split: corpus_mod.DatasetSplit

    @property
    def train(self) -> list[corpus_mod.Session]:
        return self.split.train

    @property
    def test(self) -> list[corpus_mod.Session]:
        return self.split.test


class ExperimentRunner:
    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.out = Path(config.output_dir)
        self._datasets = {d.name: d for d in config.datasets}
        self._reps = {r.name: r for r in config.representations}
        self._models = {m.name: m for m in config.models}
        self._prepared: dict[tuple[str, str], PreparedData] = {}
        self._tables: dict[tuple[str, str], EmbeddingTable] = {}
        self._pipelines: dict[tuple, Pipeline] = {}
        self._windows: dict[tuple, tuple[list, list]] = {}
        self._matrices: dict[tuple, tuple[FeatureMatrix, FeatureMatrix]] = {}

    # -- data preparation ---------------------------------------------------

    def prepare(self, dataset: str, parsing: str) -> PreparedData:
        key = (dataset, parsing)
        if key in self._prepared:
            return self._prepared[key]
        ds = self._datasets[dataset]
        start = time.monotonic()
        result = corpus_mod.read_raw_logs(
            ds.path,
            ds.line_pattern,
            timestamp_format=ds.timestamp_format,
            normal_line_label=ds.normal_line_label,
        )
        events, store = parser_mod.parse_corpus(
            result.records, self._parser_config(parsing)
        )
        template_ids = {ev.line_no: ev.template_id for ev in events}
        sessions = self._group(ds, result.records)
        if ds.label_source == "file":
            labels = corpus_mod.load_label_file(ds.label_file)
            corpus_mod.apply_session_labels(sessions, labels)
        split = corpus_mod.split_dataset(
            sessions,
            ds.split.ratio,
            ds.split.mode,
            ds.split.seed if ds.split.seed is not None else self.config.seed,
        )
        prepared = PreparedData(store=store, template_ids=template_ids, split=split)
        self._prepared[key] = prepared
        self._write_parse_artifacts(ds, parsing, events, store, sessions)
        log.info(
            "prepared %s/%s: %d lines (%d skipped), %d templates, "
            "%d sessions (%d train / %d test) in %.2fs",
            dataset, parsing, result.n_lines, result.n_skipped,
            len(store.real_templates()), len(sessions),
            len(split.train), len(split.test), time.monotonic() - start,
        )
        return prepared

    def _parser_config(self, parsing: str) -> parser_mod.ParserConfig:
        p = self.config.parser
        return parser_mod.ParserConfig(
            depth=p.depth,
            similarity_threshold=p.similarity_threshold,
            max_children=p.max_children,
            mask_rules=list(p.mask_rules),
            mode="parsed" if parsing == "parsed" else "unparsed",
            lowercase_unparsed=p.lowercase_unparsed,
        )

    def _group(self, ds: DatasetConfig, records) -> list[corpus_mod.Session]:
        g = ds.grouping
        if g.strategy == "id":
            return corpus_mod.group_by_id(records)
        if g.strategy == "time":
            return corpus_mod.group_by_time(records, g.window_seconds)
        return corpus_mod.group_by_count(records, g.n_lines)

    def _write_parse_artifacts(self, ds, parsing, events, store, sessions) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        parser_mod.save_store(store, self.out / f"templates_{ds.name}_{parsing}.tsv")
        parser_mod.save_parsed_events(events, self.out / f"events_{ds.name}_{parsing}.csv")
        corpus_mod.write_session_manifest(sessions, self.out / f"manifest_{ds.name}.csv")

    # -- feature construction ----------------------------------------------

    def _table(self, rep: RepresentationConfig, parsing: str) -> EmbeddingTable:
        path = rep.table
        if parsing == "unparsed" and rep.table_unparsed:
            path = rep.table_unparsed
        kind = (
            represent.KIND_TOKEN_STATIC
            if rep.kind == "static_embedding"
            else represent.KIND_TEMPLATE_CONTEXTUAL
        )
        key = (path, kind)
        if key not in self._tables:
            self._tables[key] = represent.load_embedding_table(path, kind)
        return self._tables[key]

    def pipeline(self, dataset: str, parsing: str, rep_name: str, aggregation: str) -> Pipeline:
        key = (dataset, parsing, rep_name, aggregation)
        if key in self._pipelines:
            return self._pipelines[key]
        rep = self._reps[rep_name]
        data = self.prepare(dataset, parsing)
        if rep.kind == "mcv":
            pipe: Pipeline = represent.McvPipeline(rep.name, parsing=parsing)
        elif rep.kind == "tfidf_id":
            pipe = represent.TfidfIdPipeline(rep.name, parsing=parsing)
        elif rep.kind == "tfidf_text":
            pipe = represent.TfidfTextPipeline(rep.name, parsing=parsing, doc_mode=rep.doc_mode)
        elif rep.kind == "static_embedding":
            pipe = represent.StaticEmbeddingPipeline(
                rep.name, self._table(rep, parsing), parsing=parsing,
                aggregation=aggregation if aggregation != "none" else "mean",
            )
        elif rep.kind == "contextual_embedding":
            pipe = represent.ContextualEmbeddingPipeline(
                rep.name, self._table(rep, parsing), parsing=parsing
            )
        else:
            raise ConfigError(f"unknown representation kind {rep.kind!r}")
        pipe.fit(data.train, data.template_ids, data.store)
        self._pipelines[key] = pipe
        return pipe

    def windows(self, dataset: str, window: int, stride: int, parsing: str):
        key = (dataset, window, stride, parsing)
        if key not in self._windows:
            data = self.prepare(dataset, parsing)
            train = [
                w for s in data.train for w in corpus_mod.slice_windows(s, window, stride)
            ]
            test = [
                w for s in data.test for w in corpus_mod.slice_windows(s, window, stride)
            ]
            self._windows[key] = (train, test)
        return self._windows[key]

    def matrices(self, cell: Cell) -> tuple[FeatureMatrix, FeatureMatrix]:
        level = "window" if cell.window is not None else "sequence"
        key = (cell.dataset, cell.parsing, cell.representation, cell.aggregation,
               level, cell.window, cell.stride)
        if key in self._matrices:
            return self._matrices[key]
        data = self.prepare(cell.dataset, cell.parsing)
        pipe = self.pipeline(cell.dataset, cell.parsing, cell.representation, cell.aggregation)
        if level == "sequence":
            train_units, test_units = data.train, data.test
        else:
            train_units, test_units = self.windows(
                cell.dataset, cell.window, cell.stride, cell.parsing
            )
        train_m = represent.build_matrix(
            train_units, pipe, data.template_ids,
            level=level, window_size=cell.window, stride=cell.stride,
        )
        test_m = represent.build_matrix(
            test_units, pipe, data.template_ids,
            level=level, window_size=cell.window, stride=cell.stride,
        )
        self._matrices[key] = (train_m, test_m)
        if self.config.export_matrices:
            self._export_matrix_pair(cell, level, train_m, test_m)
        return train_m, test_m

    def _export_matrix_pair(self, cell: Cell, level: str, train_m, test_m) -> None:
        suffix = f"_w{cell.window}s{cell.stride}" if level == "window" else ""
        base = f"matrix_{cell.dataset}_{cell.parsing}_{cell.representation}_{cell.aggregation}{suffix}"
        represent.save_matrix(train_m, self.out / f"{base}_train.csv")
        represent.save_matrix(test_m, self.out / f"{base}_test.csv")

    # -- cell execution -----------------------------------------------------

    def run_cell(self, cell: Cell) -> dict[str, str]:
        start = time.monotonic()
        train_m, test_m = self.matrices(cell)
        entry = self._models[cell.model]
        spec = ModelSpec(
            family=entry.family,
            hyperparameters=dict(entry.hyperparameters),
            seed=entry.seed if entry.seed is not None else self.config.seed,
        )
        model = train(train_m, spec)
        predictions = predict(model, test_m)
        if cell.window is not None:
            data = self.prepare(cell.dataset, cell.parsing)
            session_labels = {
                s.session_id: 1 if s.label == corpus_mod.ANOMALY else 0
                for s in data.test
            }
            merged, truth = merge_window_predictions(predictions, session_labels)
            metrics = prf1(confusion([p.label for p in merged], truth))
        else:
            metrics = prf1(
                confusion([p.label for p in predictions], test_m.labels.tolist())
            )
        log.info(
            "cell %s: f1=%.4f (%.2fs)", "/".join(cell.key()[:5]),
            metrics.f1, time.monotonic() - start,
        )
        return {
            "dataset": cell.dataset,
            "model": cell.model,
            "representation": cell.representation,
            "aggregation": cell.aggregation,
            "parsing": cell.parsing,
            "window": "" if cell.window is None else str(cell.window),
            "stride": "" if cell.stride is None else str(cell.stride),
            "precision": f"{metrics.precision:.6f}",
            "recall": f"{metrics.recall:.6f}",
            "f1": f"{metrics.f1:.6f}",
            "degenerate": "1" if metrics.degenerate else "0",
        }

    # -- results file handling ----------------------------------------------

    def _existing_keys(self, path: Path) -> set[tuple[str, ...]]:
        if not path.exists():
            return set()
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            return {
                (
                    row["dataset"], row["model"], row["representation"],
                    row["aggregation"], row["parsing"],
                    row.get("window", ""), row.get("stride", ""),
                )
                for row in reader
            }

    def run(self) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        results_path = self.out / "results.csv"
        failures_path = self.out / "failures.csv"
        cells = enumerate_cells(self.config)
        done = self._existing_keys(results_path)
        pending = [c for c in cells if c.key() not in done]
        log.info("grid has %d cells, %d pending", len(cells), len(pending))

        new_results = not results_path.exists()
        with open(results_path, "a", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=RESULTS_HEADER, lineterminator="\n")
            if new_results:
                writer.writeheader()
                fh.flush()
            if self.config.workers > 1:
                self._run_pool(pending, writer, fh, failures_path)
            else:
                for cell in pending:
                    self._run_one(cell, writer, fh, failures_path)
        return results_path

    def _run_one(self, cell: Cell, writer, fh, failures_path: Path) -> None:
        try:
            row = self.run_cell(cell)
        except LogrepError as exc:
            log.error("cell %s failed: %s", "/".join(cell.key()[:5]), exc)
            self._record_failure(failures_path, cell, exc)
            return
        writer.writerow(row)
        fh.flush()

    def _run_pool(self, pending: list[Cell], writer, fh, failures_path: Path) -> None:
        # matrices and pipelines are built sequentially up front: the caches
        # are plain dicts and training is the expensive stage anyway
        runnable: list[tuple[Cell, Callable[[], dict]]] = []
        for cell in pending:
            try:
                self.matrices(cell)
            except LogrepError as exc:
                log.error("cell %s failed: %s", "/".join(cell.key()[:5]), exc)
                self._record_failure(failures_path, cell, exc)
                continue
            runnable.append((cell, lambda c=cell: self.run_cell(c)))
        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            futures = [(cell, pool.submit(job)) for cell, job in runnable]
            # consume in submission order: identical bytes to a serial run
            for cell, future in futures:
                try:
                    row = future.result()
                except LogrepError as exc:
                    log.error("cell %s failed: %s", "/".join(cell.key()[:5]), exc)
                    self._record_failure(failures_path, cell, exc)
                    continue
                writer.writerow(row)
                fh.flush()

    def _record_failure(self, path: Path, cell: Cell, exc: Exception) -> None:
        new_file = not path.exists()
        with open(path, "a", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=FAILURES_HEADER, lineterminator="\n")
            if new_file:
                writer.writeheader()
            writer.writerow(
                {
                    "dataset": cell.dataset,
                    "model": cell.model,
                    "representation": cell.representation,
                    "aggregation": cell.aggregation,
                    "parsing": cell.parsing,
                    "window": "" if cell.window is None else str(cell.window),
                    "stride": "" if cell.stride is None else str(cell.stride),
                    "error": str(exc),
                }
            )


def run_experiment(config: ExperimentConfig) -> Path:
    return ExperimentRunner(config).run()


def parse_datasets(config: ExperimentConfig, only: str | None = None) -> None:
    """Parse configured datasets and write store/event/manifest artifacts."""
    runner = ExperimentRunner(config)
    for ds in config.datasets:
        if only is not None and ds.name != only:
            continue
        for parsing in config.parsing_modes:
            runner.prepare(ds.name, parsing)
