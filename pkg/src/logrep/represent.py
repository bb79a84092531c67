"""Feature construction: template counts, TF-IDF weighting, and embeddings.

Six representation families are built here, all with a strict fit/transform
split (statistics come from the training split only):

* template count vectors per session (one column per training template plus
  a shared OTHER column for templates first seen at test time);
* the same counts weighted by per-template idf and L2-normalized;
* token-level TF-IDF vectors per event, averaged into session vectors;
* static token embeddings aggregated token->event (mean or idf-weighted)
  and event->session (mean);
* contextual per-template embeddings looked up from an interchange file.

Count-style representations exist only at sequence level; the event-capable
ones can additionally be concatenated into fixed-length window rows for the
windowed detector.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import ANOMALY, PAD_LINE_NO, Session, Window
from .errors import ConfigError, RepresentError
from .parser import (
    PAD_TEMPLATE_ID,
    RESERVED_TEMPLATE_IDS,
    RESERVED_TOKENS,
    TemplateStore,
)

log = logging.getLogger(__name__)

KIND_TOKEN_STATIC = "token_static"
KIND_TEMPLATE_CONTEXTUAL = "template_contextual"


def _l2_normalize(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        return vec / norm
    return vec


@dataclass
class TemplateIndex:
    column_of: dict[int, int]
    n_columns: int  # includes the trailing OTHER column

    @property
    def other_column(self) -> int:
        return self.n_columns - 1

    def column(self, template_id: int) -> int:
        return self.column_of.get(template_id, self.other_column)


def fit_template_index(
    train_sessions: Sequence[Session], template_ids: Mapping[int, int]
) -> TemplateIndex:
    """One column per template seen in training, plus OTHER for the rest.

    ``template_ids`` maps line_no -> template_id for every parsed event.
    Reserved templates (EMPTY, PAD) never get a column.
    """
    if not train_sessions:
        raise RepresentError("cannot fit a template index on an empty training set")
    seen: set[int] = set()
    for session in train_sessions:
        for line_no in session.event_line_nos:
            tid = template_ids[line_no]
            if tid not in RESERVED_TEMPLATE_IDS:
                seen.add(tid)
    column_of = {tid: col for col, tid in enumerate(sorted(seen))}
    return TemplateIndex(column_of=column_of, n_columns=len(column_of) + 1)


def mcv_transform(
    session: Session, index: TemplateIndex, template_ids: Mapping[int, int]
) -> np.ndarray:
    """Count events per template column; EMPTY/PAD events are not counted."""
    vec = np.zeros(index.n_columns, dtype=np.float64)
    for line_no in session.event_line_nos:
        tid = template_ids[line_no]
        if tid in RESERVED_TEMPLATE_IDS:
            continue
        vec[index.column(tid)] += 1.0
    return vec


def _smooth_idf(df: np.ndarray, n_documents: int) -> np.ndarray:
    return np.log((1.0 + n_documents) / (1.0 + df)) + 1.0


@dataclass
class TfidfIdWeights:
    index: TemplateIndex
    idf: np.ndarray
    n_documents: int


def fit_tfidf_id(
    train_sessions: Sequence[Session],
    index: TemplateIndex,
    template_ids: Mapping[int, int],
) -> TfidfIdWeights:
    """Per-column idf with training sessions as the document collection."""
    if not train_sessions:
        raise RepresentError("cannot fit idf weights on an empty training set")
    df = np.zeros(index.n_columns, dtype=np.float64)
    for session in train_sessions:
        cols = {
            index.column(template_ids[ln])
            for ln in session.event_line_nos
            if template_ids[ln] not in RESERVED_TEMPLATE_IDS
        }
        for col in cols:
            df[col] += 1.0
    return TfidfIdWeights(
        index=index, idf=_smooth_idf(df, len(train_sessions)), n_documents=len(train_sessions)
    )


def tfidf_id_transform(
    session: Session, weights: TfidfIdWeights, template_ids: Mapping[int, int]
) -> np.ndarray:
    counts = mcv_transform(session, weights.index, template_ids)
    return _l2_normalize(counts * weights.idf)


@dataclass
class TokenVocabulary:
    column_of: dict[str, int]
    df: np.ndarray
    idf: np.ndarray
    n_documents: int

    def __len__(self) -> int:
        return len(self.column_of)


def fit_token_tfidf(documents: Iterable[Sequence[str]]) -> TokenVocabulary:
    """Token df/idf over the given documents (normally distinct train templates).

    Wildcard and reserved tokens never enter the vocabulary.  Columns are
    assigned in sorted token order so refitting the same input reproduces the
    same mapping.
    """
    doc_count = 0
    df_map: dict[str, int] = {}
    for doc in documents:
        doc_count += 1
        for token in set(doc) - RESERVED_TOKENS:
            df_map[token] = df_map.get(token, 0) + 1
    if doc_count == 0:
        raise RepresentError("cannot fit a token vocabulary on zero documents")
    tokens = sorted(df_map)
    df = np.array([df_map[t] for t in tokens], dtype=np.float64)
    return TokenVocabulary(
        column_of={t: i for i, t in enumerate(tokens)},
        df=df,
        idf=_smooth_idf(df, doc_count),
        n_documents=doc_count,
    )


def tfidf_text_event(template_tokens: Sequence[str], vocab: TokenVocabulary) -> np.ndarray:
    """tf*idf over token columns for one template, L2-normalized."""
    vec = np.zeros(len(vocab), dtype=np.float64)
    for token in template_tokens:
        col = vocab.column_of.get(token)
        if col is not None:
            vec[col] += 1.0
    return _l2_normalize(vec * vocab.idf)


@dataclass
class EmbeddingTable:
    kind: str
    dim: int
    vectors: dict[str, np.ndarray]
    _warned_ids: set[int] = field(default_factory=set, repr=False)

    def __len__(self) -> int:
        return len(self.vectors)


def load_embedding_table(path: str | Path, expected_kind: str) -> EmbeddingTable:
    """Read an interchange file: ``N D`` header then N ``key v1 .. vD`` rows."""
    if expected_kind not in (KIND_TOKEN_STATIC, KIND_TEMPLATE_CONTEXTUAL):
        raise ConfigError(f"unknown embedding table kind {expected_kind!r}")
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise RepresentError(f"cannot read embedding table {path}: {exc}") from exc
    with fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise RepresentError(f"{path}:1: expected header '<count> <dim>'")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError as exc:
            raise RepresentError(f"{path}:1: bad header: {exc}") from exc
        if count < 0 or dim < 1:
            raise RepresentError(f"{path}:1: invalid count/dim {count}/{dim}")
        vectors: dict[str, np.ndarray] = {}
        for line_no, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            key = parts[0]
            if len(parts) - 1 != dim:
                raise RepresentError(
                    f"{path}:{line_no}: expected {dim} values for {key!r}, got {len(parts) - 1}"
                )
            if key in vectors:
                raise RepresentError(f"{path}:{line_no}: duplicate key {key!r}")
            if expected_kind == KIND_TEMPLATE_CONTEXTUAL and not _is_contextual_key(key):
                raise RepresentError(
                    f"{path}:{line_no}: contextual tables key on 'T#<template_id>', got {key!r}"
                )
            try:
                vectors[key] = np.array([float(v) for v in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise RepresentError(f"{path}:{line_no}: bad value: {exc}") from exc
        if len(vectors) != count:
            raise RepresentError(
                f"{path}: header declares {count} rows, file holds {len(vectors)}"
            )
    return EmbeddingTable(kind=expected_kind, dim=dim, vectors=vectors)


def _is_contextual_key(key: str) -> bool:
    return key.startswith("T#") and key[2:].isdigit()


def embed_event(
    template_tokens: Sequence[str],
    table: EmbeddingTable,
    weights: TokenVocabulary | None = None,
    aggregation: str = "mean",
) -> np.ndarray:
    """Aggregate token vectors into one event vector.

    mean: arithmetic mean with out-of-vocabulary tokens contributing zero
    vectors but still counted in the denominator.  tfidf: idf-weighted mean;
    tokens absent from the fitted vocabulary carry zero weight.
    """
    if table.kind != KIND_TOKEN_STATIC:
        raise RepresentError(f"embed_event needs a {KIND_TOKEN_STATIC} table, got {table.kind}")
    tokens = [t for t in template_tokens if t not in RESERVED_TOKENS]
    if aggregation == "mean":
        if not tokens:
            return np.zeros(table.dim, dtype=np.float64)
        acc = np.zeros(table.dim, dtype=np.float64)
        for token in tokens:
            vec = table.vectors.get(token)
            if vec is not None:
                acc += vec
        return acc / len(tokens)
    if aggregation == "tfidf":
        if weights is None:
            raise RepresentError("tfidf aggregation requires fitted token weights")
        acc = np.zeros(table.dim, dtype=np.float64)
        total = 0.0
        for token in tokens:
            col = weights.column_of.get(token)
            if col is None:
                continue
            w = float(weights.idf[col])
            total += w
            vec = table.vectors.get(token)
            if vec is not None:
                acc += w * vec
        if total == 0.0:
            return np.zeros(table.dim, dtype=np.float64)
        return acc / total
    raise ConfigError(f"aggregation must be mean or tfidf, got {aggregation!r}")


def lookup_event_embedding(template_id: int, table: EmbeddingTable) -> np.ndarray:
    """Stored vector for ``T#<id>``; unknown ids fall back to zeros, once-logged."""
    if table.kind != KIND_TEMPLATE_CONTEXTUAL:
        raise RepresentError(
            f"lookup_event_embedding needs a {KIND_TEMPLATE_CONTEXTUAL} table, got {table.kind}"
        )
    vec = table.vectors.get(f"T#{template_id}")
    if vec is None:
        # PAD/EMPTY are structural, not unseen: zero vector with no noise.
        if template_id not in RESERVED_TEMPLATE_IDS and template_id not in table._warned_ids:
            table._warned_ids.add(template_id)
            log.warning("no embedding for template %d; using zero vector", template_id)
        return np.zeros(table.dim, dtype=np.float64)
    return vec


def aggregate_sequence(event_vectors: Sequence[np.ndarray]) -> np.ndarray:
    if len(event_vectors) == 0:
        raise RepresentError("cannot aggregate an empty event sequence")
    return np.mean(np.asarray(event_vectors, dtype=np.float64), axis=0)


# ---------------------------------------------------------------------------
# Pipelines: one object per representation, holding fitted state.


class Pipeline:
    """Fit-once, transform-many wrapper shared by all representations."""

    kind = "base"
    event_capable = False

    def __init__(self, name: str, parsing: str = "parsed", aggregation: str = "none"):
        self.name = name
        self.parsing = parsing
        self.aggregation = aggregation
        self._fitted = False
        self._event_cache: dict[int, np.ndarray] = {}

    def fit(
        self,
        train_sessions: Sequence[Session],
        template_ids: Mapping[int, int],
        store: TemplateStore,
    ) -> None:
        raise NotImplementedError

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def _check_fitted(self) -> None:
        if not self._fitted:
            raise RepresentError(f"pipeline {self.name!r} used before fit")

    def event_vector(self, template_id: int) -> np.ndarray:
        self._check_fitted()
        vec = self._event_cache.get(template_id)
        if vec is None:
            vec = self._compute_event_vector(template_id)
            self._event_cache[template_id] = vec
        return vec

    def _compute_event_vector(self, template_id: int) -> np.ndarray:
        raise RepresentError(
            f"representation {self.name!r} has no event-level vectors"
        )

    def sequence_vector(
        self, session: Session, template_ids: Mapping[int, int]
    ) -> np.ndarray:
        self._check_fitted()
        vectors = [self.event_vector(template_ids[ln]) for ln in session.event_line_nos]
        return aggregate_sequence(vectors)

    def tag(self, level: str, window_size: int | None = None, stride: int | None = None) -> str:
        parts = [
            f"rep={self.name}",
            f"agg={self.aggregation}",
            f"parsing={self.parsing}",
            f"level={level}",
        ]
        if window_size is not None:
            parts.append(f"window={window_size}")
        if stride is not None:
            parts.append(f"stride={stride}")
        return ";".join(parts)


class McvPipeline(Pipeline):
    kind = "mcv"

    def fit(self, train_sessions, template_ids, store):
        self.index = fit_template_index(train_sessions, template_ids)
        self._fitted = True

    @property
    def dim(self) -> int:
        return self.index.n_columns

    def sequence_vector(self, session, template_ids):
        self._check_fitted()
        return mcv_transform(session, self.index, template_ids)


class TfidfIdPipeline(Pipeline):
    kind = "tfidf_id"

    def fit(self, train_sessions, template_ids, store):
        self.index = fit_template_index(train_sessions, template_ids)
        self.weights = fit_tfidf_id(train_sessions, self.index, template_ids)
        self._fitted = True

    @property
    def dim(self) -> int:
        return self.index.n_columns

    def sequence_vector(self, session, template_ids):
        self._check_fitted()
        return tfidf_id_transform(session, self.weights, template_ids)


def _train_template_documents(
    train_sessions: Sequence[Session],
    template_ids: Mapping[int, int],
    store: TemplateStore,
    doc_mode: str,
) -> list[list[str]]:
    """Documents for token-df counting: distinct templates or raw event stream."""
    if doc_mode == "templates":
        seen: set[int] = set()
        docs = []
        for session in train_sessions:
            for ln in session.event_line_nos:
                tid = template_ids[ln]
                if tid in RESERVED_TEMPLATE_IDS or tid in seen:
                    continue
                seen.add(tid)
                docs.append(store.get(tid).tokens)
        return docs
    if doc_mode == "events":
        return [
            store.get(template_ids[ln]).tokens
            for session in train_sessions
            for ln in session.event_line_nos
            if template_ids[ln] not in RESERVED_TEMPLATE_IDS
        ]
    raise ConfigError(f"doc_mode must be templates or events, got {doc_mode!r}")


class TfidfTextPipeline(Pipeline):
    kind = "tfidf_text"
    event_capable = True

    def __init__(self, name: str, parsing: str = "parsed", doc_mode: str = "templates"):
        super().__init__(name, parsing=parsing, aggregation="none")
        self.doc_mode = doc_mode

    def fit(self, train_sessions, template_ids, store):
        self.store = store
        docs = _train_template_documents(train_sessions, template_ids, store, self.doc_mode)
        self.vocab = fit_token_tfidf(docs)
        self._fitted = True

    @property
    def dim(self) -> int:
        return len(self.vocab)

    def _compute_event_vector(self, template_id):
        return tfidf_text_event(self.store.get(template_id).tokens, self.vocab)


class StaticEmbeddingPipeline(Pipeline):
    kind = "static_embedding"
    event_capable = True

    def __init__(self, name: str, table: EmbeddingTable, parsing: str = "parsed",
                 aggregation: str = "mean"):
        if aggregation not in ("mean", "tfidf"):
            raise ConfigError(f"aggregation must be mean or tfidf, got {aggregation!r}")
        super().__init__(name, parsing=parsing, aggregation=aggregation)
        self.table = table
        self.weights: TokenVocabulary | None = None

    def fit(self, train_sessions, template_ids, store):
        self.store = store
        if self.aggregation == "tfidf":
            docs = _train_template_documents(train_sessions, template_ids, store, "templates")
            self.weights = fit_token_tfidf(docs)
        self._fitted = True

    @property
    def dim(self) -> int:
        return self.table.dim

    def _compute_event_vector(self, template_id):
        tokens = self.store.get(template_id).tokens
        return embed_event(tokens, self.table, self.weights, self.aggregation)


class ContextualEmbeddingPipeline(Pipeline):
    kind = "contextual_embedding"
    event_capable = True

    def __init__(self, name: str, table: EmbeddingTable, parsing: str = "parsed"):
        super().__init__(name, parsing=parsing, aggregation="none")
        self.table = table

    def fit(self, train_sessions, template_ids, store):
        self._fitted = True

    @property
    def dim(self) -> int:
        return self.table.dim

    def _compute_event_vector(self, template_id):
        return lookup_event_embedding(template_id, self.table)


# ---------------------------------------------------------------------------
# Matrices.


@dataclass
class FeatureMatrix:
    level: str  # sequence | window
    rows: np.ndarray
    labels: np.ndarray
    pipeline_tag: str
    unit_ids: list

    def __post_init__(self) -> None:
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2:
            self.rows = self.rows.reshape(len(self.rows), -1)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.rows) != len(self.labels):
            raise RepresentError(
                f"matrix has {len(self.rows)} rows but {len(self.labels)} labels"
            )


def build_matrix(
    units: Sequence[Session] | Sequence[Window],
    pipeline: Pipeline,
    template_ids: Mapping[int, int],
    *,
    level: str,
    window_size: int | None = None,
    stride: int | None = None,
) -> FeatureMatrix:
    """Stack per-unit vectors into a matrix with aligned 0/1 labels.

    ``level`` is "sequence" (units are sessions) or "window" (units are
    fixed-length windows; rows concatenate event vectors, PAD slots map to
    the all-zero PAD event vector).
    """
    if level == "sequence":
        rows = [pipeline.sequence_vector(u, template_ids) for u in units]
        unit_ids = [u.session_id for u in units]
        tag = pipeline.tag("sequence")
    elif level == "window":
        if not pipeline.event_capable:
            raise ConfigError(
                f"representation {pipeline.name!r} produces sequence-level vectors "
                "only; count-style representations cannot drive window-level models"
            )
        rows = []
        unit_ids = []
        for w in units:
            parts = [
                pipeline.event_vector(
                    PAD_TEMPLATE_ID if ln == PAD_LINE_NO else template_ids[ln]
                )
                for ln in w.event_line_nos
            ]
            rows.append(np.concatenate(parts))
            unit_ids.append((w.session_id, w.offset))
        tag = pipeline.tag("window", window_size, stride)
    else:
        raise ConfigError(f"matrix level must be sequence or window, got {level!r}")

    labels = np.array([1 if u.label == ANOMALY else 0 for u in units], dtype=np.int64)
    if rows:
        matrix = np.vstack(rows)
    else:
        width = pipeline.dim if level == "sequence" else 0
        matrix = np.zeros((0, width), dtype=np.float64)
    return FeatureMatrix(
        level=level, rows=matrix, labels=labels, pipeline_tag=tag, unit_ids=unit_ids
    )


def save_matrix(matrix: FeatureMatrix, path: str | Path) -> None:
    """Write ``label,f0,f1,...`` rows; floats as shortest round-trip decimals."""
    n_features = matrix.rows.shape[1] if matrix.rows.ndim == 2 else 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("label," + ",".join(f"f{i}" for i in range(n_features)) + "\n")
        for label, row in zip(matrix.labels, matrix.rows):
            fh.write(str(int(label)) + "," + ",".join(repr(float(v)) for v in row) + "\n")


def load_matrix(path: str | Path, level: str = "sequence", tag: str = "") -> FeatureMatrix:
    """Read a matrix written by save_matrix (used by the scatter exporter)."""
    labels = []
    rows = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise RepresentError(f"cannot read matrix {path}: {exc}") from exc
    with fh:
        header = fh.readline().rstrip("\n").split(",")
        if not header or header[0] != "label":
            raise RepresentError(f"{path}: expected header starting with 'label'")
        for line_no, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(",")
            if parts == [""]:
                continue
            if len(parts) != len(header):
                raise RepresentError(
                    f"{path}:{line_no}: expected {len(header)} columns, got {len(parts)}"
                )
            labels.append(int(parts[0]))
            rows.append([float(v) for v in parts[1:]])
    matrix = (
        np.array(rows, dtype=np.float64)
        if rows
        else np.zeros((0, len(header) - 1), dtype=np.float64)
    )
    return FeatureMatrix(
        level=level,
        rows=matrix,
        labels=np.array(labels, dtype=np.int64),
        pipeline_tag=tag,
        unit_ids=list(range(len(labels))),
    )
