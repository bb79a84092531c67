"""Raw log ingestion, session grouping, train/test splitting and windowing.

A corpus moves through this module in one direction: text file -> records ->
sessions (grouped by id, time bucket or line count) -> train/test split ->
optionally fixed-length windows for sequence models.  Everything downstream
refers to events by their 1-based physical line number, so records never need
to be copied around; a session is just an ordered list of line numbers plus a
label.
"""

from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, CorpusError

log = logging.getLogger(__name__)

NORMAL = "normal"
ANOMALY = "anomaly"

# line_no used for padded slots in short windows; real line numbers are 1-based
# so zero can never collide with an actual event.
PAD_LINE_NO = 0

_SKIP_WARN_FRACTION = 0.10


@dataclass(frozen=True)
class RawLogRecord:
    line_no: int
    content: str
    timestamp: float | None = None
    source_id: str | None = None
    line_label: str | None = None


@dataclass
class ReadResult:
    records: list[RawLogRecord]
    n_lines: int
    skipped_line_nos: list[int]

    @property
    def n_skipped(self) -> int:
        return len(self.skipped_line_nos)


@dataclass
class Session:
    session_id: str
    event_line_nos: list[int]
    label: str
    origin: str


@dataclass
class Window:
    session_id: str
    offset: int
    event_line_nos: list[int]
    label: str


@dataclass
class DatasetSplit:
    train: list[Session]
    test: list[Session]
    ratio: float
    mode: str
    seed: int | None = None


def parse_timestamp(text: str, timestamp_format: str | None) -> float:
    """Turn a captured timestamp string into seconds since the epoch.

    ``timestamp_format`` is either None/"epoch" (the text already is a number
    of seconds) or a strptime format; naive datetimes are taken as UTC.
    """
    if timestamp_format in (None, "epoch"):
        return float(text)
    dt = datetime.strptime(text, timestamp_format)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def read_raw_logs(
    path: str | Path,
    line_pattern: str | re.Pattern[str],
    *,
    timestamp_format: str | None = None,
    normal_line_label: str | None = None,
) -> ReadResult:
    """Read one log file into records, one per matching line.

    ``line_pattern`` must declare a named capture ``content``; ``timestamp``,
    ``source_id`` and ``label`` captures are optional.  When a ``label``
    capture is present, a captured value equal to ``normal_line_label`` maps
    to a normal line and anything else to an anomaly (BGL-style alert tags).

    Non-matching lines and lines whose content trims to nothing are skipped,
    counted, and reported in the result; a warning is logged when more than
    10% of the file was skipped.
    """
    pattern = re.compile(line_pattern) if isinstance(line_pattern, str) else line_pattern
    if "content" not in pattern.groupindex:
        raise CorpusError("line pattern must declare a named capture 'content'")

    has_ts = "timestamp" in pattern.groupindex
    has_src = "source_id" in pattern.groupindex
    has_label = "label" in pattern.groupindex
    if has_label and normal_line_label is None:
        raise CorpusError(
            "line pattern captures 'label' but no normal-line marker was given"
        )

    records: list[RawLogRecord] = []
    skipped: list[int] = []
    n_lines = 0
    try:
        fh = open(path, "r", encoding="utf-8", errors="replace")
    except OSError as exc:
        raise CorpusError(f"cannot read log file {path}: {exc}") from exc
    with fh:
        for line_no, line in enumerate(fh, start=1):
            n_lines = line_no
            m = pattern.match(line.rstrip("\n"))
            if m is None:
                skipped.append(line_no)
                continue
            content = m.group("content").strip()
            if not content:
                skipped.append(line_no)
                continue
            timestamp = None
            if has_ts and m.group("timestamp") is not None:
                raw_ts = m.group("timestamp")
                try:
                    timestamp = parse_timestamp(raw_ts, timestamp_format)
                except ValueError as exc:
                    raise CorpusError(
                        f"line {line_no}: cannot parse timestamp {raw_ts!r}: {exc}"
                    ) from exc
            source_id = m.group("source_id") if has_src else None
            line_label = None
            if has_label and m.group("label") is not None:
                raw = m.group("label")
                line_label = NORMAL if raw == normal_line_label else ANOMALY
            records.append(
                RawLogRecord(
                    line_no=line_no,
                    content=content,
                    timestamp=timestamp,
                    source_id=source_id,
                    line_label=line_label,
                )
            )

    if n_lines and len(skipped) / n_lines > _SKIP_WARN_FRACTION:
        log.warning(
            "%s: skipped %d of %d lines (no match or empty content)",
            path, len(skipped), n_lines,
        )
    return ReadResult(records=records, n_lines=n_lines, skipped_line_nos=skipped)


def derive_session_label(line_labels: Iterable[str | None]) -> str:
    """A session is an anomaly iff any member line is labelled an anomaly."""
    labels = list(line_labels)
    if not labels:
        raise CorpusError("cannot derive a label for an empty session")
    return ANOMALY if any(lbl == ANOMALY for lbl in labels) else NORMAL


def _label_of(members: Sequence[RawLogRecord]) -> str:
    return derive_session_label(r.line_label for r in members)


def group_by_id(records: Sequence[RawLogRecord], id_field: str = "source_id") -> list[Session]:
    """One session per distinct id, ordered by first occurrence."""
    buckets: dict[str, list[RawLogRecord]] = {}
    for rec in records:
        key = getattr(rec, id_field)
        if not key:
            raise CorpusError(f"line {rec.line_no}: record has no {id_field}")
        buckets.setdefault(key, []).append(rec)
    sessions = []
    for key, members in buckets.items():
        members.sort(key=lambda r: r.line_no)
        sessions.append(
            Session(
                session_id=key,
                event_line_nos=[r.line_no for r in members],
                label=_label_of(members),
                origin="id",
            )
        )
    return sessions


def group_by_time(records: Sequence[RawLogRecord], window_seconds: float) -> list[Session]:
    """Fixed time buckets of ``window_seconds``, anchored at the first timestamp.

    Bucket k holds records with timestamp in [t0 + k*w, t0 + (k+1)*w); empty
    buckets emit no session.
    """
    if window_seconds <= 0:
        raise ConfigError(f"time window must be positive, got {window_seconds}")
    for rec in records:
        if rec.timestamp is None:
            raise CorpusError(f"line {rec.line_no}: time grouping needs a timestamp")
    if not records:
        return []
    ordered = sorted(records, key=lambda r: (r.timestamp, r.line_no))
    t0 = ordered[0].timestamp
    buckets: dict[int, list[RawLogRecord]] = {}
    for rec in ordered:
        k = int((rec.timestamp - t0) // window_seconds)
        buckets.setdefault(k, []).append(rec)
    sessions = []
    for k in sorted(buckets):
        members = sorted(buckets[k], key=lambda r: r.line_no)
        sessions.append(
            Session(
                session_id=f"t{k}",
                event_line_nos=[r.line_no for r in members],
                label=_label_of(members),
                origin=f"time:{window_seconds:g}",
            )
        )
    return sessions


def group_by_count(records: Sequence[RawLogRecord], n_lines: int) -> list[Session]:
    """Consecutive chunks of exactly ``n_lines``; the final partial chunk stays."""
    if n_lines < 1:
        raise ConfigError(f"line-count window must be >= 1, got {n_lines}")
    sessions = []
    for k, start in enumerate(range(0, len(records), n_lines)):
        members = records[start : start + n_lines]
        sessions.append(
            Session(
                session_id=f"c{k}",
                event_line_nos=[r.line_no for r in members],
                label=_label_of(members),
                origin=f"count:{n_lines}",
            )
        )
    return sessions


def load_label_file(path: str | Path) -> dict[str, str]:
    """Read an id -> label CSV (header ``id,label``, values Normal/Anomaly)."""
    labels: dict[str, str] = {}
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise CorpusError(f"cannot read label file {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["id", "label"]:
            raise CorpusError(f"{path}: expected CSV header 'id,label', got {header}")
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise CorpusError(f"{path}:{row_no}: expected 2 columns, got {len(row)}")
            key, value = row[0].strip(), row[1].strip().lower()
            if value not in (NORMAL, ANOMALY):
                raise CorpusError(
                    f"{path}:{row_no}: label must be Normal or Anomaly, got {row[1]!r}"
                )
            labels[key] = value
    return labels


def apply_session_labels(sessions: Iterable[Session], labels: Mapping[str, str]) -> None:
    """Overwrite session labels from an id -> label mapping, in place."""
    for session in sessions:
        try:
            session.label = labels[session.session_id]
        except KeyError:
            raise CorpusError(
                f"label file has no entry for session {session.session_id!r}"
            ) from None


def split_dataset(
    sessions: Sequence[Session],
    ratio: float,
    mode: str = "shuffled",
    seed: int | None = 0,
) -> DatasetSplit:
    """Cut sessions into train/test with |train| = floor(ratio*N + 0.5).

    ``shuffled`` permutes session order with the given seed before cutting;
    ``sequential`` cuts in the original order.  Event order inside each
    session is untouched either way.
    """
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"split ratio must be in (0,1), got {ratio}")
    if len(sessions) < 2:
        raise CorpusError(f"need at least 2 sessions to split, got {len(sessions)}")
    if mode not in ("shuffled", "sequential"):
        raise ConfigError(f"split mode must be shuffled or sequential, got {mode!r}")

    n = len(sessions)
    n_train = int(math.floor(ratio * n + 0.5))
    if mode == "shuffled":
        order = np.random.RandomState(seed).permutation(n)
    else:
        order = np.arange(n)
    shuffled = [sessions[i] for i in order]
    return DatasetSplit(
        train=shuffled[:n_train],
        test=shuffled[n_train:],
        ratio=ratio,
        mode=mode,
        seed=seed if mode == "shuffled" else None,
    )


def slice_windows(session: Session, window_size: int, stride: int) -> list[Window]:
    """Slice one session into fixed-length windows at offsets 0, stride, 2*stride...

    Full windows are emitted while they fit.  If events at the tail would
    otherwise be left uncovered (always the case when the session is shorter
    than the window), one final window is emitted at the next stride offset
    and padded with PAD_LINE_NO slots up to ``window_size``.
    """
    if window_size < 1 or stride < 1:
        raise ConfigError(
            f"window_size and stride must be >= 1, got {window_size}/{stride}"
        )
    lines = session.event_line_nos
    n = len(lines)
    windows: list[Window] = []
    offset = 0
    covered = 0
    while offset + window_size <= n:
        windows.append(
            Window(
                session_id=session.session_id,
                offset=offset,
                event_line_nos=list(lines[offset : offset + window_size]),
                label=session.label,
            )
        )
        covered = offset + window_size
        offset += stride
    if covered < n and offset < n:
        tail = list(lines[offset:]) + [PAD_LINE_NO] * (window_size - (n - offset))
        windows.append(
            Window(
                session_id=session.session_id,
                offset=offset,
                event_line_nos=tail,
                label=session.label,
            )
        )
    return windows


def write_session_manifest(sessions: Iterable[Session], path: str | Path) -> None:
    """Write sessions as CSV ``session_id,label,first_line,last_line,n_events``."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["session_id", "label", "first_line", "last_line", "n_events"])
        for s in sessions:
            writer.writerow(
                [
                    s.session_id,
                    s.label,
                    s.event_line_nos[0] if s.event_line_nos else "",
                    s.event_line_nos[-1] if s.event_line_nos else "",
                    len(s.event_line_nos),
                ]
            )
