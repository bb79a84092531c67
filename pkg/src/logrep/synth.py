"""Seeded synthetic log corpora with known templates and labels.

The generator fabricates a fleet-style log: a fixed set of templates whose
instances carry digit-bearing parameter tokens (so the built-in masking rule
recovers the skeleton), grouped into interleaved sessions.  Anomalies follow
one of two patterns:

* template-presence: anomalous sessions contain a designated template that
  normal sessions never emit;
* burst-count: every session may emit the designated template occasionally,
  anomalous ones emit it in a burst.

Alongside the log it writes the ground-truth template list, per-line template
assignments, and a session label file, which together let tests score parser
group accuracy and end-to-end detection exactly.

Template token counts are pairwise distinct and parameter slots sit outside
the routing prefix, so a correctly working parser must recover the partition
with group accuracy 1.0; anything less is a parser defect, not generator
noise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ConfigError
from .parser import WILDCARD

log = logging.getLogger(__name__)

_WORDS = [
    "daemon", "worker", "cache", "flush", "commit", "replica", "shard",
    "index", "queue", "lease", "probe", "socket", "buffer", "segment",
    "manifest", "snapshot", "compaction", "election", "heartbeat", "monitor",
    "registry", "scheduler", "allocating", "receiving", "starting", "closing",
    "verified", "expired", "rejected", "accepted", "timeout", "retrying",
    "from", "for", "on", "completed", "failed", "ok", "slow", "pending",
]

_ANOMALY_NAME = "anomaly"
_NORMAL_NAME = "normal"

TEMPLATE_PRESENCE = "template-presence"
BURST_COUNT = "burst-count"


@dataclass
class SynthSpec:
    n_templates: int = 12
    n_lines: int | None = None
    n_sessions: int | None = None
    session_length: tuple[int, int] = (5, 30)
    anomaly_pattern: str = TEMPLATE_PRESENCE
    anomaly_rate: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_templates < 3:
            raise ConfigError(f"need at least 3 templates, got {self.n_templates}")
        if not 0.0 < self.anomaly_rate < 1.0:
            raise ConfigError(f"anomaly_rate must be in (0,1), got {self.anomaly_rate}")
        if self.anomaly_pattern not in (TEMPLATE_PRESENCE, BURST_COUNT):
            raise ConfigError(
                f"anomaly_pattern must be {TEMPLATE_PRESENCE} or {BURST_COUNT}, "
                f"got {self.anomaly_pattern!r}"
            )
        if self.n_lines is None and self.n_sessions is None:
            raise ConfigError("one of n_lines or n_sessions must be set")
        lo, hi = self.session_length
        if lo < 1 or hi < lo:
            raise ConfigError(f"bad session_length range {self.session_length}")
        if self.anomaly_pattern == BURST_COUNT and lo < 16:
            raise ConfigError(
                "burst-count anomalies need session_length min >= 16 "
                "so bursts fit inside one session"
            )


@dataclass
class SynthResult:
    log_path: Path
    templates_path: Path
    labels_path: Path
    truth_path: Path
    n_lines: int
    n_sessions: int
    n_anomalous: int
    # ground truth kept in memory for tests: line_no -> template index,
    # session_id -> label name
    line_truth: dict[int, int] = field(default_factory=dict)
    session_labels: dict[str, str] = field(default_factory=dict)

    @property
    def line_pattern(self) -> str:
        return LINE_PATTERN


LINE_PATTERN = r"^(?P<timestamp>\d+) (?P<source_id>S\d+) (?P<content>.+)$"


def _build_templates(spec: SynthSpec, rng: np.random.RandomState) -> list[list[str]]:
    """Token skeletons with <*> at parameter slots.

    Token counts are 3 + index (pairwise distinct) and parameters occupy the
    trailing slots, never the two routing tokens, so similarity against an
    established template stays >= 0.5 and merging cannot cross templates.
    """
    templates = []
    for i in range(spec.n_templates):
        length = 3 + i
        n_params = 1 + (i % 2)
        words = [_WORDS[rng.randint(0, len(_WORDS))] for _ in range(length - n_params)]
        templates.append(words + [WILDCARD] * n_params)
    return templates


def _param_token(rng: np.random.RandomState) -> str:
    styles = (
        lambda: str(rng.randint(0, 100000)),
        lambda: f"blk_{rng.randint(1000, 999999)}",
        lambda: f"id-{rng.randint(0, 9999)}",
        lambda: f"0x{rng.randint(0, 1 << 24):x}",
        lambda: f"{rng.randint(1, 9999)}ms",
    )
    return styles[rng.randint(0, len(styles))]()


def _instantiate(template: list[str], rng: np.random.RandomState) -> str:
    return " ".join(
        _param_token(rng) if tok == WILDCARD else tok for tok in template
    )


def generate_synthetic(spec: SynthSpec, out_prefix: str | Path) -> SynthResult:
    """Write ``<prefix>.log`` plus templates/labels/truth sidecars."""
    rng = np.random.RandomState(spec.seed)
    templates = _build_templates(spec, rng)
    designated = spec.n_templates - 1
    normal_pool = list(range(spec.n_templates - 1))

    # decide the session count up front; in line-budget mode overshoot and trim
    lo, hi = spec.session_length
    if spec.n_sessions is not None:
        n_sessions = spec.n_sessions
    else:
        n_sessions = max(1, int(spec.n_lines / lo) + 1)

    session_events: list[list[int]] = []
    session_ids: list[str] = []
    session_labels: dict[str, str] = {}
    n_anomalous = 0
    for s in range(n_sessions):
        sid = f"S{s:05d}"
        length = int(rng.randint(lo, hi + 1))
        anomalous = bool(rng.random_sample() < spec.anomaly_rate)
        events = [normal_pool[rng.randint(0, len(normal_pool))] for _ in range(length)]
        if spec.anomaly_pattern == TEMPLATE_PRESENCE:
            # longer sessions repeat the marker more, the way a failing
            # component keeps logging the same error
            n_inject = int(rng.randint(1, 4)) + length // 8 if anomalous else 0
        else:
            n_inject = int(rng.randint(8, 16)) if anomalous else int(rng.randint(0, 3))
        if n_inject > 0:
            positions = rng.choice(length, size=min(n_inject, length), replace=False)
            for pos in positions:
                events[pos] = designated
        session_events.append(events)
        session_ids.append(sid)
        session_labels[sid] = _ANOMALY_NAME if anomalous else _NORMAL_NAME
        if anomalous:
            n_anomalous += 1

    # interleave sessions the way concurrent writers would
    cursors = [0] * n_sessions
    alive = list(range(n_sessions))
    emitted: list[tuple[str, int]] = []  # (session_id, template_idx) in line order
    while alive:
        pick = alive[rng.randint(0, len(alive))]
        emitted.append((session_ids[pick], session_events[pick][cursors[pick]]))
        cursors[pick] += 1
        if cursors[pick] == len(session_events[pick]):
            alive.remove(pick)
    if spec.n_lines is not None:
        emitted = emitted[: spec.n_lines]

    out_prefix = Path(out_prefix)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    log_path = Path(f"{out_prefix}.log")
    templates_path = Path(f"{out_prefix}_templates.txt")
    labels_path = Path(f"{out_prefix}_labels.csv")
    truth_path = Path(f"{out_prefix}_truth.csv")

    line_truth: dict[int, int] = {}
    seen_sessions: list[str] = []
    seen_set: set[str] = set()
    timestamp = 1_700_000_000
    with open(log_path, "w", encoding="utf-8") as fh:
        for line_no, (sid, template_idx) in enumerate(emitted, start=1):
            content = _instantiate(templates[template_idx], rng)
            fh.write(f"{timestamp} {sid} {content}\n")
            timestamp += 1
            line_truth[line_no] = template_idx
            if sid not in seen_set:
                seen_set.add(sid)
                seen_sessions.append(sid)

    with open(templates_path, "w", encoding="utf-8") as fh:
        for idx, template in enumerate(templates):
            fh.write(f"{idx}\t{' '.join(template)}\n")

    with open(labels_path, "w", encoding="utf-8") as fh:
        fh.write("id,label\n")
        for sid in seen_sessions:
            name = "Anomaly" if session_labels[sid] == _ANOMALY_NAME else "Normal"
            fh.write(f"{sid},{name}\n")

    with open(truth_path, "w", encoding="utf-8") as fh:
        fh.write("line_no,template_idx\n")
        for line_no in sorted(line_truth):
            fh.write(f"{line_no},{line_truth[line_no]}\n")

    return SynthResult(
        log_path=log_path,
        templates_path=templates_path,
        labels_path=labels_path,
        truth_path=truth_path,
        n_lines=len(emitted),
        n_sessions=len(seen_sessions),
        n_anomalous=sum(
            1 for sid in seen_sessions if session_labels[sid] == _ANOMALY_NAME
        ),
        line_truth=line_truth,
        session_labels={sid: session_labels[sid] for sid in seen_sessions},
    )


def group_accuracy(
    predicted: Mapping[int, int], truth: Mapping[int, int]
) -> float:
    """Fraction of events whose induced grouping matches the true partition.

    Both arguments map line_no -> cluster key.  An event counts as correct
    iff the member set of its predicted cluster equals the member set of its
    true cluster (the usual all-or-nothing grouping criterion).
    """
    if set(predicted) != set(truth):
        raise ConfigError("group_accuracy needs identical line_no key sets")
    if not truth:
        return 1.0
    members_pred: dict[int, set[int]] = {}
    members_true: dict[int, set[int]] = {}
    for line_no, cluster in predicted.items():
        members_pred.setdefault(cluster, set()).add(line_no)
    for line_no, cluster in truth.items():
        members_true.setdefault(cluster, set()).add(line_no)
    correct = sum(
        1
        for line_no in truth
        if members_pred[predicted[line_no]] == members_true[truth[line_no]]
    )
    return correct / len(truth)
