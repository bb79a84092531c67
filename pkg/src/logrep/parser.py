"""Online template mining with a fixed-depth prefix tree.

Events are routed first by token count, then by their leading tokens, down to
a leaf that holds candidate templates.  The best candidate by token-position
similarity either absorbs the event (diverging positions become wildcards) or
a fresh template is registered.  The tree is built in one sequential pass and
the resulting template store is frozen afterwards.

An "unparsed" passthrough mode skips the tree: every distinct raw token list
becomes its own template, with no wildcards.  This gives raw-token input a
representation-compatible shape for comparing parsed vs. unparsed features.
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import RawLogRecord
from .errors import ConfigError, ParserError

log = logging.getLogger(__name__)

WILDCARD = "<*>"
EMPTY_TOKEN = "<EMPTY>"
PAD_TOKEN = "<PAD>"

# Reserved templates take the two lowest positive ids; mined templates start
# above them.  EMPTY catches lines whose content masks away entirely, PAD
# fills short windows.
EMPTY_TEMPLATE_ID = 1
PAD_TEMPLATE_ID = 2
FIRST_REAL_TEMPLATE_ID = 3

RESERVED_TOKENS = frozenset({WILDCARD, EMPTY_TOKEN, PAD_TOKEN})
RESERVED_TEMPLATE_IDS = (EMPTY_TEMPLATE_ID, PAD_TEMPLATE_ID)

_DIGIT_RE = re.compile(r"\d")


@dataclass
class MaskRule:
    """A named regex rewrite applied to raw content before tokenization."""

    name: str
    pattern: str
    replacement: str = WILDCARD

    def __post_init__(self) -> None:
        try:
            self._compiled = re.compile(self.pattern)
        except re.error as exc:
            raise ConfigError(f"mask rule {self.name!r}: bad pattern: {exc}") from exc

    def apply(self, text: str) -> str:
        return self._compiled.sub(self.replacement, text)


@dataclass
class Template:
    template_id: int
    tokens: list[str]
    match_count: int = 0

    def n_wildcards(self) -> int:
        return sum(1 for t in self.tokens if t == WILDCARD)


@dataclass
class ParsedEvent:
    line_no: int
    template_id: int
    parameters: list[str]


@dataclass
class ParserConfig:
    depth: int = 4
    similarity_threshold: float = 0.4
    max_children: int = 100
    mask_rules: list[MaskRule] = field(default_factory=list)
    mode: str = "parsed"  # parsed | unparsed
    lowercase_unparsed: bool = False

    def __post_init__(self) -> None:
        if self.depth < 3:
            raise ConfigError(f"parser depth must be >= 3, got {self.depth}")
        if not 0.0 < self.similarity_threshold < 1.0:
            raise ConfigError(
                f"similarity threshold must be in (0,1), got {self.similarity_threshold}"
            )
        if self.max_children < 1:
            raise ConfigError(f"max_children must be >= 1, got {self.max_children}")
        if self.mode not in ("parsed", "unparsed"):
            raise ConfigError(f"parser mode must be parsed or unparsed, got {self.mode!r}")


def preprocess(content: str, rules: Sequence[MaskRule] = ()) -> list[str]:
    """Apply mask rules in order, tokenize, then wildcard digit-bearing tokens."""
    for rule in rules:
        content = rule.apply(content)
    tokens = content.split()
    return [WILDCARD if _DIGIT_RE.search(tok) else tok for tok in tokens]


def seq_similarity(tokens: Sequence[str], template_tokens: Sequence[str]) -> float:
    """Fraction of positions matching exactly; wildcards never count as a match."""
    if len(tokens) != len(template_tokens):
        raise ParserError(
            f"similarity over unequal lengths {len(tokens)} vs {len(template_tokens)}"
        )
    if not tokens:
        return 0.0
    hits = sum(
        1
        for tok, tpl in zip(tokens, template_tokens)
        if tpl != WILDCARD and tok == tpl
    )
    return hits / len(tokens)


def merge_template(template: Template, tokens: Sequence[str]) -> Template:
    """Absorb an event into a template: diverging positions become wildcards."""
    if len(tokens) != len(template.tokens):
        raise ParserError("merge over unequal lengths")
    template.tokens = [
        tpl if tpl == tok or tpl == WILDCARD else WILDCARD
        for tpl, tok in zip(template.tokens, tokens)
    ]
    template.match_count += 1
    return template


class TemplateStore:
    """All templates of one parse run, keyed by dense positive id.

    A fresh store always contains the two reserved templates (EMPTY, PAD) so
    ids 1 and 2 mean the same thing in every artifact this package writes.
    """

    def __init__(self) -> None:
        self.templates: dict[int, Template] = {
            EMPTY_TEMPLATE_ID: Template(EMPTY_TEMPLATE_ID, [EMPTY_TOKEN], 0),
            PAD_TEMPLATE_ID: Template(PAD_TEMPLATE_ID, [PAD_TOKEN], 0),
        }
        self._next_id = FIRST_REAL_TEMPLATE_ID

    def create(self, tokens: Sequence[str]) -> Template:
        template = Template(self._next_id, list(tokens), match_count=1)
        self.templates[template.template_id] = template
        self._next_id += 1
        return template

    def get(self, template_id: int) -> Template:
        try:
            return self.templates[template_id]
        except KeyError:
            raise ParserError(f"unknown template id {template_id}") from None

    def real_templates(self) -> list[Template]:
        """Templates mined from data, excluding the reserved pair."""
        return [
            t for tid, t in sorted(self.templates.items())
            if tid not in RESERVED_TEMPLATE_IDS
        ]

    def __len__(self) -> int:
        return len(self.templates)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TemplateStore):
            return NotImplemented
        return {
            tid: (t.tokens, t.match_count) for tid, t in self.templates.items()
        } == {
            tid: (t.tokens, t.match_count) for tid, t in other.templates.items()
        }


def save_store(store: TemplateStore, path: str | Path) -> None:
    """Write one template per line: ``<id>\\t<match_count>\\t<token token ...>``."""
    with open(path, "w", encoding="utf-8") as fh:
        for tid in sorted(store.templates):
            t = store.templates[tid]
            fh.write(f"{tid}\t{t.match_count}\t{' '.join(t.tokens)}\n")


def load_store(path: str | Path) -> TemplateStore:
    store = TemplateStore()
    store.templates.clear()
    max_id = 0
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ParserError(f"cannot read template store {path}: {exc}") from exc
    with fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParserError(
                    f"{path}:{line_no}: expected 3 tab-separated fields, got {len(parts)}"
                )
            try:
                tid = int(parts[0])
                count = int(parts[1])
            except ValueError as exc:
                raise ParserError(f"{path}:{line_no}: bad id or count: {exc}") from exc
            if tid <= 0:
                raise ParserError(f"{path}:{line_no}: template id must be positive")
            if tid in store.templates:
                raise ParserError(f"{path}:{line_no}: duplicate template id {tid}")
            tokens = parts[2].split(" ")
            if tokens == [""]:
                raise ParserError(f"{path}:{line_no}: template has no tokens")
            store.templates[tid] = Template(tid, tokens, count)
            max_id = max(max_id, tid)
    store._next_id = max(max_id + 1, FIRST_REAL_TEMPLATE_ID)
    return store


class _Node:
    __slots__ = ("children", "candidates")

    def __init__(self) -> None:
        self.children: dict[str, _Node] = {}
        self.candidates: list[Template] = []


class DrainParser:
    """Fixed-depth-tree online parser over preprocessed token lists."""

    def __init__(self, config: ParserConfig | None = None, store: TemplateStore | None = None):
        self.config = config or ParserConfig()
        self.store = store if store is not None else TemplateStore()
        self._root: dict[int, _Node] = {}

    def parse_tokens(self, tokens: Sequence[str]) -> tuple[int, list[str]]:
        """Assign a template to one preprocessed token list.

        Returns (template_id, parameters); parameters are the input tokens
        sitting at the template's wildcard slots after any merge.
        """
        if not tokens:
            empty = self.store.get(EMPTY_TEMPLATE_ID)
            empty.match_count += 1
            return EMPTY_TEMPLATE_ID, []

        leaf = self._route(tokens)
        best, best_sim = None, -1.0
        for cand in leaf.candidates:
            sim = seq_similarity(tokens, cand.tokens)
            if sim > best_sim or (
                sim == best_sim and best is not None and cand.n_wildcards() > best.n_wildcards()
            ):
                best, best_sim = cand, sim

        if best is not None and best_sim >= self.config.similarity_threshold:
            merge_template(best, tokens)
            template = best
        else:
            template = self.store.create(tokens)
            leaf.candidates.append(template)

        params = [
            tok for tok, tpl in zip(tokens, template.tokens) if tpl == WILDCARD
        ]
        return template.template_id, params

    def _route(self, tokens: Sequence[str]) -> _Node:
        """Walk count level then up to depth-2 token levels, creating as needed."""
        node = self._root.setdefault(len(tokens), _Node())
        max_levels = min(self.config.depth - 2, len(tokens))
        for level in range(max_levels):
            token = tokens[level]
            if _DIGIT_RE.search(token):
                token = WILDCARD
            child = node.children.get(token)
            if child is not None:
                node = child
                continue
            if token != WILDCARD:
                # A new literal child must leave one slot free for a future
                # wildcard child, so the node never exceeds max_children.
                room = self.config.max_children - len(node.children)
                if room > 1 or (room == 1 and WILDCARD in node.children):
                    child = _Node()
                    node.children[token] = child
                    node = child
                    continue
                token = WILDCARD
            child = node.children.get(token)
            if child is None:
                child = _Node()
                node.children[WILDCARD] = child
            node = child
        return node


def parse_corpus(
    records: Iterable[RawLogRecord], config: ParserConfig | None = None
) -> tuple[list[ParsedEvent], TemplateStore]:
    """Parse records in line order into events plus the mined template store."""
    config = config or ParserConfig()
    if config.mode == "unparsed":
        return _passthrough_corpus(records, config)
    parser = DrainParser(config)
    events = []
    for rec in records:
        tokens = preprocess(rec.content, config.mask_rules)
        tid, params = parser.parse_tokens(tokens)
        events.append(ParsedEvent(rec.line_no, tid, params))
    return events, parser.store


def _passthrough_corpus(
    records: Iterable[RawLogRecord], config: ParserConfig
) -> tuple[list[ParsedEvent], TemplateStore]:
    store = TemplateStore()
    by_tokens: dict[tuple[str, ...], int] = {}
    events = []
    for rec in records:
        content = rec.content.lower() if config.lowercase_unparsed else rec.content
        tokens = tuple(content.split())
        if not tokens:
            store.get(EMPTY_TEMPLATE_ID).match_count += 1
            events.append(ParsedEvent(rec.line_no, EMPTY_TEMPLATE_ID, []))
            continue
        tid = by_tokens.get(tokens)
        if tid is None:
            tid = store.create(tokens).template_id
            by_tokens[tokens] = tid
        else:
            store.get(tid).match_count += 1
        events.append(ParsedEvent(rec.line_no, tid, []))
    return events, store


def _escape_param(param: str) -> str:
    return param.replace("\\", "\\\\").replace("|", "\\|")


def _split_params(joined: str) -> list[str]:
    """Split on unescaped ``|`` and undo the escaping."""
    if joined == "":
        return []
    parts: list[str] = []
    current: list[str] = []
    i = 0
    while i < len(joined):
        ch = joined[i]
        if ch == "\\" and i + 1 < len(joined) and joined[i + 1] in ("\\", "|"):
            current.append(joined[i + 1])
            i += 2
        elif ch == "|":
            parts.append("".join(current))
            current = []
            i += 1
        else:
            current.append(ch)
            i += 1
    parts.append("".join(current))
    return parts


def save_parsed_events(events: Iterable[ParsedEvent], path: str | Path) -> None:
    """Write events as CSV ``line_no,template_id,params`` (params pipe-joined)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["line_no", "template_id", "params"])
        for ev in events:
            joined = "|".join(_escape_param(p) for p in ev.parameters)
            writer.writerow([ev.line_no, ev.template_id, joined])


def load_parsed_events(path: str | Path) -> list[ParsedEvent]:
    events = []
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise ParserError(f"cannot read parsed events {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["line_no", "template_id", "params"]:
            raise ParserError(f"{path}: unexpected header {header}")
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParserError(f"{path}:{row_no}: expected 3 columns, got {len(row)}")
            try:
                line_no, tid = int(row[0]), int(row[1])
            except ValueError as exc:
                raise ParserError(f"{path}:{row_no}: bad integer field: {exc}") from exc
            events.append(ParsedEvent(line_no, tid, _split_params(row[2])))
    return events
