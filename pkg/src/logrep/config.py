"""Experiment configuration: YAML schema, validation, dataset defaults.

Validation never stops at the first problem; every violation is collected and
reported in one error so a config can be fixed in a single pass.  Datasets
named hdfs/bgl/spirit/thunderbird inherit the published grouping, split and
window defaults for those systems; everything is overridable per dataset.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError
from .models import FAMILIES, ModelSpec
from .parser import MaskRule

log = logging.getLogger(__name__)

REPRESENTATION_KINDS = (
    "mcv",
    "tfidf_id",
    "tfidf_text",
    "static_embedding",
    "contextual_embedding",
)
EVENT_CAPABLE_KINDS = ("tfidf_text", "static_embedding", "contextual_embedding")
WINDOW_FAMILIES = ("window_mlp",)
PARSING_MODES = ("parsed", "unparsed")
AGGREGATIONS = ("mean", "tfidf")

# Published per-system defaults: grouping strategy, split, window size/stride.
DATASET_DEFAULTS: dict[str, dict[str, Any]] = {
    "hdfs": {
        "grouping": {"strategy": "id"},
        "split": {"ratio": 0.7, "mode": "shuffled"},
        "window": 30,
        "stride": 1,
    },
    "bgl": {
        "grouping": {"strategy": "time", "window_seconds": 6 * 3600},
        "split": {"ratio": 0.8, "mode": "shuffled"},
        "window": 50,
        "stride": 50,
    },
    "spirit": {
        "grouping": {"strategy": "time", "window_seconds": 3600},
        "split": {"ratio": 0.8, "mode": "shuffled"},
        "window": 50,
        "stride": 50,
    },
    "thunderbird": {
        "grouping": {"strategy": "count", "n_lines": 100},
        "split": {"ratio": 0.8, "mode": "sequential"},
        "window": 30,
        "stride": 10,
    },
}

_FALLBACK_WINDOW = 10


@dataclass
class GroupingConfig:
    strategy: str = "id"
    window_seconds: float | None = None
    n_lines: int | None = None


@dataclass
class SplitConfig:
    ratio: float = 0.7
    mode: str = "shuffled"
    seed: int | None = None


@dataclass
class DatasetConfig:
    name: str
    path: str
    line_pattern: str
    timestamp_format: str | None = None
    label_source: str = "file"  # file | line | derived
    label_file: str | None = None
    normal_line_label: str | None = None
    grouping: GroupingConfig = field(default_factory=GroupingConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    window: int = _FALLBACK_WINDOW
    stride: int | None = None


@dataclass
class RepresentationConfig:
    name: str
    kind: str
    table: str | None = None
    table_unparsed: str | None = None
    doc_mode: str = "templates"

    @property
    def event_capable(self) -> bool:
        return self.kind in EVENT_CAPABLE_KINDS


@dataclass
class ModelEntry:
    name: str
    family: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int | None = None

    @property
    def window_level(self) -> bool:
        return self.family in WINDOW_FAMILIES


@dataclass
class ParserSettings:
    depth: int = 4
    similarity_threshold: float = 0.4
    max_children: int = 100
    lowercase_unparsed: bool = False
    mask_rules: list[MaskRule] = field(default_factory=list)


@dataclass
class ExperimentConfig:
    seed: int = 0
    output_dir: str = "out"
    parser: ParserSettings = field(default_factory=ParserSettings)
    datasets: list[DatasetConfig] = field(default_factory=list)
    representations: list[RepresentationConfig] = field(default_factory=list)
    models: list[ModelEntry] = field(default_factory=list)
    parsing_modes: list[str] = field(default_factory=lambda: ["parsed"])
    aggregations: list[str] = field(default_factory=lambda: ["mean"])
    window_sizes: list[int] | None = None
    stride: int | None = None
    export_matrices: bool = False
    workers: int = 1


class _Validator:
    """Collects every violation instead of raising on the first."""

    def __init__(self) -> None:
        self.errors: list[str] = []

    def fail(self, where: str, message: str) -> None:
        self.errors.append(f"{where}: {message}")

    def expect_keys(self, where: str, data: dict, allowed: set[str]) -> None:
        for key in data:
            if key not in allowed:
                self.fail(where, f"unknown key {key!r}")

    def get_typed(self, where: str, data: dict, key: str, types, default=None):
        if key not in data or data[key] is None:
            return default
        value = data[key]
        if not isinstance(value, types) or isinstance(value, bool) and bool not in (
            types if isinstance(types, tuple) else (types,)
        ):
            self.fail(where, f"{key} has wrong type {type(value).__name__}")
            return default
        return value

    def raise_if_failed(self) -> None:
        if self.errors:
            detail = "\n  - ".join(self.errors)
            raise ConfigError(f"invalid configuration:\n  - {detail}")


def _parse_grouping(v: _Validator, where: str, data: dict) -> GroupingConfig:
    v.expect_keys(where, data, {"strategy", "window_seconds", "n_lines"})
    strategy = v.get_typed(where, data, "strategy", str, "id")
    g = GroupingConfig(
        strategy=strategy,
        window_seconds=v.get_typed(where, data, "window_seconds", (int, float)),
        n_lines=v.get_typed(where, data, "n_lines", int),
    )
    if strategy not in ("id", "time", "count"):
        v.fail(where, f"strategy must be id, time or count, got {strategy!r}")
    if strategy == "time" and (g.window_seconds is None or g.window_seconds <= 0):
        v.fail(where, "time grouping needs a positive window_seconds")
    if strategy == "count" and (g.n_lines is None or g.n_lines < 1):
        v.fail(where, "count grouping needs n_lines >= 1")
    return g


def _parse_split(v: _Validator, where: str, data: dict) -> SplitConfig:
    v.expect_keys(where, data, {"ratio", "mode", "seed"})
    s = SplitConfig(
        ratio=v.get_typed(where, data, "ratio", (int, float), 0.7),
        mode=v.get_typed(where, data, "mode", str, "shuffled"),
        seed=v.get_typed(where, data, "seed", int),
    )
    if not 0.0 < s.ratio < 1.0:
        v.fail(where, f"ratio must be in (0,1), got {s.ratio}")
    if s.mode not in ("shuffled", "sequential"):
        v.fail(where, f"mode must be shuffled or sequential, got {s.mode!r}")
    return s


def _parse_dataset(v: _Validator, index: int, data: dict) -> DatasetConfig | None:
    where = f"datasets[{index}]"
    if not isinstance(data, dict):
        v.fail(where, "must be a mapping")
        return None
    v.expect_keys(
        where,
        data,
        {
            "name", "path", "line_pattern", "timestamp_format", "label_source",
            "label_file", "normal_line_label", "grouping", "split", "window", "stride",
        },
    )
    name = v.get_typed(where, data, "name", str)
    path = v.get_typed(where, data, "path", str)
    line_pattern = v.get_typed(where, data, "line_pattern", str)
    if not name:
        v.fail(where, "name is required")
        return None
    if not path:
        v.fail(where, "path is required")
    if not line_pattern:
        v.fail(where, "line_pattern is required")

    defaults = copy.deepcopy(DATASET_DEFAULTS.get(name.lower(), {}))
    grouping_data = data.get("grouping", defaults.get("grouping", {"strategy": "id"}))
    split_data = data.get("split", defaults.get("split", {}))
    window_default = defaults.get("window", _FALLBACK_WINDOW)
    stride_default = defaults.get("stride")

    ds = DatasetConfig(
        name=name,
        path=path or "",
        line_pattern=line_pattern or "",
        timestamp_format=v.get_typed(where, data, "timestamp_format", str),
        label_source=v.get_typed(where, data, "label_source", str, "file"),
        label_file=v.get_typed(where, data, "label_file", str),
        normal_line_label=v.get_typed(where, data, "normal_line_label", str),
        grouping=_parse_grouping(v, f"{where}.grouping", grouping_data or {}),
        split=_parse_split(v, f"{where}.split", split_data or {}),
        window=v.get_typed(where, data, "window", int, window_default),
        stride=v.get_typed(where, data, "stride", int, stride_default),
    )
    if ds.label_source not in ("file", "line", "derived"):
        v.fail(where, f"label_source must be file, line or derived, got {ds.label_source!r}")
    if ds.label_source == "file" and not ds.label_file:
        v.fail(where, "label_source=file needs label_file")
    if ds.label_source == "line" and ds.normal_line_label is None:
        v.fail(where, "label_source=line needs normal_line_label")
    if ds.window < 1:
        v.fail(where, f"window must be >= 1, got {ds.window}")
    if ds.stride is not None and ds.stride < 1:
        v.fail(where, f"stride must be >= 1, got {ds.stride}")
    return ds


def _parse_representation(v: _Validator, index: int, data: dict) -> RepresentationConfig | None:
    where = f"representations[{index}]"
    if not isinstance(data, dict):
        v.fail(where, "must be a mapping")
        return None
    v.expect_keys(where, data, {"name", "kind", "table", "table_unparsed", "doc_mode"})
    name = v.get_typed(where, data, "name", str)
    kind = v.get_typed(where, data, "kind", str)
    if not name:
        v.fail(where, "name is required")
        return None
    rep = RepresentationConfig(
        name=name,
        kind=kind or "",
        table=v.get_typed(where, data, "table", str),
        table_unparsed=v.get_typed(where, data, "table_unparsed", str),
        doc_mode=v.get_typed(where, data, "doc_mode", str, "templates"),
    )
    if rep.kind not in REPRESENTATION_KINDS:
        v.fail(where, f"kind must be one of {', '.join(REPRESENTATION_KINDS)}, got {rep.kind!r}")
    if rep.kind in ("static_embedding", "contextual_embedding") and not rep.table:
        v.fail(where, f"kind {rep.kind} needs a table path")
    if rep.doc_mode not in ("templates", "events"):
        v.fail(where, f"doc_mode must be templates or events, got {rep.doc_mode!r}")
    return rep


def _parse_model(v: _Validator, index: int, data: dict) -> ModelEntry | None:
    where = f"models[{index}]"
    if not isinstance(data, dict):
        v.fail(where, "must be a mapping")
        return None
    v.expect_keys(where, data, {"name", "family", "hyperparameters", "seed"})
    name = v.get_typed(where, data, "name", str)
    family = v.get_typed(where, data, "family", str)
    if not name:
        v.fail(where, "name is required")
        return None
    entry = ModelEntry(
        name=name,
        family=family or "",
        hyperparameters=data.get("hyperparameters") or {},
        seed=v.get_typed(where, data, "seed", int),
    )
    if entry.family not in FAMILIES:
        v.fail(where, f"family must be one of {', '.join(FAMILIES)}, got {entry.family!r}")
    elif not isinstance(entry.hyperparameters, dict):
        v.fail(where, "hyperparameters must be a mapping")
    else:
        try:
            ModelSpec(family=entry.family, hyperparameters=dict(entry.hyperparameters))
        except ConfigError as exc:
            v.fail(where, str(exc))
    return entry


def _parse_parser(v: _Validator, data: dict) -> ParserSettings:
    where = "parser"
    v.expect_keys(
        where,
        data,
        {"depth", "similarity_threshold", "max_children", "lowercase_unparsed", "mask_rules"},
    )
    settings = ParserSettings(
        depth=v.get_typed(where, data, "depth", int, 4),
        similarity_threshold=v.get_typed(where, data, "similarity_threshold", (int, float), 0.4),
        max_children=v.get_typed(where, data, "max_children", int, 100),
        lowercase_unparsed=bool(data.get("lowercase_unparsed", False)),
    )
    if settings.depth < 3:
        v.fail(where, f"depth must be >= 3, got {settings.depth}")
    if not 0.0 < settings.similarity_threshold < 1.0:
        v.fail(where, f"similarity_threshold must be in (0,1), got {settings.similarity_threshold}")
    if settings.max_children < 1:
        v.fail(where, f"max_children must be >= 1, got {settings.max_children}")
    rules = data.get("mask_rules") or []
    if not isinstance(rules, list):
        v.fail(where, "mask_rules must be a list")
        rules = []
    for i, rule in enumerate(rules):
        rwhere = f"parser.mask_rules[{i}]"
        if not isinstance(rule, dict):
            v.fail(rwhere, "must be a mapping")
            continue
        v.expect_keys(rwhere, rule, {"name", "pattern", "replacement"})
        rname = rule.get("name")
        pattern = rule.get("pattern")
        if not rname or not pattern:
            v.fail(rwhere, "name and pattern are required")
            continue
        try:
            settings.mask_rules.append(
                MaskRule(
                    name=rname,
                    pattern=pattern,
                    replacement=rule.get("replacement", "<*>"),
                )
            )
        except ConfigError as exc:
            v.fail(rwhere, str(exc))
    return settings


def _check_unique(v: _Validator, where: str, names: list[str]) -> None:
    seen = set()
    for name in names:
        if name in seen:
            v.fail(where, f"duplicate name {name!r}")
        seen.add(name)


def parse_config_dict(data: dict) -> ExperimentConfig:
    v = _Validator()
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be a mapping")
    v.expect_keys(
        "top level",
        data,
        {
            "seed", "output_dir", "parser", "datasets", "representations", "models",
            "parsing", "aggregations", "window_sizes", "stride", "export_matrices",
            "workers",
        },
    )
    cfg = ExperimentConfig(
        seed=v.get_typed("top level", data, "seed", int, 0),
        output_dir=v.get_typed("top level", data, "output_dir", str, "out"),
        parser=_parse_parser(v, data.get("parser") or {}),
        export_matrices=bool(data.get("export_matrices", False)),
        workers=v.get_typed("top level", data, "workers", int, 1),
        stride=v.get_typed("top level", data, "stride", int),
    )
    if cfg.workers < 1:
        v.fail("top level", f"workers must be >= 1, got {cfg.workers}")
    if cfg.stride is not None and cfg.stride < 1:
        v.fail("top level", f"stride must be >= 1, got {cfg.stride}")

    parsing = data.get("parsing", ["parsed"])
    if isinstance(parsing, str):
        parsing = [parsing]
    if not isinstance(parsing, list) or not parsing:
        v.fail("top level", "parsing must be a non-empty list")
        parsing = ["parsed"]
    for mode in parsing:
        if mode not in PARSING_MODES:
            v.fail("top level", f"parsing mode must be parsed or unparsed, got {mode!r}")
    cfg.parsing_modes = [m for m in parsing if m in PARSING_MODES]

    aggregations = data.get("aggregations", ["mean"])
    if isinstance(aggregations, str):
        aggregations = [aggregations]
    if not isinstance(aggregations, list) or not aggregations:
        v.fail("top level", "aggregations must be a non-empty list")
        aggregations = ["mean"]
    for agg in aggregations:
        if agg not in AGGREGATIONS:
            v.fail("top level", f"aggregation must be mean or tfidf, got {agg!r}")
    cfg.aggregations = [a for a in aggregations if a in AGGREGATIONS]

    window_sizes = data.get("window_sizes")
    if window_sizes is not None:
        if not isinstance(window_sizes, list) or not all(
            isinstance(w, int) and not isinstance(w, bool) and w >= 1 for w in window_sizes
        ):
            v.fail("top level", "window_sizes must be a list of integers >= 1")
        else:
            cfg.window_sizes = window_sizes

    for section, parse_one, target in (
        ("datasets", _parse_dataset, cfg.datasets),
        ("representations", _parse_representation, cfg.representations),
        ("models", _parse_model, cfg.models),
    ):
        items = data.get(section)
        if not isinstance(items, list) or not items:
            v.fail("top level", f"{section} must be a non-empty list")
            continue
        for i, item in enumerate(items):
            parsed = parse_one(v, i, item)
            if parsed is not None:
                target.append(parsed)

    _check_unique(v, "datasets", [d.name for d in cfg.datasets])
    _check_unique(v, "representations", [r.name for r in cfg.representations])
    _check_unique(v, "models", [m.name for m in cfg.models])

    # A window-level model with no event-capable representation can never run.
    if cfg.models and cfg.representations:
        has_event_rep = any(r.event_capable for r in cfg.representations)
        for m in cfg.models:
            if m.window_level and not has_event_rep:
                v.fail(
                    "top level",
                    f"model {m.name!r} consumes fixed-length windows of event "
                    "vectors, but every configured representation is "
                    "sequence-level only (count-style vectors have no "
                    "per-event form); add an event-capable representation "
                    "or drop the model",
                )

    v.raise_if_failed()
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if data is None:
        raise ConfigError(f"config {path} is empty")
    return parse_config_dict(data)


def apply_overrides(
    config: ExperimentConfig,
    *,
    seed: int | None = None,
    output_dir: str | None = None,
    parsing: str | None = None,
    aggregation: str | None = None,
    window: int | None = None,
    stride: int | None = None,
) -> ExperimentConfig:
    """Fold command-line overrides into a loaded config (in place)."""
    if seed is not None:
        config.seed = seed
    if output_dir is not None:
        config.output_dir = output_dir
    if parsing is not None:
        # CLI speaks on/off; on = parsed templates, off = raw passthrough
        config.parsing_modes = ["parsed" if parsing == "on" else "unparsed"]
    if aggregation is not None:
        if aggregation not in AGGREGATIONS:
            raise ConfigError(f"aggregation must be mean or tfidf, got {aggregation!r}")
        config.aggregations = [aggregation]
    if window is not None:
        if window < 1:
            raise ConfigError(f"window must be >= 1, got {window}")
        config.window_sizes = [window]
    if stride is not None:
        if stride < 1:
            raise ConfigError(f"stride must be >= 1, got {stride}")
        config.stride = stride
    return config
