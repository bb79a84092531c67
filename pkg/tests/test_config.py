import pytest

from logrep.config import (
    DATASET_DEFAULTS,
    apply_overrides,
    load_config,
    parse_config_dict,
)
from logrep.errors import ConfigError


def minimal(**over):
    data = {
        "datasets": [
            {
                "name": "mylogs",
                "path": "/data/mylogs.log",
                "line_pattern": r"^(?P<content>.*)$",
                "label_source": "derived",
            }
        ],
        "representations": [{"name": "mcv", "kind": "mcv"}],
        "models": [{"name": "lr", "family": "logreg"}],
    }
    data.update(over)
    return data


# ---------------------------------------------------------------------------
# well-known dataset defaults


def test_hdfs_defaults():
    cfg = parse_config_dict(
        minimal(
            datasets=[
                {
                    "name": "HDFS",
                    "path": "/data/hdfs.log",
                    "line_pattern": r"^(?P<content>.*)$",
                    "label_source": "derived",
                }
            ]
        )
    )
    ds = cfg.datasets[0]
    assert ds.grouping.strategy == "id"
    assert ds.split.ratio == 0.7
    assert ds.split.mode == "shuffled"
    assert ds.window == 30
    assert ds.stride == 1


def test_bgl_defaults():
    cfg = parse_config_dict(
        minimal(
            datasets=[
                {
                    "name": "bgl",
                    "path": "/data/bgl.log",
                    "line_pattern": r"^(?P<content>.*)$",
                    "label_source": "derived",
                }
            ]
        )
    )
    ds = cfg.datasets[0]
    assert ds.grouping.strategy == "time"
    assert ds.grouping.window_seconds == 6 * 3600
    assert ds.split.ratio == 0.8
    assert ds.window == 50


def test_thunderbird_defaults():
    cfg = parse_config_dict(
        minimal(
            datasets=[
                {
                    "name": "thunderbird",
                    "path": "/data/tb.log",
                    "line_pattern": r"^(?P<content>.*)$",
                    "label_source": "derived",
                }
            ]
        )
    )
    ds = cfg.datasets[0]
    assert ds.grouping.strategy == "count"
    assert ds.grouping.n_lines == 100
    assert ds.split.mode == "sequential"


def test_explicit_values_beat_defaults():
    cfg = parse_config_dict(
        minimal(
            datasets=[
                {
                    "name": "hdfs",
                    "path": "/data/hdfs.log",
                    "line_pattern": r"^(?P<content>.*)$",
                    "label_source": "derived",
                    "window": 99,
                    "split": {"ratio": 0.5},
                }
            ]
        )
    )
    ds = cfg.datasets[0]
    assert ds.window == 99
    assert ds.split.ratio == 0.5
    # untouched defaults remain
    assert ds.grouping.strategy == "id"


def test_unknown_dataset_gets_fallbacks():
    cfg = parse_config_dict(minimal())
    ds = cfg.datasets[0]
    assert ds.name not in DATASET_DEFAULTS
    assert ds.grouping.strategy == "id"
    assert ds.window == 10
    assert ds.stride is None


# ---------------------------------------------------------------------------
# exhaustive validation


def test_every_error_reported_in_one_pass():
    data = minimal(
        seed="notanint",
        workers=0,
        datasets=[
            {
                "name": "d",
                "path": "/x",
                "line_pattern": "p",
                "label_source": "file",
                # label_file missing
                "window": 0,
            }
        ],
        representations=[{"name": "r", "kind": "unknown_kind"}],
        models=[{"name": "m", "family": "notafamily"}],
    )
    with pytest.raises(ConfigError) as err:
        parse_config_dict(data)
    text = str(err.value)
    for fragment in (
        "seed",
        "workers",
        "label_file",
        "window",
        "kind",
        "family",
    ):
        assert fragment in text, fragment


def test_unknown_top_level_key_rejected():
    with pytest.raises(ConfigError, match="unknown key 'grid'"):
        parse_config_dict(minimal(grid=True))


def test_unknown_dataset_key_rejected():
    data = minimal()
    data["datasets"][0]["colour"] = "blue"
    with pytest.raises(ConfigError, match="colour"):
        parse_config_dict(data)


def test_duplicate_names_rejected():
    data = minimal(
        models=[
            {"name": "m", "family": "logreg"},
            {"name": "m", "family": "tree"},
        ]
    )
    with pytest.raises(ConfigError, match="duplicate name 'm'"):
        parse_config_dict(data)


def test_model_hyperparameters_checked_at_parse_time():
    data = minimal(models=[{"name": "m", "family": "logreg", "hyperparameters": {"zeta": 1}}])
    with pytest.raises(ConfigError, match="zeta"):
        parse_config_dict(data)


def test_embedding_representation_needs_table():
    data = minimal(representations=[{"name": "emb", "kind": "static_embedding"}])
    with pytest.raises(ConfigError, match="table"):
        parse_config_dict(data)


def test_window_model_without_event_representation_rejected():
    data = minimal(
        representations=[{"name": "mcv", "kind": "mcv"}],
        models=[{"name": "wm", "family": "window_mlp"}],
    )
    with pytest.raises(ConfigError, match="sequence-level only"):
        parse_config_dict(data)


def test_window_model_with_event_representation_accepted():
    data = minimal(
        representations=[
            {"name": "ctx", "kind": "contextual_embedding", "table": "/t.vec"}
        ],
        models=[{"name": "wm", "family": "window_mlp"}],
    )
    cfg = parse_config_dict(data)
    assert cfg.models[0].window_level


def test_empty_sections_rejected():
    with pytest.raises(ConfigError, match="datasets must be a non-empty list"):
        parse_config_dict(minimal(datasets=[]))


def test_bad_parsing_mode_rejected():
    with pytest.raises(ConfigError, match="parsed or unparsed"):
        parse_config_dict(minimal(parsing=["sideways"]))


def test_parsing_accepts_scalar_shorthand():
    cfg = parse_config_dict(minimal(parsing="unparsed"))
    assert cfg.parsing_modes == ["unparsed"]


def test_window_sizes_must_be_positive_ints():
    with pytest.raises(ConfigError, match="window_sizes"):
        parse_config_dict(minimal(window_sizes=[10, 0]))
    cfg = parse_config_dict(minimal(window_sizes=[5, 10]))
    assert cfg.window_sizes == [5, 10]


def test_parser_section_validated():
    with pytest.raises(ConfigError, match="depth"):
        parse_config_dict(minimal(parser={"depth": 2}))


def test_parser_mask_rules_parsed():
    cfg = parse_config_dict(
        minimal(
            parser={
                "mask_rules": [
                    {"name": "ip", "pattern": r"\d+\.\d+\.\d+\.\d+"},
                ]
            }
        )
    )
    assert cfg.parser.mask_rules[0].name == "ip"
    assert cfg.parser.mask_rules[0].replacement == "<*>"


def test_parser_mask_rule_bad_regex_reported():
    data = minimal(parser={"mask_rules": [{"name": "bad", "pattern": "("}]})
    with pytest.raises(ConfigError, match="mask_rules"):
        parse_config_dict(data)


# ---------------------------------------------------------------------------
# file loading


def test_load_config_from_yaml(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(
        """
seed: 3
datasets:
  - name: d
    path: /x.log
    line_pattern: "^(?P<content>.*)$"
    label_source: derived
representations:
  - name: mcv
    kind: mcv
models:
  - name: lr
    family: logreg
""",
        encoding="utf-8",
    )
    cfg = load_config(path)
    assert cfg.seed == 3
    assert cfg.datasets[0].name == "d"


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.yaml")


def test_load_config_invalid_yaml(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("seed: [unclosed\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="cannot parse"):
        load_config(path)


def test_load_config_empty_file(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("", encoding="utf-8")
    with pytest.raises(ConfigError, match="empty"):
        load_config(path)


# ---------------------------------------------------------------------------
# command-line overrides


def test_overrides_replace_lists():
    cfg = parse_config_dict(minimal())
    apply_overrides(cfg, seed=99, parsing="off", aggregation="tfidf", window=20, stride=5)
    assert cfg.seed == 99
    assert cfg.parsing_modes == ["unparsed"]
    assert cfg.aggregations == ["tfidf"]
    assert cfg.window_sizes == [20]
    assert cfg.stride == 5


def test_overrides_leave_untouched_fields():
    cfg = parse_config_dict(minimal(seed=7))
    apply_overrides(cfg, output_dir="/elsewhere")
    assert cfg.seed == 7
    assert cfg.output_dir == "/elsewhere"


def test_overrides_validate_values():
    cfg = parse_config_dict(minimal())
    with pytest.raises(ConfigError, match="aggregation"):
        apply_overrides(cfg, aggregation="median")
    with pytest.raises(ConfigError, match="window"):
        apply_overrides(cfg, window=0)
