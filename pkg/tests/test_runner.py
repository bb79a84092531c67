import csv

import numpy as np
import pytest

from logrep.config import ExperimentConfig, parse_config_dict
from logrep.errors import ConfigError
from logrep.parser import ParserConfig, parse_corpus
from logrep.corpus import read_raw_logs
from logrep.runner import Cell, ExperimentRunner, enumerate_cells, run_experiment
from logrep.synth import SynthSpec, generate_synthetic


@pytest.fixture
def dataset(tmp_path):
    res = generate_synthetic(
        SynthSpec(n_templates=6, n_sessions=80, seed=11), tmp_path / "data" / "synth"
    )
    return res


def config_dict(res, out, **over):
    data = {
        "seed": 11,
        "output_dir": str(out),
        "datasets": [
            {
                "name": "synth",
                "path": str(res.log_path),
                "line_pattern": res.line_pattern,
                "timestamp_format": "epoch",
                "label_source": "file",
                "label_file": str(res.labels_path),
                "grouping": {"strategy": "id"},
                "split": {"ratio": 0.7, "mode": "shuffled", "seed": 11},
            }
        ],
        "representations": [
            {"name": "mcv", "kind": "mcv"},
            {"name": "tfidf-id", "kind": "tfidf_id"},
        ],
        "models": [
            {"name": "lr", "family": "logreg"},
            {"name": "dt", "family": "tree"},
        ],
    }
    data.update(over)
    return data


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# grid enumeration


def test_grid_is_the_full_cross_product(dataset, tmp_path):
    cfg = parse_config_dict(config_dict(dataset, tmp_path / "out"))
    cells = enumerate_cells(cfg)
    # 1 dataset x 1 parsing x 2 reps x 2 models
    assert len(cells) == 4
    assert {(c.representation, c.model) for c in cells} == {
        ("mcv", "lr"), ("mcv", "dt"), ("tfidf-id", "lr"), ("tfidf-id", "dt"),
    }
    assert all(c.window is None and c.aggregation == "none" for c in cells)


def test_grid_aggregation_axis_only_for_static_embeddings(dataset, tmp_path):
    table = tmp_path / "static.vec"
    table.write_text("1 2\nhello 0.1 0.2\n", encoding="utf-8")
    cfg = parse_config_dict(
        config_dict(
            dataset,
            tmp_path / "out",
            aggregations=["mean", "tfidf"],
            representations=[
                {"name": "mcv", "kind": "mcv"},
                {"name": "w2v", "kind": "static_embedding", "table": str(table)},
            ],
            models=[{"name": "lr", "family": "logreg"}],
        )
    )
    cells = enumerate_cells(cfg)
    by_rep: dict[str, set[str]] = {}
    for c in cells:
        by_rep.setdefault(c.representation, set()).add(c.aggregation)
    assert by_rep == {"mcv": {"none"}, "w2v": {"mean", "tfidf"}}


def test_grid_window_models_pair_only_with_event_representations(dataset, tmp_path):
    table = tmp_path / "ctx.vec"
    table.write_text("1 2\nT#3 0.1 0.2\n", encoding="utf-8")
    cfg = parse_config_dict(
        config_dict(
            dataset,
            tmp_path / "out",
            window_sizes=[5, 10],
            representations=[
                {"name": "mcv", "kind": "mcv"},
                {"name": "ctx", "kind": "contextual_embedding", "table": str(table)},
            ],
            models=[
                {"name": "lr", "family": "logreg"},
                {"name": "wm", "family": "window_mlp"},
            ],
        )
    )
    cells = enumerate_cells(cfg)
    window_cells = [c for c in cells if c.model == "wm"]
    assert {c.representation for c in window_cells} == {"ctx"}
    assert sorted(c.window for c in window_cells) == [5, 10]
    # sequence models never carry a window
    assert all(c.window is None for c in cells if c.model == "lr")


def test_grid_stride_defaults_to_window(dataset, tmp_path):
    table = tmp_path / "ctx.vec"
    table.write_text("1 2\nT#3 0.1 0.2\n", encoding="utf-8")
    cfg = parse_config_dict(
        config_dict(
            dataset,
            tmp_path / "out",
            window_sizes=[8],
            representations=[
                {"name": "ctx", "kind": "contextual_embedding", "table": str(table)}
            ],
            models=[{"name": "wm", "family": "window_mlp"}],
        )
    )
    cells = enumerate_cells(cfg)
    assert cells[0].stride == 8
    cfg.stride = 2
    assert enumerate_cells(cfg)[0].stride == 2


def test_empty_grid_rejected():
    with pytest.raises(ConfigError, match="empty grid"):
        enumerate_cells(ExperimentConfig())


# ---------------------------------------------------------------------------
# running cells


def test_run_writes_one_row_per_cell(dataset, tmp_path):
    cfg = parse_config_dict(config_dict(dataset, tmp_path / "out"))
    results = run_experiment(cfg)
    rows = read_rows(results)
    assert len(rows) == 4
    for row in rows:
        assert row["dataset"] == "synth"
        assert 0.0 <= float(row["f1"]) <= 1.0
        assert row["degenerate"] in ("0", "1")
    # this corpus is cleanly separable, so the detectors should do well
    assert all(float(row["f1"]) > 0.9 for row in rows)


def test_run_is_deterministic(dataset, tmp_path):
    a = run_experiment(parse_config_dict(config_dict(dataset, tmp_path / "a")))
    b = run_experiment(parse_config_dict(config_dict(dataset, tmp_path / "b")))
    assert a.read_bytes() == b.read_bytes()


def test_rerun_into_same_directory_adds_nothing(dataset, tmp_path):
    cfg = parse_config_dict(config_dict(dataset, tmp_path / "out"))
    results = run_experiment(cfg)
    before = results.read_bytes()
    run_experiment(parse_config_dict(config_dict(dataset, tmp_path / "out")))
    assert results.read_bytes() == before


def test_resume_appends_only_new_cells(dataset, tmp_path):
    small = config_dict(dataset, tmp_path / "out", models=[{"name": "lr", "family": "logreg"}])
    results = run_experiment(parse_config_dict(small))
    first = read_rows(results)
    assert len(first) == 2

    grown = config_dict(dataset, tmp_path / "out")  # adds the tree model
    run_experiment(parse_config_dict(grown))
    rows = read_rows(results)
    assert len(rows) == 4
    # previously computed rows are untouched and still come first
    assert rows[:2] == first
    assert {r["model"] for r in rows[2:]} == {"dt"}


def test_failed_cell_is_recorded_and_the_rest_proceed(dataset, tmp_path):
    cfg = parse_config_dict(
        config_dict(
            dataset,
            tmp_path / "out",
            representations=[
                {"name": "mcv", "kind": "mcv"},
                {
                    "name": "ghost",
                    "kind": "static_embedding",
                    "table": str(tmp_path / "missing.vec"),
                },
            ],
            models=[{"name": "lr", "family": "logreg"}],
        )
    )
    results = run_experiment(cfg)
    rows = read_rows(results)
    assert [r["representation"] for r in rows] == ["mcv"]

    failures = read_rows(results.parent / "failures.csv")
    assert len(failures) == 1
    assert failures[0]["representation"] == "ghost"
    assert "missing.vec" in failures[0]["error"]


def test_parallel_run_matches_serial_bytes(dataset, tmp_path):
    serial = run_experiment(parse_config_dict(config_dict(dataset, tmp_path / "s")))
    parallel = run_experiment(
        parse_config_dict(config_dict(dataset, tmp_path / "p", workers=3))
    )
    assert serial.read_bytes() == parallel.read_bytes()


def test_parse_artifacts_written(dataset, tmp_path):
    cfg = parse_config_dict(config_dict(dataset, tmp_path / "out"))
    run_experiment(cfg)
    out = tmp_path / "out"
    assert (out / "templates_synth_parsed.tsv").exists()
    assert (out / "events_synth_parsed.csv").exists()
    assert (out / "manifest_synth.csv").exists()


def test_export_matrices_flag_writes_matrix_files(dataset, tmp_path):
    cfg = parse_config_dict(
        config_dict(
            dataset,
            tmp_path / "out",
            export_matrices=True,
            models=[{"name": "lr", "family": "logreg"}],
            representations=[{"name": "mcv", "kind": "mcv"}],
        )
    )
    run_experiment(cfg)
    out = tmp_path / "out"
    assert (out / "matrix_synth_parsed_mcv_none_train.csv").exists()
    assert (out / "matrix_synth_parsed_mcv_none_test.csv").exists()


def test_window_cells_report_session_level_metrics(dataset, tmp_path):
    # build the contextual table against the ids this corpus actually parses to
    records = read_raw_logs(dataset.log_path, dataset.line_pattern).records
    _, store = parse_corpus(records, ParserConfig())
    rng = np.random.RandomState(99)
    lines = []
    for t in store.real_templates():
        vec = rng.choice([-1.0, 1.0], size=4) * 1.5
        lines.append(f"T#{t.template_id} " + " ".join(repr(float(v)) for v in vec))
    table = tmp_path / "ctx.vec"
    table.write_text(
        f"{len(lines)} 4\n" + "".join(line + "\n" for line in lines), encoding="utf-8"
    )

    cfg = parse_config_dict(
        config_dict(
            dataset,
            tmp_path / "out",
            window_sizes=[6],
            stride=3,
            representations=[
                {"name": "ctx", "kind": "contextual_embedding", "table": str(table)}
            ],
            models=[
                {
                    "name": "wm",
                    "family": "window_mlp",
                    "hyperparameters": {"epochs": 50, "lr": 0.05, "hidden": 32},
                }
            ],
        )
    )
    results = run_experiment(cfg)
    rows = read_rows(results)
    assert len(rows) == 1
    assert rows[0]["window"] == "6"
    assert rows[0]["stride"] == "3"
    assert 0.0 <= float(rows[0]["f1"]) <= 1.0


def test_unparsed_mode_runs_the_same_grid(dataset, tmp_path):
    cfg = parse_config_dict(
        config_dict(
            dataset,
            tmp_path / "out",
            parsing=["parsed", "unparsed"],
            models=[{"name": "lr", "family": "logreg"}],
            representations=[{"name": "mcv", "kind": "mcv"}],
        )
    )
    results = run_experiment(cfg)
    rows = read_rows(results)
    assert {r["parsing"] for r in rows} == {"parsed", "unparsed"}


# ---------------------------------------------------------------------------
# cell cache behaviour


def test_matrices_are_cached_per_cell_shape(dataset, tmp_path):
    cfg = parse_config_dict(config_dict(dataset, tmp_path / "out"))
    runner = ExperimentRunner(cfg)
    cell = Cell("synth", "lr", "mcv", "none", "parsed")
    first = runner.matrices(cell)
    again = runner.matrices(Cell("synth", "dt", "mcv", "none", "parsed"))
    # same dataset/rep/parsing: the same matrix pair object serves both models
    assert first[0] is again[0]
    assert first[1] is again[1]
