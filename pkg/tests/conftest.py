import numpy as np
import pytest

from logrep.represent import FeatureMatrix


@pytest.fixture
def make_matrix():
    """Build a FeatureMatrix from plain lists, defaulting to sequence level."""

    def _make(rows, labels, level="sequence", unit_ids=None, tag="test"):
        if unit_ids is None:
            unit_ids = list(range(len(labels)))
        return FeatureMatrix(
            level=level,
            rows=np.asarray(rows, dtype=np.float64),
            labels=np.asarray(labels),
            pipeline_tag=tag,
            unit_ids=unit_ids,
        )

    return _make


@pytest.fixture
def write_log(tmp_path):
    """Write lines to a temp log file and return its path."""

    def _write(lines, name="corpus.log"):
        path = tmp_path / name
        path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        return path

    return _write
