"""Supervised detectors trained on feature matrices.

Six families, all implemented directly on numpy so that training is
deterministic, gradients can be checked against finite differences, and
tie-breaking rules are exactly the documented ones:

* logreg       - L2-regularized logistic regression, full-batch descent
* svm_linear   - linear SVM via deterministic sub-gradient descent
* tree         - information-gain decision tree, midpoint thresholds
* forest       - bootstrap + sqrt-feature random forest over those trees
* mlp          - input -> 200 ReLU -> 2 softmax, mini-batch descent
* window_mlp   - the same network over concatenated window rows

Scores always live in [0,1]; a score of exactly 0.5 is labelled positive.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, ModelError
from .represent import FeatureMatrix

log = logging.getLogger(__name__)

DECISION_THRESHOLD = 0.5

FAMILIES = ("logreg", "svm_linear", "tree", "forest", "mlp", "window_mlp")

DEFAULT_HYPERS: dict[str, dict] = {
    "logreg": {"lam": 1e-4, "tol": 1e-6, "max_iter": 5000, "lr": 1.0},
    "svm_linear": {"lam": 1e-3, "max_iter": 2000, "lr": 1.0},
    "tree": {"max_depth": None, "min_samples": 2},
    "forest": {
        "n_trees": 100,
        "max_depth": None,
        "min_samples": 2,
        "bootstrap": True,
        "max_features": "sqrt",
    },
    "mlp": {"hidden": 200, "lr": 1e-2, "batch": 32, "epochs": 100},
    "window_mlp": {"hidden": 200, "lr": 1e-2, "batch": 32, "epochs": 100},
}

_EXPECTED_LEVEL = {family: "sequence" for family in FAMILIES}
_EXPECTED_LEVEL["window_mlp"] = "window"


@dataclass
class ModelSpec:
    family: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ConfigError(
                f"unknown model family {self.family!r}; expected one of {', '.join(FAMILIES)}"
            )
        merged = dict(DEFAULT_HYPERS[self.family])
        for key, value in self.hyperparameters.items():
            if key not in merged:
                raise ConfigError(
                    f"{self.family}: unknown hyperparameter {key!r}"
                )
            merged[key] = value
        self.hyperparameters = merged


@dataclass
class Prediction:
    unit_id: object
    score: float
    label: int


@dataclass
class TrainedModel:
    spec: ModelSpec
    input_dim: int
    input_level: str
    core: object  # family-specific learned state


def _check_two_classes(y: np.ndarray, family: str) -> None:
    if len(np.unique(y)) < 2:
        raise ModelError(f"{family}: training data contains a single class")


def _check_level(matrix: FeatureMatrix, family: str) -> None:
    expected = _EXPECTED_LEVEL[family]
    if matrix.level != expected:
        raise ConfigError(
            f"{family} expects a {expected}-level matrix, got {matrix.level}"
        )


# ---------------------------------------------------------------------------
# Linear models.


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form is stable for large |z|
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def logistic_loss_grad(
    w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, lam: float
) -> tuple[float, np.ndarray, float]:
    """Mean BCE + (lam/2)||w||^2 and its exact gradient (bias unregularized)."""
    n = len(y)
    z = X @ w + b
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * lam * (w @ w))
    p = _sigmoid(z)
    gw = X.T @ (p - y) / n + lam * w
    gb = float(np.mean(p - y))
    return loss, gw, gb


def svm_loss_grad(
    w: np.ndarray, b: float, X: np.ndarray, y_pm: np.ndarray, lam: float
) -> tuple[float, np.ndarray, float]:
    """Mean hinge + (lam/2)||w||^2 with the sub-gradient that is 0 at the kink."""
    n = len(y_pm)
    margins = y_pm * (X @ w + b)
    hinge = np.maximum(0.0, 1.0 - margins)
    loss = float(np.mean(hinge) + 0.5 * lam * (w @ w))
    active = margins < 1.0
    gw = -(X[active].T @ y_pm[active]) / n + lam * w
    gb = float(-np.sum(y_pm[active]) / n)
    return loss, gw, gb


@dataclass
class LinearCore:
    w: np.ndarray
    b: float

    def scores(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(X @ self.w + self.b)


def train_logistic(matrix: FeatureMatrix, spec: ModelSpec) -> TrainedModel:
    _check_level(matrix, "logreg")
    X, y = matrix.rows, matrix.labels.astype(np.float64)
    _check_two_classes(matrix.labels, "logreg")
    h = spec.hyperparameters
    lam, tol, max_iter = h["lam"], h["tol"], int(h["max_iter"])
    # constant step scaled by the BCE curvature bound so any feature scale
    # works; the +1 covers the implicit bias column
    curvature = (float(np.mean(np.sum(X * X, axis=1))) + 1.0) / 4.0 + lam
    step = h["lr"] / max(curvature, 1e-12)
    w = np.zeros(X.shape[1])
    b = 0.0
    for _ in range(max_iter):
        _, gw, gb = logistic_loss_grad(w, b, X, y, lam)
        if math.sqrt(float(gw @ gw) + gb * gb) < tol:
            break
        w -= step * gw
        b -= step * gb
    return TrainedModel(spec, X.shape[1], matrix.level, LinearCore(w, b))


def train_svm_linear(matrix: FeatureMatrix, spec: ModelSpec) -> TrainedModel:
    _check_level(matrix, "svm_linear")
    X = matrix.rows
    _check_two_classes(matrix.labels, "svm_linear")
    y_pm = matrix.labels.astype(np.float64) * 2.0 - 1.0
    h = spec.hyperparameters
    lam, max_iter = h["lam"], int(h["max_iter"])
    grad_scale = float(np.mean(np.linalg.norm(X, axis=1))) + 1.0
    w = np.zeros(X.shape[1])
    b = 0.0
    for t in range(max_iter):
        _, gw, gb = svm_loss_grad(w, b, X, y_pm, lam)
        step = (h["lr"] / grad_scale) / math.sqrt(t + 1.0)
        w -= step * gw
        b -= step * gb
    return TrainedModel(spec, X.shape[1], matrix.level, LinearCore(w, b))


# ---------------------------------------------------------------------------
# Trees and forests.


@dataclass
class TreeCore:
    """Nodes as parallel arrays; children are -1 at leaves."""

    feature: np.ndarray  # int, -1 for leaf
    threshold: np.ndarray
    left: np.ndarray  # int node index
    right: np.ndarray
    score: np.ndarray  # positive fraction at the node

    def scores(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(len(X))
        for i, row in enumerate(X):
            node = 0
            while self.feature[node] >= 0:
                if row[self.feature[node]] <= self.threshold[node]:
                    node = int(self.left[node])
                else:
                    node = int(self.right[node])
            out[i] = self.score[node]
        return out


def _entropy(pos: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Binary entropy in bits, elementwise, with 0*log0 = 0."""
    p = pos / n
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        hp = np.where(p > 0.0, -p * np.log2(np.where(p > 0.0, p, 1.0)), 0.0)
        hq = np.where(q > 0.0, -q * np.log2(np.where(q > 0.0, q, 1.0)), 0.0)
    return hp + hq


def best_split(
    X: np.ndarray, y: np.ndarray, features: Sequence[int] | None = None
) -> tuple[int, float, float] | None:
    """Best (feature, midpoint threshold, gain) by information gain.

    Ties break to the lowest feature index, then the lowest threshold; a gain
    that is not strictly positive yields None.  Exposed at module level so an
    exhaustive-enumeration oracle can be compared against it directly.
    """
    n = len(y)
    pos_total = float(np.sum(y))
    parent = float(_entropy(np.array(pos_total), np.array(float(n))))
    best: tuple[int, float, float] | None = None
    cols = range(X.shape[1]) if features is None else features
    for j in cols:
        values = X[:, j]
        order = np.argsort(values, kind="stable")
        v_sorted = values[order]
        y_sorted = y[order]
        boundaries = np.nonzero(v_sorted[1:] != v_sorted[:-1])[0]
        if boundaries.size == 0:
            continue
        n_left = (boundaries + 1).astype(np.float64)
        pos_left = np.cumsum(y_sorted)[boundaries].astype(np.float64)
        n_right = n - n_left
        pos_right = pos_total - pos_left
        h_left = _entropy(pos_left, n_left)
        h_right = _entropy(pos_right, n_right)
        gains = parent - (n_left / n) * h_left - (n_right / n) * h_right
        thresholds = (v_sorted[boundaries] + v_sorted[boundaries + 1]) / 2.0
        for gain, thr in zip(gains, thresholds):
            if gain > 1e-12 and (best is None or gain > best[2]):
                best = (j, float(thr), float(gain))
    return best


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int | None,
    min_samples: int,
    rng: np.random.RandomState | None = None,
    n_features_per_split: int | None = None,
) -> TreeCore:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    score: list[float] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        score.append(0.0)
        return len(feature) - 1

    def grow(idx: np.ndarray, depth: int) -> int:
        node = new_node()
        ys = y[idx]
        score[node] = float(np.mean(ys))
        if (
            len(idx) < min_samples
            or (max_depth is not None and depth >= max_depth)
            or np.all(ys == ys[0])
        ):
            return node
        cols = None
        d = X.shape[1]
        if rng is not None and n_features_per_split is not None and n_features_per_split < d:
            cols = sorted(rng.choice(d, size=n_features_per_split, replace=False).tolist())
        split = best_split(X[idx], ys, cols)
        if split is None:
            return node
        j, thr, _ = split
        mask = X[idx, j] <= thr
        feature[node] = j
        threshold[node] = thr
        left[node] = grow(idx[mask], depth + 1)
        right[node] = grow(idx[~mask], depth + 1)
        return node

    grow(np.arange(len(y)), 0)
    return TreeCore(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        score=np.array(score, dtype=np.float64),
    )


def train_tree(matrix: FeatureMatrix, spec: ModelSpec) -> TrainedModel:
    _check_level(matrix, "tree")
    if len(matrix.rows) == 0:
        raise ModelError("tree: empty training matrix")
    h = spec.hyperparameters
    core = _grow_tree(
        matrix.rows,
        matrix.labels.astype(np.float64),
        h["max_depth"],
        int(h["min_samples"]),
    )
    return TrainedModel(spec, matrix.rows.shape[1], matrix.level, core)


@dataclass
class ForestCore:
    trees: list[TreeCore]

    def scores(self, X: np.ndarray) -> np.ndarray:
        votes = np.zeros(len(X))
        for tree in self.trees:
            votes += (tree.scores(X) >= DECISION_THRESHOLD).astype(np.float64)
        return votes / len(self.trees)


def train_forest(matrix: FeatureMatrix, spec: ModelSpec) -> TrainedModel:
    _check_level(matrix, "forest")
    if len(matrix.rows) == 0:
        raise ModelError("forest: empty training matrix")
    h = spec.hyperparameters
    X, y = matrix.rows, matrix.labels.astype(np.float64)
    n, d = X.shape
    if h["max_features"] == "sqrt":
        m = max(1, int(math.sqrt(d)))
    elif h["max_features"] == "all":
        m = d
    else:
        raise ConfigError(f"forest max_features must be sqrt or all, got {h['max_features']!r}")
    seeder = np.random.RandomState(spec.seed)
    tree_seeds = seeder.randint(0, 2**31 - 1, size=int(h["n_trees"]))
    trees = []
    for tree_seed in tree_seeds:
        rng = np.random.RandomState(tree_seed)
        idx = rng.randint(0, n, size=n) if h["bootstrap"] else np.arange(n)
        trees.append(
            _grow_tree(
                X[idx],
                y[idx],
                h["max_depth"],
                int(h["min_samples"]),
                rng=rng,
                n_features_per_split=m,
            )
        )
    return TrainedModel(spec, d, matrix.level, ForestCore(trees))


# ---------------------------------------------------------------------------
# MLPs.


def _log_softmax(Z: np.ndarray) -> np.ndarray:
    shifted = Z - Z.max(axis=1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))


def mlp_loss_grad(
    params: dict[str, np.ndarray], X: np.ndarray, y: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy of input->ReLU->softmax(2) and its exact gradients."""
    n = len(y)
    Z1 = X @ params["W1"] + params["b1"]
    A1 = np.maximum(Z1, 0.0)
    Z2 = A1 @ params["W2"] + params["b2"]
    logp = _log_softmax(Z2)
    loss = float(-np.mean(logp[np.arange(n), y]))
    P = np.exp(logp)
    dZ2 = P.copy()
    dZ2[np.arange(n), y] -= 1.0
    dZ2 /= n
    dA1 = dZ2 @ params["W2"].T
    dZ1 = dA1 * (Z1 > 0.0)
    grads = {
        "W1": X.T @ dZ1,
        "b1": dZ1.sum(axis=0),
        "W2": A1.T @ dZ2,
        "b2": dZ2.sum(axis=0),
    }
    return loss, grads


@dataclass
class MlpCore:
    params: dict[str, np.ndarray]

    def scores(self, X: np.ndarray) -> np.ndarray:
        Z1 = X @ self.params["W1"] + self.params["b1"]
        A1 = np.maximum(Z1, 0.0)
        Z2 = A1 @ self.params["W2"] + self.params["b2"]
        return np.exp(_log_softmax(Z2))[:, 1]


def init_mlp_params(rng: np.random.RandomState, dim: int, hidden: int) -> dict[str, np.ndarray]:
    return {
        "W1": rng.randn(dim, hidden) * math.sqrt(2.0 / max(dim, 1)),
        "b1": np.zeros(hidden),
        "W2": rng.randn(hidden, 2) * math.sqrt(1.0 / hidden),
        "b2": np.zeros(2),
    }


def _train_mlp_core(matrix: FeatureMatrix, spec: ModelSpec, family: str) -> TrainedModel:
    _check_level(matrix, family)
    X = matrix.rows
    y = matrix.labels.astype(np.int64)
    _check_two_classes(y, family)
    h = spec.hyperparameters
    hidden, lr = int(h["hidden"]), h["lr"]
    batch, epochs = int(h["batch"]), int(h["epochs"])
    n = len(y)
    rng = np.random.RandomState(spec.seed)
    params = init_mlp_params(rng, X.shape[1], hidden)
    for _ in range(epochs):
        if batch >= n:
            batches = [np.arange(n)]
        else:
            perm = rng.permutation(n)
            batches = [perm[i : i + batch] for i in range(0, n, batch)]
        for idx in batches:
            _, grads = mlp_loss_grad(params, X[idx], y[idx])
            for key in params:
                params[key] -= lr * grads[key]
    return TrainedModel(spec, X.shape[1], matrix.level, MlpCore(params))


def train_mlp(matrix: FeatureMatrix, spec: ModelSpec) -> TrainedModel:
    return _train_mlp_core(matrix, spec, "mlp")


def train_window_mlp(matrix: FeatureMatrix, spec: ModelSpec) -> TrainedModel:
    return _train_mlp_core(matrix, spec, "window_mlp")


# ---------------------------------------------------------------------------
# Shared entry points.

_TRAINERS = {
    "logreg": train_logistic,
    "svm_linear": train_svm_linear,
    "tree": train_tree,
    "forest": train_forest,
    "mlp": train_mlp,
    "window_mlp": train_window_mlp,
}


def train(matrix: FeatureMatrix, spec: ModelSpec) -> TrainedModel:
    return _TRAINERS[spec.family](matrix, spec)


def predict(model: TrainedModel, matrix: FeatureMatrix) -> list[Prediction]:
    if matrix.level != model.input_level:
        raise ModelError(
            f"model expects {model.input_level}-level input, got {matrix.level}"
        )
    if matrix.rows.shape[1] != model.input_dim:
        raise ModelError(
            f"model expects {model.input_dim} features, matrix has {matrix.rows.shape[1]}"
        )
    if len(matrix.rows) == 0:
        return []
    scores = np.clip(model.core.scores(matrix.rows), 0.0, 1.0)
    return [
        Prediction(unit_id=uid, score=float(s), label=int(s >= DECISION_THRESHOLD))
        for uid, s in zip(matrix.unit_ids, scores)
    ]


# ---------------------------------------------------------------------------
# Checkpoints: versioned text, floats as shortest round-trip decimals.

_MAGIC = "logrep-model v1"


def _core_arrays(model: TrainedModel) -> dict[str, np.ndarray]:
    core = model.core
    if isinstance(core, LinearCore):
        return {"w": core.w, "b": np.array([core.b])}
    if isinstance(core, TreeCore):
        return _tree_arrays("", core)
    if isinstance(core, ForestCore):
        out: dict[str, np.ndarray] = {}
        for i, tree in enumerate(core.trees):
            out.update(_tree_arrays(f"t{i}_", tree))
        return out
    if isinstance(core, MlpCore):
        return dict(core.params)
    raise ModelError(f"cannot serialize core of type {type(core).__name__}")


def _tree_arrays(prefix: str, tree: TreeCore) -> dict[str, np.ndarray]:
    return {
        f"{prefix}feature": tree.feature,
        f"{prefix}threshold": tree.threshold,
        f"{prefix}left": tree.left,
        f"{prefix}right": tree.right,
        f"{prefix}score": tree.score,
    }


def _tree_from_arrays(prefix: str, arrays: dict[str, np.ndarray]) -> TreeCore:
    return TreeCore(
        feature=arrays[f"{prefix}feature"].astype(np.int64),
        threshold=arrays[f"{prefix}threshold"],
        left=arrays[f"{prefix}left"].astype(np.int64),
        right=arrays[f"{prefix}right"].astype(np.int64),
        score=arrays[f"{prefix}score"],
    )


def _format_hyper(value: object) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_hyper(text: str) -> object:
    if text == "none":
        return None
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def save_model(model: TrainedModel, path: str | Path) -> None:
    arrays = _core_arrays(model)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_MAGIC + "\n")
        fh.write(f"family {model.spec.family}\n")
        fh.write(f"seed {model.spec.seed}\n")
        fh.write(f"input_dim {model.input_dim}\n")
        fh.write(f"input_level {model.input_level}\n")
        for name in sorted(model.spec.hyperparameters):
            fh.write(f"hyper {name} {_format_hyper(model.spec.hyperparameters[name])}\n")
        for name, arr in arrays.items():
            kind = "int" if np.issubdtype(arr.dtype, np.integer) else "float"
            shape = " ".join(str(s) for s in arr.shape)
            fh.write(f"array {name} {kind} {shape}\n")
            flat = arr.reshape(-1)
            for v in flat:
                fh.write((str(int(v)) if kind == "int" else repr(float(v))) + "\n")
        fh.write("end\n")


def load_model(path: str | Path) -> TrainedModel:
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ModelError(f"cannot read checkpoint {path}: {exc}") from exc
    with fh:
        if fh.readline().rstrip("\n") != _MAGIC:
            raise ModelError(f"{path}: not a model checkpoint (bad magic line)")
        meta: dict[str, str] = {}
        hypers: dict[str, object] = {}
        arrays: dict[str, np.ndarray] = {}
        line = fh.readline()
        while line:
            line = line.rstrip("\n")
            if line == "end":
                break
            parts = line.split(" ")
            if parts[0] == "hyper":
                hypers[parts[1]] = _parse_hyper(parts[2])
            elif parts[0] == "array":
                name, kind = parts[1], parts[2]
                shape = tuple(int(s) for s in parts[3:])
                count = int(np.prod(shape)) if shape else 1
                values = [fh.readline().rstrip("\n") for _ in range(count)]
                if kind == "int":
                    arr = np.array([int(v) for v in values], dtype=np.int64)
                else:
                    arr = np.array([float(v) for v in values], dtype=np.float64)
                arrays[name] = arr.reshape(shape)
            else:
                meta[parts[0]] = " ".join(parts[1:])
            line = fh.readline()
        else:
            raise ModelError(f"{path}: truncated checkpoint (missing end marker)")

    try:
        family = meta["family"]
        spec = ModelSpec(family=family, hyperparameters=hypers, seed=int(meta["seed"]))
        input_dim = int(meta["input_dim"])
        input_level = meta["input_level"]
    except KeyError as exc:
        raise ModelError(f"{path}: checkpoint missing field {exc}") from exc

    core: object
    if family in ("logreg", "svm_linear"):
        core = LinearCore(w=arrays["w"], b=float(arrays["b"][0]))
    elif family == "tree":
        core = _tree_from_arrays("", arrays)
    elif family == "forest":
        n_trees = int(spec.hyperparameters["n_trees"])
        core = ForestCore([_tree_from_arrays(f"t{i}_", arrays) for i in range(n_trees)])
    else:
        core = MlpCore({k: arrays[k] for k in ("W1", "b1", "W2", "b2")})
    return TrainedModel(spec, input_dim, input_level, core)
