"""Five from-scratch classifiers over encoded feature rows.

Each trainer consumes a dense float matrix X (rows already one-hot
encoded and min-max normalized) and a 0/1 label vector y, and returns a
small serializable model.  ``score`` maps a model and a row to the
model's confidence that the row belongs to class 1; ``predict`` applies
a threshold to that score.  All stochastic choices flow through a
numpy Generator seeded from the training config, so identical inputs
produce bit-identical models.

Implemented learners:

* decision tree - CART with Gini impurity and midpoint thresholds
* gaussian naive bayes - per-class feature means and floored variances
* k nearest neighbours - Euclidean distance, stable tie handling
* linear SVM - Pegasos-style stochastic subgradient descent
* logistic regression - full-batch gradient descent with L2 penalty
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ALGORITHMS = ("tree", "gnb", "knn", "svm", "logreg")

MODEL_FORMAT = "triagekit-model"
MODEL_VERSION = 1


class DegenerateClassError(ValueError):
    """Training data holds a single class where two are required."""


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for all learners; unused fields are ignored.

    Defaults are the values used throughout the experiments: k=5
    neighbours, an unbounded tree, and small fixed step/penalty terms
    for the two linear models.
    """

    algorithm: str = "tree"
    k_neighbors: int = 5
    tree_max_depth: int | None = None
    tree_min_leaf: int = 1
    svm_lambda: float = 1e-4
    svm_epochs: int = 200
    lr_rate: float = 0.1
    lr_epochs: int = 500
    lr_l2: float = 1e-4
    gnb_var_floor_scale: float = 1e-9
    seed: int = 0

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm: {self.algorithm!r}")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if self.tree_min_leaf < 1:
            raise ValueError("tree_min_leaf must be >= 1")


def _as_matrix(X: Sequence[Sequence[float]], y: Sequence[int]):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2:
        raise ValueError(f"X must be 2-D, got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise ValueError(f"y length {y.shape} does not match {X.shape[0]} rows")
    if X.shape[0] == 0:
        raise ValueError("cannot train on an empty dataset")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return X, y


def _require_both_classes(y: np.ndarray, algorithm: str) -> None:
    if len(np.unique(y)) < 2:
        raise DegenerateClassError(
            f"{algorithm} needs both classes present; got only class {int(y[0])}"
        )


# ---------------------------------------------------------------------------
# decision tree
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class TreeNode:
    """Flat-array tree node; feature == -1 marks a leaf."""

    feature: int
    threshold: float
    left: int
    right: int
    class1_fraction: float


@dataclass(eq=False)
class TreeModel:
    algorithm: str
    nodes: list[TreeNode]

    def to_dict(self) -> dict:
        return {"nodes": [
            [n.feature, n.threshold, n.left, n.right, n.class1_fraction]
            for n in self.nodes
        ]}

    @classmethod
    def from_dict(cls, data: dict) -> "TreeModel":
        nodes = [TreeNode(int(f), float(t), int(l), int(r), float(p))
                 for f, t, l, r, p in data["nodes"]]
        return cls(algorithm="tree", nodes=nodes)


def _gini(counts1: np.ndarray, totals: np.ndarray) -> np.ndarray:
    """Gini impurity for vectors of class-1 counts and node sizes."""
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(totals > 0, counts1 / totals, 0.0)
    return 2.0 * p * (1.0 - p)


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int):
    """Exhaustive CART scan over midpoint thresholds.

    Returns (feature, threshold) or None.  Ties keep the lowest feature
    index and, within a feature, the lowest threshold, because later
    candidates must beat the incumbent strictly.
    """
    n = len(y)
    total1 = int(y.sum())
    parent = _gini(np.array([total1]), np.array([n]))[0]
    best_gain = 0.0
    best = None

    for j in range(X.shape[1]):
        col = X[:, j]
        order = np.argsort(col, kind="stable")
        sorted_vals = col[order]
        sorted_y = y[order]
        # prefix[i] = class-1 count among the first i sorted rows
        prefix = np.concatenate(([0], np.cumsum(sorted_y)))

        # split positions: boundaries between distinct adjacent values
        distinct = np.nonzero(sorted_vals[1:] > sorted_vals[:-1])[0] + 1
        if distinct.size == 0:
            continue
        left_n = distinct
        right_n = n - left_n
        valid = (left_n >= min_leaf) & (right_n >= min_leaf)
        if not valid.any():
            continue
        left_n = left_n[valid]
        right_n = right_n[valid]
        positions = distinct[valid]

        left1 = prefix[positions]
        right1 = total1 - left1
        weighted = (left_n * _gini(left1, left_n)
                    + right_n * _gini(right1, right_n)) / n
        gains = parent - weighted

        idx = int(np.argmax(gains))  # first max = lowest threshold
        if gains[idx] > best_gain + 1e-12:
            best_gain = float(gains[idx])
            pos = positions[idx]
            threshold = (sorted_vals[pos - 1] + sorted_vals[pos]) / 2.0
            best = (j, float(threshold))
    return best


def train_tree(X, y, config: TrainConfig) -> TreeModel:
    """Grow a CART tree; rows with value <= threshold go left."""
    X, y = _as_matrix(X, y)
    nodes: list[TreeNode] = []

    def grow(rows: np.ndarray, depth: int) -> int:
        sub_y = y[rows]
        fraction = float(sub_y.mean())
        index = len(nodes)
        nodes.append(TreeNode(-1, 0.0, -1, -1, fraction))

        if fraction in (0.0, 1.0):
            return index
        if config.tree_max_depth is not None and depth >= config.tree_max_depth:
            return index
        if len(rows) < 2 * config.tree_min_leaf:
            return index
        split = _best_split(X[rows], sub_y, config.tree_min_leaf)
        if split is None:
            return index

        feature, threshold = split
        mask = X[rows, feature] <= threshold
        left = grow(rows[mask], depth + 1)
        right = grow(rows[~mask], depth + 1)
        nodes[index] = TreeNode(feature, threshold, left, right, fraction)
        return index

    grow(np.arange(len(y)), 0)
    return TreeModel(algorithm="tree", nodes=nodes)


def _tree_score(model: TreeModel, row: np.ndarray) -> float:
    node = model.nodes[0]
    while node.feature != -1:
        node = model.nodes[node.left if row[node.feature] <= node.threshold
                           else node.right]
    return node.class1_fraction


# ---------------------------------------------------------------------------
# gaussian naive bayes
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class GnbModel:
    algorithm: str
    log_priors: np.ndarray     # shape (2,)
    means: np.ndarray          # shape (2, d)
    variances: np.ndarray      # shape (2, d), floored > 0

    def to_dict(self) -> dict:
        return {
            "log_priors": self.log_priors.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GnbModel":
        return cls(
            algorithm="gnb",
            log_priors=np.asarray(data["log_priors"], dtype=np.float64),
            means=np.asarray(data["means"], dtype=np.float64),
            variances=np.asarray(data["variances"], dtype=np.float64),
        )


def train_gnb(X, y, config: TrainConfig) -> GnbModel:
    """Per-class Gaussian fit with a variance floor.

    The floor is ``gnb_var_floor_scale`` times the largest per-feature
    variance of the whole training set, so constant features inside one
    class cannot zero out a likelihood; if every feature is constant the
    scale itself becomes the floor.
    """
    X, y = _as_matrix(X, y)
    _require_both_classes(y, "gnb")

    overall = float(X.var(axis=0).max())
    floor = config.gnb_var_floor_scale * overall
    if floor <= 0.0:
        floor = config.gnb_var_floor_scale

    means = np.empty((2, X.shape[1]))
    variances = np.empty((2, X.shape[1]))
    log_priors = np.empty(2)
    n = len(y)
    for cls in (0, 1):
        rows = X[y == cls]
        means[cls] = rows.mean(axis=0)
        variances[cls] = np.maximum(rows.var(axis=0), floor)
        log_priors[cls] = math.log(len(rows) / n)
    return GnbModel(algorithm="gnb", log_priors=log_priors,
                    means=means, variances=variances)


def _gnb_log_joint(model: GnbModel, rows: np.ndarray) -> np.ndarray:
    """log p(x, class) for each row and class; shape (n, 2)."""
    out = np.empty((rows.shape[0], 2))
    for cls in (0, 1):
        var = model.variances[cls]
        diff = rows - model.means[cls]
        log_lik = -0.5 * (np.log(2.0 * np.pi * var) + diff * diff / var)
        out[:, cls] = model.log_priors[cls] + log_lik.sum(axis=1)
    return out


def _gnb_scores(model: GnbModel, rows: np.ndarray) -> np.ndarray:
    joint = _gnb_log_joint(model, rows)
    # p(class 1 | x) without leaving log space until the last step
    return np.exp(joint[:, 1] - np.logaddexp(joint[:, 0], joint[:, 1]))


# ---------------------------------------------------------------------------
# k nearest neighbours
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class KnnModel:
    algorithm: str
    k: int
    train_X: np.ndarray
    train_y: np.ndarray

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "train_X": self.train_X.tolist(),
            "train_y": self.train_y.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KnnModel":
        return cls(
            algorithm="knn",
            k=int(data["k"]),
            train_X=np.asarray(data["train_X"], dtype=np.float64),
            train_y=np.asarray(data["train_y"], dtype=np.int64),
        )


def train_knn(X, y, config: TrainConfig) -> KnnModel:
    """Memorize the training set; k is capped at the row count."""
    X, y = _as_matrix(X, y)
    return KnnModel(algorithm="knn", k=min(config.k_neighbors, len(y)),
                    train_X=X, train_y=y)


_KNN_CHUNK = 256  # query rows per distance block, bounds peak memory


def _knn_scores(model: KnnModel, rows: np.ndarray) -> np.ndarray:
    # squared Euclidean distance is rank-equivalent and cheaper; the
    # explicit difference form keeps exact ties exactly equal
    scores = np.empty(len(rows))
    for start in range(0, len(rows), _KNN_CHUNK):
        block = rows[start:start + _KNN_CHUNK]
        d2 = ((block[:, None, :] - model.train_X[None, :, :]) ** 2).sum(axis=2)
        # stable sort: distance ties resolve to the earlier training row
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :model.k]
        scores[start:start + _KNN_CHUNK] = model.train_y[nearest].mean(axis=1)
    return scores


# ---------------------------------------------------------------------------
# linear SVM (Pegasos)
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class LinearModel:
    """Shared container for the two linear learners."""

    algorithm: str
    weights: np.ndarray
    bias: float

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": self.bias}

    @classmethod
    def from_dict(cls, data: dict, algorithm: str) -> "LinearModel":
        return cls(
            algorithm=algorithm,
            weights=np.asarray(data["weights"], dtype=np.float64),
            bias=float(data["bias"]),
        )


def train_svm(X, y, config: TrainConfig) -> LinearModel:
    """Pegasos stochastic subgradient descent on the hinge loss.

    Labels map to {-1, +1}; the bias rides along as an appended
    constant-1 feature (so it shares the L2 penalty); the step size is
    1/(lambda * t) with t counting individual updates from 1.
    """
    X, y = _as_matrix(X, y)
    _require_both_classes(y, "svm")
    rng = np.random.default_rng(config.seed)

    signs = np.where(y == 1, 1.0, -1.0)
    aug = np.hstack([X, np.ones((X.shape[0], 1))])
    w = np.zeros(aug.shape[1])
    lam = config.svm_lambda
    t = 0
    for _ in range(config.svm_epochs):
        for i in rng.permutation(len(signs)):
            t += 1
            eta = 1.0 / (lam * t)
            margin = signs[i] * (aug[i] @ w)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * signs[i] * aug[i]
    return LinearModel(algorithm="svm", weights=w[:-1], bias=float(w[-1]))


# ---------------------------------------------------------------------------
# logistic regression
# ---------------------------------------------------------------------------

def _sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logreg_loss(weights: np.ndarray, bias: float, X: np.ndarray,
                y: np.ndarray, l2: float) -> float:
    """Mean cross-entropy plus L2 penalty on the weights (not the bias)."""
    z = X @ weights + bias
    # log(1 + e^z) - y*z, computed via logaddexp for stability
    per_row = np.logaddexp(0.0, z) - y * z
    return float(per_row.mean() + 0.5 * l2 * (weights @ weights))


def logreg_gradient(weights: np.ndarray, bias: float, X: np.ndarray,
                    y: np.ndarray, l2: float):
    """Gradient of logreg_loss with respect to (weights, bias)."""
    residual = _sigmoid(X @ weights + bias) - y
    grad_w = X.T @ residual / len(y) + l2 * weights
    grad_b = float(residual.mean())
    return grad_w, grad_b


def train_logreg(X, y, config: TrainConfig) -> LinearModel:
    """Full-batch gradient descent from a zero start."""
    X, y = _as_matrix(X, y)
    _require_both_classes(y, "logreg")

    w = np.zeros(X.shape[1])
    b = 0.0
    yf = y.astype(np.float64)
    for _ in range(config.lr_epochs):
        grad_w, grad_b = logreg_gradient(w, b, X, yf, config.lr_l2)
        w -= config.lr_rate * grad_w
        b -= config.lr_rate * grad_b
    return LinearModel(algorithm="logreg", weights=w, bias=b)


def _linear_scores(model: LinearModel, rows: np.ndarray) -> np.ndarray:
    return _sigmoid(rows @ model.weights + model.bias)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

Model = TreeModel | GnbModel | KnnModel | LinearModel

_TRAINERS = {
    "tree": train_tree,
    "gnb": train_gnb,
    "knn": train_knn,
    "svm": train_svm,
    "logreg": train_logreg,
}


def train(X, y, config: TrainConfig) -> Model:
    """Train the learner named by ``config.algorithm``."""
    return _TRAINERS[config.algorithm](X, y, config)


def _model_width(model: Model) -> int:
    if isinstance(model, TreeModel):
        return -1  # trees only index features they split on
    if isinstance(model, GnbModel):
        return model.means.shape[1]
    if isinstance(model, KnnModel):
        return model.train_X.shape[1]
    return len(model.weights)


def score_many(model: Model, rows: Sequence[Sequence[float]]) -> np.ndarray:
    """Class-1 confidence in [0, 1] for each row."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError(f"rows must be 2-D, got shape {rows.shape}")
    width = _model_width(model)
    if width >= 0 and rows.shape[1] != width:
        raise ValueError(
            f"row width {rows.shape[1]} does not match model width {width}"
        )
    if isinstance(model, TreeModel):
        return np.array([_tree_score(model, row) for row in rows])
    if isinstance(model, GnbModel):
        return _gnb_scores(model, rows)
    if isinstance(model, KnnModel):
        return _knn_scores(model, rows)
    return _linear_scores(model, rows)


def score(model: Model, row: Sequence[float]) -> float:
    return float(score_many(model, [row])[0])


def predict(model: Model, row: Sequence[float], threshold: float = 0.5) -> int:
    """1 when score >= threshold, else 0; threshold must sit in [0, 1]."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    return int(score(model, row) >= threshold)


def predict_many(model: Model, rows: Sequence[Sequence[float]],
                 threshold: float = 0.5) -> np.ndarray:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    return (score_many(model, rows) >= threshold).astype(np.int64)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def model_to_dict(model: Model, schema_fingerprint: str = "") -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "algorithm": model.algorithm,
        "schema_fingerprint": schema_fingerprint,
        "params": model.to_dict(),
    }


def model_from_dict(data: dict) -> tuple[Model, str]:
    """Rebuild (model, schema_fingerprint) from a model dict."""
    if data.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a model file: format={data.get('format')!r}")
    if data.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version: {data.get('version')!r}")
    algorithm = data["algorithm"]
    params = data["params"]
    if algorithm == "tree":
        model: Model = TreeModel.from_dict(params)
    elif algorithm == "gnb":
        model = GnbModel.from_dict(params)
    elif algorithm == "knn":
        model = KnnModel.from_dict(params)
    elif algorithm in ("svm", "logreg"):
        model = LinearModel.from_dict(params, algorithm)
    else:
        raise ValueError(f"unknown algorithm in model file: {algorithm!r}")
    return model, data.get("schema_fingerprint", "")


def save_model(model: Model, path, schema_fingerprint: str = "") -> None:
    payload = json.dumps(model_to_dict(model, schema_fingerprint),
                         sort_keys=True, indent=2) + "\n"
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(payload)


def load_model(path) -> tuple[Model, str]:
    with open(path, "r", encoding="utf-8") as handle:
        return model_from_dict(json.load(handle))
