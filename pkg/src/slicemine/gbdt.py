"""Gradient-boosted decision trees, built on second-order boosting.

Binary trees are grown greedily on gradient/hessian sums with an L2 leaf
penalty; the binary objective is logistic loss, the multiclass objective a
one-tree-per-class softmax. There is no row or column subsampling, so fits
are fully deterministic. Split thresholds are stored as the left boundary
value and routing uses ``x <= threshold``, which makes predictions invariant
under any strictly monotone rescaling of a feature applied at both train and
predict time.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_X_y

from .errors import DegenerateLabels


class _Node:
    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, feature=-1, threshold=0.0, left=None, right=None, value=0.0):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.value = value

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"value": self.value}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "_Node":
        if "value" in obj:
            return cls(value=obj["value"])
        return cls(
            feature=obj["feature"],
            threshold=obj["threshold"],
            left=cls.from_dict(obj["left"]),
            right=cls.from_dict(obj["right"]),
        )


def _build_tree(
    X: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray,
    indices: np.ndarray,
    depth: int,
    max_depth: int,
    reg_lambda: float,
    learning_rate: float,
    gain_sink: dict[int, float],
) -> _Node:
    g_sum = float(grad[indices].sum())
    h_sum = float(hess[indices].sum())
    if depth >= max_depth or len(indices) < 2:
        return _Node(value=-learning_rate * g_sum / (h_sum + reg_lambda))

    parent_score = g_sum * g_sum / (h_sum + reg_lambda)
    best_gain = 0.0
    best = None  # (feature, threshold, left_mask_indices, right_mask_indices)
    for f in range(X.shape[1]):
        col = X[indices, f]
        order = np.argsort(col, kind="stable")
        vals = col[order]
        if vals[0] == vals[-1]:
            continue
        g_ord = grad[indices][order]
        h_ord = hess[indices][order]
        g_left = np.cumsum(g_ord)[:-1]
        h_left = np.cumsum(h_ord)[:-1]
        g_right = g_sum - g_left
        h_right = h_sum - h_left
        gains = (
            g_left * g_left / (h_left + reg_lambda)
            + g_right * g_right / (h_right + reg_lambda)
            - parent_score
        )
        # Splits are only legal between distinct consecutive values.
        legal = vals[:-1] < vals[1:]
        gains = np.where(legal, gains, -np.inf)
        pos = int(np.argmax(gains))
        if gains[pos] > best_gain:
            best_gain = float(gains[pos])
            best = (f, float(vals[pos]), order[: pos + 1], order[pos + 1 :])

    if best is None:
        return _Node(value=-learning_rate * g_sum / (h_sum + reg_lambda))

    feature, threshold, left_ord, right_ord = best
    gain_sink[feature] = gain_sink.get(feature, 0.0) + best_gain
    left_idx = indices[left_ord]
    right_idx = indices[right_ord]
    return _Node(
        feature=feature,
        threshold=threshold,
        left=_build_tree(
            X, grad, hess, left_idx, depth + 1, max_depth, reg_lambda,
            learning_rate, gain_sink,
        ),
        right=_build_tree(
            X, grad, hess, right_idx, depth + 1, max_depth, reg_lambda,
            learning_rate, gain_sink,
        ),
    )


def _tree_predict(node: _Node, X: np.ndarray, out: np.ndarray, mask: np.ndarray) -> None:
    if node.is_leaf:
        out[mask] += node.value
        return
    go_left = mask & (X[:, node.feature] <= node.threshold)
    _tree_predict(node.left, X, out, go_left)
    _tree_predict(node.right, X, out, mask & ~go_left)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class GradientBoostedTrees(BaseEstimator, ClassifierMixin):
    """Boosted tree classifier with a scikit-learn estimator surface.

    objective="binary" fits logistic loss over two classes;
    objective="multiclass" fits a softmax head with one tree per class per
    round. random_state is accepted for API symmetry; fitting itself is
    deterministic.
    """

    def __init__(
        self,
        n_estimators: int = 200,
        max_depth: int = 4,
        learning_rate: float = 0.1,
        reg_lambda: float = 1.0,
        objective: str = "binary",
        random_state: int = 0,
    ):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.reg_lambda = reg_lambda
        self.objective = objective
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise DegenerateLabels("training labels contain a single class")
        if self.objective == "binary" and len(self.classes_) != 2:
            raise ValueError("binary objective needs exactly 2 classes")
        self.n_features_in_ = X.shape[1]
        class_index = {c: i for i, c in enumerate(self.classes_)}
        y_idx = np.array([class_index[v] for v in y])
        gains: dict[int, float] = {}
        if self.objective == "binary":
            self._fit_binary(X, y_idx, gains)
        elif self.objective == "multiclass":
            self._fit_multiclass(X, y_idx, gains)
        else:
            raise ValueError(f"unknown objective {self.objective!r}")
        total = sum(gains.values())
        importances = np.zeros(self.n_features_in_)
        if total > 0:
            for f, g in gains.items():
                importances[f] = g / total
        else:
            importances[:] = 1.0 / self.n_features_in_
        self.feature_importances_ = importances
        return self

    def _fit_binary(self, X, y_idx, gains):
        n = X.shape[0]
        indices = np.arange(n)
        margin = np.zeros(n)
        self.trees_: list[_Node] = []
        for _ in range(self.n_estimators):
            p = _sigmoid(margin)
            grad = p - y_idx
            hess = p * (1.0 - p)
            tree = _build_tree(
                X, grad, hess, indices, 0, self.max_depth, self.reg_lambda,
                self.learning_rate, gains,
            )
            self.trees_.append(tree)
            update = np.zeros(n)
            _tree_predict(tree, X, update, np.ones(n, dtype=bool))
            margin += update

    def _fit_multiclass(self, X, y_idx, gains):
        n = X.shape[0]
        k = len(self.classes_)
        indices = np.arange(n)
        margin = np.zeros((n, k))
        onehot = np.zeros((n, k))
        onehot[np.arange(n), y_idx] = 1.0
        self.trees_: list[list[_Node]] = []
        for _ in range(self.n_estimators):
            p = _softmax(margin)
            round_trees = []
            for c in range(k):
                grad = p[:, c] - onehot[:, c]
                hess = p[:, c] * (1.0 - p[:, c])
                tree = _build_tree(
                    X, grad, hess, indices, 0, self.max_depth, self.reg_lambda,
                    self.learning_rate, gains,
                )
                round_trees.append(tree)
                update = np.zeros(n)
                _tree_predict(tree, X, update, np.ones(n, dtype=bool))
                margin[:, c] += update
            self.trees_.append(round_trees)

    def decision_function(self, X):
        X = check_array(X, dtype=float)
        if self.objective == "binary":
            margin = np.zeros(X.shape[0])
            for tree in self.trees_:
                _tree_predict(tree, X, margin, np.ones(X.shape[0], dtype=bool))
            return margin
        margin = np.zeros((X.shape[0], len(self.classes_)))
        for round_trees in self.trees_:
            for c, tree in enumerate(round_trees):
                col = np.zeros(X.shape[0])
                _tree_predict(tree, X, col, np.ones(X.shape[0], dtype=bool))
                margin[:, c] += col
        return margin

    def predict_proba(self, X):
        margin = self.decision_function(X)
        if self.objective == "binary":
            p = _sigmoid(margin)
            return np.column_stack([1.0 - p, p])
        return _softmax(margin)

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]

    def to_dict(self) -> dict:
        trees = (
            [t.to_dict() for t in self.trees_]
            if self.objective == "binary"
            else [[t.to_dict() for t in row] for row in self.trees_]
        )
        return {
            "params": self.get_params(),
            "classes": [c.item() if hasattr(c, "item") else c for c in self.classes_],
            "n_features": self.n_features_in_,
            "feature_importances": self.feature_importances_.tolist(),
            "trees": trees,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "GradientBoostedTrees":
        model = cls(**obj["params"])
        model.classes_ = np.array(obj["classes"])
        model.n_features_in_ = obj["n_features"]
        model.feature_importances_ = np.array(obj["feature_importances"])
        if model.objective == "binary":
            model.trees_ = [_Node.from_dict(t) for t in obj["trees"]]
        else:
            model.trees_ = [[_Node.from_dict(t) for t in row] for row in obj["trees"]]
        return model

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path: str | Path) -> "GradientBoostedTrees":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
