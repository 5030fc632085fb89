"""Batch-trained base classifiers used as ensemble members.

Two learners are provided, both fitted once on a single chunk and immutable
afterwards: a Gaussian naive Bayes model and a CART-style decision tree
grown greedily on Gini impurity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

import numpy as np

from .exceptions import ValidationError
from .stream import Chunk

__all__ = [
    "LearnerKind",
    "LearnerSpec",
    "TrainedModel",
    "GaussianNBModel",
    "CartModel",
    "fit_batch",
    "predict",
    "predict_proba",
]


class LearnerKind(str, Enum):
    GAUSSIAN_NB = "gaussian_nb"
    CART = "cart"


@dataclass(frozen=True)
class LearnerSpec:
    """Base learner configuration.

    ``nb_variance_floor=None`` selects the data-dependent floor
    ``1e-9 * max(max feature variance in the chunk, 1.0)``.
    """

    kind: LearnerKind = LearnerKind.GAUSSIAN_NB
    cart_max_depth: int = 8
    cart_min_split: int = 2
    nb_variance_floor: Optional[float] = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", LearnerKind(self.kind))
        except ValueError:
            raise ValidationError(
                f"learner kind: unknown value {self.kind!r}, "
                f"expected one of {[k.value for k in LearnerKind]}"
            ) from None
        if self.cart_max_depth < 1:
            raise ValidationError(f"cart_max_depth must be >= 1, got {self.cart_max_depth}")
        if self.cart_min_split < 2:
            raise ValidationError(f"cart_min_split must be >= 2, got {self.cart_min_split}")
        if self.nb_variance_floor is not None and not self.nb_variance_floor > 0:
            raise ValidationError(
                f"nb_variance_floor must be > 0, got {self.nb_variance_floor}"
            )


class TrainedModel:
    """Common inference surface of fitted learners."""

    kind: LearnerKind
    n_classes: int
    n_features: int
    classes_seen: frozenset

    def _check(self, X) -> tuple[np.ndarray, bool]:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValidationError(
                f"expected {self.n_features} features, got shape {np.shape(X)}"
            )
        return X, single

    def predict_proba(self, X) -> np.ndarray:
        """Class probabilities for one vector ``(d,)`` or a batch ``(n, d)``."""
        X, single = self._check(X)
        proba = self._proba(X)
        return proba[0] if single else proba

    def predict(self, X):
        """Argmax of :meth:`predict_proba`; ties go to the lowest class index."""
        X, single = self._check(X)
        labels = self._predict(X)
        return int(labels[0]) if single else labels

    def _predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self._proba(X), axis=1)

    def _proba(self, X: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError


class GaussianNBModel(TrainedModel):
    kind = LearnerKind.GAUSSIAN_NB

    def __init__(self, priors, means, variances, n_classes: int):
        self.priors = np.asarray(priors, dtype=float)
        self.means = np.asarray(means, dtype=float)
        self.variances = np.asarray(variances, dtype=float)
        self.n_classes = n_classes
        self.n_features = self.means.shape[1]
        self.classes_seen = frozenset(int(c) for c in np.flatnonzero(self.priors > 0))
        self._present = np.flatnonzero(self.priors > 0)
        # per-class constant: log prior - 0.5 * sum(log(2 pi var))
        v = self.variances[self._present]
        self._log_norm = np.log(self.priors[self._present]) - 0.5 * np.sum(
            np.log(2.0 * np.pi * v), axis=1
        )
        self._inv_var = 1.0 / v
        self._mu = self.means[self._present]

    def joint_log_likelihood(self, X: np.ndarray) -> np.ndarray:
        """Unnormalized log posterior for the classes present in training."""
        # direct form; the expanded matmul cancels badly under tiny variances
        diff = X[:, None, :] - self._mu[None, :, :]
        quad = np.einsum("ncd,cd->nc", diff * diff, self._inv_var)
        return self._log_norm - 0.5 * quad

    def _proba(self, X: np.ndarray) -> np.ndarray:
        jll = self.joint_log_likelihood(X)
        jll -= jll.max(axis=1, keepdims=True)
        p = np.exp(jll)
        p /= p.sum(axis=1, keepdims=True)
        out = np.zeros((X.shape[0], self.n_classes))
        out[:, self._present] = p
        return out


@dataclass
class _Node:
    distribution: np.ndarray
    feature: int = -1
    threshold: float = 0.0
    left: Optional["_Node"] = None
    right: Optional["_Node"] = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


class CartModel(TrainedModel):
    kind = LearnerKind.CART

    def __init__(self, root: _Node, n_classes: int, n_features: int):
        self.root = root
        self.n_classes = n_classes
        self.n_features = n_features
        self.classes_seen = frozenset(
            int(c) for c in np.flatnonzero(root.distribution > 0)
        )
        self._flatten()

    def _flatten(self) -> None:
        feats, thresh, left, right, dists = [], [], [], [], []

        def visit(node: _Node) -> int:
            i = len(feats)
            feats.append(node.feature)
            thresh.append(node.threshold)
            left.append(-1)
            right.append(-1)
            dists.append(node.distribution)
            if not node.is_leaf:
                left[i] = visit(node.left)
                right[i] = visit(node.right)
            return i

        visit(self.root)
        self._feature = np.asarray(feats)
        self._threshold = np.asarray(thresh, dtype=float)
        self._left = np.asarray(left)
        self._right = np.asarray(right)
        self._dist = np.asarray(dists)

    @property
    def depth(self) -> int:
        def d(node: _Node) -> int:
            return 0 if node.is_leaf else 1 + max(d(node.left), d(node.right))

        return d(self.root)

    def _leaves(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self._left[node] >= 0
        while active.any():
            r = rows[active]
            n = node[r]
            go_left = X[r, self._feature[n]] <= self._threshold[n]
            node[r] = np.where(go_left, self._left[n], self._right[n])
            active = self._left[node] >= 0
        return node

    def _proba(self, X: np.ndarray) -> np.ndarray:
        return self._dist[self._leaves(X)]


def _best_split(X: np.ndarray, y: np.ndarray, n_classes: int):
    """Exhaustive Gini search over all features and midpoints.

    Returns ``(feature, threshold, impurity_decrease)`` or ``None`` when no
    split separates distinct feature values.
    """
    n = y.shape[0]
    onehot = np.eye(n_classes)[y]
    counts = onehot.sum(axis=0)
    parent = 1.0 - np.sum((counts / n) ** 2)
    best = None
    best_score = -np.inf
    sizes_left = np.arange(1, n)[:, None]
    sizes_right = n - sizes_left
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        left = np.cumsum(onehot[order], axis=0)[:-1]
        right = counts - left
        gini_l = 1.0 - np.sum((left / sizes_left) ** 2, axis=1)
        gini_r = 1.0 - np.sum((right / sizes_right) ** 2, axis=1)
        weighted = (sizes_left[:, 0] * gini_l + sizes_right[:, 0] * gini_r) / n
        weighted[~valid] = np.inf
        i = int(np.argmin(weighted))
        score = parent - weighted[i]
        if score > best_score + 1e-12:
            best_score = score
            best = (j, 0.5 * (xs[i] + xs[i + 1]), score)
    return best


def _grow(X, y, n_classes, depth, max_depth, min_split) -> _Node:
    counts = np.bincount(y, minlength=n_classes).astype(float)
    node = _Node(distribution=counts / counts.sum())
    if depth >= max_depth or y.shape[0] < min_split or np.count_nonzero(counts) <= 1:
        return node
    split = _best_split(X, y, n_classes)
    if split is None:
        return node
    j, threshold, _ = split
    mask = X[:, j] <= threshold
    node.feature = j
    node.threshold = float(threshold)
    node.left = _grow(X[mask], y[mask], n_classes, depth + 1, max_depth, min_split)
    node.right = _grow(X[~mask], y[~mask], n_classes, depth + 1, max_depth, min_split)
    return node


def _fit_nb(spec: LearnerSpec, X: np.ndarray, y: np.ndarray, n_classes: int) -> GaussianNBModel:
    d = X.shape[1]
    floor = spec.nb_variance_floor
    if floor is None:
        floor = 1e-9 * max(float(np.var(X, axis=0).max()), 1.0)
    counts = np.bincount(y, minlength=n_classes).astype(float)
    means = np.zeros((n_classes, d))
    variances = np.full((n_classes, d), floor)
    for c in np.flatnonzero(counts):
        Xc = X[y == c]
        means[c] = Xc.mean(axis=0)
        variances[c] = np.maximum(Xc.var(axis=0), floor)
    return GaussianNBModel(counts / counts.sum(), means, variances, n_classes)


def fit_batch(
    spec: LearnerSpec,
    chunk: Union[Chunk, tuple],
    n_classes: Optional[int] = None,
) -> TrainedModel:
    """Train one base model on a chunk.

    ``chunk`` may also be an ``(X, y)`` pair. ``n_classes`` fixes the width
    of probability vectors; by default it is ``max(y) + 1``.
    """
    if isinstance(chunk, Chunk):
        X, y = chunk.X, chunk.y
    else:
        X, y = chunk
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=np.int64)
    if y.shape[0] == 0:
        raise ValidationError("cannot fit on an empty chunk")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    elif int(y.max()) >= n_classes:
        raise ValidationError(f"label {int(y.max())} is not below n_classes={n_classes}")
    if spec.kind is LearnerKind.GAUSSIAN_NB:
        return _fit_nb(spec, X, y, n_classes)
    root = _grow(X, y, n_classes, 0, spec.cart_max_depth, spec.cart_min_split)
    return CartModel(root, n_classes, X.shape[1])


def predict(model: TrainedModel, features) -> int:
    return model.predict(features)


def predict_proba(model: TrainedModel, features) -> np.ndarray:
    return model.predict_proba(features)
