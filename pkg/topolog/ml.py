"""
Random forest classifier, stratified cross-validation and MDI feature importance.
Trees are CART with gini impurity; every tree draws from its own seeded stream
so parallel and serial fitting agree exactly.
"""

import logging
import math
from dataclasses import dataclass
from typing import Literal, Optional, Union

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel

from topolog.errors import (
    InvalidFeatureMatrix,
    RowMismatch,
    SingleClass,
    TooFewSamples,
    Unfitted,
)

logger = logging.getLogger(__name__)

DEFAULT_FOLDS = 10
POSITIVE_LABEL = 1  # anomalous


# ============================================================================
# Feature matrices
# ============================================================================

@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Per-run feature rows with binary labels (0 benign, 1 anomalous)."""
    rows: np.ndarray
    labels: np.ndarray
    column_names: tuple[str, ...]
    run_ids: tuple[str, ...] = ()

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if rows.ndim != 2:
            rows = rows.reshape(len(labels), -1)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "column_names", tuple(self.column_names))
        object.__setattr__(self, "run_ids", tuple(self.run_ids))

        if rows.shape[0] != labels.shape[0]:
            raise InvalidFeatureMatrix(f"{rows.shape[0]} rows but {labels.shape[0]} labels")
        if rows.shape[1] != len(self.column_names):
            raise InvalidFeatureMatrix(f"{rows.shape[1]} columns but {len(self.column_names)} names")
        if self.run_ids and len(self.run_ids) != rows.shape[0]:
            raise InvalidFeatureMatrix("run_ids do not match the row count")
        if not np.all(np.isfinite(rows)):
            raise InvalidFeatureMatrix("feature matrix contains NaN or infinite values")
        if not np.all(np.isin(labels, (0, 1))):
            raise InvalidFeatureMatrix("labels must be 0 (benign) or 1 (anomalous)")

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def n_features(self) -> int:
        return self.rows.shape[1]


def concat(a: FeatureMatrix, b: FeatureMatrix, prefixes: Optional[tuple[str, str]] = None) -> FeatureMatrix:
    """
    Column-wise concatenation of two feature matrices over the same runs.

    Args:
        a: Left matrix
        b: Right matrix
        prefixes: Optional (a_prefix, b_prefix) prepended to column names as
            "prefix:name"

    Returns:
        FeatureMatrix with a's columns followed by b's

    Raises:
        RowMismatch: If row counts, labels or run ids differ
    """
    if a.n_rows != b.n_rows:
        raise RowMismatch(f"{a.n_rows} rows vs {b.n_rows} rows")
    if a.run_ids and b.run_ids and a.run_ids != b.run_ids:
        raise RowMismatch("run ids are not aligned")
    if not np.array_equal(a.labels, b.labels):
        raise RowMismatch("labels are not aligned")

    names_a, names_b = a.column_names, b.column_names
    if prefixes is not None:
        names_a = tuple(f"{prefixes[0]}:{n}" for n in names_a)
        names_b = tuple(f"{prefixes[1]}:{n}" for n in names_b)
    return FeatureMatrix(
        np.hstack([a.rows, b.rows]),
        a.labels,
        names_a + names_b,
        a.run_ids or b.run_ids,
    )


# ============================================================================
# Forest configuration
# ============================================================================

class ForestConfig(BaseModel):
    """Random forest parameters; defaults follow the classic scikit-learn ones."""
    n_trees: int = 100
    criterion: Literal["gini"] = "gini"
    max_depth: Optional[int] = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: Union[Literal["sqrt"], int] = "sqrt"
    bootstrap: bool = True
    seed: int = 0
    n_jobs: int = 1

    def features_per_split(self, n_features: int) -> int:
        if self.max_features == "sqrt":
            return max(1, math.isqrt(n_features))
        return max(1, min(int(self.max_features), n_features))


def _gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.sum(p * p))


# ============================================================================
# Decision tree
# ============================================================================

class DecisionTree:
    """
    Binary CART classifier stored as flat node arrays.

    Internal nodes send ``x[feature] <= threshold`` left; leaves have
    feature -1. ``value`` holds per-class sample counts of each node.
    """

    def __init__(self, config: ForestConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.feature: list = []
        self.threshold: list = []
        self.left: list = []
        self.right: list = []
        self.value: list = []
        self.impurity: list = []
        self.n_node_samples: list = []
        self.n_features = 0

    def _add_node(self, counts: np.ndarray, parent: int, is_left: bool) -> int:
        node = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(counts)
        self.impurity.append(_gini(counts))
        self.n_node_samples.append(int(counts.sum()))
        if parent >= 0:
            if is_left:
                self.left[parent] = node
            else:
                self.right[parent] = node
        return node

    def _best_split(self, x: np.ndarray, y: np.ndarray, idx: np.ndarray, parent_impurity: float):
        """
        Best gini split of a node over a random feature subset.

        Features are visited in a random permutation, max_features at a time;
        the first block holding any valid split decides. Ties go to the lowest
        feature index, then the lowest threshold.

        Returns:
            (feature, threshold) or None when no valid split exists
        """
        cfg = self.config
        n = len(idx)
        block_size = cfg.features_per_split(self.n_features)
        permutation = self.rng.permutation(self.n_features)
        labels = y[idx]
        total_pos = float(labels.sum())

        n_left = np.arange(1, n, dtype=np.float64)[:, np.newaxis]
        n_right = n - n_left
        leaf_ok = (n_left >= cfg.min_samples_leaf) & (n_right >= cfg.min_samples_leaf)

        for start in range(0, self.n_features, block_size):
            features = permutation[start:start + block_size]
            block = x[np.ix_(idx, features)]
            order = np.argsort(block, axis=0, kind="stable")
            sorted_x = np.take_along_axis(block, order, axis=0)
            sorted_y = labels[order]

            pos_left = np.cumsum(sorted_y, axis=0)[:-1].astype(np.float64)
            pos_right = total_pos - pos_left
            p_left = pos_left / n_left
            p_right = pos_right / n_right
            child = (n_left * 2.0 * p_left * (1.0 - p_left)
                     + n_right * 2.0 * p_right * (1.0 - p_right)) / n
            gain = parent_impurity - child

            valid = (sorted_x[:-1] < sorted_x[1:]) & leaf_ok
            if not valid.any():
                continue

            gain = np.where(valid, gain, -np.inf)
            rows, cols = np.nonzero(gain == gain.max())
            candidates = []
            for r, c in zip(rows.tolist(), cols.tolist()):
                lo, hi = sorted_x[r, c], sorted_x[r + 1, c]
                threshold = (lo + hi) / 2.0
                if threshold >= hi:
                    threshold = lo
                candidates.append((int(features[c]), float(threshold)))
            return min(candidates)
        return None

    def fit(self, x: np.ndarray, y: np.ndarray, sample: np.ndarray) -> "DecisionTree":
        """
        Grow the tree on rows ``sample`` of (x, y) (duplicates allowed).

        Nodes become leaves when pure, smaller than min_samples_split, at
        max_depth, or when no feature varies.
        """
        cfg = self.config
        self.n_features = x.shape[1]
        stack = [(np.asarray(sample), 0, -1, False)]
        while stack:
            idx, depth, parent, is_left = stack.pop()
            counts = np.bincount(y[idx], minlength=2).astype(np.float64)
            node = self._add_node(counts, parent, is_left)

            if (len(idx) < cfg.min_samples_split
                    or self.impurity[node] <= 0.0
                    or (cfg.max_depth is not None and depth >= cfg.max_depth)
                    or self.n_features == 0):
                continue

            split = self._best_split(x, y, idx, self.impurity[node])
            if split is None:
                continue
            feature, threshold = split
            self.feature[node] = feature
            self.threshold[node] = threshold
            goes_left = x[idx, feature] <= threshold
            # Right pushed first so the left subtree is numbered first
            stack.append((idx[~goes_left], depth + 1, node, False))
            stack.append((idx[goes_left], depth + 1, node, True))

        self.feature = np.asarray(self.feature, dtype=np.int64)
        self.threshold = np.asarray(self.threshold, dtype=np.float64)
        self.left = np.asarray(self.left, dtype=np.int64)
        self.right = np.asarray(self.right, dtype=np.int64)
        self.value = np.vstack(self.value)
        self.impurity = np.asarray(self.impurity, dtype=np.float64)
        self.n_node_samples = np.asarray(self.n_node_samples, dtype=np.int64)
        return self

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of x."""
        nodes = np.zeros(len(x), dtype=np.int64)
        active = self.feature[nodes] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            current = nodes[rows]
            goes_left = x[rows, self.feature[current]] <= self.threshold[current]
            nodes[rows] = np.where(goes_left, self.left[current], self.right[current])
            active = self.feature[nodes] >= 0
        return nodes

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        leaf_counts = self.value[self.apply(x)]
        return leaf_counts / leaf_counts.sum(axis=1, keepdims=True)

    def impurity_decrease(self) -> np.ndarray:
        """
        Unnormalized MDI of this tree.

        Each split adds (node samples / root samples) x (node impurity -
        weighted child impurity) to its feature.
        """
        importances = np.zeros(self.n_features, dtype=np.float64)
        root = float(self.n_node_samples[0])
        for node in np.flatnonzero(self.feature >= 0):
            left, right = self.left[node], self.right[node]
            n = float(self.n_node_samples[node])
            n_l, n_r = float(self.n_node_samples[left]), float(self.n_node_samples[right])
            decrease = (self.impurity[node]
                        - (n_l / n) * self.impurity[left]
                        - (n_r / n) * self.impurity[right])
            importances[self.feature[node]] += (n / root) * decrease
        return importances


def _fit_tree(x: np.ndarray, y: np.ndarray, config: ForestConfig, seed_seq: np.random.SeedSequence) -> DecisionTree:
    rng = np.random.default_rng(seed_seq)
    n = x.shape[0]
    sample = rng.integers(0, n, size=n) if config.bootstrap else np.arange(n)
    return DecisionTree(config, rng).fit(x, y, sample)


# ============================================================================
# Random forest
# ============================================================================

class RandomForest:
    """Bagged CART trees with per-split random feature subsets."""

    def __init__(self, config: Optional[ForestConfig] = None):
        self.config = config or ForestConfig()
        self.trees: list[DecisionTree] = []
        self.n_features: Optional[int] = None

    def fit(self, x: np.ndarray, y: np.ndarray) -> "RandomForest":
        """
        Fit the forest.

        Tree t draws its bootstrap sample and feature subsets from
        SeedSequence([seed, t]), so results do not depend on n_jobs.

        Raises:
            SingleClass: If y holds fewer than two classes
        """
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if len(np.unique(y)) < 2:
            raise SingleClass("training labels contain a single class")

        cfg = self.config
        self.n_features = x.shape[1]
        self.trees = Parallel(n_jobs=cfg.n_jobs)(
            delayed(_fit_tree)(x, y, cfg, np.random.SeedSequence([cfg.seed, t]))
            for t in range(cfg.n_trees)
        )
        return self

    def _check_fitted(self):
        if not self.trees:
            raise Unfitted("forest has not been fitted")

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        self._check_fitted()
        x = np.asarray(x, dtype=np.float64)
        total = np.zeros((len(x), 2), dtype=np.float64)
        for tree in self.trees:
            total += tree.predict_proba(x)
        return total / len(self.trees)

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Majority vote of tree probabilities; ties go to benign."""
        return np.argmax(self.predict_proba(x), axis=1)

    @property
    def feature_importances_(self) -> np.ndarray:
        return mdi_importance(self)


def fit_forest(x: FeatureMatrix, config: Optional[ForestConfig] = None) -> RandomForest:
    """
    Fit a random forest on a feature matrix.

    Args:
        x: Training data
        config: Forest parameters (defaults when None)

    Returns:
        Fitted RandomForest

    Raises:
        SingleClass: If only one label is present
    """
    return RandomForest(config).fit(x.rows, x.labels)


def mdi_importance(forest: RandomForest) -> np.ndarray:
    """
    Mean Decrease in Impurity importance of every feature.

    Per-tree impurity decreases are averaged over trees and normalized to sum
    to one; a forest without any split yields the zero vector.

    Raises:
        Unfitted: If the forest has not been fitted
    """
    if not forest.trees:
        raise Unfitted("forest has not been fitted")
    total = np.mean([tree.impurity_decrease() for tree in forest.trees], axis=0)
    norm = total.sum()
    return total / norm if norm > 0 else total


# ============================================================================
# Cross-validation
# ============================================================================

METRICS = ("accuracy", "precision", "recall", "f1")


class MetricSummary(BaseModel):
    """Mean and sample standard deviation (percent, 2 decimals) plus fold values."""
    mean: float
    std: float
    folds: list[float]


class CvReport(BaseModel):
    """Cross-validation metrics and MDI importances of one feature family."""
    n_samples: int
    n_folds: int
    seed: int
    accuracy: MetricSummary
    precision: MetricSummary
    recall: MetricSummary
    f1: MetricSummary
    column_names: list[str]
    mdi: list[float]
    fold_assignments: list[int]
    run_ids: list[str] = []

    def metric(self, name: str) -> MetricSummary:
        return getattr(self, name)


def stratified_folds(labels: np.ndarray, k: int, seed: int) -> np.ndarray:
    """
    Assign every sample to one of k folds, stratified by label.

    Members of each class are shuffled with a seeded generator and dealt
    round-robin, so every fold holds floor or ceil of (class size / k)
    members of each class.

    Returns:
        Fold index per sample
    """
    rng = np.random.default_rng(seed)
    order = []
    for label in np.unique(labels):
        order.extend(rng.permutation(np.flatnonzero(labels == label)).tolist())
    folds = np.empty(len(labels), dtype=np.int64)
    folds[np.asarray(order, dtype=np.int64)] = np.arange(len(labels)) % k
    return folds


def fold_metrics(truth: np.ndarray, predicted: np.ndarray) -> dict[str, float]:
    """
    Accuracy, precision, recall and F1 in percent, anomalous as positive.

    Precision and recall are 0 when undefined.
    """
    tp = int(np.sum((predicted == POSITIVE_LABEL) & (truth == POSITIVE_LABEL)))
    fp = int(np.sum((predicted == POSITIVE_LABEL) & (truth != POSITIVE_LABEL)))
    fn = int(np.sum((predicted != POSITIVE_LABEL) & (truth == POSITIVE_LABEL)))
    tn = len(truth) - tp - fp - fn

    accuracy = 100.0 * (tp + tn) / len(truth)
    precision = 100.0 * tp / (tp + fp) if tp + fp else 0.0
    recall = 100.0 * tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0

    if tp and not math.isclose(f1, 100.0 * 2 * tp / (2 * tp + fp + fn), rel_tol=1e-9):
        raise ArithmeticError(f"F1 {f1} disagrees with 2TP/(2TP+FP+FN) for tp={tp} fp={fp} fn={fn}")
    return {"accuracy": accuracy, "precision": precision, "recall": recall, "f1": f1}


def _summary(values: list[float]) -> MetricSummary:
    std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return MetricSummary(mean=round(float(np.mean(values)), 2), std=round(std, 2), folds=values)


def cross_validate(x: FeatureMatrix, config: Optional[ForestConfig] = None, k: int = DEFAULT_FOLDS) -> CvReport:
    """
    Stratified k-fold cross-validation of a random forest.

    Args:
        x: Feature matrix
        config: Forest parameters; its seed also drives the fold assignment
        k: Number of folds

    Returns:
        CvReport with mean +/- sample standard deviation of every metric over
        the folds and the fold-averaged, renormalized MDI importances

    Raises:
        TooFewSamples: If a class has fewer than k members, or a class is absent

    Example:
        >>> report = cross_validate(matrix, ForestConfig(seed=0))
        >>> f"{report.accuracy.mean:.2f} ± {report.accuracy.std:.2f}"
        '100.00 ± 0.00'
    """
    config = config or ForestConfig()
    for label in (0, 1):
        members = int(np.sum(x.labels == label))
        if members < k:
            raise TooFewSamples(f"class {label} has {members} samples, need at least {k} for {k}-fold CV")

    folds = stratified_folds(x.labels, k, config.seed)
    per_metric: dict[str, list[float]] = {m: [] for m in METRICS}
    importances = []

    for fold in range(k):
        train, test = folds != fold, folds == fold
        forest = RandomForest(config).fit(x.rows[train], x.labels[train])
        scores = fold_metrics(x.labels[test], forest.predict(x.rows[test]))
        for name, value in scores.items():
            per_metric[name].append(value)
        importances.append(mdi_importance(forest))
        logger.debug("Fold %d/%d: accuracy %.2f", fold + 1, k, scores["accuracy"])

    mdi = np.mean(importances, axis=0) if x.n_features else np.zeros(0)
    if mdi.sum() > 0:
        mdi = mdi / mdi.sum()

    return CvReport(
        n_samples=x.n_rows,
        n_folds=k,
        seed=config.seed,
        column_names=list(x.column_names),
        mdi=[float(v) for v in mdi],
        fold_assignments=folds.tolist(),
        run_ids=list(x.run_ids),
        **{name: _summary(values) for name, values in per_metric.items()},
    )
