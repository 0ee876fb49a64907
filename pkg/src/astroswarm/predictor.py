"""Weighted k-NN convergence predictor with neighborhood localization.

The pipeline scores a test configuration (one target per astrobot) against a
train split of labeled configurations in four steps:

1. imbalance weights: per astrobot, w = u/v (or u when v = 0) where u counts
   converged train outcomes and v failed ones, scaled by the corrector alpha
   for astrobots with a full 6-neighbor ring and beta for everyone else;
2. retrieval: rank train configurations by the sum of per-astrobot target
   distances, restricted to the columns under consideration, and keep the k
   closest;
3. probability: per astrobot, with n1 convergences among the k retrieved
   labels, the weighted vote is n1 / (n1 + w * (k - n1)) - the plain label
   sum divided elementwise by the weighted one, where a retrieved 0 counts
   as w instead of 1;
4. localization: the above runs once per neighborhood (an astrobot plus its
   graph neighbors, at most 7 members); every astrobot averages the local
   probabilities of all neighborhoods containing it, i.e. divides their sum
   by eta = 1 + degree, and the final label is probability > q.

Retrieval deliberately weighs every retrieved configuration equally;
distance-proportional vote weighting invites overfitting to the nearest
samples. Exact scans are fine at the train sizes this targets (about 1e4),
so there is no approximate-neighbor indexing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import SwarmLayout, neighborhood_of

WEIGHT_CLAMP = 1e-9


@dataclass(frozen=True)
class Hyperparameters:
    k: int = 13
    alpha: float = 1.0
    beta: float = 1.0
    q: float = 0.5

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("corrector coefficients must be positive")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError("decision filter q must lie in [0, 1]")


@dataclass(frozen=True)
class WeightVector:
    """Per-astrobot imbalance weights, already scaled by the correctors."""

    w: np.ndarray
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if np.any(self.w <= 0):
            raise ValueError("weights must be positive")


@dataclass(frozen=True)
class PredictionResult:
    probabilities: np.ndarray
    labels: np.ndarray
    eta: np.ndarray


def frequency_vectors(train_labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-astrobot counts of converged (u) and failed (v) train outcomes."""
    train_labels = np.asarray(train_labels)
    if train_labels.ndim != 2 or train_labels.shape[0] == 0:
        raise ValueError("train split must be a non-empty (configurations, astrobots) array")
    u = train_labels.sum(axis=0, dtype=np.int64)
    v = train_labels.shape[0] - u
    return u, v


def weight_vector(
    u: np.ndarray, v: np.ndarray, layout: SwarmLayout, alpha: float, beta: float
) -> WeightVector:
    """Imbalance weights u/v (u where v = 0), corrector-scaled by neighborhood
    fullness: alpha for astrobots with all 6 neighbors, beta otherwise.

    An astrobot that never converged in training gets w = 0, which would kill
    the weighted vote's denominator; it is clamped to a tiny positive value
    and flagged, since a healthy simulator should not produce such columns.
    """
    if alpha <= 0 or beta <= 0:
        raise ValueError("corrector coefficients must be positive")
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    base = np.where(v == 0, u, u / np.where(v == 0, 1.0, v))
    corrector = np.where(layout.degrees() == 6, alpha, beta)
    w = corrector * base
    dead = w == 0.0
    if np.any(dead):
        warnings.warn(
            f"{int(dead.sum())} astrobot(s) never converged in the train split; "
            f"clamping their weights to {WEIGHT_CLAMP}",
            stacklevel=2,
        )
        w = np.where(dead, WEIGHT_CLAMP, w)
    return WeightVector(w=w, alpha=alpha, beta=beta)


def _targets_of(config) -> np.ndarray:
    targets = getattr(config, "targets", config)
    return np.asarray(targets, dtype=np.float64)


def configuration_distance(test_cfg, train_cfg, columns) -> float:
    """Distance between two configurations: the sum over the given astrobot
    columns of the Euclidean distances between their targets."""
    t = _targets_of(test_cfg)
    p = _targets_of(train_cfg)
    if t.shape != p.shape:
        raise ValueError(f"population mismatch: {t.shape} vs {p.shape}")
    columns = np.asarray(columns, dtype=np.int64)
    if columns.size == 0:
        raise ValueError("columns must be non-empty")
    diff = t[columns] - p[columns]
    return float(np.hypot(diff[:, 0], diff[:, 1]).sum())


def column_distances(train_targets: np.ndarray, test_targets: np.ndarray) -> np.ndarray:
    """(train size, n) per-astrobot target distances of one test configuration
    against every train configuration; column subsets then sum to the metric."""
    diff = train_targets - test_targets[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def k_smallest_indices(distances: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest entries, ascending, ties by ascending index."""
    n = distances.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must be in [1, {n}]")
    kth = np.partition(distances, k - 1)[k - 1]
    below = np.flatnonzero(distances < kth)
    at = np.flatnonzero(distances == kth)[: k - below.size]
    selected = np.concatenate([below, at])
    return selected[np.lexsort((selected, distances[selected]))]


def k_closest(train_targets, test_cfg, k: int, columns) -> np.ndarray:
    """The k train configurations most similar to the test one over the given
    columns, as train indices ordered by ascending distance (ties by index)."""
    train = np.asarray([_targets_of(c) for c in train_targets]) \
        if isinstance(train_targets, (list, tuple)) else _targets_of(train_targets)
    columns = np.asarray(columns, dtype=np.int64)
    colD = column_distances(train, _targets_of(test_cfg))
    return k_smallest_indices(colD[:, columns].sum(axis=1), k)


def primary_probabilities(
    selected_labels: np.ndarray, weights: np.ndarray, columns=None
) -> np.ndarray:
    """Weighted vote over the k retrieved label rows, one probability per
    column: plain label sums divided elementwise by weighted sums in which a
    0 label contributes w instead of 1."""
    selected_labels = np.asarray(selected_labels)
    if selected_labels.ndim != 2 or selected_labels.shape[0] == 0:
        raise ValueError("selected labels must be a non-empty (k, columns) array")
    k = selected_labels.shape[0]
    w = np.asarray(weights, dtype=np.float64)
    if columns is not None:
        w = w[np.asarray(columns, dtype=np.int64)]
    n1 = selected_labels.sum(axis=0, dtype=np.float64)
    return n1 / (n1 + w * (k - n1))


def threshold_labels(probabilities: np.ndarray, q: float) -> np.ndarray:
    """Decision filter: label 1 strictly above q, 0 at or below."""
    return (np.asarray(probabilities) > q).astype(np.uint8)


def neighborhood_columns(layout: SwarmLayout) -> list[np.ndarray]:
    """Per astrobot, the member ids of its neighborhood (center first)."""
    return [
        np.asarray(neighborhood_of(layout, i).member_ids, dtype=np.int64)
        for i in range(layout.n)
    ]


def neighborhood_selections(
    columns_per_center: list[np.ndarray], colD: np.ndarray, k: int
) -> list[np.ndarray]:
    """Per neighborhood, the k closest train indices under that
    neighborhood's restricted distance metric."""
    return [
        k_smallest_indices(colD[:, cols].sum(axis=1), k) for cols in columns_per_center
    ]


def probabilities_from_selections(
    columns_per_center: list[np.ndarray],
    selections: list[np.ndarray],
    train_labels: np.ndarray,
    weights: WeightVector,
    eta: np.ndarray,
) -> np.ndarray:
    """Fold per-neighborhood weighted votes into the final probability vector:
    each astrobot averages the local probabilities of the eta neighborhoods
    that contain it."""
    total = np.zeros(eta.shape[0], dtype=np.float64)
    for cols, sel in zip(columns_per_center, selections):
        total[cols] += primary_probabilities(train_labels[sel][:, cols], weights.w[cols])
    return total / eta


class ConvergencePredictor:
    """Lazy learner bound to one layout and one train split.

    Weights are computed once from the full train split and reused by every
    neighborhood; prediction itself is a per-configuration scan.
    """

    def __init__(
        self,
        layout: SwarmLayout,
        train_targets: np.ndarray,
        train_labels: np.ndarray,
        hp: Hyperparameters,
    ):
        train_targets = np.asarray(train_targets, dtype=np.float64)
        train_labels = np.asarray(train_labels)
        if train_targets.ndim != 3 or train_targets.shape[1:] != (layout.n, 2):
            raise ValueError("train targets must have shape (configurations, n, 2)")
        if train_labels.shape != train_targets.shape[:2]:
            raise ValueError("train labels must align with train targets")
        if hp.k > train_targets.shape[0]:
            raise ValueError(f"k={hp.k} exceeds train size {train_targets.shape[0]}")
        self.layout = layout
        self.train_targets = train_targets
        self.train_labels = train_labels
        self.hp = hp
        u, v = frequency_vectors(train_labels)
        self.weights = weight_vector(u, v, layout, hp.alpha, hp.beta)
        self.eta = 1 + layout.degrees()
        self._columns = neighborhood_columns(layout)

    def predict(self, test_cfg) -> PredictionResult:
        """Localized pipeline over every neighborhood of the swarm."""
        test_targets = _targets_of(test_cfg)
        if test_targets.shape != (self.layout.n, 2):
            raise ValueError(f"test configuration must have shape ({self.layout.n}, 2)")
        colD = column_distances(self.train_targets, test_targets)
        selections = neighborhood_selections(self._columns, colD, self.hp.k)
        probabilities = probabilities_from_selections(
            self._columns, selections, self.train_labels, self.weights, self.eta
        )
        return PredictionResult(
            probabilities=probabilities,
            labels=threshold_labels(probabilities, self.hp.q),
            eta=self.eta.copy(),
        )

    def predict_global(self, test_cfg) -> PredictionResult:
        """Single whole-swarm pass (no localization): one retrieval over all
        columns, one weighted vote per astrobot."""
        test_targets = _targets_of(test_cfg)
        if test_targets.shape != (self.layout.n, 2):
            raise ValueError(f"test configuration must have shape ({self.layout.n}, 2)")
        colD = column_distances(self.train_targets, test_targets)
        sel = k_smallest_indices(colD.sum(axis=1), self.hp.k)
        probabilities = primary_probabilities(self.train_labels[sel], self.weights.w)
        return PredictionResult(
            probabilities=probabilities,
            labels=threshold_labels(probabilities, self.hp.q),
            eta=np.ones(self.layout.n, dtype=np.int64),
        )


def localized_predict(
    layout: SwarmLayout,
    train_targets: np.ndarray,
    train_labels: np.ndarray,
    test_cfg,
    hp: Hyperparameters,
) -> PredictionResult:
    """One-shot localized prediction; see ConvergencePredictor for reuse."""
    return ConvergencePredictor(layout, train_targets, train_labels, hp).predict(test_cfg)


def predict_global(
    layout: SwarmLayout,
    train_targets: np.ndarray,
    train_labels: np.ndarray,
    test_cfg,
    hp: Hyperparameters,
) -> PredictionResult:
    """One-shot whole-swarm prediction without localization."""
    return ConvergencePredictor(layout, train_targets, train_labels, hp).predict_global(test_cfg)
