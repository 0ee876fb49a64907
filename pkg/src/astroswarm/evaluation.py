"""Confusion statistics, Monte Carlo evaluation, sweeps, and ROC generation.

Counts are pooled across iterations before rates are computed
(micro-averaging); per-iteration reports are also emitted so either
convention can be inspected. Ratios with zero denominators are reported as
absent together with the reason, never silently coerced to 0 - a corrector
extreme that kills every positive prediction should be visible as such.

The protocol pieces: a positive astrobot is one that truly converged, so TP
means predicted-1/actual-1, and TNR/TPR trade off through k and the
corrector coefficients. Balanced accuracy is their average; precision,
recall, and F1 follow the usual definitions.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .datastore import Dataset, SplitPlan, monte_carlo_splits
from .geometry import SwarmLayout, layout_fingerprint
from .predictor import (
    Hyperparameters,
    column_distances,
    frequency_vectors,
    neighborhood_columns,
    neighborhood_selections,
    probabilities_from_selections,
    weight_vector,
)

SWEEP_AXES = ("k", "correctors")

RATE_FIELDS = ("tpr", "tnr", "fpr", "fnr", "balanced_accuracy", "precision", "recall", "f1")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class DegreeBreakdown:
    """Rates for the astrobots sharing one neighbor count."""

    degree: int
    astrobots: int
    counts: ConfusionCounts
    tpr: float | None
    tnr: float | None
    balanced_accuracy: float | None
    reasons: dict = field(default_factory=dict)


@dataclass(frozen=True)
class MetricsReport:
    counts: ConfusionCounts
    tpr: float | None
    tnr: float | None
    fpr: float | None
    fnr: float | None
    balanced_accuracy: float | None
    precision: float | None
    recall: float | None
    f1: float | None
    reasons: dict = field(default_factory=dict)
    per_neighbor_count: dict | None = None


@dataclass(frozen=True)
class EvaluationResult:
    hp: Hyperparameters
    pooled: MetricsReport
    per_iteration: list


@dataclass(frozen=True)
class ROCPoint:
    alpha: float
    fpr: float
    tpr: float


@dataclass(frozen=True)
class ROCResult:
    k: int
    points: list
    diagonal_note: str = "diagonal tpr == fpr is the no-skill reference"


def confusion(predicted, actual) -> ConfusionCounts:
    predicted = np.asarray(predicted).astype(bool).ravel()
    actual = np.asarray(actual).astype(bool).ravel()
    if predicted.shape != actual.shape:
        raise ValueError(f"length mismatch: {predicted.shape[0]} predictions vs {actual.shape[0]} truths")
    return ConfusionCounts(
        tp=int(np.sum(predicted & actual)),
        fp=int(np.sum(predicted & ~actual)),
        tn=int(np.sum(~predicted & ~actual)),
        fn=int(np.sum(~predicted & actual)),
    )


def metrics(counts: ConfusionCounts, per_neighbor_count: dict | None = None) -> MetricsReport:
    """Derived rates with explicit absence for zero denominators."""
    reasons: dict[str, str] = {}

    def ratio(num, den, name, why):
        if den == 0:
            reasons[name] = why
            return None
        return num / den

    tpr = ratio(counts.tp, counts.tp + counts.fn, "tpr", "no positive ground truth")
    tnr = ratio(counts.tn, counts.tn + counts.fp, "tnr", "no negative ground truth")
    precision = ratio(counts.tp, counts.tp + counts.fp, "precision", "no positive predictions")
    fpr = None if tnr is None else 1.0 - tnr
    fnr = None if tpr is None else 1.0 - tpr
    if tnr is None:
        reasons["fpr"] = reasons["tnr"]
    if tpr is None:
        reasons["fnr"] = reasons["tpr"]
        reasons["recall"] = reasons["tpr"]
    balanced = None
    if tpr is not None and tnr is not None:
        balanced = (tpr + tnr) / 2.0
    else:
        reasons["balanced_accuracy"] = "tpr or tnr undefined"
    f1 = None
    if precision is None or tpr is None:
        reasons["f1"] = "precision or recall undefined"
    elif precision + tpr == 0:
        reasons["f1"] = "precision and recall both zero"
    else:
        f1 = 2.0 * precision * tpr / (precision + tpr)
    return MetricsReport(
        counts=counts,
        tpr=tpr,
        tnr=tnr,
        fpr=fpr,
        fnr=fnr,
        balanced_accuracy=balanced,
        precision=precision,
        recall=tpr,
        f1=f1,
        reasons=reasons,
        per_neighbor_count=per_neighbor_count,
    )


def _degree_breakdown(per_degree: np.ndarray, degrees: np.ndarray) -> dict:
    """per_degree rows are (tp, fp, tn, fn) tallies indexed by neighbor count."""
    breakdown = {}
    population = np.bincount(degrees, minlength=7)
    for degree in range(7):
        if population[degree] == 0:
            continue
        tp, fp, tn, fn = (int(x) for x in per_degree[degree])
        counts = ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)
        rates = metrics(counts)
        breakdown[degree] = DegreeBreakdown(
            degree=degree,
            astrobots=int(population[degree]),
            counts=counts,
            tpr=rates.tpr,
            tnr=rates.tnr,
            balanced_accuracy=rates.balanced_accuracy,
            reasons={
                name: why
                for name, why in rates.reasons.items()
                if name in ("tpr", "tnr", "balanced_accuracy")
            },
        )
    return breakdown


def _grid_evaluate(
    ds: Dataset, layout: SwarmLayout, plan: SplitPlan, settings: list
) -> list:
    """Evaluate many hyperparameter settings over one split schedule, sharing
    the expensive pieces: column distances are computed once per test
    configuration, neighbor selections once per distinct k, and weight
    vectors once per distinct corrector pair per split."""
    if not settings:
        raise ValueError("settings must be non-empty")
    if ds.layout_fingerprint != layout_fingerprint(layout):
        raise ValueError("dataset was generated for a different layout")
    train_size = ds.count - plan.test_count
    for hp in settings:
        if hp.k > train_size:
            raise ValueError(f"k={hp.k} exceeds train size {train_size}")

    targets = ds.targets_array()
    labels = ds.labels_array()
    columns = neighborhood_columns(layout)
    degrees = layout.degrees()
    eta = 1 + degrees
    distinct_k = sorted({hp.k for hp in settings})
    distinct_ab = sorted({(hp.alpha, hp.beta) for hp in settings})

    n_settings = len(settings)
    per_iteration = [[] for _ in range(n_settings)]
    per_degree = [np.zeros((7, 4), dtype=np.int64) for _ in range(n_settings)]

    for train_ids, test_ids in monte_carlo_splits(ds, plan):
        train_targets = targets[train_ids]
        train_labels = labels[train_ids]
        u, v = frequency_vectors(train_labels)
        weights = {ab: weight_vector(u, v, layout, *ab) for ab in distinct_ab}
        tallies = np.zeros((n_settings, 4), dtype=np.int64)
        for test_id in test_ids:
            colD = column_distances(train_targets, targets[test_id])
            selections = {k: neighborhood_selections(columns, colD, k) for k in distinct_k}
            actual = labels[test_id].astype(bool)
            for s, hp in enumerate(settings):
                probs = probabilities_from_selections(
                    columns, selections[hp.k], train_labels, weights[(hp.alpha, hp.beta)], eta
                )
                predicted = probs > hp.q
                masks = (
                    predicted & actual,
                    predicted & ~actual,
                    ~predicted & ~actual,
                    ~predicted & actual,
                )
                for m, mask in enumerate(masks):
                    tallies[s, m] += int(mask.sum())
                    per_degree[s][:, m] += np.bincount(degrees[mask], minlength=7)
        for s in range(n_settings):
            per_iteration[s].append(ConfusionCounts(*(int(x) for x in tallies[s])))

    results = []
    for s, hp in enumerate(settings):
        pooled_counts = ConfusionCounts(0, 0, 0, 0)
        for c in per_iteration[s]:
            pooled_counts = pooled_counts + c
        pooled = metrics(pooled_counts, per_neighbor_count=_degree_breakdown(per_degree[s], degrees))
        results.append(
            EvaluationResult(
                hp=hp,
                pooled=pooled,
                per_iteration=[metrics(c) for c in per_iteration[s]],
            )
        )
    return results


def monte_carlo_evaluate(
    ds: Dataset, layout: SwarmLayout, hp: Hyperparameters, plan: SplitPlan
) -> EvaluationResult:
    """Repeated random splits, pooled confusion counts, rates plus a
    per-neighbor-count breakdown."""
    return _grid_evaluate(ds, layout, plan, [hp])[0]


def sweep(
    ds: Dataset,
    layout: SwarmLayout,
    plan: SplitPlan,
    axis: str,
    values,
    base_hp: Hyperparameters | None = None,
) -> list:
    """One full MC evaluation per value along the chosen axis: `k` varies the
    neighbor count, `correctors` sets alpha = beta = value. Returns
    (value, EvaluationResult) pairs in the given value order."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}")
    values = list(values)
    if not values:
        raise ValueError("values must be non-empty")
    base_hp = base_hp or Hyperparameters()
    if axis == "k":
        settings = [replace(base_hp, k=int(v)) for v in values]
    else:
        settings = [replace(base_hp, alpha=float(v), beta=float(v)) for v in values]
    results = _grid_evaluate(ds, layout, plan, settings)
    return list(zip(values, results))


def roc_sweep(
    ds: Dataset,
    layout: SwarmLayout,
    plan: SplitPlan,
    k: int,
    corrector_values,
    base_hp: Hyperparameters | None = None,
) -> ROCResult:
    """One pooled (FPR, TPR) point per alpha = beta value at fixed k, sorted
    by FPR for direct plotting against the diagonal."""
    corrector_values = list(corrector_values)
    if len(corrector_values) < 2:
        raise ValueError("roc_sweep needs at least 2 corrector values")
    base_hp = base_hp or Hyperparameters()
    pairs = sweep(ds, layout, plan, "correctors", corrector_values, replace(base_hp, k=k))
    points = []
    for value, result in pairs:
        pooled = result.pooled
        if pooled.fpr is None or pooled.tpr is None:
            missing = {n: w for n, w in pooled.reasons.items() if n in ("fpr", "tpr")}
            raise ValueError(f"ROC point at alpha={value} undefined: {missing}")
        points.append(ROCPoint(alpha=float(value), fpr=pooled.fpr, tpr=pooled.tpr))
    points.sort(key=lambda p: (p.fpr, p.tpr, p.alpha))
    return ROCResult(k=k, points=points)


# --- CSV emission ------------------------------------------------------------

def _rate_cell(value) -> str:
    return "" if value is None else repr(value)


def _notes(report: MetricsReport) -> str:
    return "; ".join(f"{name}: {why}" for name, why in sorted(report.reasons.items()))


def _report_row(label, report: MetricsReport) -> list:
    return [
        label,
        report.counts.tp,
        report.counts.fp,
        report.counts.tn,
        report.counts.fn,
        *(_rate_cell(getattr(report, name)) for name in RATE_FIELDS),
        _notes(report),
    ]


def write_metrics_csv(path, result: EvaluationResult) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "tp", "fp", "tn", "fn", *RATE_FIELDS, "notes"])
        for i, report in enumerate(result.per_iteration, start=1):
            writer.writerow(_report_row(i, report))
        writer.writerow(_report_row("pooled", result.pooled))


def write_sweep_csv(path, axis: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([axis, "tp", "fp", "tn", "fn", *RATE_FIELDS, "notes"])
        for value, result in rows:
            writer.writerow(_report_row(value, result.pooled))


def write_roc_csv(path, roc: ROCResult) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# k={roc.k}; {roc.diagonal_note}\n")
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr", "alpha"])
        for point in roc.points:
            writer.writerow([repr(point.fpr), repr(point.tpr), repr(point.alpha)])


def write_neighbor_breakdown_csv(path, report: MetricsReport) -> None:
    if report.per_neighbor_count is None:
        raise ValueError("report carries no per-neighbor-count breakdown")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["degree", "astrobots", "tp", "fp", "tn", "fn", "tpr", "tnr", "balanced_accuracy", "notes"]
        )
        for degree in sorted(report.per_neighbor_count):
            row = report.per_neighbor_count[degree]
            writer.writerow([
                degree,
                row.astrobots,
                row.counts.tp,
                row.counts.fp,
                row.counts.tn,
                row.counts.fn,
                _rate_cell(row.tpr),
                _rate_cell(row.tnr),
                _rate_cell(row.balanced_accuracy),
                "; ".join(f"{n}: {w}" for n, w in sorted(row.reasons.items())),
            ])
