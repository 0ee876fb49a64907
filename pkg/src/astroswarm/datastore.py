"""Dataset persistence and Monte Carlo cross-validation splits.

Datasets are JSON-lines files: one header line describing provenance (layout
fingerprint, simulator parameters, seeds, population), then one line per
labeled configuration. Plain JSON keeps files diffable and lets floats
round-trip exactly through Python's shortest-repr formatting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .oracle import Configuration, SimParams


@dataclass
class Dataset:
    """Labeled configurations plus everything needed to reproduce them."""

    layout_fingerprint: str
    sim_params: SimParams
    seed: int
    n: int
    min_target_sep: float
    configurations: list[Configuration] = field(default_factory=list)

    def __post_init__(self) -> None:
        for idx, config in enumerate(self.configurations):
            if config.n != self.n:
                raise ValueError(f"configuration {idx} has population {config.n}, dataset has {self.n}")
            if config.ground_truth is None:
                raise ValueError(f"configuration {idx} lacks a ground truth")

    @property
    def count(self) -> int:
        return len(self.configurations)

    def targets_array(self) -> np.ndarray:
        """(count, n, 2) stack of configuration matrices."""
        return np.stack([c.targets for c in self.configurations])

    def labels_array(self) -> np.ndarray:
        """(count, n) stack of ground truth bits."""
        return np.stack([c.ground_truth for c in self.configurations])


@dataclass(frozen=True)
class SplitPlan:
    """Monte Carlo cross-validation schedule: independent uniform test draws,
    so a configuration may be tested several times or never."""

    iterations: int = 15
    test_count: int = 51
    seed: int = 0

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.test_count < 1:
            raise ValueError("test_count must be >= 1")


def save_dataset(ds: Dataset, path) -> None:
    header = {
        "layout_fingerprint": ds.layout_fingerprint,
        "sim_params": ds.sim_params.to_dict(),
        "min_target_sep": ds.min_target_sep,
        "seed": ds.seed,
        "n": ds.n,
        "count": ds.count,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for i, config in enumerate(ds.configurations):
            record = {
                "id": i,
                "targets": config.targets.tolist(),
                "g": config.ground_truth.tolist(),
            }
            fh.write(json.dumps(record) + "\n")


def load_dataset(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty dataset file")
    try:
        header = json.loads(lines[0])
        fingerprint = header["layout_fingerprint"]
        params = SimParams.from_dict(header["sim_params"])
        declared = int(header["count"])
        n = int(header["n"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: line 1: malformed header ({exc})") from exc

    configurations = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            if "layout_fingerprint" in record:
                if record["layout_fingerprint"] != fingerprint:
                    raise ValueError("fingerprint mismatch; file mixes datasets")
                raise ValueError("unexpected second header")
            config = Configuration(
                targets=np.array(record["targets"], dtype=np.float64),
                ground_truth=np.array(record["g"], dtype=np.uint8),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}: line {lineno}: {exc}") from exc
        configurations.append(config)
    if len(configurations) != declared:
        raise ValueError(
            f"{path}: header declares {declared} configurations, file holds {len(configurations)}"
        )
    return Dataset(
        layout_fingerprint=fingerprint,
        sim_params=params,
        seed=int(header["seed"]),
        n=n,
        min_target_sep=float(header["min_target_sep"]),
        configurations=configurations,
    )


def monte_carlo_splits(ds: Dataset, plan: SplitPlan) -> list[tuple[np.ndarray, np.ndarray]]:
    """Independent (train ids, test ids) partitions, one per iteration."""
    if plan.test_count >= ds.count:
        raise ValueError(f"test_count {plan.test_count} must be < dataset size {ds.count}")
    rng = np.random.default_rng(plan.seed)
    all_ids = np.arange(ds.count)
    splits = []
    for _ in range(plan.iterations):
        test = np.sort(rng.choice(ds.count, size=plan.test_count, replace=False))
        train = np.setdiff1d(all_ids, test, assume_unique=True)
        splits.append((train, test))
    return splits
