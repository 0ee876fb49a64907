"""Command-line surface: layout/dataset generation, prediction, evaluation.

Every subcommand writes a JSON manifest next to its primary output with the
resolved flags, seeds, paths, version, and wall-clock duration, so any file
can be regenerated from its manifest alone. Exit code is 0 only when all
outputs were written; failures print a one-line diagnostic to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .datastore import SplitPlan, load_dataset, save_dataset
from .evaluation import (
    monte_carlo_evaluate,
    roc_sweep,
    sweep,
    write_metrics_csv,
    write_neighbor_breakdown_csv,
    write_roc_csv,
    write_sweep_csv,
)
from .geometry import build_hex_swarm, layout_fingerprint, load_layout, save_layout
from .oracle import PRIORITY_RULES, SimParams, generate_dataset
from .predictor import ConvergencePredictor, Hyperparameters

_DEFAULTS = SimParams()


def _default_jobs() -> int:
    raw = os.environ.get("ASTROSWARM_JOBS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _write_manifest(primary_output, command: str, flags: dict, outputs: list, started: float) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "flags": flags,
        "outputs": [str(p) for p in outputs],
        "duration_s": round(time.time() - started, 3),
        "created": datetime.now(timezone.utc).isoformat(),
    }
    path = str(primary_output) + ".manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _flags_of(args: argparse.Namespace) -> dict:
    skip = {"func", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _load_pair(layout_path, dataset_path):
    layout = load_layout(layout_path)
    ds = load_dataset(dataset_path)
    if ds.layout_fingerprint != layout_fingerprint(layout):
        raise ValueError(
            f"dataset {dataset_path} was generated for a different layout than {layout_path}"
        )
    return layout, ds


def _sim_params(args: argparse.Namespace) -> SimParams:
    return SimParams(
        omega_max=args.omega_max,
        eps_safety=args.eps_safety,
        tol_converge=args.tol_converge,
        max_ticks=args.max_ticks,
        deadlock_window=args.deadlock_window,
        priority_rule=args.priority_rule,
    )


def _hyperparameters(args: argparse.Namespace) -> Hyperparameters:
    return Hyperparameters(k=args.k, alpha=args.alpha, beta=args.beta, q=args.q)


def _split_plan(args: argparse.Namespace) -> SplitPlan:
    return SplitPlan(iterations=args.iterations, test_count=args.test_count, seed=args.split_seed)


def _parse_values(raw: str) -> list[float]:
    """Comma list ('3,13,25') or inclusive range syntax ('0.85:1.1:0.025')."""
    raw = raw.strip()
    if ":" in raw:
        parts = raw.split(":")
        if len(parts) != 3:
            raise ValueError(f"range syntax is start:stop:step, got {raw!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ValueError("range step must be positive")
        count = int(round((stop - start) / step))
        values = [start + i * step for i in range(count + 1)]
        return [v for v in values if v <= stop + 1e-12]
    return [float(p) for p in raw.split(",") if p.strip()]


def cmd_layout(args: argparse.Namespace) -> None:
    started = time.time()
    layout = build_hex_swarm(
        rings=args.rings, count=args.count, pitch=args.pitch, l1=args.l1, l2=args.l2
    )
    save_layout(layout, args.out)
    _write_manifest(args.out, "layout", _flags_of(args), [args.out], started)
    print(f"wrote {args.out}: {layout.n} astrobots, fingerprint {layout_fingerprint(layout)[:12]}")


def cmd_generate(args: argparse.Namespace) -> None:
    started = time.time()
    layout = load_layout(args.layout)
    ds = generate_dataset(
        layout,
        count=args.count,
        params=_sim_params(args),
        seed=args.seed,
        min_target_sep=args.min_target_sep,
        jobs=args.jobs,
    )
    save_dataset(ds, args.out)
    _write_manifest(args.out, "generate", _flags_of(args), [args.out], started)
    rate = float(ds.labels_array().mean())
    print(f"wrote {args.out}: {ds.count} configurations, mean convergence rate {rate:.4f}")


def _read_test_config(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        record = json.load(fh)
    if isinstance(record, dict):
        record = record["targets"]
    return np.asarray(record, dtype=np.float64)


def cmd_predict(args: argparse.Namespace) -> None:
    started = time.time()
    layout, ds = _load_pair(args.layout, args.dataset)
    test_targets = _read_test_config(args.test_config)
    predictor = ConvergencePredictor(
        layout, ds.targets_array(), ds.labels_array(), _hyperparameters(args)
    )
    result = predictor.predict(test_targets)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "gamma", "label", "eta"])
        for i in range(layout.n):
            writer.writerow(
                [i, repr(float(result.probabilities[i])), int(result.labels[i]), int(result.eta[i])]
            )
    _write_manifest(args.out, "predict", _flags_of(args), [args.out], started)
    print(f"wrote {args.out}: {int(result.labels.sum())}/{layout.n} astrobots predicted to converge")


def cmd_evaluate(args: argparse.Namespace) -> None:
    started = time.time()
    layout, ds = _load_pair(args.layout, args.dataset)
    result = monte_carlo_evaluate(ds, layout, _hyperparameters(args), _split_plan(args))
    write_metrics_csv(args.out, result)
    outputs = [args.out]
    breakdown_out = args.breakdown_out
    if breakdown_out is None:
        breakdown_out = os.path.join(os.path.dirname(os.path.abspath(args.out)), "neighbor_breakdown.csv")
    write_neighbor_breakdown_csv(breakdown_out, result.pooled)
    outputs.append(breakdown_out)
    _write_manifest(args.out, "evaluate", _flags_of(args), outputs, started)
    pooled = result.pooled
    summary = ", ".join(
        f"{name}={getattr(pooled, name):.4f}"
        for name in ("tpr", "tnr", "balanced_accuracy", "precision")
        if getattr(pooled, name) is not None
    )
    print(f"wrote {args.out} and {breakdown_out}: {summary}")


def cmd_sweep(args: argparse.Namespace) -> None:
    started = time.time()
    layout, ds = _load_pair(args.layout, args.dataset)
    values = _parse_values(args.values)
    if args.axis == "k":
        values = [int(v) for v in values]
    rows = _run_sweep(ds, layout, _split_plan(args), args.axis, values, _hyperparameters(args), args.jobs)
    write_sweep_csv(args.out, args.axis, rows)
    _write_manifest(args.out, "sweep", _flags_of(args), [args.out], started)
    print(f"wrote {args.out}: {len(rows)} settings along {args.axis}")


def _run_sweep(ds, layout, plan, axis, values, base_hp, jobs):
    if jobs <= 1 or len(values) <= 1:
        return sweep(ds, layout, plan, axis, values, base_hp)
    # farm value chunks to workers; results reassemble in value order, so the
    # output is identical to a serial run
    from concurrent.futures import ProcessPoolExecutor

    chunks = [values[i::jobs] for i in range(jobs)]
    chunks = [c for c in chunks if c]
    with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
        partials = list(
            pool.map(_sweep_chunk, [(ds, layout, plan, axis, chunk, base_hp) for chunk in chunks])
        )
    by_value = {}
    for part in partials:
        for value, result in part:
            by_value[value] = result
    return [(value, by_value[value]) for value in values]


def _sweep_chunk(packed):
    ds, layout, plan, axis, values, base_hp = packed
    return sweep(ds, layout, plan, axis, values, base_hp)


def cmd_roc(args: argparse.Namespace) -> None:
    started = time.time()
    layout, ds = _load_pair(args.layout, args.dataset)
    alphas = _parse_values(args.alphas)
    roc = roc_sweep(ds, layout, _split_plan(args), k=args.k, corrector_values=alphas,
                    base_hp=Hyperparameters(k=args.k, q=args.q))
    write_roc_csv(args.out, roc)
    _write_manifest(args.out, "roc", _flags_of(args), [args.out], started)
    print(f"wrote {args.out}: {len(roc.points)} ROC points at k={args.k}")


def _add_hp_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", type=int, default=13, help="neighbor count (default 13)")
    parser.add_argument("--alpha", type=float, default=1.0,
                        help="corrector for 6-neighbor astrobots (default 1.0)")
    parser.add_argument("--beta", type=float, default=1.0,
                        help="corrector for all other astrobots (default 1.0)")
    parser.add_argument("--q", type=float, default=0.5, help="decision filter (default 0.5)")


def _add_plan_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--iterations", type=int, default=15,
                        help="Monte Carlo iterations (default 15)")
    parser.add_argument("--test-count", type=int, default=51,
                        help="test configurations per iteration (default 51)")
    parser.add_argument("--split-seed", type=int, default=0, help="split stream seed (default 0)")


def _add_io_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--layout", required=True, help="layout JSON file")
    parser.add_argument("--dataset", required=True, help="dataset JSONL file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="astroswarm",
        description="Hexagonal astrobot swarm simulator and convergence predictor",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("layout", help="build a hexagonal swarm layout file")
    p.add_argument("--rings", type=int, required=True, help="hexagon ring count")
    p.add_argument("--count", type=int, default=None,
                   help="astrobot count (default: full hexagon)")
    p.add_argument("--pitch", type=float, default=22.4, help="center spacing in mm (default 22.4)")
    p.add_argument("--l1", type=float, default=11.2, help="first arm length in mm (default 11.2)")
    p.add_argument("--l2", type=float, default=11.2, help="second arm length in mm (default 11.2)")
    p.add_argument("--out", required=True, help="output layout JSON path")
    p.set_defaults(func=cmd_layout)

    p = sub.add_parser("generate", help="simulate labeled configurations into a dataset")
    p.add_argument("--layout", required=True, help="layout JSON file")
    p.add_argument("--count", type=int, required=True, help="number of configurations")
    p.add_argument("--seed", type=int, default=0, help="generation seed (default 0)")
    p.add_argument("--omega-max", type=float, default=_DEFAULTS.omega_max,
                   help=f"max joint step per tick in rad (default {_DEFAULTS.omega_max})")
    p.add_argument("--eps-safety", type=float, default=_DEFAULTS.eps_safety,
                   help=f"min arm-to-arm distance in mm (default {_DEFAULTS.eps_safety})")
    p.add_argument("--tol-converge", type=float, default=_DEFAULTS.tol_converge,
                   help=f"ferrule-to-target tolerance in mm (default {_DEFAULTS.tol_converge})")
    p.add_argument("--max-ticks", type=int, default=_DEFAULTS.max_ticks,
                   help=f"tick budget (default {_DEFAULTS.max_ticks})")
    p.add_argument("--deadlock-window", type=int, default=_DEFAULTS.deadlock_window,
                   help=f"no-progress ticks before giving up (default {_DEFAULTS.deadlock_window})")
    p.add_argument("--priority-rule", choices=PRIORITY_RULES, default=_DEFAULTS.priority_rule,
                   help=f"astrobot stepping order (default {_DEFAULTS.priority_rule})")
    p.add_argument("--min-target-sep", type=float, default=None,
                   help="min distance between neighboring targets (default: eps-safety)")
    p.add_argument("--jobs", type=int, default=_default_jobs(),
                   help="parallel workers (default: ASTROSWARM_JOBS or 1)")
    p.add_argument("--out", required=True, help="output dataset JSONL path")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("predict", help="predict convergence for one test configuration")
    _add_io_flags(p)
    p.add_argument("--test-config", required=True,
                   help="JSON file with [[x, y], ...] targets (or {'targets': ...})")
    _add_hp_flags(p)
    p.add_argument("--out", required=True, help="output CSV path (id, gamma, label, eta)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="Monte Carlo cross-validated metrics")
    _add_io_flags(p)
    _add_hp_flags(p)
    _add_plan_flags(p)
    p.add_argument("--out", required=True, help="output metrics CSV path")
    p.add_argument("--breakdown-out", default=None,
                   help="per-neighbor-count CSV path (default: neighbor_breakdown.csv beside --out)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="metrics along a hyperparameter axis")
    _add_io_flags(p)
    p.add_argument("--axis", choices=("k", "correctors"), required=True)
    p.add_argument("--values", required=True,
                   help="comma list (3,13,25) or range start:stop:step")
    _add_hp_flags(p)
    _add_plan_flags(p)
    p.add_argument("--jobs", type=int, default=_default_jobs(),
                   help="parallel workers (default: ASTROSWARM_JOBS or 1)")
    p.add_argument("--out", required=True, help="output sweep CSV path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("roc", help="ROC points over corrector values at fixed k")
    _add_io_flags(p)
    p.add_argument("--k", type=int, default=13, help="neighbor count (default 13)")
    p.add_argument("--q", type=float, default=0.5, help="decision filter (default 0.5)")
    p.add_argument("--alphas", required=True,
                   help="corrector values: comma list or range start:stop:step")
    _add_plan_flags(p)
    p.add_argument("--out", required=True, help="output ROC CSV path")
    p.set_defaults(func=cmd_roc)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
