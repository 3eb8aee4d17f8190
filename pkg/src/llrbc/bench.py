"""Zero-shot evaluation of checkpoints on TSPLIB / CVRPLIB instances."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import tour_length, validate_route
from .policy import AttentionPolicy, best_of_starts, load_checkpoint
from .tasks import ParseError, ProblemInstance, UnsupportedFormatError, read_benchmark

log = logging.getLogger(__name__)

DECODE_LIMIT = 1001
CSV_COLUMNS = ("name", "n", "raw_length", "normalized_length", "gap")


@dataclass
class BenchmarkResult:
    name: str
    n: int
    raw_length: float  # convention space (TSPLIB nint on original coordinates)
    normalized_length: float  # unit-square coordinates the policy sees
    gap: float = float("nan")  # vs the best checkpoint of the suite on this instance
    route: list[int] = field(default_factory=list, repr=False)


def load_suite(instance_dir: str | Path, kind: str | None = None,
               decode_limit: int = DECODE_LIMIT) -> list[ProblemInstance]:
    """Parse every benchmark file in a directory, skipping what cannot be evaluated."""
    paths = sorted(p for p in Path(instance_dir).iterdir() if p.suffix.lower() in (".tsp", ".vrp"))
    suite = []
    for path in paths:
        try:
            inst = read_benchmark(path)
        except (UnsupportedFormatError, ParseError) as exc:
            warnings.warn(f"skipping {path.name}: {exc}")
            continue
        if kind is not None and inst.kind != kind:
            continue
        if inst.n + (1 if inst.kind == "CVRP" else 0) > decode_limit:
            warnings.warn(f"skipping {inst.name}: {inst.n} nodes exceed the decode limit {decode_limit}")
            continue
        suite.append(inst)
    return suite


def evaluate_instances(policy: AttentionPolicy, suite: list[ProblemInstance],
                       convention: str = "tsplib_nint") -> list[BenchmarkResult]:
    """Greedy multi-start best-of-n on each instance; every route is validated."""
    out = []
    for inst in suite:
        if inst.kind != policy.kind:
            raise ValueError(f"{inst.name} is {inst.kind}, checkpoint solves {policy.kind}")
        lengths, routes = best_of_starts(policy, [inst], chunk=1)
        route = routes[0]
        validate_route(route, inst)
        raw = tour_length(route, inst, convention if inst.raw_coords is not None else "euclidean")
        out.append(BenchmarkResult(inst.name, inst.n, raw, float(lengths[0]), route=route))
        log.info("%s n=%d length=%.1f", inst.name, inst.n, raw)
    return out


def assign_gaps(results: dict[str, list[BenchmarkResult]]) -> None:
    """Gap of every checkpoint against the per-instance best of the suite (in place)."""
    by_name: dict[str, float] = {}
    for rows in results.values():
        for r in rows:
            by_name[r.name] = min(by_name.get(r.name, np.inf), r.raw_length)
    for rows in results.values():
        for r in rows:
            r.gap = (r.raw_length - by_name[r.name]) / by_name[r.name]


def evaluate_benchmark(checkpoints, instance_dir: str | Path, decode_limit: int = DECODE_LIMIT,
                       convention: str = "tsplib_nint") -> dict[str, list[BenchmarkResult]]:
    """Evaluate one or more checkpoints on a benchmark directory.

    ``checkpoints`` maps labels to checkpoint paths or policies (a single
    path or policy is also accepted).  Gaps are relative to the best
    checkpoint in this call, so the suite-best has gap 0 on every instance.
    """
    if isinstance(checkpoints, (str, Path, AttentionPolicy)):
        checkpoints = {"checkpoint": checkpoints}
    policies = {label: load_checkpoint(c) if not isinstance(c, AttentionPolicy) else c
                for label, c in checkpoints.items()}
    kinds = {p.kind for p in policies.values()}
    if len(kinds) != 1:
        raise ValueError("checkpoints in one suite must solve the same problem kind")
    suite = load_suite(instance_dir, kinds.pop(), decode_limit)
    if not suite:
        raise ValueError(f"no evaluable instances in {instance_dir}")
    results = {label: evaluate_instances(policy, suite, convention) for label, policy in policies.items()}
    assign_gaps(results)
    return results


def write_results_csv(rows: list[BenchmarkResult], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow([r.name, r.n, repr(r.raw_length), repr(r.normalized_length), repr(r.gap)])


def read_results_csv(path: str | Path) -> list[BenchmarkResult]:
    with open(path, newline="") as fh:
        return [BenchmarkResult(row["name"], int(row["n"]), float(row["raw_length"]),
                                float(row["normalized_length"]), float(row["gap"]))
                for row in csv.DictReader(fh)]
