"""Normalized performance bookkeeping and the five lifelong metrics.

All metrics are "smaller is better" and computed from normalized tour
lengths ``(d - d*) / d*``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

METRIC_NAMES = ("AP", "AF", "AMF", "APl", "AG")


def normalize(d, d_star):
    d_star = np.asarray(d_star, dtype=float)
    if np.any(d_star <= 0):
        raise ValueError("reference performance must be positive")
    return (np.asarray(d, dtype=float) - d_star) / d_star


def reference_best(matrices: list[np.ndarray]) -> np.ndarray:
    """Per-column minimum over every checkpoint of every run sharing the test sets."""
    stacked = np.vstack([np.asarray(m, dtype=float) for m in matrices])
    return np.nanmin(stacked, axis=0)


def compute_metrics(norm: np.ndarray, k: int | None = None, ag_row=None) -> dict[str, float]:
    """Metrics after learning ``k`` tasks from a normalized K x K matrix.

    ``norm[i, j]`` is the normalized performance on task j after training
    task i (0-based).  ``ag_row[i]`` overrides ``norm[i, i + 1]``, the
    evaluation of task i+1 before training on it.  Metrics needing k >= 2
    are NaN for k = 1.
    """
    norm = np.asarray(norm, dtype=float)
    K = norm.shape[0]
    k = K if k is None else k
    if not 1 <= k <= K:
        raise ValueError(f"k={k} out of range 1..{K}")
    out = {
        "AP": float(np.mean(norm[k - 1, :k])),
        "APl": float(np.mean(np.diag(norm)[:k])),
    }
    if k < 2:
        out.update(AF=float("nan"), AMF=float("nan"), AG=float("nan"))
        return out
    diag = np.diag(norm)
    forget_final = np.maximum(0.0, norm[k - 1, : k - 1] - diag[: k - 1])
    out["AF"] = float(forget_final.mean())
    maxf = [max(max(0.0, norm[j, i] - diag[i]) for j in range(i + 1, k)) for i in range(k - 1)]
    out["AMF"] = float(np.mean(maxf))
    gen = np.asarray(ag_row, dtype=float)[: k - 1] if ag_row is not None else np.array([norm[i, i + 1] for i in range(k - 1)])
    out["AG"] = float(gen.mean())
    return {name: out[name] for name in METRIC_NAMES}


@dataclass
class PerformanceMatrix:
    tasks: list[str]
    raw: np.ndarray

    def normalized(self, d_star) -> np.ndarray:
        return normalize(self.raw, np.asarray(d_star)[None, :])

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["after"] + list(self.tasks))
            for name, row in zip(self.tasks, self.raw):
                writer.writerow([name] + [repr(float(v)) for v in row])

    @classmethod
    def read_csv(cls, path: str | Path) -> "PerformanceMatrix":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        tasks = rows[0][1:]
        raw = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
        return cls(tasks, raw)


def scaled_for_table(value: float) -> float:
    """Presentation scaling: table cells show metrics in units of 1e-3."""
    return value * 1e3
