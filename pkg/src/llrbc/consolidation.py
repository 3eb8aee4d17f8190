"""Experience buffering, confidence-aware weighting and behavior consolidation."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
import torch

from .policy import DTYPE, PROB_FLOOR, AttentionPolicy, RolloutResult

DIVERGENCES = ("RKLD", "KLD")


class DataCorruptionError(RuntimeError):
    """Buffered experiences are inconsistent with the current feasibility rules."""


def var_max(n: int) -> float:
    return (n - 1) / n**2


def confidence_weight(probs) -> float:
    """1 - var(P)/var_max(|P|) over the full action vector (masked zeros included)."""
    p = np.asarray(probs, dtype=float)
    if p.size < 2:
        raise ValueError("need at least two actions")
    # var <= var_max holds exactly; clip the rounding residue of near one-hot vectors
    return min(1.0, max(0.0, float(1.0 - p.var() / var_max(p.size))))


def confidence_weights(probs: torch.Tensor) -> torch.Tensor:
    """Vectorized ``confidence_weight`` over the last axis."""
    n = probs.shape[-1]
    if n < 2:
        raise ValueError("need at least two actions")
    return (1.0 - probs.var(dim=-1, unbiased=False) / var_max(n)).clamp(0.0, 1.0)


def normalize_weights(raw) -> np.ndarray:
    """Rescale raw weights to sum to one; all-zero input falls back to uniform."""
    w = np.asarray(raw, dtype=float)
    if w.size == 0:
        raise ValueError("no experiences")
    total = w.sum()
    if total <= 0:
        return np.full(w.size, 1.0 / w.size)
    return w / total


def divergence(current: torch.Tensor, buffered: torch.Tensor, mask: torch.Tensor, mode: str = "RKLD") -> torch.Tensor:
    """Per-state divergence summed over feasible actions.

    RKLD is sum P_theta log(P_theta / P); KLD swaps the roles.  ``buffered``
    is floored before the log; only ``current`` carries gradients.
    """
    if mode not in DIVERGENCES:
        raise ValueError(f"unknown divergence {mode!r}")
    q = current.clamp_min(PROB_FLOOR)
    p = buffered.detach().clamp_min(PROB_FLOOR)
    if mode == "RKLD":
        terms = current * (torch.log(q) - torch.log(p))
    else:
        terms = buffered * (torch.log(p) - torch.log(q))
    return torch.where(mask, terms, torch.zeros_like(terms)).sum(dim=-1)


@dataclass
class ExperienceBatch:
    """States and behaviors from one training step, grouped by instance.

    Tensors are (I, S, ...) for I instances with up to S states each;
    ``valid`` flags real (non-padding) states.
    """

    kind: str
    features: torch.Tensor  # (I, A, 3)
    current: torch.Tensor  # (I, S) long
    mask: torch.Tensor  # (I, S, A) bool
    remaining: torch.Tensor  # (I, S) fraction of capacity
    probs: torch.Tensor  # (I, S, A)
    valid: torch.Tensor  # (I, S) bool

    def __post_init__(self):
        if int(self.valid.sum()) == 0:
            raise ValueError("experience batch must be non-empty")

    @property
    def size(self) -> int:
        return int(self.valid.sum())

    @classmethod
    def from_rollout(cls, result: RolloutResult, instances: slice | list[int] | None = None) -> "ExperienceBatch":
        """Collect decision states of the rollouts of the selected instances."""
        if result.rec_probs is None:
            raise ValueError("rollout was not recorded")
        idx = slice(None) if instances is None else instances
        B, P, T, A = result.rec_probs[idx].shape
        flat = lambda t: t[idx].reshape(t[idx].shape[0], P * T, *t.shape[3:])
        return cls(
            kind=result.kind,
            features=result.features[idx].clone(),
            current=flat(result.rec_current).clone(),
            mask=flat(result.rec_mask).clone(),
            remaining=flat(result.rec_remaining).clone(),
            probs=flat(result.rec_probs).clone(),
            valid=flat(result.rec_live).clone(),
        )

    def nbytes(self) -> int:
        return sum(t.element_size() * t.numel() for t in
                   (self.features, self.current, self.mask, self.remaining, self.probs, self.valid))

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k).numpy() for k in ("features", "current", "mask", "remaining", "probs", "valid")}

    @classmethod
    def from_arrays(cls, kind: str, arrays: dict) -> "ExperienceBatch":
        return cls(kind=kind, **{k: torch.as_tensor(np.asarray(v)) for k, v in arrays.items()})


def recompute_behaviors(policy: AttentionPolicy, batch: ExperienceBatch) -> torch.Tensor:
    enc = policy.encode(batch.features)
    rem = batch.remaining if policy.kind == "CVRP" else None
    return policy.decode(enc, batch.current, batch.mask, rem)


def bc_loss(policy: AttentionPolicy, batches: list[ExperienceBatch], divergence_mode: str = "RKLD",
            weighting: str = "confidence", check_masks: bool = True) -> torch.Tensor:
    """Weighted divergence between current and buffered behaviors on buffered states.

    Weights are confidence-based (or uniform) per experience and normalized
    jointly over every experience of every sampled batch.
    """
    if not batches:
        raise ValueError("no experiences sampled")
    divs, raws = [], []
    for batch in batches:
        current = recompute_behaviors(policy, batch)
        if check_masks:
            leak = (batch.probs > 0) & ~batch.mask
            if bool((leak & batch.valid[..., None]).any()):
                raise DataCorruptionError("buffered behavior has mass on infeasible actions")
        valid = batch.valid
        divs.append(divergence(current, batch.probs, batch.mask, divergence_mode)[valid])
        if weighting == "confidence":
            raws.append(confidence_weights(batch.probs)[valid])
        elif weighting == "uniform":
            raws.append(torch.ones(int(valid.sum()), dtype=DTYPE))
        else:
            raise ValueError(f"unknown weighting {weighting!r}")
    div = torch.cat(divs)
    raw = torch.cat(raws)
    total = raw.sum()
    weights = raw / total if total > 0 else torch.full_like(raw, 1.0 / raw.numel())
    return (weights * div).sum()


class ReservoirBuffer:
    """Fixed-capacity reservoir over offered experience batches."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("buffer capacity must be >= 1")
        self.capacity = capacity
        self.entries: list[ExperienceBatch] = []
        self.seen = 0

    def __len__(self) -> int:
        return len(self.entries)

    def offer(self, batch, rng: np.random.Generator) -> bool:
        """Reservoir update; returns whether ``batch`` was stored."""
        self.seen += 1
        if len(self.entries) < self.capacity:
            self.entries.append(batch)
            return True
        if rng.random() < self.capacity / self.seen:
            self.entries[int(rng.integers(len(self.entries)))] = batch
            return True
        return False

    def sample(self, count: int, rng: np.random.Generator) -> list:
        """``count`` entries, with replacement only when ``count`` exceeds the buffer."""
        if not self.entries:
            raise ValueError("cannot sample from an empty buffer")
        if count < 1:
            raise ValueError("count must be >= 1")
        replace = count > len(self.entries)
        idx = rng.choice(len(self.entries), size=count, replace=replace)
        return [self.entries[int(i)] for i in idx]

    def nbytes(self) -> int:
        return sum(e.nbytes() for e in self.entries if hasattr(e, "nbytes"))

    # checkpoints ---------------------------------------------------------
    def save(self, path) -> None:
        arrays = {"capacity": np.array(self.capacity), "seen": np.array(self.seen),
                  "count": np.array(len(self.entries))}
        kinds = []
        for i, entry in enumerate(self.entries):
            kinds.append(entry.kind)
            for key, value in entry.to_arrays().items():
                arrays[f"{i}/{key}"] = value
        arrays["kinds"] = np.array(kinds, dtype="U4")
        buf = io.BytesIO()
        np.savez(buf, **arrays)
        from pathlib import Path

        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(buf.getvalue())
        tmp.replace(path)

    @classmethod
    def load(cls, path) -> "ReservoirBuffer":
        with np.load(path) as data:
            buf = cls(int(data["capacity"]))
            buf.seen = int(data["seen"])
            kinds = list(data["kinds"])
            for i in range(int(data["count"])):
                arrays = {key: data[f"{i}/{key}"] for key in
                          ("features", "current", "mask", "remaining", "probs", "valid")}
                buf.entries.append(ExperienceBatch.from_arrays(str(kinds[i]), arrays))
        return buf


def reservoir_update(buffer: ReservoirBuffer, batch, rng: np.random.Generator) -> bool:
    return buffer.offer(batch, rng)


def sample_experiences(buffer: ReservoirBuffer, count: int, rng: np.random.Generator) -> list:
    return buffer.sample(count, rng)
