"""Lifelong training over a task order: LLR-BC and the Restart / Fine-tuning / EWC baselines."""

from __future__ import annotations

import hashlib
import json
import logging
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .consolidation import ExperienceBatch, ReservoirBuffer, bc_loss
from .drl import drl_loss
from .policy import (
    DTYPE,
    AttentionPolicy,
    NumericalError,
    PolicyConfig,
    best_of_starts,
    flat_params,
    load_checkpoint,
    rollout,
    save_checkpoint,
    set_flat_params,
)
from .tasks import ProblemInstance, TaskSpec, generate_instance, load_instances, save_instances

log = logging.getLogger(__name__)

METHODS = ("LLR_BC", "FineTune", "Restart", "EWC")

# scale -> (training instances per epoch, batch size)
DESK_EPOCH_PLAN = {10: (2000, 64), 20: (800, 32), 30: (400, 16)}
PAPER_EPOCH_PLAN = {20: (10000, 64), 50: (4000, 32), 100: (2000, 16)}

# distribution -> scale tier (U/R small, G/E medium, C/GM large)
SCALE_TIER = {"U": 0, "R": 0, "G": 1, "E": 1, "C": 2, "GM": 2}
PROFILE_SCALES = {"desk": (10, 20, 30), "paper": (20, 50, 100)}
# TrainingConfig fields that differ from the desk defaults
PROFILE_DEFAULTS = {"desk": {}, "paper": {"epochs_per_task": 200, "test_size": 1000, "buffer_capacity": 1000}}


def substream(seed: int, name: str, *keys: int) -> np.random.Generator:
    """Independent named random stream derived from the run seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode()), *map(int, keys)]))


def torch_stream(seed: int, name: str, *keys: int) -> torch.Generator:
    value = int(substream(seed, name, *keys).integers(0, 2**63 - 1))
    return torch.Generator().manual_seed(value)


@dataclass
class TrainingConfig:
    method: str = "LLR_BC"
    epochs_per_task: int = 20
    profile: str = "desk"
    epoch_plan: dict | None = None  # overrides the profile's scale -> (instances, batch) map
    buffer_capacity: int = 50
    sample_count: int = 16
    alpha: float = 100.0
    divergence: str = "RKLD"
    weighting: str = "confidence"
    learning_rate: float = 1e-4
    ewc_lambda: float = 10.0
    fisher_instances: int = 32
    experience_instances: int = 1
    buffer_mode: str = "final_epoch"
    test_size: int = 200
    seed: int = 0
    policy: PolicyConfig = field(default_factory=PolicyConfig)

    def __post_init__(self):
        if isinstance(self.policy, dict):
            self.policy = PolicyConfig(**self.policy)
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.sample_count < 1 or self.buffer_capacity < 1:
            raise ValueError("sample_count and buffer_capacity must be >= 1")
        if self.divergence not in ("RKLD", "KLD"):
            raise ValueError(f"unknown divergence {self.divergence!r}")
        if self.weighting not in ("confidence", "uniform"):
            raise ValueError(f"unknown weighting {self.weighting!r}")
        if self.buffer_mode not in ("final_epoch", "continuous"):
            raise ValueError(f"unknown buffer mode {self.buffer_mode!r}")
        if self.epochs_per_task < 1:
            raise ValueError("epochs_per_task must be >= 1")
        if self.profile not in ("desk", "paper"):
            raise ValueError(f"unknown profile {self.profile!r}")

    def plan(self, scale: int) -> tuple[int, int]:
        table = self.epoch_plan or (DESK_EPOCH_PLAN if self.profile == "desk" else PAPER_EPOCH_PLAN)
        table = {int(k): tuple(v) for k, v in table.items()}
        if scale in table:
            return table[scale]
        nearest = min(table, key=lambda s: abs(s - scale))
        return table[nearest]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EWCState:
    fisher: np.ndarray
    anchor: np.ndarray
    lam: float

    def __post_init__(self):
        if self.fisher.shape != self.anchor.shape:
            raise ValueError("fisher and anchor shapes differ")
        if np.any(self.fisher < 0):
            raise ValueError("fisher entries must be non-negative")


def ewc_penalty(policy: AttentionPolicy, states: list[EWCState]) -> torch.Tensor:
    """Sum over anchors of lambda/2 * sum_i F_i (theta_i - anchor_i)^2."""
    theta = torch.cat([p.reshape(-1) for p in policy.parameters()])
    total = torch.zeros((), dtype=DTYPE)
    for st in states:
        if st.fisher.shape != tuple(theta.shape):
            raise ValueError(f"EWC state has {st.fisher.size} entries, policy has {theta.numel()}")
        fisher = torch.as_tensor(st.fisher, dtype=DTYPE)
        anchor = torch.as_tensor(st.anchor, dtype=DTYPE)
        total = total + 0.5 * st.lam * (fisher * (theta - anchor) ** 2).sum()
    return total


def fisher_estimate(policy: AttentionPolicy, instances: list[ProblemInstance], generator: torch.Generator) -> np.ndarray:
    """Diagonal Fisher: mean squared per-instance gradient of the DRL loss."""
    params = list(policy.parameters())
    acc = [torch.zeros_like(p) for p in params]
    for inst in instances:
        res = rollout(policy, [inst], mode="sample", generator=generator)
        loss = drl_loss(res.log_prob, res.length)
        grads = torch.autograd.grad(loss, params, allow_unused=True)
        for a, g in zip(acc, grads):
            if g is not None:
                a += g.detach() ** 2
    return torch.cat([a.reshape(-1) for a in acc]).numpy() / max(len(instances), 1)


# --------------------------------------------------------------------------


def test_set(task: TaskSpec, size: int, seed: int, cache_dir: Path | None = None) -> list[ProblemInstance]:
    """Frozen test instances for ``task`` under a run seed, optionally cached on disk."""
    key = f"{task.kind}_{task.name}_seed{seed}_n{size}"
    if cache_dir is not None:
        path = Path(cache_dir) / f"{key}.jsonl"
        if path.exists():
            return load_instances(path)
    rng = substream(seed, "test", zlib.crc32(f"{task.kind}:{task.name}".encode()))
    spec = task.with_seed(0)
    instances = [generate_instance(spec, rng) for _ in range(size)]
    if cache_dir is not None:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        save_instances(instances, tmp)
        tmp.replace(path)
    return instances


def evaluate(policy: AttentionPolicy, instances: list[ProblemInstance]) -> float:
    """Mean greedy best-of-n tour length."""
    lengths, _ = best_of_starts(policy, instances)
    return float(lengths.mean())


def initial_policy(kind: str, cfg: TrainingConfig) -> AttentionPolicy:
    seed = int(substream(cfg.seed, "init").integers(0, 2**63 - 1))
    return AttentionPolicy(kind, cfg.policy, seed=seed)


def train_one_task(policy: AttentionPolicy, buffer: ReservoirBuffer | None, task: TaskSpec, cfg: TrainingConfig,
                   task_index: int = 0, ewc_states: list[EWCState] | None = None,
                   log_fh=None) -> list[dict]:
    """One task of Algorithm-2 style training; mutates ``policy`` and ``buffer`` in place."""
    instances_per_epoch, batch_size = cfg.plan(task.scale)
    batches = max(1, instances_per_epoch // batch_size)
    gen_rng = substream(cfg.seed, "task-gen", task_index)
    roll_gen = torch_stream(cfg.seed, "rollout", task_index)
    buffer_rng = substream(cfg.seed, "buffer", task_index)
    sample_rng = substream(cfg.seed, "sampling", task_index)
    optimizer = torch.optim.Adam(policy.parameters(), lr=cfg.learning_rate)
    consolidate = cfg.method == "LLR_BC" and buffer is not None
    records = []
    for epoch in range(cfg.epochs_per_task):
        final_epoch = epoch == cfg.epochs_per_task - 1
        for b in range(batches):
            instances = [generate_instance(task, gen_rng) for _ in range(batch_size)]
            store = consolidate and (final_epoch or cfg.buffer_mode == "continuous")
            res = rollout(policy, instances, mode="sample", generator=roll_gen, record=store)
            loss = drl_loss(res.log_prob, res.length)
            rec = {"task": task_index, "epoch": epoch, "batch": b, "drl": loss.item(), "length": res.length.mean().item()}
            if consolidate and len(buffer):
                sampled = buffer.sample(cfg.sample_count, sample_rng)
                lbc = bc_loss(policy, sampled, cfg.divergence, cfg.weighting)
                loss = loss + cfg.alpha * lbc
                rec["bc"] = lbc.item()
            if cfg.method == "EWC" and ewc_states:
                pen = ewc_penalty(policy, ewc_states)
                loss = loss + pen
                rec["ewc"] = pen.item()
            if not torch.isfinite(loss):
                raise NumericalError(f"non-finite loss at task {task_index} epoch {epoch} batch {b}: {rec}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            if store:
                batch = ExperienceBatch.from_rollout(res, slice(0, cfg.experience_instances))
                buffer.offer(batch, buffer_rng)
                rec["buffer"] = len(buffer)
                rec["offered"] = buffer.seen
            records.append(rec)
            if log_fh is not None:
                log_fh.write(json.dumps(rec) + "\n")
    return records


@dataclass
class LifelongResult:
    tasks: list[str]
    matrix: np.ndarray  # raw d_{i,j}: row i after training task i, column j test set j
    initial: np.ndarray  # evaluation of the initial policy on each test set
    logs: list[dict]
    buffer_history: list[tuple[int, int]]  # (entries, offered) after each task
    policy: AttentionPolicy | None = None


def _digest(theta: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(theta).tobytes()).hexdigest()


def _run_files(out_dir: Path, i: int) -> dict[str, Path]:
    base = out_dir / f"task{i:02d}"
    return {"dir": base, "policy": base / "policy.npz", "buffer": base / "buffer.npz",
            "ewc": base / "ewc.npz", "row": base / "row.json", "log": base / "train_log.jsonl"}


def lifelong_learn(order: list[TaskSpec], cfg: TrainingConfig, out_dir: str | Path | None = None,
                   test_sets: list[list[ProblemInstance]] | None = None,
                   test_cache: str | Path | None = None) -> LifelongResult:
    """Train sequentially on ``order`` and fill the K x K performance matrix.

    With ``out_dir`` every finished task is checkpointed and an interrupted
    run resumes from the last completed task.
    """
    if not order:
        raise ValueError("task order is empty")
    kind = order[0].kind
    K = len(order)
    if test_sets is None:
        test_sets = [test_set(t, cfg.test_size, cfg.seed, test_cache) for t in order]
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    policy = initial_policy(kind, cfg)
    initial_theta = flat_params(policy)
    initial_row = np.array([evaluate(policy, ts) for ts in test_sets])
    if out is not None:
        tmp = out / "initial.json.tmp"
        tmp.write_text(json.dumps({"theta_sha256": _digest(initial_theta), "d": initial_row.tolist()}))
        tmp.replace(out / "initial.json")
    buffer = ReservoirBuffer(cfg.buffer_capacity) if cfg.method == "LLR_BC" else None
    ewc_states: list[EWCState] = []
    matrix = np.full((K, K), np.nan)
    logs: list[dict] = []
    history: list[tuple[int, int]] = []

    start = 0
    if out is not None:
        while start < K and _run_files(out, start)["row"].exists():
            start += 1
        if start:
            files = _run_files(out, start - 1)
            policy = load_checkpoint(files["policy"])
            if buffer is not None and files["buffer"].exists():
                buffer = ReservoirBuffer.load(files["buffer"])
            if files["ewc"].exists():
                with np.load(files["ewc"]) as data:
                    count = int(data["count"])
                    ewc_states = [EWCState(data[f"f{k}"], data[f"a{k}"], float(data[f"l{k}"])) for k in range(count)]
            for i in range(start):
                row = json.loads(_run_files(out, i)["row"].read_text())
                matrix[i] = row["d"]
                history.append(tuple(row["buffer"]))
            log.info("resuming %s at task %d", out, start)

    for i in range(start, K):
        task = order[i]
        if cfg.method == "Restart":
            set_flat_params(policy, initial_theta)
        files = _run_files(out, i) if out is not None else None
        fh = None
        if files is not None:
            files["dir"].mkdir(parents=True, exist_ok=True)
            fh = open(files["log"], "w")
        try:
            logs.extend(train_one_task(policy, buffer, task, cfg, task_index=i, ewc_states=ewc_states, log_fh=fh))
        finally:
            if fh is not None:
                fh.close()
        if cfg.method == "EWC":
            fisher_rng = substream(cfg.seed, "fisher-instances", i)
            sample = [generate_instance(task, fisher_rng) for _ in range(cfg.fisher_instances)]
            fisher = fisher_estimate(policy, sample, torch_stream(cfg.seed, "fisher", i))
            ewc_states.append(EWCState(fisher, flat_params(policy), cfg.ewc_lambda))
        matrix[i] = [evaluate(policy, ts) for ts in test_sets]
        history.append((len(buffer) if buffer else 0, buffer.seen if buffer else 0))
        log.info("%s task %d (%s): %s", cfg.method, i, task.name, np.round(matrix[i], 4))
        if files is not None:
            save_checkpoint(policy, files["policy"], {"task": task.name, "index": i})
            if buffer is not None:
                buffer.save(files["buffer"])
            if ewc_states:
                arrays = {"count": np.array(len(ewc_states))}
                for k, st in enumerate(ewc_states):
                    arrays.update({f"f{k}": st.fisher, f"a{k}": st.anchor, f"l{k}": np.array(st.lam)})
                tmp = files["ewc"].with_name("ewc.tmp.npz")
                np.savez(tmp, **arrays)
                tmp.replace(files["ewc"])
            row_tmp = files["row"].with_name("row.json.tmp")
            row_tmp.write_text(json.dumps({"task": task.name, "d": matrix[i].tolist(), "buffer": list(history[-1])}))
            row_tmp.replace(files["row"])
    return LifelongResult([t.name for t in order], matrix, initial_row, logs, history, policy)
