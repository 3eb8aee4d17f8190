"""Attention-based constructive policy.

A miniature POMO-style encoder/decoder in float64.  Gradients come from
torch autograd; ``flat_params``/``set_flat_params`` expose the parameters as
one flat vector with a named shape registry.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .env import ConstructionState, batch_reset, feasible_actions
from .tasks import ProblemInstance

DTYPE = torch.float64
PROB_FLOOR = 1e-12
CHECKPOINT_VERSION = 1


class NumericalError(FloatingPointError):
    """A non-finite value appeared in a named tensor."""


@dataclass(frozen=True)
class PolicyConfig:
    embed_dim: int = 64
    n_layers: int = 3
    n_heads: int = 4
    ff_dim: int = 128
    clip: float = 10.0


@dataclass
class Behavior:
    """Masked action distribution over the full action vector."""

    probs: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.probs.shape != self.mask.shape:
            raise ValueError("probs and mask shapes differ")

    def check(self, tol: float = 1e-9) -> None:
        if np.any(self.probs[~self.mask] != 0):
            raise ValueError("masked action with nonzero probability")
        if np.any(self.probs[self.mask] <= 0):
            raise ValueError("feasible action with zero probability")
        if abs(self.probs.sum() - 1.0) > tol:
            raise ValueError(f"probabilities sum to {self.probs.sum()!r}")


class EncoderLayer(nn.Module):
    def __init__(self, d: int, heads: int, ff: int):
        super().__init__()
        self.heads = heads
        self.wq = nn.Linear(d, d, bias=False, dtype=DTYPE)
        self.wk = nn.Linear(d, d, bias=False, dtype=DTYPE)
        self.wv = nn.Linear(d, d, bias=False, dtype=DTYPE)
        self.wo = nn.Linear(d, d, dtype=DTYPE)
        self.norm1 = nn.LayerNorm(d, dtype=DTYPE)
        self.ff = nn.Sequential(nn.Linear(d, ff, dtype=DTYPE), nn.ReLU(), nn.Linear(ff, d, dtype=DTYPE))
        self.norm2 = nn.LayerNorm(d, dtype=DTYPE)

    def forward(self, x):
        B, A, d = x.shape
        h, dk = self.heads, d // self.heads
        split = lambda t: t.view(B, A, h, dk).transpose(1, 2)
        q, k, v = split(self.wq(x)), split(self.wk(x)), split(self.wv(x))
        att = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(dk), dim=-1)
        mixed = (att @ v).transpose(1, 2).reshape(B, A, d)
        x = self.norm1(x + self.wo(mixed))
        return self.norm2(x + self.ff(x))


@dataclass
class EncodedBatch:
    emb: torch.Tensor  # (B, A, d)
    mean: torch.Tensor  # (B, d)
    glimpse_k: torch.Tensor  # (B, h, A, dk)
    glimpse_v: torch.Tensor  # (B, h, A, dk)


class AttentionPolicy(nn.Module):
    def __init__(self, kind: str, config: PolicyConfig | None = None, seed: int | None = 0):
        super().__init__()
        if kind not in ("TSP", "CVRP"):
            raise ValueError(f"unknown problem kind {kind!r}")
        self.kind = kind
        self.config = config = config or PolicyConfig()
        d = config.embed_dim
        if d % config.n_heads:
            raise ValueError("embed_dim must be divisible by n_heads")
        self.embed = nn.Linear(3 if kind == "CVRP" else 2, d, dtype=DTYPE)
        if kind == "CVRP":
            self.embed_depot = nn.Linear(2, d, dtype=DTYPE)
        self.layers = nn.ModuleList(EncoderLayer(d, config.n_heads, config.ff_dim) for _ in range(config.n_layers))
        ctx_dim = 2 * d + (1 if kind == "CVRP" else 0)
        self.ctx_q = nn.Linear(ctx_dim, d, bias=False, dtype=DTYPE)
        self.glimpse_k = nn.Linear(d, d, bias=False, dtype=DTYPE)
        self.glimpse_v = nn.Linear(d, d, bias=False, dtype=DTYPE)
        self.glimpse_out = nn.Linear(d, d, dtype=DTYPE)
        if seed is not None:
            self.reset_parameters(seed)

    def reset_parameters(self, seed: int) -> None:
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every linear layer."""
        gen = torch.Generator().manual_seed(int(seed) % 2**63)
        with torch.no_grad():
            for module in self.modules():
                if isinstance(module, nn.Linear):
                    bound = 1.0 / math.sqrt(module.in_features)
                    module.weight.uniform_(-bound, bound, generator=gen)
                    if module.bias is not None:
                        module.bias.uniform_(-bound, bound, generator=gen)
                elif isinstance(module, nn.LayerNorm):
                    module.weight.fill_(1.0)
                    module.bias.zero_()

    # ------------------------------------------------------------------
    def encode(self, features: torch.Tensor) -> EncodedBatch:
        """``features``: (B, A, 3) of x, y, demand/capacity (CVRP node 0 is the depot)."""
        if self.kind == "TSP":
            x = self.embed(features[..., :2])
        else:
            x = torch.cat([self.embed_depot(features[:, :1, :2]), self.embed(features[:, 1:, :])], dim=1)
        for layer in self.layers:
            x = layer(x)
        B, A, d = x.shape
        h = self.config.n_heads
        split = lambda t: t.view(B, A, h, d // h).transpose(1, 2)
        return EncodedBatch(x, x.mean(dim=1), split(self.glimpse_k(x)), split(self.glimpse_v(x)))

    def decode(self, enc: EncodedBatch, current: torch.Tensor, mask: torch.Tensor,
               remaining_frac: torch.Tensor | None = None) -> torch.Tensor:
        """Action probabilities (B, P, A) for P states per instance."""
        emb = enc.emb
        B, A, d = emb.shape
        P = current.shape[1]
        h, dk = self.config.n_heads, d // self.config.n_heads
        cur_emb = torch.gather(emb, 1, current[..., None].expand(B, P, d))
        parts = [enc.mean[:, None, :].expand(B, P, d), cur_emb]
        if self.kind == "CVRP":
            parts.append(remaining_frac[..., None])
        q = self.ctx_q(torch.cat(parts, dim=-1)).view(B, P, h, dk).transpose(1, 2)
        blocked = ~mask[:, None, :, :]
        att = (q @ enc.glimpse_k.transpose(-1, -2)) / math.sqrt(dk)
        att = torch.softmax(att.masked_fill(blocked, float("-inf")), dim=-1)
        glimpse = self.glimpse_out((att @ enc.glimpse_v).transpose(1, 2).reshape(B, P, d))
        scores = glimpse @ emb.transpose(1, 2) / math.sqrt(d)
        logits = self.config.clip * torch.tanh(scores)
        return torch.softmax(logits.masked_fill(~mask, float("-inf")), dim=-1)

    # ------------------------------------------------------------------
    def registry(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(name, tuple(p.shape)) for name, p in self.named_parameters()]


def instance_features(instances: list[ProblemInstance]) -> torch.Tensor:
    return torch.as_tensor(np.stack([inst.features() for inst in instances]), dtype=DTYPE)


def flat_params(policy: nn.Module) -> np.ndarray:
    return torch.cat([p.detach().reshape(-1) for p in policy.parameters()]).numpy().copy()


def set_flat_params(policy: nn.Module, theta) -> None:
    theta = torch.as_tensor(np.asarray(theta), dtype=DTYPE)
    total = sum(p.numel() for p in policy.parameters())
    if theta.numel() != total:
        raise ValueError(f"expected {total} parameters, got {theta.numel()}")
    offset = 0
    with torch.no_grad():
        for p in policy.parameters():
            p.copy_(theta[offset:offset + p.numel()].view_as(p))
            offset += p.numel()


def gradient(policy: nn.Module, loss: torch.Tensor) -> np.ndarray:
    """Flat reverse-mode gradient of ``loss`` with respect to the policy parameters."""
    if not torch.isfinite(loss):
        raise NumericalError(f"loss is non-finite: {loss.item()!r}")
    params = list(policy.parameters())
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    out = []
    for (name, p), g in zip(policy.named_parameters(), grads):
        g = torch.zeros_like(p) if g is None else g
        if not torch.isfinite(g).all():
            raise NumericalError(f"non-finite gradient in {name}")
        out.append(g.reshape(-1))
    return torch.cat(out).numpy().copy()


def check_finite(named: dict[str, torch.Tensor]) -> None:
    for name, t in named.items():
        if not torch.isfinite(t).all():
            raise NumericalError(f"non-finite values in {name}")


def decode_step(policy: AttentionPolicy, enc: EncodedBatch, state: ConstructionState) -> Behavior:
    """Behavior of a single-instance encoding ``enc`` at ``state``."""
    mask = feasible_actions(state)
    mask_t = torch.as_tensor(mask)[None, None, :]
    cur = torch.tensor([[state.current]])
    rem = None
    if policy.kind == "CVRP":
        rem = torch.tensor([[state.remaining / state.instance.capacity]], dtype=DTYPE)
    with torch.no_grad():
        probs = policy.decode(enc, cur, mask_t, rem)[0, 0].numpy()
    return Behavior(probs, mask)


# --------------------------------------------------------------------------
# rollouts


@dataclass
class StepRecord:
    current: int
    visited: np.ndarray  # customers visited before the decision
    remaining: float | None
    behavior: Behavior
    action: int
    log_prob: float


@dataclass
class Trajectory:
    start_node: int
    route: list[int]
    total_length: float
    steps: list[StepRecord] = field(default_factory=list)


@dataclass
class RolloutResult:
    """Batched rollout output; tensors have leading shape (B, P)."""

    log_prob: torch.Tensor  # summed log-probabilities of chosen actions (differentiable)
    length: torch.Tensor
    actions: torch.Tensor  # (B, P, T) including forced moves
    features: torch.Tensor
    kind: str
    # per decision step, stacked on dim 2: (B, P, T', ...)
    rec_current: torch.Tensor | None = None
    rec_mask: torch.Tensor | None = None
    rec_remaining: torch.Tensor | None = None
    rec_probs: torch.Tensor | None = None
    rec_live: torch.Tensor | None = None
    rec_logp: torch.Tensor | None = None
    rec_action: torch.Tensor | None = None

    def routes(self) -> list[list[list[int]]]:
        """Routes per instance and start in action space (CVRP with depot returns)."""
        acts = self.actions.tolist()
        out = []
        for per_inst in acts:
            rows = []
            for seq in per_inst:
                if self.kind == "TSP":
                    rows.append(seq)
                else:
                    route = [0]
                    for a in seq:
                        if a == 0 and route[-1] == 0:
                            continue
                        route.append(a)
                    rows.append(route)
            out.append(rows)
        return out

    def trajectories(self, b: int) -> list[Trajectory]:
        """Per-start trajectories of instance ``b`` with step records (requires record=True)."""
        routes = self.routes()[b]
        acts = self.actions[b].tolist()
        n = self.features.shape[1] - (1 if self.kind == "CVRP" else 0)
        out = []
        for p, route in enumerate(routes):
            steps = []
            if self.rec_probs is not None:
                for t in range(self.rec_probs.shape[2]):
                    if not bool(self.rec_live[b, p, t]):
                        continue
                    mask = self.rec_mask[b, p, t].numpy()
                    rem = None if self.kind == "TSP" else float(self.rec_remaining[b, p, t])
                    # decision t follows the first t + 1 actions (start move included)
                    visited = np.zeros(n, dtype=bool)
                    done = [a for a in acts[p][: t + 1] if self.kind == "TSP" or a != 0]
                    visited[[a if self.kind == "TSP" else a - 1 for a in done]] = True
                    steps.append(StepRecord(
                        int(self.rec_current[b, p, t]), visited, rem,
                        Behavior(self.rec_probs[b, p, t].numpy().copy(), mask),
                        int(self.rec_action[b, p, t]), float(self.rec_logp[b, p, t]),
                    ))
            start = route[0] if self.kind == "TSP" else route[1] - 1
            out.append(Trajectory(start, route, float(self.length[b, p]), steps))
        return out


def rollout(policy: AttentionPolicy, instances: list[ProblemInstance], mode: str = "sample",
            starts: int | None = None, generator: torch.Generator | None = None,
            record: bool = False, features: torch.Tensor | None = None) -> RolloutResult:
    """Multi-start construction: one rollout per start node ``0..starts-1`` of every instance."""
    if mode not in ("sample", "greedy"):
        raise ValueError(f"unknown mode {mode!r}")
    n = instances[0].n
    starts = n if starts is None else starts
    state = batch_reset(instances, starts)
    if features is None:
        features = instance_features(instances)
    enc = policy.encode(features)
    B, P = state.current.shape
    A = state.coords.shape[1]
    actions = []
    if policy.kind == "CVRP":
        first = torch.arange(1, starts + 1)[None, :].expand(B, P)
        state.step(first)
        actions.append(first)
    else:
        actions.append(state.current.clone())
    log_prob = torch.zeros(B, P, dtype=DTYPE)
    recs = {k: [] for k in ("current", "mask", "remaining", "probs", "live", "logp", "action")}
    max_steps = n - 1 if policy.kind == "TSP" else 2 * n + 1
    for _ in range(max_steps):
        if bool(state.done.all()):
            break
        mask = state.feasible()
        rem = state.remaining_frac if policy.kind == "CVRP" else None
        probs = policy.decode(enc, state.current, mask, rem)
        if mode == "greedy":
            action = probs.argmax(dim=-1)
        else:
            flat = probs.detach().reshape(-1, A)
            action = torch.multinomial(flat, 1, generator=generator).view(B, P)
        chosen = torch.gather(probs, 2, action[..., None])[..., 0]
        logp = torch.log(chosen.clamp_min(PROB_FLOOR))
        live = ~state.done
        log_prob = log_prob + torch.where(live, logp, torch.zeros_like(logp))
        if record:
            recs["current"].append(state.current)
            recs["mask"].append(mask)
            recs["remaining"].append(rem if rem is not None else torch.zeros(B, P, dtype=DTYPE))
            recs["probs"].append(probs.detach())
            recs["live"].append(live)
            recs["logp"].append(logp.detach())
            recs["action"].append(action)
        state.step(action)
        actions.append(action)
    if not bool(state.done.all()):
        raise RuntimeError("rollout did not terminate")
    result = RolloutResult(log_prob, state.length, torch.stack(actions, dim=2), features, policy.kind)
    if record:
        for key, seq in recs.items():
            setattr(result, f"rec_{key}", torch.stack(seq, dim=2))
    return result


def replay_log_prob(policy: AttentionPolicy, result: RolloutResult) -> torch.Tensor:
    """Summed log-probabilities (B, P) of a recorded rollout's actions under ``policy``.

    Teacher-forced: the recorded actions are kept fixed, so the result is a
    smooth function of the parameters (used for gradient checks).
    """
    if result.rec_probs is None:
        raise ValueError("rollout was not recorded")
    B, P, T, A = result.rec_probs.shape
    enc = policy.encode(result.features)
    rem = result.rec_remaining.reshape(B, P * T) if policy.kind == "CVRP" else None
    probs = policy.decode(enc, result.rec_current.reshape(B, P * T), result.rec_mask.reshape(B, P * T, A), rem)
    chosen = torch.gather(probs, 2, result.rec_action.reshape(B, P * T, 1))[..., 0]
    logp = torch.log(chosen.clamp_min(PROB_FLOOR)).view(B, P, T)
    return torch.where(result.rec_live, logp, torch.zeros_like(logp)).sum(dim=2)


def best_of_starts(policy: AttentionPolicy, instances: list[ProblemInstance], starts: int | None = None,
                   chunk: int = 256) -> tuple[np.ndarray, list[list[int]]]:
    """Greedy multi-start decoding; returns best length and route per instance."""
    lengths, routes = [], []
    with torch.no_grad():
        for i in range(0, len(instances), chunk):
            part = instances[i:i + chunk]
            res = rollout(policy, part, mode="greedy", starts=starts)
            best = res.length.argmin(dim=1)
            all_routes = res.routes()
            lengths.append(res.length.gather(1, best[:, None])[:, 0].numpy())
            routes.extend(all_routes[b][int(best[b])] for b in range(len(part)))
    return np.concatenate(lengths), routes


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(policy: AttentionPolicy, path: str | Path, extra: dict | None = None) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "kind": policy.kind,
        "config": asdict(policy.config),
        "registry": [[name, list(shape)] for name, shape in policy.registry()],
        "extra": extra or {},
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, theta=flat_params(policy), meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8))
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> AttentionPolicy:
    with np.load(Path(path)) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        theta = data["theta"]
    if meta["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta['version']}")
    policy = AttentionPolicy(meta["kind"], PolicyConfig(**meta["config"]), seed=None)
    expected = [[name, list(shape)] for name, shape in policy.registry()]
    if expected != meta["registry"]:
        raise ValueError("checkpoint shape registry does not match the architecture")
    set_flat_params(policy, theta)
    return policy
