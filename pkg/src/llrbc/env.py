"""Constructive routing MDP for TSP and CVRP.

Action indices: TSP uses node indices ``0..n-1``; CVRP uses ``0`` for the
depot and ``i + 1`` for customer ``i``.  Routes are stored in action space.

Two flavours live here: an immutable single-state API (``reset``/``step``)
used for checking and benchmarking, and a batched tensor API
(``BatchState``) used by the trainer.  Both follow the same masking rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import torch

from .tasks import ProblemInstance


class ContractViolation(RuntimeError):
    """An MDP operation was called outside its precondition."""


@dataclass(frozen=True, eq=False)
class ConstructionState:
    instance: ProblemInstance
    route: tuple[int, ...]
    visited: tuple[bool, ...]
    current: int
    remaining: int | None
    step: int
    start_node: int

    def __eq__(self, other):
        return (
            isinstance(other, ConstructionState)
            and self.instance is other.instance
            and self.route == other.route
            and self.visited == other.visited
            and self.current == other.current
            and self.remaining == other.remaining
            and self.step == other.step
        )

    @property
    def terminal(self) -> bool:
        if not all(self.visited):
            return False
        return self.instance.kind == "TSP" or self.current == 0


def reset(instance: ProblemInstance, start_node: int) -> ConstructionState:
    """Initial state.  CVRP starts at the depot; ``start_node`` is the customer forced first."""
    if not 0 <= start_node < instance.n:
        raise ContractViolation(f"start_node {start_node} out of range for n={instance.n}")
    if instance.kind == "TSP":
        visited = tuple(i == start_node for i in range(instance.n))
        return ConstructionState(instance, (start_node,), visited, start_node, None, 1, start_node)
    return ConstructionState(instance, (0,), (False,) * instance.n, 0, int(instance.capacity), 0, start_node)


def feasible_actions(state: ConstructionState) -> np.ndarray:
    if state.terminal:
        raise ContractViolation("feasible_actions called on a terminal state")
    inst = state.instance
    if inst.kind == "TSP":
        return ~np.array(state.visited)
    mask = np.zeros(inst.n + 1, dtype=bool)
    unvisited = ~np.array(state.visited)
    mask[1:] = unvisited & (inst.demands <= state.remaining)
    mask[0] = state.current != 0
    return mask


def step(state: ConstructionState, action: int) -> ConstructionState:
    mask = feasible_actions(state)
    if not (0 <= action < len(mask)) or not mask[action]:
        raise ContractViolation(f"action {action} is infeasible")
    inst = state.instance
    if inst.kind == "TSP":
        visited = list(state.visited)
        visited[action] = True
        return replace(state, route=state.route + (action,), visited=tuple(visited), current=action, step=state.step + 1)
    if action == 0:
        return replace(state, route=state.route + (0,), current=0, remaining=int(inst.capacity), step=state.step + 1)
    visited = list(state.visited)
    visited[action - 1] = True
    return replace(
        state,
        route=state.route + (action,),
        visited=tuple(visited),
        current=action,
        remaining=state.remaining - int(inst.demands[action - 1]),
        step=state.step + 1,
    )


def validate_route(route, instance: ProblemInstance) -> None:
    route = [int(a) for a in route]
    if instance.kind == "TSP":
        if sorted(route) != list(range(instance.n)):
            raise ContractViolation("TSP route must visit every city exactly once")
        return
    if not route or route[0] != 0 or route[-1] != 0:
        raise ContractViolation("CVRP route must start and end at the depot")
    customers = [a for a in route if a != 0]
    if sorted(customers) != list(range(1, instance.n + 1)):
        raise ContractViolation("CVRP route must visit every customer exactly once")
    load = 0
    for a, b in zip(route, route[1:]):
        if a == 0 and b == 0:
            raise ContractViolation("depot-to-depot move in route")
        load = 0 if b == 0 else load + int(instance.demands[b - 1])
        if load > instance.capacity:
            raise ContractViolation("capacity exceeded")


def tour_length(route, instance: ProblemInstance, convention: str = "euclidean") -> float:
    """Length of a complete route; TSP closes the cycle."""
    validate_route(route, instance)
    if convention == "euclidean":
        xy = instance.node_coords()
    elif convention == "tsplib_nint":
        xy = instance.node_coords(raw=True)
    else:
        raise ValueError(f"unknown convention {convention!r}")
    seq = list(route)
    if instance.kind == "TSP":
        seq = seq + seq[:1]
    if convention == "tsplib_nint":
        return float(sum(math.floor(math.dist(xy[a], xy[b]) + 0.5) for a, b in zip(seq, seq[1:])))
    pts = xy[np.asarray(seq)]
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


# --------------------------------------------------------------------------
# batched tensor environment


@dataclass
class BatchState:
    """States of ``P`` parallel rollouts on each of ``B`` instances.

    All per-rollout tensors have leading shape (B, P).  ``visited`` is in
    action space (CVRP column 0 is the depot and never set).
    """

    kind: str
    coords: torch.Tensor  # (B, A, 2)
    demands: torch.Tensor  # (B, A) demand in capacity units; zeros for TSP / depot
    capacity: torch.Tensor  # (B,)
    visited: torch.Tensor  # (B, P, A) bool
    current: torch.Tensor  # (B, P) long
    remaining: torch.Tensor  # (B, P) float, raw capacity units
    done: torch.Tensor  # (B, P) bool
    length: torch.Tensor  # (B, P) accumulated tour length
    first: torch.Tensor  # (B, P) long, TSP cycle closure

    @property
    def remaining_frac(self) -> torch.Tensor:
        return self.remaining / self.capacity[:, None]

    def feasible(self) -> torch.Tensor:
        if self.kind == "TSP":
            mask = ~self.visited
            # finished rollouts keep a dummy action so the mask is never empty
            return mask | (self.done[..., None] & _onehot(self.current, mask.shape[-1]))
        mask = ~self.visited & (self.demands[:, None, :] <= self.remaining[..., None] + 1e-9)
        mask[..., 0] = self.current != 0
        all_served = self.visited[..., 1:].all(-1)
        mask[..., 0] |= self.done
        mask[..., 1:] &= ~all_served[..., None]
        return mask

    def step(self, action: torch.Tensor) -> None:
        b_idx = torch.arange(action.shape[0])[:, None].expand_as(action)
        prev = self.current
        dist = (self.coords[b_idx, action] - self.coords[b_idx, prev]).norm(dim=-1)
        live = ~self.done
        self.length = self.length + torch.where(live, dist, torch.zeros_like(dist))
        self.visited = self.visited.clone()
        self.visited[b_idx, torch.arange(action.shape[1])[None, :].expand_as(action), action] = True
        if self.kind == "CVRP":
            self.visited[..., 0] = False
            demand = self.demands[b_idx, action]
            refill = self.capacity[:, None].expand_as(self.remaining)
            self.remaining = torch.where(action == 0, refill, self.remaining - demand)
        self.current = action
        if self.kind == "TSP":
            finished = self.visited.all(-1)
            closing = (self.coords[b_idx, self.first] - self.coords[b_idx, action]).norm(dim=-1)
            self.length = self.length + torch.where(finished & live, closing, torch.zeros_like(closing))
            self.done = finished
        else:
            self.done = self.visited[..., 1:].all(-1) & (action == 0)


def _onehot(index: torch.Tensor, size: int) -> torch.Tensor:
    return torch.nn.functional.one_hot(index, size).bool()


def batch_reset(instances: list[ProblemInstance], starts: int) -> BatchState:
    """Initial batched state with ``starts`` rollouts per instance (start nodes 0..starts-1)."""
    kind = instances[0].kind
    if any(inst.kind != kind for inst in instances):
        raise ValueError("mixed problem kinds in one batch")
    n = instances[0].n
    if any(inst.n != n for inst in instances):
        raise ValueError("mixed scales in one batch")
    if not 1 <= starts <= n:
        raise ValueError(f"starts must lie in [1, {n}]")
    B = len(instances)
    coords = torch.as_tensor(np.stack([inst.node_coords() for inst in instances]), dtype=torch.float64)
    A = coords.shape[1]
    start_idx = torch.arange(starts)
    if kind == "TSP":
        demands = torch.zeros(B, A, dtype=torch.float64)
        capacity = torch.ones(B, dtype=torch.float64)
        current = start_idx[None, :].expand(B, starts).clone()
        visited = torch.zeros(B, starts, A, dtype=torch.bool)
        visited[:, start_idx, start_idx] = True
    else:
        demands = torch.zeros(B, A, dtype=torch.float64)
        demands[:, 1:] = torch.as_tensor(np.stack([inst.demands for inst in instances]), dtype=torch.float64)
        capacity = torch.as_tensor([float(inst.capacity) for inst in instances], dtype=torch.float64)
        current = torch.zeros(B, starts, dtype=torch.long)
        visited = torch.zeros(B, starts, A, dtype=torch.bool)
    remaining = capacity[:, None].expand(B, starts).clone()
    return BatchState(
        kind=kind,
        coords=coords,
        demands=demands,
        capacity=capacity,
        visited=visited,
        current=current,
        remaining=remaining,
        done=torch.zeros(B, starts, dtype=torch.bool),
        length=torch.zeros(B, starts, dtype=torch.float64),
        first=current.clone(),
    )
