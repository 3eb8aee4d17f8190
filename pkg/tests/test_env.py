import numpy as np
import pytest
import torch

from llrbc.env import (
    ContractViolation,
    batch_reset,
    feasible_actions,
    reset,
    step,
    tour_length,
    validate_route,
)
from llrbc.tasks import DISTRIBUTIONS, ProblemInstance, TaskSpec, generate_instance


def tsp(coords):
    return ProblemInstance("TSP", np.asarray(coords, dtype=float))


def cvrp(coords, demands, capacity, depot=(0.5, 0.5)):
    return ProblemInstance("CVRP", np.asarray(coords, dtype=float), depot=np.asarray(depot, dtype=float),
                           demands=np.asarray(demands), capacity=capacity)


def test_reset_tsp():
    s = reset(generate_instance(TaskSpec("U", "TSP", 5, seed=0)), 2)
    assert s.visited == (False, False, True, False, False)
    assert s.step == 1 and s.current == 2


def test_reset_cvrp_full_capacity():
    inst = generate_instance(TaskSpec("U", "CVRP", 10, capacity=20, seed=0))
    s = reset(inst, 3)
    assert s.remaining == 20 and s.current == 0 and not any(s.visited)


def test_reset_pure():
    inst = generate_instance(TaskSpec("U", "TSP", 5, seed=0))
    assert reset(inst, 1) == reset(inst, 1)


def test_reset_out_of_range():
    inst = generate_instance(TaskSpec("U", "TSP", 5, seed=0))
    with pytest.raises(ContractViolation):
        reset(inst, 5)


def test_tsp_last_city_only():
    inst = generate_instance(TaskSpec("U", "TSP", 5, seed=0))
    s = reset(inst, 0)
    for a in (1, 2, 3):
        s = step(s, a)
    np.testing.assert_array_equal(feasible_actions(s), [False, False, False, False, True])
    s = step(s, 4)
    assert s.terminal
    with pytest.raises(ContractViolation):
        feasible_actions(s)


def test_cvrp_only_depot_when_nothing_fits():
    inst = cvrp([[0.1, 0.1], [0.2, 0.2], [0.3, 0.3]], [7, 5, 7], 10)
    s = step(reset(inst, 0), 1)  # remaining 3, unvisited demands {5, 7}
    assert s.remaining == 3
    np.testing.assert_array_equal(feasible_actions(s), [True, False, False, False])


def test_cvrp_depot_masked_at_depot():
    inst = cvrp([[0.1, 0.1], [0.2, 0.2]], [1, 1], 10)
    mask = feasible_actions(reset(inst, 0))
    assert not mask[0] and mask[1:].all()


def test_cvrp_step_capacity_and_refill():
    inst = cvrp([[0.1, 0.1], [0.2, 0.2]], [4, 3], 10)
    s = step(reset(inst, 0), 1)
    assert s.remaining == 6
    s = step(s, 0)
    assert s.remaining == 10
    s = step(step(s, 2), 0)
    assert s.terminal


def test_infeasible_step_rejected():
    inst = generate_instance(TaskSpec("U", "TSP", 5, seed=0))
    with pytest.raises(ContractViolation):
        step(reset(inst, 0), 0)


def test_tour_length_unit_square():
    inst = tsp([[0, 0], [1, 0], [1, 1], [0, 1]])
    assert tour_length([0, 1, 2, 3], inst) == pytest.approx(4.0)


def test_tour_length_single_customer():
    inst = cvrp([[0.5, 1.0]], [1], 10)
    assert tour_length([0, 1, 0], inst) == pytest.approx(1.0)


def test_tour_length_incomplete_rejected():
    inst = tsp([[0, 0], [1, 0], [1, 1], [0, 1]])
    with pytest.raises(ContractViolation):
        tour_length([0, 1, 2], inst)


def test_validate_route_rejects_overload_and_depot_loop():
    inst = cvrp([[0.1, 0.1], [0.2, 0.2]], [6, 6], 10)
    with pytest.raises(ContractViolation):
        validate_route([0, 1, 2, 0], inst)
    with pytest.raises(ContractViolation):
        validate_route([0, 1, 0, 0, 2, 0], inst)
    validate_route([0, 1, 0, 2, 0], inst)


def test_tsp_reversal_invariance():
    rng = np.random.default_rng(0)
    inst = tsp(rng.uniform(size=(12, 2)))
    route = list(rng.permutation(12))
    assert tour_length(route, inst) == pytest.approx(tour_length(route[::-1], inst), abs=1e-12)


def _random_rollout(inst, start, rng):
    s = reset(inst, start)
    if inst.kind == "CVRP":
        s = step(s, start + 1)
    while not s.terminal:
        mask = feasible_actions(s)
        assert mask.any()
        if inst.kind == "CVRP":
            assert 0 <= s.remaining <= inst.capacity
        s = step(s, int(rng.choice(np.flatnonzero(mask))))
    return s


@pytest.mark.parametrize("kind", ["TSP", "CVRP"])
def test_fuzz_random_rollouts_feasible(kind):
    rng = np.random.default_rng(42)
    for i in range(600):
        spec = TaskSpec(DISTRIBUTIONS[i % 6], kind, 10)
        inst = generate_instance(spec, rng)
        s = _random_rollout(inst, int(rng.integers(inst.n)), rng)
        validate_route(s.route, inst)
        visited_from_route = sorted(a if kind == "TSP" else a - 1 for a in s.route if kind == "TSP" or a != 0)
        assert visited_from_route == list(range(inst.n))


@pytest.mark.parametrize("kind", ["TSP", "CVRP"])
def test_batch_env_matches_single_state_env(kind):
    rng = np.random.default_rng(7)
    insts = [generate_instance(TaskSpec("C", kind, 8), rng) for _ in range(3)]
    bs = batch_reset(insts, 8)
    singles = [[reset(inst, p) for p in range(8)] for inst in insts]
    if kind == "CVRP":
        first = torch.arange(1, 9)[None, :].expand(3, 8)
        bs.step(first)
        singles = [[step(s, p + 1) for p, s in enumerate(row)] for row in singles]
    while not bool(bs.done.all()):
        mask = bs.feasible()
        action = torch.zeros(3, 8, dtype=torch.long)
        for b in range(3):
            for p in range(8):
                s = singles[b][p]
                if s.terminal:
                    action[b, p] = int(mask[b, p].nonzero()[0])
                    continue
                np.testing.assert_array_equal(mask[b, p].numpy(), feasible_actions(s))
                a = int(rng.choice(np.flatnonzero(feasible_actions(s))))
                action[b, p] = a
                singles[b][p] = step(s, a)
        bs.step(action)
    for b in range(3):
        for p in range(8):
            s = singles[b][p]
            assert s.terminal
            assert float(bs.length[b, p]) == pytest.approx(tour_length(s.route, insts[b]), abs=1e-12)


def test_batch_reset_rejects_mixed_batches():
    a = generate_instance(TaskSpec("U", "TSP", 5, seed=0))
    b = generate_instance(TaskSpec("U", "TSP", 6, seed=0))
    with pytest.raises(ValueError):
        batch_reset([a, b], 5)
