import math

import numpy as np
import pytest

from llrbc.env import tour_length
from llrbc.tasks import (
    DISTRIBUTIONS,
    ConfigurationError,
    ParseError,
    ProblemInstance,
    TaskSpec,
    UnsupportedFormatError,
    bundled_dir,
    compression_move,
    compression_offsets,
    explosion_move,
    explosion_shifts,
    format_cvrplib,
    format_tsplib,
    generate_instance,
    gm_layout,
    grid_points,
    grid_shape,
    parse_cvrplib,
    parse_tour,
    parse_tsplib,
    read_benchmark,
    ring_radii,
    sample_gaussian_mixture,
    sample_grid,
    sample_ring,
)

TINY_TSP = """NAME : tiny
TYPE : TSP
DIMENSION : 3
EDGE_WEIGHT_TYPE : EUC_2D
NODE_COORD_SECTION
1 0 0
2 0 10
3 10 0
EOF
"""

TINY_CVRP = """NAME : tinyvrp
TYPE : CVRP
DIMENSION : 4
EDGE_WEIGHT_TYPE : EUC_2D
CAPACITY : 15
NODE_COORD_SECTION
1 5 5
2 0 0
3 10 0
4 10 10
DEMAND_SECTION
1 0
2 7
3 8
4 9
DEPOT_SECTION
1
-1
EOF
"""


def test_taskspec_validation():
    with pytest.raises(ConfigurationError):
        TaskSpec("X", "TSP", 10)
    with pytest.raises(ConfigurationError):
        TaskSpec("U", "TSP", 1)
    with pytest.raises(ConfigurationError):
        TaskSpec("U", "TSP", 10, capacity=30)
    with pytest.raises(ConfigurationError):
        TaskSpec("U", "CVRP", 10, capacity=5)
    assert TaskSpec("U", "CVRP", 20).capacity == 40
    assert TaskSpec("U", "CVRP", 100).capacity == 50


def test_uniform_tsp_example():
    inst = generate_instance(TaskSpec("U", "TSP", 20, seed=7))
    assert inst.coords.shape == (20, 2)
    assert inst.demands is None and inst.depot is None and inst.capacity is None
    assert np.all((inst.coords >= 0) & (inst.coords <= 1))


def test_uniform_cvrp_demands_in_range():
    inst = generate_instance(TaskSpec("U", "CVRP", 20, capacity=30, seed=7))
    assert inst.demands.shape == (20,)
    assert inst.demands.min() >= 1 and inst.demands.max() <= 10
    assert inst.capacity == 30


def test_uniform_demand_distribution_covers_1_to_10():
    rng = np.random.default_rng(0)
    spec = TaskSpec("U", "CVRP", 50)
    demands = np.concatenate([generate_instance(spec, rng).demands for _ in range(200)])
    counts = np.bincount(demands, minlength=11)[1:]
    assert counts.min() > 0.8 * counts.mean()


@pytest.mark.parametrize("dist", DISTRIBUTIONS)
@pytest.mark.parametrize("kind", ["TSP", "CVRP"])
def test_generation_deterministic(dist, kind):
    spec = TaskSpec(dist, kind, 20, seed=123)
    a, b = generate_instance(spec), generate_instance(spec)
    assert a.same_as(b)
    assert a.coords.tobytes() == b.coords.tobytes()


@pytest.mark.parametrize("dist", DISTRIBUTIONS)
@pytest.mark.parametrize("kind", ["TSP", "CVRP"])
@pytest.mark.parametrize("scale", [10, 20, 50, 100])
def test_generator_invariants(dist, kind, scale):
    rng = np.random.default_rng(scale)
    spec = TaskSpec(dist, kind, scale)
    for _ in range(1000 if scale <= 20 else 100):
        inst = generate_instance(spec, rng)
        assert inst.coords.shape == (scale, 2)
        assert inst.coords.min() >= 0.0 and inst.coords.max() <= 1.0
        if kind == "CVRP":
            assert inst.depot.min() >= 0 and inst.depot.max() <= 1
            assert inst.demands.min() >= 1 and inst.demands.max() <= 10
            assert inst.demands.dtype.kind == "i"


def test_unknown_distribution_is_configuration_error():
    with pytest.raises(ConfigurationError):
        TaskSpec("Z", "TSP", 20)


def test_json_round_trip():
    spec = TaskSpec("GM", "CVRP", 20, seed=3)
    inst = generate_instance(spec)
    back = ProblemInstance.from_dict(inst.to_dict())
    assert back.same_as(inst)
    assert back.source == inst.source


# --- Gaussian mixture -----------------------------------------------------


def test_gm_layout_scale_100_matches_5x19_plus_centers():
    assert gm_layout(100) == (5, 19)
    assert gm_layout(10) == (5, 1)
    assert gm_layout(20) == (5, 3)


def test_gm_exact_count_and_minmax():
    rng = np.random.default_rng(1)
    coords, demands = sample_gaussian_mixture(100, rng)
    assert coords.shape == (100, 2)
    np.testing.assert_allclose(coords.min(axis=0), [0, 0])
    np.testing.assert_allclose(coords.max(axis=0), [1, 1])
    assert demands.min() >= 1 and demands.max() <= 10


def test_gm_five_spatial_clusters():
    rng = np.random.default_rng(5)
    coords, _ = sample_gaussian_mixture(100, rng)
    centers = coords[:5]
    # every satellite is closer to its own center than to any other center
    owner = np.repeat(np.arange(5), 19)
    d = np.linalg.norm(coords[5:, None, :] - centers[None], axis=-1)
    agree = (d.argmin(axis=1) == owner).mean()
    assert agree > 0.9


def test_gm_demand_rule_center_coincident_node_gets_zero_then_floor():
    # a satellite at its center has normalized distance 0 -> round(10*0) = 0 -> floored to 1
    assert math.floor(10 * 0.0 + 0.5) == 0
    rng = np.random.default_rng(2)
    _, demands = sample_gaussian_mixture(100, rng)
    assert demands.min() == 1


# --- Explosion ------------------------------------------------------------


def test_explosion_node_at_center_moves_to_radius():
    pts = np.array([[0.5, 0.5]])
    out = explosion_move(pts, np.array([0.5, 0.5]), np.array([0.0]), np.array([0.0]))
    assert np.linalg.norm(out[0] - [0.5, 0.5]) == pytest.approx(0.3)


def test_explosion_clears_ball_except_clamping():
    rng = np.random.default_rng(0)
    for _ in range(200):
        pts = rng.uniform(size=(100, 2))
        center = rng.uniform(size=2)
        shifts = explosion_shifts(rng, 100)
        out = explosion_move(pts, center, shifts, rng.uniform(0, 2 * np.pi, 100))
        inside = np.linalg.norm(out - center, axis=1) < 0.3 - 1e-12
        on_boundary = (out == 0) | (out == 1)
        assert np.all(on_boundary[inside].any(axis=1))


def test_explosion_nodes_outside_ball_untouched():
    pts = np.array([[0.9, 0.9], [0.1, 0.1]])
    out = explosion_move(pts, np.array([0.5, 0.5]), np.zeros(2), np.zeros(2))
    np.testing.assert_array_equal(out, pts)


def test_explosion_shift_mean_rate_40():
    rng = np.random.default_rng(11)
    s = explosion_shifts(rng, 100_000)
    assert abs(s.mean() - 0.025) < 0.002


# --- Compression ----------------------------------------------------------


def test_compression_node_on_line_with_zero_offset_stays():
    pts = np.array([[0.5, 0.5]])
    out = compression_move(pts, np.array([0.0, 0.0]), np.array([1.0, 1.0]), np.array([0.0]))
    np.testing.assert_allclose(out, pts, atol=1e-15)


def test_compression_far_node_never_moves():
    # horizontal line y = 0.1; node at perpendicular distance 0.4
    pts = np.array([[0.5, 0.5]])
    out = compression_move(pts, np.array([0.0, 0.1]), np.array([1.0, 0.1]), np.array([0.05]))
    np.testing.assert_array_equal(out, pts)


def test_compression_sets_signed_distance():
    pts = np.array([[0.5, 0.3]])
    out = compression_move(pts, np.array([0.0, 0.2]), np.array([1.0, 0.2]), np.array([-0.05]))
    np.testing.assert_allclose(out, [[0.5, 0.15]])


def test_compression_offset_std():
    rng = np.random.default_rng(3)
    assert abs(compression_offsets(rng, 100_000).std() - 0.1) < 0.005


# --- Grid -----------------------------------------------------------------


def test_grid_lattice_structure():
    rng = np.random.default_rng(0)
    for _ in range(50):
        coords, demands = sample_grid(50, rng, depot=rng.uniform(size=2))
        xs = np.unique(np.round(coords[:, 0], 12))
        ys = np.unique(np.round(coords[:, 1], 12))
        # recover the rectangle orientation from the occupied lattice
        assert len(xs) * len(ys) >= 50
        assert demands.min() >= 1 and demands.max() <= 10
        assert len(coords) == 50


def test_grid_shape_covers_n_and_leaves_top_right_empty():
    a, b = grid_shape(50, 1.0, 0.5)
    assert a * b >= 50
    pts = grid_points(50, 1.0, 0.5, 0.5, 0.5)
    assert len(pts) == 50
    ys = np.unique(pts[:, 1])
    top = pts[pts[:, 1] == ys.max()]
    xs = np.unique(grid_points(a * b, 1.0, 0.5, 0.5, 0.5)[:, 0])
    # the missing cells of the top row are the largest-x ones
    assert np.allclose(np.sort(top[:, 0]), xs[: len(top)])
    assert len(np.unique(pts[:, 0])) <= a and len(ys) <= b


# --- Ring -----------------------------------------------------------------


def test_ring_mean_radius():
    rng = np.random.default_rng(4)
    assert abs(ring_radii(rng, 100_000).mean() - 0.35) < 0.003


def test_ring_demands_and_bounds():
    rng = np.random.default_rng(9)
    for _ in range(100):
        coords, demands = sample_ring(20, rng, depot=rng.uniform(size=2))
        assert coords.min() >= 0 and coords.max() <= 1
        assert demands.min() >= 1 and demands.max() <= 10


# --- benchmark parsing ----------------------------------------------------


def test_parse_tiny_tsp_normalizes():
    inst = parse_tsplib(TINY_TSP)
    np.testing.assert_allclose(inst.coords, [[0, 0], [0, 1], [1, 0]])
    np.testing.assert_allclose(inst.raw_coords, [[0, 0], [0, 10], [10, 0]])
    assert inst.name == "tiny"


def test_parse_tsplib_bytes():
    assert parse_tsplib(TINY_TSP.encode()).n == 3


def test_dimension_mismatch_is_parse_error():
    with pytest.raises(ParseError):
        parse_tsplib(TINY_TSP.replace("DIMENSION : 3", "DIMENSION : 4"))


def test_non_euc2d_rejected_with_keyword():
    with pytest.raises(UnsupportedFormatError, match="GEO"):
        parse_tsplib(TINY_TSP.replace("EUC_2D", "GEO"))


def test_missing_section_rejected():
    text = TINY_TSP.split("NODE_COORD_SECTION")[0] + "EOF\n"
    with pytest.raises(UnsupportedFormatError, match="NODE_COORD_SECTION"):
        parse_tsplib(text)


def test_parse_cvrplib():
    inst = parse_cvrplib(TINY_CVRP)
    assert inst.kind == "CVRP" and inst.capacity == 15
    np.testing.assert_array_equal(inst.demands, [7, 8, 9])
    np.testing.assert_allclose(inst.depot, [0.5, 0.5])
    np.testing.assert_allclose(inst.coords, [[0, 0], [1, 0], [1, 1]])


def test_cvrplib_depot_demand_must_be_zero():
    with pytest.raises(ParseError):
        parse_cvrplib(TINY_CVRP.replace("DEMAND_SECTION\n1 0", "DEMAND_SECTION\n1 3"))


def test_cvrplib_multiple_depots_rejected():
    with pytest.raises(UnsupportedFormatError):
        parse_cvrplib(TINY_CVRP.replace("DEPOT_SECTION\n1\n", "DEPOT_SECTION\n1\n2\n"))


def test_cvrplib_total_demand_not_checked_against_fleet():
    # 24 units of demand with capacity 15 is fine: trips are unbounded
    assert parse_cvrplib(TINY_CVRP).demands.sum() > 15


def test_bundled_cvrplib_parses():
    inst = read_benchmark(bundled_dir("cvrplib") / "X-n101-50-k13.vrp")
    assert inst.n == 100 and inst.capacity == 206
    assert inst.demands.sum() > 0


def _nint_length(coords, tour):
    # independent oracle: TSPLIB nint distance summed around the closed tour
    total = 0
    for a, b in zip(tour, tour[1:] + tour[:1]):
        dx, dy = coords[a][0] - coords[b][0], coords[a][1] - coords[b][1]
        total += int(math.sqrt(dx * dx + dy * dy) + 0.5)
    return total


@pytest.mark.parametrize("name", ["berlin52", "pcb442"])
def test_bundled_optimal_tour_lengths(name):
    d = bundled_dir("tsplib")
    inst = read_benchmark(d / f"{name}.tsp")
    tour = parse_tour((d / f"{name}.opt.tour").read_text())
    expected = _nint_length(inst.raw_coords.tolist(), tour)
    assert tour_length(tour, inst, "tsplib_nint") == expected


def test_berlin52_optimum_from_files():
    d = bundled_dir("tsplib")
    inst = read_benchmark(d / "berlin52.tsp")
    tour = parse_tour((d / "berlin52.opt.tour").read_text())
    # the oracle computed from the bundled files equals the published optimum
    assert _nint_length(inst.raw_coords.tolist(), tour) == 7542


@pytest.mark.parametrize("path", sorted(bundled_dir("tsplib").glob("*.tsp")), ids=lambda p: p.stem)
def test_tsplib_round_trip(path):
    inst = read_benchmark(path)
    back = parse_tsplib(format_tsplib(inst))
    np.testing.assert_array_equal(back.raw_coords, inst.raw_coords)
    np.testing.assert_array_equal(back.coords, inst.coords)
    assert back.name == inst.name


def test_cvrplib_round_trip():
    inst = read_benchmark(bundled_dir("cvrplib") / "X-n101-50-k13.vrp")
    back = parse_cvrplib(format_cvrplib(inst))
    assert back.same_as(inst)
    np.testing.assert_array_equal(back.raw_coords, inst.raw_coords)
