import shutil

import numpy as np
import pytest

from llrbc.bench import (
    BenchmarkResult,
    assign_gaps,
    evaluate_benchmark,
    load_suite,
    read_results_csv,
    write_results_csv,
)
from llrbc.env import validate_route
from llrbc.policy import AttentionPolicy, PolicyConfig, save_checkpoint
from llrbc.tasks import bundled_dir, read_benchmark

SMALL = PolicyConfig(embed_dim=16, n_layers=1, n_heads=2, ff_dim=16)


@pytest.fixture
def small_suite(tmp_path):
    d = tmp_path / "suite"
    d.mkdir()
    for name in ("berlin52.tsp", "eil51.tsp", "st70.tsp"):
        shutil.copy(bundled_dir("tsplib") / name, d / name)
    return d


def test_suite_gaps_zero_for_best(small_suite, tmp_path):
    save_checkpoint(AttentionPolicy("TSP", SMALL, seed=1), tmp_path / "b.npz")
    results = evaluate_benchmark({"a": AttentionPolicy("TSP", SMALL, seed=0), "b": tmp_path / "b.npz"}, small_suite)
    assert [r.name for r in results["a"]] == ["berlin52", "eil51", "st70"]
    for i in range(3):
        gaps = [results["a"][i].gap, results["b"][i].gap]
        assert min(gaps) == 0.0 and max(gaps) >= 0.0


def test_single_checkpoint_gap_zero_and_routes_feasible(small_suite):
    rows = evaluate_benchmark(AttentionPolicy("TSP", SMALL, seed=0), small_suite)["checkpoint"]
    for r in rows:
        assert r.gap == 0.0
        inst = read_benchmark(small_suite / f"{r.name}.tsp")
        validate_route(r.route, inst)
        assert sorted(r.route) == list(range(r.n))
        assert np.isfinite(r.raw_length) and r.raw_length == int(r.raw_length)


def test_decode_limit_skips_with_warning(small_suite):
    with pytest.warns(UserWarning, match="st70"):
        suite = load_suite(small_suite, "TSP", decode_limit=60)
    assert sorted(i.name for i in suite) == ["berlin52", "eil51"]


def test_bundled_pr2392_is_skipped():
    with pytest.warns(UserWarning, match="pr2392"):
        suite = load_suite(bundled_dir("tsplib"), "TSP")
    assert len(suite) >= 10 and all(i.n <= 1001 for i in suite)


def test_unsupported_file_skipped(small_suite):
    (small_suite / "geo.tsp").write_text(
        "NAME : geo\nTYPE : TSP\nDIMENSION : 2\nEDGE_WEIGHT_TYPE : GEO\nNODE_COORD_SECTION\n1 0 0\n2 1 1\nEOF\n")
    with pytest.warns(UserWarning, match="GEO"):
        assert len(load_suite(small_suite, "TSP")) == 3


def test_cvrp_benchmark_feasible():
    rows = evaluate_benchmark(AttentionPolicy("CVRP", SMALL, seed=0), bundled_dir("cvrplib"))["checkpoint"]
    assert len(rows) == 1 and rows[0].n == 100
    validate_route(rows[0].route, read_benchmark(bundled_dir("cvrplib") / "X-n101-50-k13.vrp"))


def test_mixed_kinds_rejected(small_suite):
    with pytest.raises(ValueError):
        evaluate_benchmark({"a": AttentionPolicy("TSP", SMALL), "b": AttentionPolicy("CVRP", SMALL)}, small_suite)


def test_empty_directory_rejected(tmp_path):
    with pytest.raises(ValueError):
        evaluate_benchmark(AttentionPolicy("TSP", SMALL), tmp_path)


def test_assign_gaps():
    res = {"a": [BenchmarkResult("x", 5, 100.0, 1.0)], "b": [BenchmarkResult("x", 5, 110.0, 1.1)]}
    assign_gaps(res)
    assert res["a"][0].gap == 0.0 and res["b"][0].gap == pytest.approx(0.1)


def test_csv_round_trip(tmp_path):
    rows = [BenchmarkResult("berlin52", 52, 7600.0, 7.93, 0.0077)]
    write_results_csv(rows, tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "name,n,raw_length,normalized_length,gap"
    back = read_results_csv(tmp_path / "r.csv")
    assert back[0].name == "berlin52" and back[0].raw_length == 7600.0 and back[0].gap == 0.0077
