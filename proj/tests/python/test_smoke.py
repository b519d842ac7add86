"""Smoke tests for the python bindings: one pass through the whole pipeline."""

import json

import pytest

try:
    import _memplan as mp
except ImportError:  # installed package layout
    mp = pytest.importorskip("memplan")


def test_generate_validate_order():
    graph = mp.gen_matmul(3)
    assert mp.validate_taskgraph(graph) == []
    order = mp.topological_order(graph, "as-listed")
    parsed = json.loads(graph)
    assert sorted(order) == sorted(v["id"] for v in parsed["vertices"])


def test_validation_reports_violations():
    bad = json.dumps({
        "device_count": 1,
        "vertices": [{"id": 0, "kind": "input", "device": 0, "output_size": 1}],
        "edges": [[0, 0]],
    })
    violations = mp.validate_taskgraph(bad)
    assert any("self-loop" in v for v in violations)


def test_compile_verify_simulate_roundtrip():
    graph = mp.gen_matmul(3)
    memgraph, stats = mp.build_memgraph(graph, [5, 5, 5], mode="slot")
    assert stats["offloads"] == 0
    assert stats["memory_edges"] == 2

    report = json.loads(mp.verify(graph, memgraph, schedule_limit=200))
    assert report["all_passed"] is True

    trace = json.loads(mp.simulate(memgraph, seed=7))
    assert trace["makespan"] > 0
    assert len(trace["rows"]) == len(json.loads(memgraph)["vertices"])


def test_tight_build_inserts_offloads():
    graph = mp.gen_layered(3, 2, 2, 1)
    parsed = json.loads(graph)
    per_device = {}
    for v in parsed["vertices"]:
        per_device[v["device"]] = per_device.get(v["device"], 0) + 1
    memgraph, stats = mp.build_memgraph(graph, [4, 4], mode="slot")
    assert stats["offloads"] > 0
    report = json.loads(mp.verify(graph, memgraph))
    assert report["all_passed"] is True


def test_compare_policies_chain_has_no_freedom():
    graph = json.dumps({
        "device_count": 1,
        "vertices": [
            {"id": 0, "kind": "input", "device": 0, "output_size": 1},
            {"id": 1, "kind": "kernel", "device": 0, "output_size": 1, "cost_hint": 1.0},
            {"id": 2, "kind": "kernel", "device": 0, "output_size": 1, "cost_hint": 1.0},
        ],
        "edges": [[0, 1], [1, 2]],
    })
    memgraph, _ = mp.build_memgraph(graph, [4], mode="slot")
    summary = json.loads(mp.compare_policies(memgraph, trials=5, seed=3))
    assert summary["speedup"]["mean"] == 0.0


def test_errors_raise():
    with pytest.raises(Exception):
        mp.build_memgraph("{}", [1])
    with pytest.raises(Exception):
        mp.gen_matmul(0)


def test_dot_exports():
    graph = mp.gen_matmul(2)
    assert "digraph" in mp.taskgraph_to_dot(graph)
    memgraph, _ = mp.build_memgraph(graph, [4, 4], mode="slot")
    assert "digraph" in mp.memgraph_to_dot(memgraph)
