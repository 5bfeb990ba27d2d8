"""Smoke test for the Python bindings; run with pytest or plain python."""

import json
import math
import pathlib
import tempfile

import rgflow_py as rg

ROOT = pathlib.Path(__file__).resolve().parents[1]
EXAMPLE = (ROOT / "crates" / "rgflow" / "data" / "example_tree.json").read_text()


def test_enumeration_counts():
    assert len(rg.enumerate_trees(2)) == 1
    assert len(rg.enumerate_trees(3, topologies=True)) == 1
    assert len(rg.enumerate_trees(4, topologies=True)) == 2


def test_example_tree():
    assert rg.tree_dimension(EXAMPLE) == -3.0
    q1, q2 = [0.3, 0.1, -0.2, 0.5], [1.0, 0.0, 0.4, 0.2]
    q3 = [-(a + b) for a, b in zip(q1, q2)]
    n1, n2, n3 = (math.sqrt(sum(x * x for x in v)) for v in (q1, q2, q3))
    lam = 0.7
    s = lambda a: max(a, lam)
    closed_form = math.sqrt(s(n1)) * lam**2 / (
        math.sqrt(s(n2)) * s(n3) * s(min(n1, n3)) * s(min(n2, n3)) ** 3
    )
    assert abs(rg.tree_weight(EXAMPLE, [q1, q2], lam) / closed_form - 1) < 1e-12


def test_brst():
    su2 = json.loads(rg.brst_check("su2", anomaly=True))
    assert all(c["passed"] for c in su2["checks"])
    checks = {c["name"]: c for c in su2["checks"]}
    assert "nonzero modulo d: false" in checks["anomaly_nonzero"]["detail"]


def test_special_functions():
    e = rg.expint(0.5, 0)
    assert abs(e - complex(math.cos(0.5), -math.sin(0.5))) < 1e-10
    rep = json.loads(rg.lemma_suite(["A1"], 2000))
    assert rep["passed"]


def test_flow_round_trip():
    cfg = json.dumps({"n_max": 4, "grid": {"nodes": 40, "lambda_min": 0.01},
                      "probes": {"two_point_count": 4, "four_point_count": 2}})
    with tempfile.TemporaryDirectory() as d:
        path = rg.integrate_flow(cfg, d)
        reps = json.loads(rg.verify_bounds(path))
        assert [(r["l"], r["n"]) for r in reps] == [(0, 4), (1, 2)]
        assert all(r["passed"] and r["degree"] == r["l"] + 1 for r in reps)


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_"):
            fn()
            print(f"{name}: ok")
