import itertools
import math

import pytest

import cinpp

HEXAGON = {"num_nodes": 6, "edges": [[i, (i + 1) % 6] for i in range(6)]}
TWO_TRIANGLES = {"num_nodes": 6, "edges": [[0, 1], [1, 2], [2, 0], [3, 4], [4, 5], [5, 3]]}


def test_lift_triangle_tables():
    c = cinpp.lift({"num_nodes": 3, "edges": [[0, 1], [1, 2], [0, 2]]}, 3)
    assert [c.num_cells(k) for k in range(3)] == [3, 3, 1]
    ring = c.offset(2)
    assert sorted(c.boundary(ring)) == [3, 4, 5]
    assert c.coboundary(3) == [ring]
    assert len(c.upper(3)) == 2 and all(w == ring for _, w in c.upper(3))
    assert c.validate() == []


def test_complex_json_round_trip():
    c = cinpp.lift(HEXAGON, 6)
    assert cinpp.CellComplex.from_json(c.to_json()) == c


def test_induced_cycles_match_subsets():
    g = {"num_nodes": 5, "edges": [[0, 1], [1, 2], [2, 3], [3, 0], [1, 3], [3, 4], [4, 0]]}
    adj = {v: set() for v in range(5)}
    for u, v in g["edges"]:
        adj[u].add(v)
        adj[v].add(u)
    expected = 0
    for k in range(3, 6):
        for subset in itertools.combinations(range(5), k):
            s = set(subset)
            if all(len(adj[v] & s) == 2 for v in s):
                # connected 2-regular induced subgraph
                seen, stack = set(), [subset[0]]
                while stack:
                    v = stack.pop()
                    if v not in seen:
                        seen.add(v)
                        stack.extend(adj[v] & s)
                expected += seen == s
    assert len(cinpp.induced_cycles(g, 5)) == expected


def test_wl_hard_pair():
    assert cinpp.distinguishable(HEXAGON, TWO_TRIANGLES, "cin")
    assert cinpp.distinguishable(HEXAGON, TWO_TRIANGLES, "cinpp")
    assert not cinpp.distinguishable(HEXAGON, HEXAGON)


def test_errors_carry_codes():
    with pytest.raises(cinpp.Error) as info:
        cinpp.lift({"num_nodes": 2, "edges": [[0, 0]]})
    assert info.value.code == "SelfLoop"
    with pytest.raises(ValueError):
        cinpp.distinguishable(HEXAGON, HEXAGON, "gin")


def test_metrics():
    assert cinpp.mae([1.0, 2.0], [1.0, 4.0]) == 1.0
    assert cinpp.roc_auc([0.9, 0.8, 0.8, 0.1], [1, 0, 1, 0]) == pytest.approx(0.875)
    assert cinpp.average_precision([0.9, 0.8, 0.8, 0.1], [1, 0, 1, 0]) == pytest.approx(0.5 + 1.0 / 3.0)


def test_synthetic_labels():
    graphs = cinpp.synthetic("ring-count", seed=3, count=10, max_hexagons=2)
    assert len(graphs) == 10
    for g in graphs:
        hexagons = sum(len(c) == 6 for c in cinpp.induced_cycles(g, 6))
        assert g["target"] == hexagons


def test_model_round_trip(tmp_path):
    m = cinpp.Model({"num_layers": 2, "hidden": 8, "seed": 4})
    y = m.predict(HEXAGON)
    assert len(y) == 1 and math.isfinite(y[0])
    path = tmp_path / "m.ckpt"
    m.save(path)
    assert cinpp.Model.load(path).predict(HEXAGON) == y
    assert cinpp.Model.from_bytes(m.to_bytes()).predict(HEXAGON) == y
    blob = m.to_bytes()
    with pytest.raises(cinpp.Error) as info:
        cinpp.Model.from_bytes(blob[:-8])
    assert info.value.code == "CorruptBlob"


def test_predictions_ignore_node_order():
    m = cinpp.Model({"num_layers": 2, "hidden": 8, "seed": 1})
    g = {"num_nodes": 7, "edges": [[0, 1], [1, 2], [2, 3], [3, 4], [4, 5], [5, 0], [2, 6]]}
    perm = [3, 6, 0, 5, 1, 4, 2]
    h = {"num_nodes": 7, "edges": [[perm[u], perm[v]] for u, v in g["edges"]]}
    assert m.predict(g)[0] == pytest.approx(m.predict(h)[0], abs=1e-9)


def test_train_small_run():
    graphs = cinpp.synthetic("ring-count", seed=5, count=40, max_hexagons=2)
    model, report = cinpp.train(graphs, {"num_layers": 1, "hidden": 8}, {"max_epochs": 5, "batch_size": 8, "seed": 2})
    assert len(report["epochs"]) == 5
    assert sum(report["split_sizes"]) == 40
    assert math.isfinite(model.predict(graphs[0])[0])
