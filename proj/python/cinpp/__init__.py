"""Cell complexes, cellular WL refinement and the CIN++ model."""

import json

from . import _core
from ._core import CellComplex, Error, average_precision, mae, roc_auc

__all__ = [
    "CellComplex",
    "Error",
    "Model",
    "average_precision",
    "distinguishable",
    "induced_cycles",
    "lift",
    "mae",
    "roc_auc",
    "synthetic",
    "train",
]


def _graph(g):
    if isinstance(g, str):
        return g
    if "num_nodes" not in g:
        g = dict(g, num_nodes=1 + max((max(e) for e in g.get("edges", [])), default=-1))
    return json.dumps(g)


def lift(graph, max_ring_size=6):
    """Lift a graph dict ({"num_nodes", "edges", ...}) to a 2-complex."""
    return _core._lift(_graph(graph), max_ring_size)


def induced_cycles(graph, max_size):
    return _core._induced_cycles(_graph(graph), max_size)


def distinguishable(a, b, scheme="cinpp", max_ring_size=6):
    return _core._distinguishable(_graph(a), _graph(b), scheme, max_ring_size)


def synthetic(family="ring-count", seed=0, **params):
    text = _core._synthetic(family, seed, json.dumps(params))
    return [json.loads(line) for line in text.splitlines() if line]


class Model:
    """CIN++ network. `config` uses the keys of the saved config.json."""

    def __init__(self, config=None, _impl=None):
        self._impl = _impl if _impl is not None else _core.Model(json.dumps(config or {}))

    @property
    def config(self):
        return json.loads(self._impl.config())

    def num_parameters(self):
        return self._impl.num_parameters()

    def predict(self, graph, max_ring_size=6):
        return self._impl._predict(_graph(graph), max_ring_size)

    def save(self, path):
        self._impl.save(str(path))

    def to_bytes(self):
        return self._impl.to_bytes()

    @classmethod
    def load(cls, path):
        return cls(_impl=_core.Model.load(str(path)))

    @classmethod
    def from_bytes(cls, data):
        return cls(_impl=_core.Model.from_bytes(data))


def train(graphs, model=None, training=None, splits=(0.8, 0.1, 0.1), max_ring_size=6):
    """Train on a list of graph dicts with targets. Returns (Model, report)."""
    text = "".join(_graph(g) + "\n" for g in graphs)
    impl, report = _core._train(text, json.dumps(model or {}), json.dumps(training or {}), list(splits), max_ring_size)
    return Model(_impl=impl), json.loads(report)
