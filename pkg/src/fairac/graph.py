"""Graph data model and node partitions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

UNLABELED = -1


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def canonical_edges(edges, n_nodes: int) -> np.ndarray:
    """Deduplicate undirected edges, orient each as ``u < v`` and sort.

    Raises on self-loops and out-of-range endpoints.
    """
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size and (e.min() < 0 or e.max() >= n_nodes):
        raise ValueError(f"edge endpoint outside [0, {n_nodes})")
    if np.any(e[:, 0] == e[:, 1]):
        raise ValueError("self-loops are not stored; remove them before building the graph")
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0) if e.size else np.zeros((0, 2), dtype=np.int64)


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected attributed graph.

    ``features`` rows of nodes with ``feature_present == False`` are zero
    placeholders. ``labels`` uses :data:`UNLABELED` for unknown labels.
    """

    n_nodes: int
    edges: np.ndarray
    features: np.ndarray
    feature_present: np.ndarray
    sensitive: np.ndarray
    labels: np.ndarray
    name: str = ""
    _indptr: np.ndarray = field(init=False, repr=False)
    _indices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = int(self.n_nodes)
        if n <= 0:
            raise ValueError("graph must have at least one node")
        edges = canonical_edges(self.edges, n)
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != n:
            raise ValueError(f"features must be ({n}, d), got {features.shape}")
        present = np.asarray(self.feature_present, dtype=bool).reshape(n)
        features = np.where(present[:, None], features, 0.0)
        sens = np.asarray(self.sensitive, dtype=np.int64).reshape(n)
        if not np.isin(sens, (0, 1)).all():
            raise ValueError("sensitive attribute must be 0/1 for every node")
        labels = np.asarray(self.labels, dtype=np.int64).reshape(n)
        if not np.isin(labels, (0, 1, UNLABELED)).all():
            raise ValueError("labels must be 0, 1 or UNLABELED")

        both = np.concatenate([edges, edges[:, ::-1]]) if len(edges) else edges
        order = np.lexsort((both[:, 1], both[:, 0])) if len(both) else np.zeros(0, np.int64)
        both = both[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, both[:, 0] + 1, 1)
        np.cumsum(indptr, out=indptr)

        set_ = object.__setattr__
        set_(self, "n_nodes", n)
        set_(self, "edges", _readonly(edges))
        set_(self, "features", _readonly(features))
        set_(self, "feature_present", _readonly(present))
        set_(self, "sensitive", _readonly(sens))
        set_(self, "labels", _readonly(labels))
        set_(self, "_indptr", _readonly(indptr))
        set_(self, "_indices", _readonly(both[:, 1].copy()))

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self._indptr)

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """(indptr, indices) of the symmetric adjacency, neighbors sorted."""
        return self._indptr, self._indices

    def neighbors(self, u: int) -> list[int]:
        return neighbors(self, u)

    def with_features(self, features: np.ndarray, feature_present: np.ndarray) -> Graph:
        return replace(self, features=features, feature_present=feature_present)


def neighbors(g: Graph, u: int) -> list[int]:
    if not 0 <= u < g.n_nodes:
        raise IndexError(f"node {u} out of range for graph with {g.n_nodes} nodes")
    return g._indices[g._indptr[u] : g._indptr[u + 1]].tolist()


@dataclass(frozen=True)
class DataSplit:
    ac_train: np.ndarray
    gnn_train: np.ndarray
    test: np.ndarray


def make_split(n_nodes: int, ordering=None) -> DataSplit:
    """Contiguous 25/50/25 slices of ``ordering`` (file order by default).

    Slice sizes are floor(n/4), floor(n/2) and the remainder.
    """
    if n_nodes < 4:
        raise ValueError(f"need at least 4 nodes to split, got {n_nodes}")
    order = np.arange(n_nodes) if ordering is None else np.asarray(ordering, dtype=np.int64)
    if order.shape != (n_nodes,) or not np.array_equal(np.sort(order), np.arange(n_nodes)):
        raise ValueError("ordering must be a permutation of 0..n_nodes-1")
    a = n_nodes // 4
    b = a + n_nodes // 2
    return DataSplit(order[:a].copy(), order[a:b].copy(), order[b:].copy())


@dataclass(frozen=True)
class DropPlan:
    keep: np.ndarray
    drop: np.ndarray
    alpha: float


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def sample_drop_plan(candidates, alpha: float, rng: np.random.Generator) -> DropPlan:
    """Split ``candidates`` into keep/drop with ``round(alpha * n)`` dropped."""
    cand = np.asarray(candidates, dtype=np.int64)
    if cand.size == 0:
        raise ValueError("no candidate nodes to divide")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    k = round_half_up(alpha * cand.size)
    perm = rng.permutation(cand.size)
    drop = np.sort(cand[perm[:k]])
    keep = np.sort(cand[perm[k:]])
    return DropPlan(keep=keep, drop=drop, alpha=alpha)


def induced_subgraph(g: Graph, nodes) -> Graph:
    """Subgraph on ``nodes`` (relabelled 0..k-1 in the given order)."""
    nodes = np.asarray(nodes, dtype=np.int64)
    local = np.full(g.n_nodes, -1, dtype=np.int64)
    local[nodes] = np.arange(len(nodes))
    e = local[g.edges]
    e = e[(e >= 0).all(axis=1)]
    return Graph(
        n_nodes=len(nodes),
        edges=e,
        features=g.features[nodes],
        feature_present=g.feature_present[nodes],
        sensitive=g.sensitive[nodes],
        labels=g.labels[nodes],
        name=g.name,
    )
