"""Synthetic attributed graphs with a planted sensitive bias.

Nodes belong to one of two sensitive groups. Edges are homophilous in the
sensitive group, one feature column copies the sensitive value, and labels
depend on informative features plus a group offset, so a classifier can pick
up sensitive information both from features and through neighbors.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from .datasets import normalize_features
from .graph import Graph


def biased_graph(
    n_nodes: int = 400,
    n_features: int = 12,
    avg_degree: float = 20.0,
    homophily: float = 0.8,
    label_bias: float = 1.0,
    seed: int = 0,
    name: str = "synthetic",
) -> tuple[Graph, pd.DataFrame, np.ndarray]:
    """Return the graph plus the raw node table and edge array it was built from."""
    rng = np.random.default_rng(seed)
    s = rng.integers(0, 2, n_nodes)
    x = rng.normal(size=(n_nodes, n_features))
    x[:, 0] = s
    informative = min(4, n_features - 1)
    w = rng.normal(size=informative)
    score = x[:, 1 : 1 + informative] @ w + label_bias * (2 * s - 1) + 0.5 * rng.normal(size=n_nodes)
    y = (score > np.median(score)).astype(np.int64)

    n_pairs = int(avg_degree * n_nodes / 2)
    u = rng.integers(0, n_nodes, 4 * n_pairs)
    v = rng.integers(0, n_nodes, 4 * n_pairs)
    same = s[u] == s[v]
    accept = np.where(same, homophily, 1.0 - homophily) > rng.random(len(u))
    keep = accept & (u != v)
    edges = np.sort(np.stack([u[keep], v[keep]], axis=1), axis=1)
    edges = np.unique(edges, axis=0)
    edges = edges[rng.permutation(len(edges))[:n_pairs]]

    table = pd.DataFrame(x, columns=[f"f{i}" for i in range(n_features)])
    table.insert(0, "user_id", np.arange(1000, 1000 + n_nodes))
    table["group"] = s
    table["label"] = y
    present = np.ones(n_nodes, dtype=bool)
    g = Graph(
        n_nodes=n_nodes,
        edges=edges,
        features=normalize_features(x, present),
        feature_present=present,
        sensitive=s,
        labels=y,
        name=name,
    )
    return g, table, edges


def write_dataset(directory: str | Path, name: str = "synthetic", **kwargs) -> Path:
    """Write node CSV, edge file and a dataset ``.cfg``; return the config path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    _, table, edges = biased_graph(name=name, **kwargs)
    table.to_csv(d / f"{name}.csv", index=False)
    ids = table["user_id"].to_numpy()
    np.savetxt(d / f"{name}_edges.txt", ids[edges], fmt="%d")
    cfg = d / f"{name}.cfg"
    cfg.write_text(
        f"name = {name}\n"
        f"node_file = {name}.csv\n"
        f"edge_file = {name}_edges.txt\n"
        "id_column = user_id\n"
        "sensitive_column = group\n"
        "label_column = label\n"
        "min_ac_train = 1\n"
        "min_sens_train = 1\n"
    )
    return cfg
