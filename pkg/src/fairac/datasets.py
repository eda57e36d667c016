"""Loading the CSV graph datasets and applying the attribute-missing mask.

Node file: CSV with a header row, one row per node. The id column (``user_id``
by default; ``id_column = none`` means the row index is the id) is followed by
numeric attribute columns, among them the sensitive and label columns.

Edge file: two node ids per line, separated by whitespace and/or a comma.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from .graph import UNLABELED, Graph, round_half_up

DATA_ROOT_ENV = "FAIRAC_DATA_ROOT"
AGE_THRESHOLD = 21


@dataclass
class DatasetSpec:
    name: str
    node_file: Path
    edge_file: Path
    sensitive_column: str
    label_column: str
    id_column: str | None = "user_id"
    exclude_columns: tuple[str, ...] = ()
    min_ac_train: int = 1
    min_sens_train: int = 1
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.node_file = Path(self.node_file)
        self.edge_file = Path(self.edge_file)
        if self.min_ac_train <= 0 or self.min_sens_train <= 0:
            raise ValueError("dataset minimums must be positive")


def read_kv_config(path: str | os.PathLike) -> dict[str, str]:
    """Read a plain ``key = value`` file (``#`` comments, no sections)."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    parser.optionxform = str
    text = Path(path).read_text()
    parser.read_string("[root]\n" + text)
    return dict(parser["root"])


def builtin_datasets() -> list[str]:
    files = resources.files("fairac").joinpath("configs")
    return sorted(p.name[:-4] for p in files.iterdir() if p.name.endswith(".cfg"))


def data_root(root: str | os.PathLike | None = None) -> Path:
    if root is not None:
        return Path(root)
    return Path(os.environ.get(DATA_ROOT_ENV, "data"))


def load_dataset_spec(name_or_path: str, root: str | os.PathLike | None = None) -> DatasetSpec:
    """Resolve a shipped dataset name (``nba``, ``pokec_z``...) or a ``.cfg`` path.

    Relative file paths in the config are resolved against the data root
    (``$FAIRAC_DATA_ROOT`` or ``./data``) for shipped configs, and against the
    config's own directory for user-supplied ones.
    """
    p = Path(name_or_path)
    if p.suffix == ".cfg" and p.exists():
        kv = read_kv_config(p)
        base = Path(root) if root is not None else p.parent
    else:
        ref = resources.files("fairac").joinpath("configs", f"{name_or_path}.cfg")
        if not ref.is_file():
            raise KeyError(f"unknown dataset {name_or_path!r}; known: {builtin_datasets()}")
        kv = read_kv_config(ref)
        base = data_root(root)
    known = {
        "name", "node_file", "edge_file", "sensitive_column", "label_column",
        "id_column", "exclude_columns", "min_ac_train", "min_sens_train",
    }
    id_col = kv.get("id_column", "user_id")
    return DatasetSpec(
        name=kv.get("name", p.stem),
        node_file=base / kv["node_file"],
        edge_file=base / kv["edge_file"],
        sensitive_column=kv["sensitive_column"],
        label_column=kv["label_column"],
        id_column=None if id_col.lower() == "none" else id_col,
        exclude_columns=tuple(kv.get("exclude_columns", "").split()),
        min_ac_train=int(kv.get("min_ac_train", 1)),
        min_sens_train=int(kv.get("min_sens_train", 1)),
        extra={k: v for k, v in kv.items() if k not in known},
    )


def binarize_sensitive(values, attribute: str) -> np.ndarray:
    """Map a sensitive column to {0, 1}.

    Columns already in {0, 1} pass through. ``age`` becomes 1 for values
    below 21. Any other two-valued column maps its smaller value to 0.
    """
    v = np.asarray(values, dtype=np.float64)
    uniq = np.unique(v)
    if uniq.size < 2:
        raise ValueError(f"sensitive attribute {attribute!r} is constant; one group would be empty")
    if set(uniq.tolist()) <= {0.0, 1.0}:
        out = v.astype(np.int64)
    elif attribute.lower() == "age":
        out = (v < AGE_THRESHOLD).astype(np.int64)
    elif uniq.size == 2:
        out = (v == uniq[1]).astype(np.int64)
    else:
        raise ValueError(
            f"sensitive attribute {attribute!r} has {uniq.size} distinct values; expected two"
        )
    if np.unique(out).size != 2:
        raise ValueError(f"sensitive attribute {attribute!r} yields a single group after binarization")
    return out


def binarize_labels(values) -> np.ndarray:
    """Negative values are unlabeled, 0 stays 0, anything >= 1 becomes 1."""
    v = np.asarray(values, dtype=np.float64)
    if np.any(np.isnan(v)) or np.any(v != np.round(v)):
        raise ValueError("label column must hold integers")
    out = np.where(v < 0, UNLABELED, np.where(v >= 1, 1, 0))
    return out.astype(np.int64)


def normalize_features(features: np.ndarray, present: np.ndarray) -> np.ndarray:
    """Column min-max scaling to [0, 1] using observed rows only.

    Constant columns map to 0; unobserved rows are zero.
    """
    x = np.asarray(features, dtype=np.float64)
    present = np.asarray(present, dtype=bool)
    out = np.zeros_like(x)
    if not present.any():
        return out
    obs = x[present]
    lo = obs.min(axis=0)
    span = obs.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    out[present] = np.where(span > 0, (obs - lo) / safe, 0.0)
    return out


def read_edge_file(path: str | os.PathLike) -> np.ndarray:
    tokens = Path(path).read_text().replace(",", " ").split()
    if len(tokens) % 2:
        raise ValueError(f"{path}: odd number of node ids")
    raw = np.array(tokens, dtype=np.float64)
    if np.any(raw != np.round(raw)):
        raise ValueError(f"{path}: node ids must be integers")
    return raw.astype(np.int64).reshape(-1, 2)


def load_dataset(spec: DatasetSpec, max_nodes: int | None = None) -> Graph:
    """Build a :class:`Graph` from the spec's node and edge files.

    ``max_nodes`` keeps the first rows of the node file (file order) and the
    edges among them, for desk-scale subsamples of the large graphs.
    """
    table = pd.read_csv(spec.node_file)
    if max_nodes is not None:
        table = table.iloc[:max_nodes]
    for col in (spec.sensitive_column, spec.label_column):
        if col not in table.columns:
            raise KeyError(f"{spec.node_file}: missing column {col!r}")
    if spec.id_column is None:
        ids = np.arange(len(table), dtype=np.int64)
    else:
        ids = table[spec.id_column].to_numpy(dtype=np.int64)
    if len(np.unique(ids)) != len(ids):
        raise ValueError(f"{spec.node_file}: duplicate node ids")

    drop = {spec.sensitive_column, spec.label_column, *spec.exclude_columns}
    if spec.id_column is not None:
        drop.add(spec.id_column)
    feat_cols = [c for c in table.columns if c not in drop]
    features = table[feat_cols].to_numpy(dtype=np.float64)
    if np.isnan(features).any():
        raise ValueError(f"{spec.node_file}: non-numeric or empty feature cells")

    sens = binarize_sensitive(table[spec.sensitive_column].to_numpy(), spec.sensitive_column)
    labels = binarize_labels(table[spec.label_column].to_numpy())

    raw_edges = read_edge_file(spec.edge_file)
    known = np.isin(raw_edges, ids)
    if max_nodes is None:
        if not known.all():
            raise ValueError(f"{spec.edge_file}: unknown node id {int(raw_edges[~known][0])}")
    else:
        raw_edges = raw_edges[known.all(axis=1)]
    order = np.argsort(ids, kind="stable")
    mapped = order[np.searchsorted(ids, raw_edges, sorter=order)].reshape(-1, 2)
    mapped = mapped[mapped[:, 0] != mapped[:, 1]]

    present = np.ones(len(table), dtype=bool)
    return Graph(
        n_nodes=len(table),
        edges=mapped,
        features=normalize_features(features, present),
        feature_present=present,
        sensitive=sens,
        labels=labels,
        name=spec.name,
    )


def apply_missing(g: Graph, alpha: float, rng: np.random.Generator) -> Graph:
    """Remove the attributes of ``round(alpha * n)`` uniformly chosen nodes.

    Surviving features are re-scaled with statistics of the observed rows
    only, so masked nodes never influence normalization.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"attribute missing rate must be in [0, 1), got {alpha}")
    if alpha == 0.0:
        return g
    k = round_half_up(alpha * g.n_nodes)
    masked = rng.choice(g.n_nodes, size=k, replace=False)
    present = g.feature_present.copy()
    present[masked] = False
    return g.with_features(normalize_features(g.features, present), present)
