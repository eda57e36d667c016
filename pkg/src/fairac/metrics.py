"""Utility and fairness metrics for binary node classification."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp
from scipy.stats import rankdata

from .graph import UNLABELED


@dataclass
class EvalReport:
    acc: float
    auc: float
    dsp: float
    deo: float
    dsp_plus_deo: float
    consistency: float  # x100
    consistency_prediction_pair: float = float("nan")  # x100

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> EvalReport:
        return cls(**d)


def _sel(x, nodes):
    x = np.asarray(x)
    return x if nodes is None else x[np.asarray(nodes, dtype=np.int64)]


def accuracy(preds, labels, nodes=None) -> float:
    p, y = _sel(preds, nodes), _sel(labels, nodes)
    if y.size == 0:
        raise ValueError("accuracy over an empty node set")
    return float(np.mean(p == y))


def auc(scores, labels, nodes=None) -> float:
    """Area under the ROC curve as the Mann-Whitney statistic (ties count 1/2)."""
    s = _sel(scores, nodes).astype(np.float64)
    y = _sel(labels, nodes)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    ranks = rankdata(s)
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def statistical_parity(preds, sensitive, nodes=None) -> float:
    """|P(y_hat=1 | s=0) - P(y_hat=1 | s=1)|."""
    p, s = _sel(preds, nodes), _sel(sensitive, nodes)
    if not (s == 0).any() or not (s == 1).any():
        raise ValueError("statistical parity needs both sensitive groups")
    return float(abs(np.mean(p[s == 0] == 1) - np.mean(p[s == 1] == 1)))


def equal_opportunity(preds, sensitive, labels, nodes=None) -> float:
    """|TPR(s=0) - TPR(s=1)| over nodes with y=1."""
    p, s, y = _sel(preds, nodes), _sel(sensitive, nodes), _sel(labels, nodes)
    g0 = (s == 0) & (y == 1)
    g1 = (s == 1) & (y == 1)
    if not g0.any() or not g1.any():
        raise ValueError("equal opportunity needs positive-label members in both groups")
    return float(abs(np.mean(p[g0] == 1) - np.mean(p[g1] == 1)))


def build_similarity(features, k: int = 10, chunk: int = 1024) -> sp.csr_matrix:
    """Top-k cosine similarity graph with zero diagonal.

    Each row keeps its k largest similarities to other rows; negatives are
    clamped to 0 and the result symmetrized with an element-wise max, so a
    row may end up with more than k entries. Zero rows have similarity 0.
    """
    x = np.asarray(features, dtype=np.float64)
    n = x.shape[0]
    norms = np.linalg.norm(x, axis=1)
    xn = x / np.where(norms > 0, norms, 1.0)[:, None]
    k = min(k, n - 1)
    rows, cols, vals = [], [], []
    if k > 0:
        for start in range(0, n, chunk):
            block = xn[start : start + chunk] @ xn.T
            idx = np.arange(block.shape[0])
            block[idx, start + idx] = -np.inf
            top = np.argsort(-block, axis=1, kind="stable")[:, :k]
            v = np.take_along_axis(block, top, axis=1)
            rows.append(np.repeat(start + idx, k))
            cols.append(top.ravel())
            vals.append(np.maximum(v.ravel(), 0.0))
    if not rows:
        return sp.csr_matrix((n, n))
    s = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    s = s.maximum(s.T).tocsr()
    s.setdiag(0.0)
    s.eliminate_zeros()
    return s


def consistency(preds, labels, similarity, mode: str = "label_pair") -> float:
    """1 - sum_ij |y_i - y_hat_j| S_ij / sum_ij S_ij over i != j.

    ``mode="prediction_pair"`` uses |y_hat_i - y_hat_j| instead.
    Returned as a fraction; reports multiply by 100.
    """
    s = sp.coo_matrix(similarity)
    off = s.row != s.col
    r, c, w = s.row[off], s.col[off], s.data[off]
    total = w.sum()
    if total <= 0:
        raise ValueError("similarity matrix has no positive off-diagonal entry")
    p = np.asarray(preds, dtype=np.float64)
    if mode == "label_pair":
        left = np.asarray(labels, dtype=np.float64)
    elif mode == "prediction_pair":
        left = p
    else:
        raise ValueError(f"unknown consistency mode {mode!r}")
    return float(1.0 - np.sum(np.abs(left[r] - p[c]) * w) / total)


def evaluate(
    scores,
    preds,
    labels,
    sensitive,
    similarity,
) -> EvalReport:
    """All metrics over one evaluation node set (arrays already restricted to it)."""
    labels = np.asarray(labels)
    if (labels == UNLABELED).any():
        raise ValueError("evaluation nodes must be labeled")
    dsp = statistical_parity(preds, sensitive)
    deo = equal_opportunity(preds, sensitive, labels)
    return EvalReport(
        acc=accuracy(preds, labels),
        auc=auc(scores, labels),
        dsp=dsp,
        deo=deo,
        dsp_plus_deo=dsp + deo,
        consistency=100.0 * consistency(preds, labels, similarity, "label_pair"),
        consistency_prediction_pair=100.0 * consistency(preds, labels, similarity, "prediction_pair"),
    )
