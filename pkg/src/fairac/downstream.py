"""Two-layer GCN node classifier used to evaluate completed embeddings."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from . import autograd as ag
from .autograd import Adam, Linear, Tensor, no_grad
from .graph import UNLABELED, DataSplit, Graph

GCN_HIDDEN = 128
GCN_EPOCHS = 800


def normalize_adjacency(g: Graph) -> sp.csr_matrix:
    """D^-1/2 (A + I) D^-1/2 as CSR."""
    n = g.n_nodes
    e = g.edges
    rows = np.concatenate([e[:, 0], e[:, 1], np.arange(n)])
    cols = np.concatenate([e[:, 1], e[:, 0], np.arange(n)])
    a = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    d = np.asarray(a.sum(axis=1)).ravel()
    inv = sp.diags(1.0 / np.sqrt(d))
    return (inv @ a @ inv).tocsr()


class GCNModel:
    def __init__(
        self,
        in_dim: int,
        rng: np.random.Generator,
        hidden: int = GCN_HIDDEN,
        dropout: float = 0.5,
    ):
        self.layer1 = Linear(in_dim, hidden, rng)
        self.layer2 = Linear(hidden, 1, rng)
        self.dropout = dropout
        self.loss_history: list[float] = []

    def parameters(self) -> list[Tensor]:
        return self.layer1.parameters() + self.layer2.parameters()

    @staticmethod
    def _propagate(layer: Linear, adj, h: Tensor) -> Tensor:
        """A_hat (h W) + b."""
        return ag.add(ag.spmm(adj, ag.matmul(h, layer.weight)), layer.bias)

    def logits(self, x, adj, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        h = ag.relu(self._propagate(self.layer1, adj, ag.as_tensor(x)))
        h = ag.dropout(h, self.dropout, rng, training)
        return self._propagate(self.layer2, adj, h)


def _training_nodes(labels: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=np.int64)
    nodes = nodes[labels[nodes] != UNLABELED]
    if nodes.size == 0:
        raise ValueError("no labeled training nodes")
    if np.unique(labels[nodes]).size < 2:
        raise ValueError("training labels contain a single class")
    return nodes


@dataclass
class GCNTrainer:
    """Full-batch Adam training, resumable so checkpoints can be evaluated."""

    emb: np.ndarray
    adj: sp.csr_matrix
    labels: np.ndarray
    nodes: np.ndarray
    seed: int = 0
    lr: float = 1e-3
    weight_decay: float = 1e-5
    dropout: float = 0.5
    hidden: int = GCN_HIDDEN
    model: GCNModel = field(init=False)
    epoch: int = field(init=False, default=0)

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        self.nodes = _training_nodes(self.labels, self.nodes)
        self.emb = np.asarray(self.emb, dtype=np.float64)
        rng = np.random.default_rng([self.seed, 0])
        self.model = GCNModel(self.emb.shape[1], rng, self.hidden, self.dropout)
        self._rng = np.random.default_rng([self.seed, 1])
        self._opt = Adam(self.model.parameters(), self.lr, self.weight_decay)
        self._x = Tensor(self.emb)
        self._y = self.labels[self.nodes].astype(np.float64)

    def run(self, epochs: int) -> GCNModel:
        for _ in range(epochs):
            out = self.model.logits(self._x, self.adj, True, self._rng)
            loss = ag.bce_with_logits(ag.take_rows(out, self.nodes), self._y)
            ag.backward(loss)
            self._opt.step()
            self.model.loss_history.append(loss.item())
            self.epoch += 1
        return self.model


def train_gcn(
    emb: np.ndarray,
    adj: sp.csr_matrix,
    labels: np.ndarray,
    split: DataSplit,
    epochs: int = GCN_EPOCHS,
    seed: int = 0,
    **kwargs,
) -> GCNModel:
    """Train on the labeled nodes of ``split.gnn_train``."""
    return GCNTrainer(emb, adj, labels, split.gnn_train, seed=seed, **kwargs).run(epochs)


def predict(model: GCNModel, emb, adj, nodes) -> tuple[np.ndarray, np.ndarray]:
    """Sigmoid scores and hard predictions (score > 0.5) for ``nodes``."""
    nodes = np.asarray(nodes, dtype=np.int64)
    with no_grad():
        logits = model.logits(emb, adj).data[:, 0]
    scores = expit(logits[nodes])
    return scores, (scores > 0.5).astype(np.int64)
