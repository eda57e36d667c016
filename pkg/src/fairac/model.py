"""FairAC: fair attribute completion for nodes with missing attributes.

Three parts share one embedding space of width 128:

* an autoencoder mapping node attributes to embeddings and back,
* a sensitive classifier predicting the sensitive attribute from an embedding,
* an attention completer that rebuilds the embedding of an attribute-less
  node as an attention-weighted mean of its neighbors' embeddings, with
  attention scores computed from DeepWalk topological embeddings.

The encoder is trained adversarially against the classifier (feature
fairness) and the completer is trained so that completed embeddings also
fool the classifier (topological fairness).
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import autograd as ag
from .autograd import Adam, Linear, Tensor, glorot, no_grad
from .graph import DataSplit, Graph, induced_subgraph, sample_drop_plan

log = logging.getLogger(__name__)

HIDDEN = 128
TOPO_DIM = 64
LEAKY_SLOPE = 0.2
CHECKPOINT_VERSION = 1


@dataclass
class FairACConfig:
    alpha: float = 0.3
    beta: float = 1.0
    epochs: int = 3000
    pretrain_epochs: int = 200
    eval_start: int = 1000
    eval_every: int = 200
    acc_threshold: float = 0.65
    auc_threshold: float = 0.69
    seed: int = 40
    hidden: int = HIDDEN
    dropout: float = 0.5
    lr: float = 1e-3
    weight_decay: float = 1e-5
    norm: str = "euclidean"  # or "l1"
    topo_loss: str = "adversarial"  # or "literal"
    adversary: bool = True
    unfreeze_encoder: bool = False
    min_ac_train: int = 1
    min_sens_train: int = 1

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if not 0 <= self.pretrain_epochs < max(self.epochs, 1):
            raise ValueError("pretrain_epochs must be smaller than epochs")
        if self.eval_start > self.epochs or self.eval_every <= 0:
            raise ValueError("need eval_start <= epochs and eval_every > 0")
        for t in (self.acc_threshold, self.auc_threshold):
            if not 0.0 <= t <= 1.0:
                raise ValueError("thresholds must lie in [0, 1]")
        if self.norm not in ("euclidean", "l1"):
            raise ValueError(f"unknown norm {self.norm!r}")
        if self.topo_loss not in ("adversarial", "literal"):
            raise ValueError(f"unknown topo_loss {self.topo_loss!r}")

    def eval_epochs(self) -> list[int]:
        return list(range(self.eval_start, self.epochs + 1, self.eval_every))


# ---------------------------------------------------------------- components


class AutoEncoder:
    def __init__(self, in_dim: int, rng: np.random.Generator, hidden: int = HIDDEN):
        self.encoder = Linear(in_dim, hidden, rng)
        self.decoder = Linear(hidden, in_dim, rng)

    def parameters(self) -> list[Tensor]:
        return self.encoder.parameters() + self.decoder.parameters()


class SensitiveClassifier:
    def __init__(self, rng: np.random.Generator, hidden: int = HIDDEN):
        self.linear = Linear(hidden, 1, rng)

    def parameters(self) -> list[Tensor]:
        return self.linear.parameters()

    def __call__(self, h: Tensor) -> Tensor:
        return self.linear(h)


class AttentionCompleter:
    """Single-head attention over neighbors, scored on topological embeddings."""

    def __init__(self, rng: np.random.Generator, topo_dim: int = TOPO_DIM):
        self.transform = Linear(topo_dim, topo_dim, rng)
        self.score = Tensor(glorot(rng, 2 * topo_dim, 1), requires_grad=True)

    def parameters(self) -> list[Tensor]:
        return self.transform.parameters() + [self.score]


class FairACModel:
    def __init__(
        self,
        in_dim: int,
        seed: int = 0,
        hidden: int = HIDDEN,
        topo_dim: int = TOPO_DIM,
    ):
        rng = np.random.default_rng(seed)
        self.in_dim, self.hidden, self.topo_dim = in_dim, hidden, topo_dim
        self.ae = AutoEncoder(in_dim, rng, hidden)
        self.classifier = SensitiveClassifier(rng, hidden)
        self.completer = AttentionCompleter(rng, topo_dim)

    def parameters(self) -> list[Tensor]:
        return self.ae.parameters() + self.classifier.parameters() + self.completer.parameters()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        names = ["enc_w", "enc_b", "dec_w", "dec_b", "cls_w", "cls_b", "att_w", "att_b", "att_a"]
        return {n: p.data.copy() for n, p in zip(names, self.parameters())}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        current = self.state_dict()
        if set(current) != set(state):
            raise KeyError("checkpoint parameter names do not match the model")
        for (name, _), p in zip(current.items(), self.parameters()):
            if state[name].shape != p.shape:
                raise ValueError(f"{name}: shape {state[name].shape} != {p.shape}")
            p.data = np.array(state[name], dtype=np.float64)

    def save(self, path: str | Path, config: FairACConfig | None = None) -> None:
        meta = {
            "version": CHECKPOINT_VERSION,
            "in_dim": self.in_dim,
            "hidden": self.hidden,
            "topo_dim": self.topo_dim,
            "config": asdict(config) if config is not None else None,
        }
        np.savez(path, __meta__=np.array(json.dumps(meta)), **self.state_dict())

    @classmethod
    def load(cls, path: str | Path) -> tuple[FairACModel, FairACConfig | None]:
        with np.load(path) as z:
            meta = json.loads(str(z["__meta__"]))
            if meta["version"] != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta['version']}")
            state = {k: z[k] for k in z.files if k != "__meta__"}
        model = cls(meta["in_dim"], hidden=meta["hidden"], topo_dim=meta["topo_dim"])
        model.load_state_dict(state)
        cfg = FairACConfig(**meta["config"]) if meta["config"] else None
        return model, cfg


def encode(
    ae: AutoEncoder,
    X,
    training: bool = False,
    rng: np.random.Generator | None = None,
    p: float = 0.0,
) -> Tensor:
    X = ag.as_tensor(X)
    if X.shape[1] != ae.encoder.in_dim:
        raise ValueError(f"feature width {X.shape[1]} != encoder width {ae.encoder.in_dim}")
    h = ag.relu(ae.encoder(X))
    if training and p > 0:
        h = ag.dropout(h, p, rng)
    return h


def decode(ae: AutoEncoder, H: Tensor) -> Tensor:
    return ae.decoder(H)


# ---------------------------------------------------------------- losses


def _per_node_distance(a: Tensor, b, norm: str) -> Tensor:
    diff = ag.sub(a, b)
    if diff.shape[0] == 0:
        raise ValueError("loss over an empty node set")
    if norm == "euclidean":
        return ag.row_l2_norm(diff)
    if norm == "l1":
        return ag.sum(ag.absolute(diff), axis=1)
    raise ValueError(f"unknown norm {norm!r}")


def loss_ae(X_hat: Tensor, X, norm: str = "euclidean") -> Tensor:
    """Mean per-node reconstruction distance."""
    return ag.mean(_per_node_distance(X_hat, X, norm))


def loss_completion(H_hat: Tensor, H, norm: str = "euclidean") -> Tensor:
    """Mean per-node distance between completed and encoded embeddings."""
    return ag.mean(_per_node_distance(H_hat, H, norm))


def loss_sens(logits: Tensor, s) -> Tensor:
    s = np.asarray(s, dtype=np.float64).reshape(-1, 1)
    if s.shape[0] != logits.shape[0]:
        raise ValueError("logits and sensitive labels differ in length")
    return ag.bce_with_logits(logits, s)


def loss_topo(logits: Tensor, s, mode: str = "adversarial") -> Tensor:
    """Topological fairness loss on completed embeddings.

    ``adversarial`` returns the negated cross-entropy, so minimizing it pushes
    the classifier away from the true sensitive values. ``literal`` returns the
    plain cross-entropy.
    """
    bce = loss_sens(logits, s)
    if mode == "adversarial":
        return ag.mul(bce, -1.0)
    if mode == "literal":
        return bce
    raise ValueError(f"unknown topo loss mode {mode!r}")


def total_loss(l_ae, l_cs, l_c, l_t, beta: float):
    """(L_ae - beta * L_Cs) + L_C + beta * L_T."""
    return (l_ae - beta * l_cs) + l_c + beta * l_t


# ---------------------------------------------------------------- completion


@dataclass
class Completion:
    embeddings: Tensor  # one row per completed target
    targets: np.ndarray  # node ids of the completed targets
    skipped: np.ndarray  # targets with no usable neighbor
    weights: np.ndarray  # attention weight per (target, neighbor) edge
    edge_target: np.ndarray  # row of ``targets`` each weight belongs to
    edge_source: np.ndarray  # neighbor node id of each weight


def segment_softmax(scores: Tensor, segment: np.ndarray, n_segments: int) -> Tensor:
    """Softmax of a column of scores within each segment."""
    shift = np.full(n_segments, -np.inf)
    np.maximum.at(shift, segment, scores.data[:, 0])
    e = ag.exp(ag.sub(scores, shift[segment][:, None]))
    summer = _segment_matrix(segment, n_segments)
    denom = ag.spmm(summer, e)
    return ag.div(e, ag.take_rows(denom, segment))


def _segment_matrix(segment: np.ndarray, n_segments: int) -> sp.csr_matrix:
    return sp.csr_matrix(
        (np.ones(len(segment)), (segment, np.arange(len(segment)))),
        shape=(n_segments, len(segment)),
    )


def complete_nodes(
    att: AttentionCompleter,
    T,
    H: Tensor,
    g: Graph,
    targets,
    available: np.ndarray,
) -> Completion:
    """Complete the embeddings of ``targets`` from neighbors marked ``available``.

    ``T`` (n x 64) and ``H`` (n x hidden) are indexed by node id; only rows of
    available nodes of ``H`` are read. Targets without an available neighbor
    are returned in ``skipped``.
    """
    targets = np.asarray(targets, dtype=np.int64)
    available = np.asarray(available, dtype=bool)
    indptr, indices = g.csr()
    tgt_rows, src, done, skipped = [], [], [], []
    for u in targets:
        nb = indices[indptr[u] : indptr[u + 1]]
        nb = nb[available[nb]]
        if nb.size == 0:
            skipped.append(u)
            continue
        tgt_rows.append(np.full(nb.size, len(done)))
        src.append(nb)
        done.append(u)
    done = np.array(done, dtype=np.int64)
    skipped = np.array(skipped, dtype=np.int64)
    if done.size == 0:
        return Completion(
            Tensor(np.zeros((0, H.shape[1]))), done, skipped,
            np.zeros(0), np.zeros(0, np.int64), np.zeros(0, np.int64),
        )
    edge_target = np.concatenate(tgt_rows)
    edge_source = np.concatenate(src)

    P = att.transform(ag.as_tensor(T))
    pair = ag.concat([ag.take_rows(P, done[edge_target]), ag.take_rows(P, edge_source)], axis=1)
    scores = ag.leaky_relu(ag.matmul(pair, att.score), LEAKY_SLOPE)
    w = segment_softmax(scores, edge_target, done.size)
    messages = ag.mul(w, ag.take_rows(H, edge_source))
    out = ag.spmm(_segment_matrix(edge_target, done.size), messages)
    return Completion(out, done, skipped, w.data[:, 0].copy(), edge_target, edge_source)


def complete(att: AttentionCompleter, T, H: Tensor, g: Graph, u: int, available) -> Tensor:
    """Completed embedding row of a single node ``u``."""
    res = complete_nodes(att, T, H, g, [u], available)
    if res.targets.size == 0:
        raise ValueError(f"node {u} has no neighbor with attributes")
    return res.embeddings


# ---------------------------------------------------------------- training


@dataclass
class EpochStats:
    epoch: int
    loss_ae: float = float("nan")
    loss_cs: float = float("nan")
    loss_c: float = float("nan")
    loss_t: float = float("nan")
    skipped: int = 0


class FairACTrainer:
    """Training loop over the attribute-completion training nodes.

    Training runs on the subgraph induced by the nodes of ``split.ac_train``
    that have attributes. Three Adam states are kept: classifier,
    autoencoder and completer.
    """

    def __init__(
        self,
        model: FairACModel,
        g: Graph,
        T: np.ndarray,
        split: DataSplit,
        config: FairACConfig,
    ):
        cfg = config
        if len(split.ac_train) < cfg.min_ac_train:
            raise ValueError(
                f"AC training set has {len(split.ac_train)} nodes, fewer than the dataset "
                f"minimum of {cfg.min_ac_train}"
            )
        nodes = np.sort(split.ac_train[g.feature_present[split.ac_train]])
        if nodes.size == 0:
            raise ValueError("no AC training node has attributes")
        self.model, self.config = model, cfg
        self.nodes = nodes
        self.sub = induced_subgraph(g, nodes)
        self.X = Tensor(self.sub.features)
        self.s = self.sub.sensitive.astype(np.float64)
        self.T = Tensor(np.asarray(T, dtype=np.float64)[nodes])
        self.epoch = 0
        self.history: list[EpochStats] = []
        self.rng_plan = np.random.default_rng([cfg.seed, 1])
        self.rng_dropout = np.random.default_rng([cfg.seed, 2])
        opt = dict(lr=cfg.lr, weight_decay=cfg.weight_decay)
        self.opt_cls = Adam(model.classifier.parameters(), **opt)
        self.opt_ae = Adam(model.ae.parameters(), **opt)
        self.opt_att = Adam(model.completer.parameters(), **opt)
        self.opt_shared = Adam(model.ae.encoder.parameters(), **opt) if cfg.unfreeze_encoder else None

    def _encode(self) -> Tensor:
        cfg = self.config
        return encode(self.model.ae, self.X, True, self.rng_dropout, cfg.dropout)

    def _complete(self, H: Tensor, keep: np.ndarray, drop: np.ndarray) -> Completion:
        available = np.zeros(self.sub.n_nodes, dtype=bool)
        available[keep] = True
        return complete_nodes(self.model.completer, self.T, H, self.sub, drop, available)

    def pretrain_step(self) -> EpochStats:
        """Autoencoder and completer jointly on L_ae + L_C."""
        cfg, model = self.config, self.model
        self.epoch += 1
        stats = EpochStats(self.epoch)
        plan = sample_drop_plan(np.arange(self.sub.n_nodes), cfg.alpha, self.rng_plan)
        model.zero_grad()
        H = self._encode()
        loss = None
        if plan.keep.size:
            keep_H = ag.take_rows(H, plan.keep)
            loss = loss_ae(decode(model.ae, keep_H), self.X.data[plan.keep], cfg.norm)
            stats.loss_ae = loss.item()
        comp = self._complete(H, plan.keep, plan.drop) if plan.drop.size else None
        if comp is not None:
            stats.skipped = comp.skipped.size
            if comp.targets.size:
                l_c = loss_completion(comp.embeddings, ag.take_rows(H, comp.targets), cfg.norm)
                stats.loss_c = l_c.item()
                loss = l_c if loss is None else ag.add(loss, l_c)
        if loss is not None:
            ag.backward(loss)
            if plan.keep.size:
                self.opt_ae.step()
            if comp is not None and comp.targets.size:
                self.opt_att.step()
        self.history.append(stats)
        return stats

    def pretrain(self) -> None:
        for _ in range(self.config.pretrain_epochs):
            self.pretrain_step()

    def train_epoch(self) -> EpochStats:
        cfg, model = self.config, self.model
        self.epoch += 1
        stats = EpochStats(self.epoch)
        n = self.sub.n_nodes
        if n < cfg.min_sens_train:
            raise ValueError(
                f"{n} nodes with known sensitive attribute for classifier training, "
                f"fewer than the dataset minimum of {cfg.min_sens_train}"
            )

        # this epoch's keep/drop division of the attributed training nodes;
        # L_ae and L_Cs average over keep, L_C and L_T over drop
        plan = sample_drop_plan(np.arange(n), cfg.alpha, self.rng_plan)
        keep, drop = plan.keep, plan.drop

        if keep.size:
            # (1) sensitive classifier on current embeddings
            if cfg.adversary:
                model.zero_grad()
                with no_grad():
                    H = self._encode()
                l_cs = loss_sens(model.classifier(ag.take_rows(H, keep)), self.s[keep])
                ag.backward(l_cs)
                self.opt_cls.step()

            # (2) autoencoder against the classifier
            model.zero_grad()
            H_keep = ag.take_rows(self._encode(), keep)
            l_ae = loss_ae(decode(model.ae, H_keep), self.X.data[keep], cfg.norm)
            stats.loss_ae = l_ae.item()
            loss = l_ae
            if cfg.adversary:
                l_cs = loss_sens(model.classifier(H_keep), self.s[keep])
                stats.loss_cs = l_cs.item()
                loss = ag.sub(l_ae, ag.mul(l_cs, cfg.beta))
            ag.backward(loss)
            self.opt_ae.step()

        # (3)-(5) complete the dropped nodes from kept neighbors
        if drop.size and keep.size:
            model.zero_grad()
            if cfg.unfreeze_encoder:
                H = self._encode()
            else:
                with no_grad():
                    H = self._encode()
            comp = self._complete(H, keep, drop)
            stats.skipped = comp.skipped.size
            if comp.targets.size:
                loss = loss_completion(comp.embeddings, ag.take_rows(H, comp.targets), cfg.norm)
                stats.loss_c = loss.item()
                if cfg.adversary:
                    l_t = loss_topo(model.classifier(comp.embeddings), self.s[comp.targets], cfg.topo_loss)
                    stats.loss_t = l_t.item()
                    loss = ag.add(loss, ag.mul(l_t, cfg.beta))
                ag.backward(loss)
                self.opt_att.step()
                if self.opt_shared is not None:
                    self.opt_shared.step()
        self.history.append(stats)
        return stats

    def fit(self, on_eval: Callable[[int], None] | None = None) -> None:
        """Pretrain, then train up to ``config.epochs`` total epochs.

        ``on_eval(epoch)`` runs after each epoch listed by ``eval_epochs()``.
        """
        evals = set(self.config.eval_epochs())
        while self.epoch < self.config.epochs:
            if self.epoch < self.config.pretrain_epochs:
                self.pretrain_step()
            else:
                self.train_epoch()
            if on_eval is not None and self.epoch in evals:
                on_eval(self.epoch)


# ---------------------------------------------------------------- inference


@dataclass
class EmbeddingResult:
    embeddings: np.ndarray
    completed: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    unreachable: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    @property
    def n_unreachable(self) -> int:
        return int(self.unreachable.size)


def produce_embeddings(model: FairACModel, g: Graph, T) -> EmbeddingResult:
    """Embeddings for every node of ``g``.

    Nodes with attributes are encoded; the others are completed from
    neighbors with attributes. Nodes with no such neighbor get a zero row and
    are listed in ``unreachable``.
    """
    present = g.feature_present
    out = np.zeros((g.n_nodes, model.hidden))
    with no_grad():
        H = np.zeros((g.n_nodes, model.hidden))
        if present.any():
            H[present] = encode(model.ae, g.features[present]).data
        out[present] = H[present]
        missing = np.flatnonzero(~present)
        if missing.size == 0:
            return EmbeddingResult(out)
        comp = complete_nodes(model.completer, T, Tensor(H), g, missing, present)
        out[comp.targets] = comp.embeddings.data
    if comp.skipped.size:
        log.info("%d nodes without attributed neighbors received zero embeddings", comp.skipped.size)
    return EmbeddingResult(out, comp.targets, comp.skipped)
