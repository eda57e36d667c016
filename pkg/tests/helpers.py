"""Independent oracles shared by the test modules.

Nothing here imports the code under test except for the public types needed
to drive it. The metric oracles are pairwise enumerations; the gradient
oracle is central finite differences.
"""

from __future__ import annotations

from itertools import combinations
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from fairac import autograd as ag
from fairac.autograd import Tensor

# ---------------------------------------------------------------- gradients

FD_EPS = 1e-6


def numeric_grad(f: Callable[[], Tensor], t: Tensor, eps: float = FD_EPS) -> np.ndarray:
    grad = np.zeros_like(t.data)
    it = np.nditer(t.data, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = t.data[i]
        t.data[i] = old + eps
        up = f().item()
        t.data[i] = old - eps
        down = f().item()
        t.data[i] = old
        grad[i] = (up - down) / (2 * eps)
    return grad


def rel_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-5) -> float:
    """||a - b|| / max(||a||, ||b||, floor).

    The floor keeps gradients that are zero up to round-off (finite
    differences leave ~1e-10 of noise) from reading as a 100% error.
    """
    scale = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / scale)


def grad_errors(f: Callable[[], Tensor], inputs: Sequence[Tensor]) -> list[float]:
    """Relative error between backward() and finite differences per input."""
    for t in inputs:
        t.grad = None
    ag.backward(f())
    out = []
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        out.append(rel_error(analytic, numeric_grad(f, t)))
    return out


# ---------------------------------------------------------------- metrics


def brute_accuracy(preds, labels) -> float:
    hits = sum(1 for p, y in zip(preds, labels) if p == y)
    return hits / len(labels)


def brute_auc(scores, labels) -> float:
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else (0.5 if a == b else 0.0)
    return total / (len(pos) * len(neg))


def _rate(values) -> float:
    values = list(values)
    return sum(1 for v in values if v == 1) / len(values)


def brute_dsp(preds, sens) -> float:
    g0 = [p for p, s in zip(preds, sens) if s == 0]
    g1 = [p for p, s in zip(preds, sens) if s == 1]
    return abs(_rate(g0) - _rate(g1))


def brute_deo(preds, sens, labels) -> float:
    g0 = [p for p, s, y in zip(preds, sens, labels) if s == 0 and y == 1]
    g1 = [p for p, s, y in zip(preds, sens, labels) if s == 1 and y == 1]
    return abs(_rate(g0) - _rate(g1))


def brute_consistency(preds, labels, S: np.ndarray, mode: str = "label_pair") -> float:
    n = len(preds)
    num = den = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            left = labels[i] if mode == "label_pair" else preds[i]
            num += abs(left - preds[j]) * S[i, j]
            den += S[i, j]
    return 1.0 - num / den


def brute_topk_cosine(x: np.ndarray, k: int) -> np.ndarray:
    n = len(x)
    S = np.zeros((n, n))
    for i in range(n):
        sims = []
        for j in range(n):
            if j == i:
                continue
            ni, nj = np.linalg.norm(x[i]), np.linalg.norm(x[j])
            c = 0.0 if ni == 0 or nj == 0 else float(x[i] @ x[j] / (ni * nj))
            sims.append((-c, j, c))
        sims.sort()
        for _, j, c in sims[:k]:
            S[i, j] = max(c, 0.0)
    return np.maximum(S, S.T)


def brute_pairs_mean_cos(E: np.ndarray, pairs) -> float:
    vals = []
    for i, j in pairs:
        vals.append(E[i] @ E[j] / (np.linalg.norm(E[i]) * np.linalg.norm(E[j])))
    return float(np.mean(vals))


def within_and_cross(groups: Sequence[Sequence[int]]):
    within = [p for g in groups for p in combinations(g, 2)]
    cross = [(a, b) for gi, gj in combinations(groups, 2) for a in gi for b in gj]
    return within, cross


# ---------------------------------------------------------------- data


def write_toy_dataset(d: Path, name: str = "toy", n: int = 24, seed: int = 0,
                      sensitive: str = "binary") -> Path:
    """Small CSV/edge/cfg triple with non-contiguous ids and a few quirks."""
    rng = np.random.default_rng(seed)
    d.mkdir(parents=True, exist_ok=True)
    ids = 100 + 7 * np.arange(n)
    if sensitive == "age":
        sens = rng.integers(15, 30, n)
        sens[0], sens[1] = 18, 25
    else:
        sens = np.arange(n) % 2
    labels = rng.integers(0, 2, n)
    labels[0], labels[1] = 0, 1
    labels[2] = -1  # unlabeled
    f = rng.normal(size=(n, 3))
    lines = ["user_id,a,b,c,sens,lab"]
    for i in range(n):
        lines.append(f"{ids[i]},{f[i,0]:.6f},{f[i,1]:.6f},{f[i,2]:.6f},{sens[i]},{labels[i]}")
    (d / f"{name}.csv").write_text("\n".join(lines) + "\n")
    edges = [(ids[i], ids[(i + 1) % n]) for i in range(n)]
    edges += [(ids[i], ids[(i + 5) % n]) for i in range(0, n, 3)]
    edges.append((ids[3], ids[3]))  # self-loop, dropped on load
    edges.append((ids[4], ids[5]))  # duplicate of the ring edge
    (d / f"{name}_edges.txt").write_text("\n".join(f"{a} {b}" for a, b in edges) + "\n")
    cfg = d / f"{name}.cfg"
    cfg.write_text(
        f"name = {name}\nnode_file = {name}.csv\nedge_file = {name}_edges.txt\n"
        "id_column = user_id\nsensitive_column = sens\nlabel_column = lab\n"
        "min_ac_train = 1\nmin_sens_train = 1\n"
    )
    return cfg


def two_cliques(size: int = 5):
    from fairac.graph import Graph

    a = list(range(size))
    b = list(range(size, 2 * size))
    edges = [p for p in combinations(a, 2)] + [p for p in combinations(b, 2)]
    n = 2 * size
    g = Graph(
        n_nodes=n,
        edges=np.array(edges),
        features=np.zeros((n, 1)),
        feature_present=np.ones(n, dtype=bool),
        sensitive=np.zeros(n, dtype=np.int64),
        labels=np.zeros(n, dtype=np.int64),
        name="two-cliques",
    )
    return g, a, b


# ---------------------------------------------------------------- BaseAC reference


def reference_base_ac(model, g, T, split, cfg, epochs: int) -> list[dict]:
    """Attribute completion trained without any adversarial code.

    Mirrors the training order (pretraining on L_ae + L_C, then an
    autoencoder step and a completer step per epoch) with the classifier,
    the sensitive loss and the topological loss removed. Returns the
    parameters after every epoch.
    """
    from fairac.autograd import Adam, no_grad
    from fairac.graph import induced_subgraph, sample_drop_plan
    from fairac.model import complete_nodes, decode, encode, loss_ae, loss_completion

    nodes = np.sort(split.ac_train[g.feature_present[split.ac_train]])
    sub = induced_subgraph(g, nodes)
    X = Tensor(sub.features)
    Tt = Tensor(np.asarray(T)[nodes])
    rng_plan = np.random.default_rng([cfg.seed, 1])
    rng_drop = np.random.default_rng([cfg.seed, 2])
    opt_ae = Adam(model.ae.parameters(), cfg.lr, cfg.weight_decay)
    opt_att = Adam(model.completer.parameters(), cfg.lr, cfg.weight_decay)
    n = sub.n_nodes
    trace = []

    def complete(H, plan):
        avail = np.zeros(n, dtype=bool)
        avail[plan.keep] = True
        return complete_nodes(model.completer, Tt, H, sub, plan.drop, avail)

    for epoch in range(1, epochs + 1):
        model.zero_grad()
        if epoch <= cfg.pretrain_epochs:
            plan = sample_drop_plan(np.arange(n), cfg.alpha, rng_plan)
            H = encode(model.ae, X, True, rng_drop, cfg.dropout)
            loss = loss_ae(decode(model.ae, ag.take_rows(H, plan.keep)), X.data[plan.keep], cfg.norm)
            c = complete(H, plan)
            loss = ag.add(loss, loss_completion(c.embeddings, ag.take_rows(H, c.targets), cfg.norm))
            ag.backward(loss)
            opt_ae.step()
            opt_att.step()
        else:
            plan = sample_drop_plan(np.arange(n), cfg.alpha, rng_plan)
            H = ag.take_rows(encode(model.ae, X, True, rng_drop, cfg.dropout), plan.keep)
            ag.backward(loss_ae(decode(model.ae, H), X.data[plan.keep], cfg.norm))
            opt_ae.step()
            model.zero_grad()
            with no_grad():
                H = encode(model.ae, X, True, rng_drop, cfg.dropout)
            c = complete(H, plan)
            ag.backward(loss_completion(c.embeddings, ag.take_rows(H, c.targets), cfg.norm))
            opt_att.step()
        trace.append(model.state_dict())
    return trace
