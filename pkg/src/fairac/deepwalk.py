"""DeepWalk: truncated uniform random walks + skip-gram with negative sampling."""

from __future__ import annotations

import hashlib
import logging
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .graph import Graph

log = logging.getLogger(__name__)

EMBED_DIM = 64
WALKS_PER_NODE = 10
WALK_LENGTH = 100
WINDOW = 5
NEGATIVES = 5
LEARNING_RATE = 0.05


def generate_walks(
    g: Graph,
    walks_per_node: int = WALKS_PER_NODE,
    length: int = WALK_LENGTH,
    rng: np.random.Generator | None = None,
) -> list[np.ndarray]:
    """``walks_per_node`` passes; each pass starts one walk at every node in a
    shuffled order. Walks from isolated nodes have length 1."""
    if length < 1:
        raise ValueError("walk length must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    indptr, indices = g.csr()
    deg = np.diff(indptr)
    walks: list[np.ndarray] = []
    for _ in range(walks_per_node):
        starts = rng.permutation(g.n_nodes)
        paths = np.empty((len(starts), length), dtype=np.int64)
        paths[:, 0] = starts
        cur = starts
        moving = deg[starts] > 0
        for step in range(1, length):
            r = rng.random(len(cur))
            if len(indices):
                pos = indptr[cur] + (r * np.maximum(deg[cur], 1)).astype(np.int64)
                cur = np.where(moving, indices[np.minimum(pos, len(indices) - 1)], cur)
            paths[:, step] = cur
        for row, mv in zip(paths, moving):
            walks.append(row if mv else row[:1])
    return walks


def _pairs(corpus: list[np.ndarray], window: int) -> tuple[np.ndarray, np.ndarray]:
    centers, contexts = [], []
    for walk in corpus:
        for off in range(1, min(window, len(walk) - 1) + 1):
            centers += [walk[:-off], walk[off:]]
            contexts += [walk[off:], walk[:-off]]
    if not centers:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    return np.concatenate(centers), np.concatenate(contexts)


def _scatter_mean_add(target: np.ndarray, rows: np.ndarray, values: np.ndarray) -> None:
    """Add to each target row the mean of the updates aimed at it.

    Averaging keeps a node that occurs many times in one batch (small graphs)
    from taking a step many times larger than a sequential update would.
    """
    m = sp.csr_matrix(
        (np.ones(len(rows)), (rows, np.arange(len(rows)))), shape=(target.shape[0], len(rows))
    )
    counts = np.asarray(m.sum(axis=1)).ravel()
    target += (m @ values) / np.maximum(counts, 1.0)[:, None]


def unigram_noise(corpus: list[np.ndarray], n_nodes: int, power: float = 0.75) -> np.ndarray:
    """Negative-sampling distribution: corpus frequency to the given power."""
    counts = np.bincount(np.concatenate(corpus), minlength=n_nodes).astype(np.float64)
    noise = counts**power
    return noise / noise.sum()


def train_skipgram(
    corpus: list[np.ndarray],
    n_nodes: int | None = None,
    dim: int = EMBED_DIM,
    window: int = WINDOW,
    negatives: int = NEGATIVES,
    lr: float = LEARNING_RATE,
    epochs: int = 1,
    batch_size: int | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Skip-gram with negative sampling, trained by mini-batch SGD.

    Every (center, context) pair within ``window`` positions is visited once
    per epoch in shuffled order; the learning rate decays linearly towards
    ``lr * 1e-4``. The default batch size grows with the node count (64 to
    1024) so that few nodes repeat within a batch. Negatives come from the corpus unigram distribution raised
    to the 3/4 power. Returns the input-side embedding matrix.
    """
    if dim <= 0:
        raise ValueError("embedding dimension must be positive")
    if not corpus:
        raise ValueError("empty walk corpus")
    rng = np.random.default_rng(0) if rng is None else rng
    if n_nodes is None:
        n_nodes = int(max(w.max() for w in corpus)) + 1

    w_in = (rng.random((n_nodes, dim)) - 0.5) / dim
    w_out = np.zeros((n_nodes, dim))

    cdf = np.cumsum(unigram_noise(corpus, n_nodes))

    if batch_size is None:
        batch_size = int(np.clip(n_nodes, 64, 1024))
    centers, contexts = _pairs(corpus, window)
    total = len(centers) * epochs
    if total == 0:
        return w_in
    done = 0
    for _ in range(epochs):
        order = rng.permutation(len(centers))
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            c, o = centers[idx], contexts[idx]
            neg = np.minimum(np.searchsorted(cdf, rng.random((len(idx), negatives))), n_nodes - 1)
            alpha = lr * max(1e-4, 1.0 - done / total)
            done += len(idx)

            vc = w_in[c]
            vo = w_out[o]
            vn = w_out[neg]
            g_pos = expit((vc * vo).sum(axis=1)) - 1.0
            g_neg = expit(np.einsum("bd,bkd->bk", vc, vn))
            grad_c = g_pos[:, None] * vo + np.einsum("bk,bkd->bd", g_neg, vn)
            grad_o = g_pos[:, None] * vc
            grad_n = g_neg[:, :, None] * vc[:, None, :]

            # one scatter so positive and negative updates keep their 1:k ratio
            rows = np.concatenate([o, neg.ravel()])
            _scatter_mean_add(w_out, rows, -alpha * np.concatenate([grad_o, grad_n.reshape(-1, dim)]))
            _scatter_mean_add(w_in, c, -alpha * grad_c)
    return w_in


def deepwalk(
    g: Graph,
    seed: int,
    dim: int = EMBED_DIM,
    walks_per_node: int = WALKS_PER_NODE,
    length: int = WALK_LENGTH,
    window: int = WINDOW,
    negatives: int = NEGATIVES,
    lr: float = LEARNING_RATE,
) -> np.ndarray:
    rng = np.random.default_rng(seed)
    corpus = generate_walks(g, walks_per_node, length, rng)
    return train_skipgram(corpus, g.n_nodes, dim, window, negatives, lr, rng=rng)


def graph_fingerprint(g: Graph) -> str:
    h = hashlib.sha1()
    h.update(np.int64(g.n_nodes).tobytes())
    h.update(g.edges.tobytes())
    return h.hexdigest()[:12]


def cached_deepwalk(g: Graph, seed: int, cache_dir: str | Path | None, **kwargs) -> np.ndarray:
    """DeepWalk embeddings, stored as ``<name>_seed<seed>_<fingerprint>.npy``.

    The fingerprint hashes the node count and edge list so a changed graph
    never reuses a stale file. ``cache_dir=None`` disables caching.
    """
    if cache_dir is None:
        return deepwalk(g, seed, **kwargs)
    extra = "".join(f"_{k}{v}" for k, v in sorted(kwargs.items()))
    path = Path(cache_dir) / f"{g.name or 'graph'}_seed{seed}{extra}_{graph_fingerprint(g)}.npy"
    if path.exists():
        log.info("loading cached DeepWalk embedding %s", path)
        return np.load(path)
    emb = deepwalk(g, seed, **kwargs)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path, emb)
    return emb
