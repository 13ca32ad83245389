"""Dense, attention-convolution and pooling layers with hand-written backward passes."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass
class GraphBatch:
    """Several graphs packed into one disjoint union.

    ``src``/``dst`` include one self-loop per node and are sorted by ``dst``
    (stable), so the in-neighbourhood of node ``i`` is the contiguous slice
    ``seg[i]:seg[i+1]``.  ``graph_ptr`` delimits each graph's node rows.
    """

    x: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    seg: np.ndarray
    graph_ptr: np.ndarray
    globals_: np.ndarray
    y: np.ndarray | None = None
    _scatter: sp.csr_matrix | None = None
    _gather: sp.csr_matrix | None = None

    @classmethod
    def build(cls, xs, edge_lists, globals_, y=None, reverse_edges: bool = False) -> "GraphBatch":
        if not xs:
            raise ValueError("empty batch")
        sizes = np.array([len(x) for x in xs])
        if np.any(sizes == 0):
            raise ValueError("graph with no nodes")
        ptr = np.concatenate([[0], np.cumsum(sizes)])
        srcs, dsts = [], []
        for off, e in zip(ptr[:-1], edge_lists):
            e = np.asarray(e, dtype=np.int64).reshape(-1, 2)
            srcs.append(e[:, 0] + off)
            dsts.append(e[:, 1] + off)
            if reverse_edges:
                srcs.append(e[:, 1] + off)
                dsts.append(e[:, 0] + off)
        v = int(ptr[-1])
        loops = np.arange(v)
        src = np.concatenate(srcs + [loops])
        dst = np.concatenate(dsts + [loops])
        order = np.argsort(dst, kind="stable")
        src, dst = src[order], dst[order]
        seg = np.searchsorted(dst, np.arange(v + 1))
        return cls(np.concatenate(xs).astype(float), src, dst, seg, ptr,
                   np.asarray(globals_, dtype=float).reshape(len(xs), -1),
                   None if y is None else np.asarray(y, dtype=float))

    @property
    def n_nodes(self) -> int:
        return len(self.x)

    @property
    def n_graphs(self) -> int:
        return len(self.graph_ptr) - 1

    @property
    def sum_dst(self) -> sp.csr_matrix:
        """``V x E`` 0/1 matrix summing edge rows into their destination node."""
        if self._gather is None:
            e = len(self.dst)
            self._gather = sp.csr_matrix((np.ones(e), np.arange(e), self.seg), shape=(self.n_nodes, e))
        return self._gather

    @property
    def scatter_src(self) -> sp.csr_matrix:
        """``V x E`` 0/1 matrix summing edge rows into their source node."""
        if self._scatter is None:
            e = len(self.src)
            self._scatter = sp.csr_matrix((np.ones(e), (self.src, np.arange(e))),
                                          shape=(self.n_nodes, e))
        return self._scatter


def segment_sum(values: np.ndarray, seg: np.ndarray) -> np.ndarray:
    """Sum of contiguous row segments; every segment must be non-empty."""
    return np.add.reduceat(values, seg[:-1], axis=0)


def _edge_sum(mat: sp.csr_matrix, values: np.ndarray) -> np.ndarray:
    """``mat @ values`` for an ``(E, ...)`` array, keeping trailing dims."""
    flat = values.reshape(len(values), -1)
    return (mat @ flat).reshape((mat.shape[0],) + values.shape[1:])


# -- dense -----------------------------------------------------------------------


def dense(x, w, b):
    return x @ w + b


def dense_backward(dy, x, w):
    """Returns ``(dx, dw, db)``."""
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(dy, x):
    return dy * (x > 0)


# -- attention convolution --------------------------------------------------------


def transformer_conv(x: np.ndarray, p: dict, batch: GraphBatch, heads: int, head_dim: int):
    """Multi-head dot-product attention over in-edges plus self, with a skip term.

    ``p`` holds ``wq, bq, wk, bk, wv, bv, ws, bs``.  Returns ``(out, cache)``.
    """
    if x.shape[1] != p["wq"].shape[0]:
        raise ValueError(f"input width {x.shape[1]} != layer width {p['wq'].shape[0]}")
    v = len(x)
    src, dst, seg = batch.src, batch.dst, batch.seg
    w = np.concatenate([p["wq"], p["wk"], p["wv"], p["ws"]], axis=1)
    b = np.concatenate([p["bq"], p["bk"], p["bv"], p["bs"]])
    q, k, val, skip = np.split(dense(x, w, b), 4, axis=1)
    q = q.reshape(v, heads, head_dim)
    k = k.reshape(v, heads, head_dim)
    val = val.reshape(v, heads, head_dim)
    scale = 1.0 / math.sqrt(head_dim)
    scores = np.einsum("ehd,ehd->eh", q[dst], k[src]) * scale
    peak = np.maximum.reduceat(scores, seg[:-1], axis=0)
    ex = np.exp(scores - peak[dst])
    alpha = ex / _edge_sum(batch.sum_dst, ex)[dst]
    agg = _edge_sum(batch.sum_dst, alpha[:, :, None] * val[src]).reshape(v, heads * head_dim)
    out = agg + skip
    cache = (x, q, k, val, alpha, scale)
    return out, cache


def transformer_conv_backward(dout: np.ndarray, p: dict, cache, batch: GraphBatch):
    """Returns ``(dx, grads)`` with grads keyed like ``p``."""
    x, q, k, val, alpha, scale = cache
    v, heads, head_dim = q.shape
    src, dst = batch.src, batch.dst
    scatter, gather = batch.scatter_src, batch.sum_dst
    e = len(src)

    d_msg = dout.reshape(v, heads, head_dim)[dst]
    d_alpha = np.einsum("ehd,ehd->eh", d_msg, val[src])
    d_val = scatter @ (alpha[:, :, None] * d_msg).reshape(e, heads * head_dim)
    # softmax backward within each destination segment
    d_scores = alpha * (d_alpha - _edge_sum(gather, alpha * d_alpha)[dst]) * scale
    d_q = _edge_sum(gather, d_scores[:, :, None] * k[src]).reshape(v, heads * head_dim)
    d_k = scatter @ (d_scores[:, :, None] * q[dst]).reshape(e, heads * head_dim)

    w = np.concatenate([p["wq"], p["wk"], p["wv"], p["ws"]], axis=1)
    dx, dw, db = dense_backward(np.concatenate([d_q, d_k, d_val, dout], axis=1), x, w)
    grads = {}
    for name, gw, gb in zip("qkvs", np.split(dw, 4, axis=1), np.split(db, 4)):
        grads["w" + name], grads["b" + name] = gw, gb
    return dx, grads


def attention_weights(x: np.ndarray, p: dict, batch: GraphBatch, heads: int, head_dim: int):
    """Per-edge attention coefficients ``(E, heads)`` aligned with ``batch.src``/``dst``."""
    return transformer_conv(x, p, batch, heads, head_dim)[1][4]


# -- pooling ------------------------------------------------------------------------


def global_mean_pool(h: np.ndarray, graph_ptr: np.ndarray) -> np.ndarray:
    counts = np.diff(graph_ptr)
    if np.any(counts == 0):
        raise ValueError("cannot pool an empty graph")
    return segment_sum(h, graph_ptr) / counts[:, None]


def global_mean_pool_backward(dpool: np.ndarray, graph_ptr: np.ndarray) -> np.ndarray:
    counts = np.diff(graph_ptr)
    return np.repeat(dpool / counts[:, None], counts, axis=0)


# -- loss -----------------------------------------------------------------------------


def huber_loss(pred, target, delta: float = 1.0) -> float:
    r = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    if r.size == 0:
        raise ValueError("empty batch")
    a = np.abs(r)
    return float(np.mean(np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))))


def huber_grad(pred, target, delta: float = 1.0) -> np.ndarray:
    r = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    return np.clip(r, -delta, delta) / r.size
