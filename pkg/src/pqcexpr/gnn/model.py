"""Graph-transformer regressor: three attention convolutions, mean pooling,
a global-feature MLP and a fused regression head."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .layers import (
    GraphBatch,
    dense,
    dense_backward,
    global_mean_pool,
    global_mean_pool_backward,
    relu,
    relu_backward,
    transformer_conv,
    transformer_conv_backward,
)

CONV_KEYS = ("wq", "bq", "wk", "bk", "wv", "bv", "ws", "bs")


@dataclass(frozen=True)
class ModelConfig:
    node_dim: int = 23
    global_dim: int = 7
    heads: int = 4
    head_dim: int = 16
    n_conv: int = 3
    global_hidden: int = 64
    reg_hidden: tuple[int, int] = (64, 32)
    reverse_edges: bool = False

    def __post_init__(self):
        object.__setattr__(self, "reg_hidden", tuple(int(h) for h in self.reg_hidden))
        if min(self.node_dim, self.global_dim, self.heads, self.head_dim, self.n_conv,
               self.global_hidden, *self.reg_hidden) < 1:
            raise ValueError("all model sizes must be positive")

    @property
    def hidden(self) -> int:
        return self.heads * self.head_dim

    def to_dict(self) -> dict:
        d = asdict(self)
        d["reg_hidden"] = list(self.reg_hidden)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    shapes = {}
    d_in, h = cfg.node_dim, cfg.hidden
    for layer in range(1, cfg.n_conv + 1):
        for name in "qkvs":
            shapes[f"conv{layer}.w{name}"] = (d_in, h)
            shapes[f"conv{layer}.b{name}"] = (h,)
        d_in = h
    g = cfg.global_hidden
    for i, (a, b) in enumerate([(cfg.global_dim, g), (g, g), (g, g)], start=1):
        shapes[f"glob{i}.w"] = (a, b)
        shapes[f"glob{i}.b"] = (b,)
    r1, r2 = cfg.reg_hidden
    for i, (a, b) in enumerate([(h + g, r1), (r1, r2), (r2, 1)], start=1):
        shapes[f"reg{i}.w"] = (a, b)
        shapes[f"reg{i}.b"] = (b,)
    return shapes


def init_params(cfg: ModelConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if len(shape) == 2:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-limit, limit, size=shape)
        else:
            params[name] = np.zeros(shape)
    return params


def _conv_params(params, layer):
    return {k: params[f"conv{layer}.{k}"] for k in CONV_KEYS}


def forward(params: dict, batch: GraphBatch, cfg: ModelConfig):
    """Predictions ``(G,)`` and the cache needed by :func:`backward`."""
    h = batch.x
    convs = []
    for layer in range(1, cfg.n_conv + 1):
        z, c = transformer_conv(h, _conv_params(params, layer), batch, cfg.heads, cfg.head_dim)
        convs.append((z, c))
        h = relu(z) if layer < cfg.n_conv else z
    pooled = global_mean_pool(h, batch.graph_ptr)

    glob_in = [batch.globals_]
    g = batch.globals_
    for i in (1, 2, 3):
        g = dense(g, params[f"glob{i}.w"], params[f"glob{i}.b"])
        glob_in.append(g)
        if i < 3:
            g = relu(g)
    fused = np.concatenate([pooled, g], axis=1)

    reg_in = [fused]
    r = fused
    for i in (1, 2, 3):
        r = dense(r, params[f"reg{i}.w"], params[f"reg{i}.b"])
        reg_in.append(r)
        if i < 3:
            r = relu(r)
    cache = (convs, glob_in, reg_in)
    return r[:, 0], cache


def backward(params: dict, batch: GraphBatch, cfg: ModelConfig, cache, dpred: np.ndarray) -> dict:
    """Gradients of ``sum(dpred * pred)`` with respect to every parameter."""
    convs, glob_in, reg_in = cache
    grads = {}

    d = np.asarray(dpred, dtype=float).reshape(-1, 1)
    for i in (3, 2, 1):
        if i < 3:
            d = relu_backward(d, reg_in[i])
        x = relu(reg_in[i - 1]) if i > 1 else reg_in[0]
        d, grads[f"reg{i}.w"], grads[f"reg{i}.b"] = dense_backward(d, x, params[f"reg{i}.w"])
    hidden = cfg.hidden
    d_pool, d_glob = d[:, :hidden], d[:, hidden:]

    d = d_glob
    for i in (3, 2, 1):
        if i < 3:
            d = relu_backward(d, glob_in[i])
        x = relu(glob_in[i - 1]) if i > 1 else glob_in[0]
        d, grads[f"glob{i}.w"], grads[f"glob{i}.b"] = dense_backward(d, x, params[f"glob{i}.w"])

    d = global_mean_pool_backward(d_pool, batch.graph_ptr)
    for layer in range(cfg.n_conv, 0, -1):
        z, c = convs[layer - 1]
        if layer < cfg.n_conv:
            d = relu_backward(d, z)
        d, g = transformer_conv_backward(d, _conv_params(params, layer), c, batch)
        for k, v in g.items():
            grads[f"conv{layer}.{k}"] = v
    return grads


def predict(params: dict, batch: GraphBatch, cfg: ModelConfig) -> np.ndarray:
    return forward(params, batch, cfg)[0]
