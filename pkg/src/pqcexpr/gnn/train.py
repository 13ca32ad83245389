"""Optimizer, plateau scheduler, training loop and JSON checkpoints."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import CheckpointError, DatasetError
from ..graphenc import FeatureStats, apply_stats, fit_stats
from .layers import GraphBatch, huber_grad, huber_loss
from .model import ModelConfig, backward, forward, init_params, param_shapes, predict

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "pqcexpr.gnn"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-6
    epochs: int = 300
    batch_size: int = 1500
    huber_delta: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    plateau_factor: float = 0.1
    plateau_patience: int = 10
    min_lr: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0 or self.weight_decay < 0:
            raise ValueError("lr and weight_decay must be non-negative")
        if self.epochs < 1 or self.batch_size < 1 or self.plateau_patience < 0:
            raise ValueError("epochs and batch_size must be positive")
        if not 0 < self.plateau_factor < 1:
            raise ValueError("plateau_factor must lie in (0, 1)")
        if self.huber_delta <= 0 or self.eps <= 0:
            raise ValueError("huber_delta and eps must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")


# -- optimizer -------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, cfg: TrainConfig, lr: float | None = None) -> dict:
    """Bias-corrected Adam; weight decay enters the gradient as ``lambda * w``."""
    lr = cfg.lr if lr is None else lr
    state.t += 1
    c1 = 1 - cfg.beta1 ** state.t
    c2 = 1 - cfg.beta2 ** state.t
    out = {}
    for name, w in params.items():
        g = grads[name] + cfg.weight_decay * w
        m = state.m.get(name, 0.0) * cfg.beta1 + (1 - cfg.beta1) * g
        v = state.v.get(name, 0.0) * cfg.beta2 + (1 - cfg.beta2) * g * g
        state.m[name], state.v[name] = m, v
        out[name] = w - lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
    return out


class ReduceLROnPlateau:
    """Multiply the rate by ``factor`` once the monitored loss has not improved
    (relative threshold 1e-4) for more than ``patience`` epochs."""

    def __init__(self, lr: float, factor: float = 0.1, patience: int = 10,
                 min_lr: float = 1e-7, threshold: float = 1e-4):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.threshold = threshold
        self.best = math.inf
        self.bad_epochs = 0

    def step(self, metric: float) -> float:
        if metric < self.best * (1 - self.threshold):
            self.best = metric
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        if self.bad_epochs > self.patience:
            self.lr = max(self.lr * self.factor, self.min_lr)
            self.bad_epochs = 0
        return self.lr


# -- data plumbing ------------------------------------------------------------------


def make_batch(records, model_cfg: ModelConfig, with_labels: bool = True) -> GraphBatch:
    if not records:
        raise DatasetError("empty split")
    y = None
    if with_labels:
        if any(r.expr is None for r in records):
            raise DatasetError("record without expr label")
        y = [r.expr for r in records]
    return GraphBatch.build([r.nodes for r in records], [r.edges for r in records],
                            [r.global_features for r in records], y, model_cfg.reverse_edges)


@dataclass
class Model:
    """Parameters plus everything needed to apply them to raw graph records."""

    params: dict
    config: ModelConfig
    stats: FeatureStats

    def predict(self, records, batch_size: int = 4096) -> np.ndarray:
        norm = apply_stats(list(records), self.stats)
        out = [predict(self.params, make_batch(norm[i:i + batch_size], self.config, False), self.config)
               for i in range(0, len(norm), batch_size)]
        return np.concatenate(out) if out else np.zeros(0)


@dataclass
class TrainResult:
    model: Model
    metrics: list[dict]
    best_epoch: int
    best_val_loss: float


def rmse(pred, target) -> float:
    pred, target = np.asarray(pred, dtype=float), np.asarray(target, dtype=float)
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def train(train_records, val_records, cfg: TrainConfig | None = None,
          model_cfg: ModelConfig | None = None, *, checkpoint_path=None,
          metrics_path=None) -> TrainResult:
    """Mini-batch Huber regression with Adam and a plateau scheduler.

    Feature statistics come from ``train_records`` only.  The parameters with
    the lowest validation loss are kept (and written to ``checkpoint_path``
    each time they improve).
    """
    cfg = cfg or TrainConfig()
    model_cfg = model_cfg or ModelConfig()
    if not train_records or not val_records:
        raise DatasetError("train and validation splits must be non-empty")
    stats = fit_stats(train_records)
    train_norm = apply_stats(train_records, stats)
    val_batch = make_batch(apply_stats(val_records, stats), model_cfg)

    params = init_params(model_cfg, cfg.seed)
    state = AdamState()
    sched = ReduceLROnPlateau(cfg.lr, cfg.plateau_factor, cfg.plateau_patience, cfg.min_lr)
    rng = np.random.default_rng(cfg.seed)
    n = len(train_norm)
    whole = make_batch(train_norm, model_cfg) if cfg.batch_size >= n else None

    best = (math.inf, 0, params)
    metrics = []
    for epoch in range(1, cfg.epochs + 1):
        lr = sched.lr
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            # a single full batch only differs by row order, which the mean ignores
            batch = whole if whole is not None else make_batch([train_norm[i] for i in idx], model_cfg)
            pred, cache = forward(params, batch, model_cfg)
            total += huber_loss(pred, batch.y, cfg.huber_delta) * len(idx)
            grads = backward(params, batch, model_cfg, cache, huber_grad(pred, batch.y, cfg.huber_delta))
            params = adam_step(params, grads, state, cfg, lr)
        train_loss = total / n
        val_loss = huber_loss(predict(params, val_batch, model_cfg), val_batch.y, cfg.huber_delta)
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise FloatingPointError(f"non-finite loss at epoch {epoch}")
        metrics.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss, "lr": lr})
        if val_loss < best[0]:
            best = (val_loss, epoch, params)
            if checkpoint_path is not None:
                save_checkpoint(checkpoint_path, Model(params, model_cfg, stats), cfg,
                                {"epoch": epoch, "val_loss": val_loss})
        sched.step(val_loss)
        log.debug("epoch %d train %.6f val %.6f lr %.1e", epoch, train_loss, val_loss, lr)
    if metrics_path is not None:
        write_metrics(metrics_path, metrics)
    return TrainResult(Model(best[2], model_cfg, stats), metrics, best[1], best[0])


def write_metrics(path, metrics) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss", "lr"])
        for m in metrics:
            w.writerow([m["epoch"], repr(m["train_loss"]), repr(m["val_loss"]), repr(m["lr"])])


# -- checkpoints -----------------------------------------------------------------------


def save_checkpoint(path, model: Model, train_cfg: TrainConfig | None = None, info: dict | None = None) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_config": model.config.to_dict(),
        "train_config": asdict(train_cfg) if train_cfg else None,
        "stats": model.stats.to_dict(),
        "info": info or {},
        "tensors": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                    for k, v in model.params.items()},
    }
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(payload))
    tmp.replace(path)


def load_checkpoint(path, expect: ModelConfig | None = None) -> Model:
    """Load and validate; ``expect`` additionally pins the architecture."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if data.get("format") != CHECKPOINT_FORMAT or data.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint {data.get('format')} v{data.get('version')}")
    try:
        cfg = ModelConfig.from_dict(data["model_config"])
        stats = FeatureStats.from_dict(data["stats"])
        tensors = data["tensors"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from exc
    if expect is not None and expect != cfg:
        raise CheckpointError(f"checkpoint architecture {cfg} does not match {expect}")
    shapes = param_shapes(cfg)
    if set(tensors) != set(shapes):
        raise CheckpointError("checkpoint tensors do not match the architecture")
    params = {}
    for name, shape in shapes.items():
        t = tensors[name]
        if tuple(t["shape"]) != shape or len(t["data"]) != math.prod(shape):
            raise CheckpointError(f"tensor {name}: shape {t['shape']} != {list(shape)}")
        params[name] = np.asarray(t["data"], dtype=float).reshape(shape)
    if stats.node_mean.shape != (cfg.node_dim,) or stats.global_mean.shape != (cfg.global_dim,):
        raise CheckpointError("normalization statistics do not match the architecture")
    return Model(params, cfg, stats)


def evaluate(model: Model, records) -> dict:
    """RMSE overall and per qubit count."""
    pred = model.predict(records)
    y = np.array([r.expr for r in records], dtype=float)
    nq = np.array([r.n_qubits for r in records])
    per = {int(n): rmse(pred[nq == n], y[nq == n]) for n in np.unique(nq)}
    return {"rmse": rmse(pred, y), "per_qubit": per, "pred": pred, "target": y}

