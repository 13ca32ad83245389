import csv
import math

import numpy as np
import pytest

from helpers import fd_max_error, relabel, tiny_model_case
from pqcexpr.errors import CheckpointError, DatasetError
from pqcexpr.gnn import (
    AdamState,
    GraphBatch,
    ModelConfig,
    ReduceLROnPlateau,
    TrainConfig,
    adam_step,
    backward,
    evaluate,
    forward,
    global_mean_pool,
    huber_grad,
    huber_loss,
    init_params,
    load_checkpoint,
    param_shapes,
    predict,
    rmse,
    save_checkpoint,
    train,
    transformer_conv,
)
from pqcexpr.gnn.layers import attention_weights
from pqcexpr.graphenc import encode_circuit
from pqcexpr.pqcgen import GenConfig, random_pqc


def _conv_params(rng, d_in, heads, head_dim):
    h = heads * head_dim
    p = {}
    for name in "qkvs":
        p["w" + name] = rng.normal(size=(d_in, h))
        p["b" + name] = rng.normal(size=h)
    return p


def _random_graph(rng, v, d=5):
    e = [(int(rng.integers(0, i)), i) for i in range(1, v) for _ in range(int(rng.integers(1, 3)))]
    return rng.normal(size=(v, d)), np.array(e, dtype=np.int64).reshape(-1, 2)


def test_attention_rows_sum_to_one(rng):
    x, e = _random_graph(rng, 9)
    b = GraphBatch.build([x], [e], np.zeros((1, 1)))
    alpha = attention_weights(x, _conv_params(rng, 5, 3, 4), b, 3, 4)
    sums = np.zeros((9, 3))
    np.add.at(sums, b.dst, alpha)
    assert np.max(np.abs(sums - 1)) < 1e-12


def test_isolated_node_with_zero_value_weights(rng):
    x = rng.normal(size=(1, 5))
    p = _conv_params(rng, 5, 2, 3)
    p["wv"][:] = 0
    p["bv"][:] = 0
    b = GraphBatch.build([x], [np.zeros((0, 2))], np.zeros((1, 1)))
    out, _ = transformer_conv(x, p, b, 2, 3)
    assert np.allclose(out, x @ p["ws"] + p["bs"], atol=1e-14)


def test_conv_shape_mismatch(rng):
    x, e = _random_graph(rng, 3, d=4)
    b = GraphBatch.build([x], [e], np.zeros((1, 1)))
    with pytest.raises(ValueError):
        transformer_conv(x, _conv_params(rng, 5, 2, 3), b, 2, 3)


def test_conv_permutation_equivariance(rng):
    x, e = _random_graph(rng, 8)
    p = _conv_params(rng, 5, 2, 4)
    perm = rng.permutation(8)
    px, pe = relabel(x, e, perm)
    out, _ = transformer_conv(x, p, GraphBatch.build([x], [e], np.zeros((1, 1))), 2, 4)
    pout, _ = transformer_conv(px, p, GraphBatch.build([px], [pe], np.zeros((1, 1))), 2, 4)
    assert np.max(np.abs(pout[perm] - out)) < 1e-9


def test_pooling_examples():
    assert np.array_equal(global_mean_pool(np.tile([1.0, 2.0], (4, 1)), np.array([0, 4])), [[1.0, 2.0]])
    assert np.array_equal(global_mean_pool(np.array([[0.0, 2.0], [2.0, 0.0]]), np.array([0, 2])), [[1.0, 1.0]])
    with pytest.raises(ValueError):
        global_mean_pool(np.zeros((2, 2)), np.array([0, 2, 2]))


def test_huber_examples():
    assert huber_loss([0.0], [0.0]) == 0.0
    assert huber_loss([0.5], [0.0]) == pytest.approx(0.125)
    assert huber_loss([2.0], [0.0]) == pytest.approx(1.5)
    assert np.allclose(huber_grad([2.0, -0.3], [0.0, 0.0]), [0.5, -0.15])


def _model_case(rng, n_graphs=4, cfg=None):
    cfg = cfg or ModelConfig(node_dim=5, global_dim=3, heads=2, head_dim=4, global_hidden=8, reg_hidden=(8, 4))
    graphs = [_random_graph(rng, int(rng.integers(1, 8))) for _ in range(n_graphs)]
    glob = rng.normal(size=(n_graphs, 3))
    return cfg, graphs, glob


def test_model_shapes_match_config():
    shapes = param_shapes(ModelConfig())
    assert shapes["conv1.wq"] == (23, 64) and shapes["conv3.ws"] == (64, 64)
    assert [shapes[f"glob{i}.w"] for i in (1, 2, 3)] == [(7, 64), (64, 64), (64, 64)]
    assert [shapes[f"reg{i}.w"] for i in (1, 2, 3)] == [(128, 64), (64, 32), (32, 1)]


def test_prediction_invariant_to_relabeling(rng):
    cfg, graphs, glob = _model_case(rng)
    params = init_params(cfg, 3)
    base = predict(params, GraphBatch.build([g[0] for g in graphs], [g[1] for g in graphs], glob), cfg)
    relabeled = [relabel(x, e, rng.permutation(len(x))) for x, e in graphs]
    moved = predict(params, GraphBatch.build([g[0] for g in relabeled], [g[1] for g in relabeled], glob), cfg)
    assert np.all(np.isfinite(base))
    assert np.max(np.abs(base - moved)) < 1e-9


def test_identical_graphs_identical_predictions(rng):
    cfg, graphs, _ = _model_case(rng, 1)
    g = graphs[0]
    pred = predict(init_params(cfg), GraphBatch.build([g[0]] * 3, [g[1]] * 3, np.ones((3, 3))), cfg)
    assert pred[0] == pred[1] == pred[2]


@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_finite_differences(seed):
    assert fd_max_error(*tiny_model_case(seed)) < 1e-4


def test_key_bias_gradient_vanishes():
    # softmax over a segment is invariant to a shared shift of the key bias
    cfg, batch, params = tiny_model_case(6)
    pred, cache = forward(params, batch, cfg)
    grads = backward(params, batch, cfg, cache, huber_grad(pred, batch.y))
    for layer in range(1, cfg.n_conv + 1):
        assert np.max(np.abs(grads[f"conv{layer}.bk"])) < 1e-12


def test_zero_loss_head_gradients(rng):
    cfg, graphs, glob = _model_case(rng)
    params = init_params(cfg)
    params["reg3.w"][:] = 0
    params["reg3.b"][:] = 0.7
    b = GraphBatch.build([g[0] for g in graphs], [g[1] for g in graphs], glob, y=np.full(4, 0.7))
    pred, cache = forward(params, b, cfg)
    grads = backward(params, b, cfg, cache, huber_grad(pred, b.y))
    for name in ("reg1.w", "reg1.b", "reg2.w", "reg2.b", "reg3.w", "reg3.b"):
        assert np.all(grads[name] == 0)


def test_adam_examples():
    cfg = TrainConfig(lr=0.01, weight_decay=0.0)
    w = {"w": np.array([0.3, -1.2])}
    assert np.array_equal(adam_step(w, {"w": np.zeros(2)}, AdamState(), cfg)["w"], w["w"])
    out = adam_step({"w": np.array([0.0])}, {"w": np.array([1.0])}, AdamState(), cfg)
    assert out["w"][0] == pytest.approx(-0.01, rel=1e-6)
    decay = TrainConfig(lr=0.01, weight_decay=0.1)
    shrunk = adam_step({"w": np.array([0.5, -0.5])}, {"w": np.zeros(2)}, AdamState(), decay)
    assert np.all(np.abs(shrunk["w"]) < 0.5)


def test_weight_decay_enters_gradient_as_lambda_w():
    # with beta1 = 0 the first moment is exactly the effective gradient
    cfg = TrainConfig(lr=1.0, weight_decay=0.3, beta1=0.0)
    state = AdamState()
    adam_step({"w": np.array([2.0])}, {"w": np.array([0.0])}, state, cfg)
    assert state.m["w"][0] == pytest.approx(0.3 * 2.0)


def test_plateau_scheduler():
    s = ReduceLROnPlateau(1e-3, factor=0.1, patience=2, min_lr=1e-5)
    lrs = [s.step(v) for v in [1.0, 1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]]
    assert lrs[:3] == [1e-3] * 3 and lrs[3] == pytest.approx(1e-4)
    assert lrs[-1] == pytest.approx(1e-5)


@pytest.mark.parametrize("kw", [dict(lr=-1), dict(epochs=0), dict(batch_size=0),
                                dict(plateau_factor=1.0), dict(huber_delta=0)])
def test_train_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


# -- training on encoded circuits -------------------------------------------------------


def _records(count, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        c = random_pqc(GenConfig(1 + i % 3, reps=1 + i % 2, seed=seed * 1000 + i))
        out.append(encode_circuit(c, "synth_hanoi", expr=float(rng.uniform(0, 1)), id=str(i)))
    return out


SMALL = ModelConfig(heads=2, head_dim=8, global_hidden=16, reg_hidden=(16, 8))


def test_lr_zero_leaves_parameters_unchanged():
    recs = _records(12)
    res = train(recs[:8], recs[8:], TrainConfig(lr=0.0, weight_decay=0.0, epochs=4, batch_size=3), SMALL)
    init = init_params(SMALL, 0)
    assert all(np.array_equal(res.model.params[k], init[k]) for k in init)
    losses = [m["train_loss"] for m in res.metrics]
    assert max(losses) - min(losses) < 1e-12


def test_overfit_small_set():
    recs = _records(32, seed=1)
    res = train(recs, recs, TrainConfig(lr=1e-3, weight_decay=0.0, epochs=500, batch_size=8))
    assert res.metrics[-1]["train_loss"] < 1e-3
    assert res.metrics[-1]["train_loss"] < res.metrics[0]["train_loss"]
    assert evaluate(res.model, recs)["rmse"] < 0.05


def test_checkpoint_matches_best_epoch(tmp_path):
    recs = _records(24, seed=2)
    ckpt, metrics = tmp_path / "m.json", tmp_path / "m.csv"
    cfg = TrainConfig(lr=3e-3, epochs=15, batch_size=8)
    res = train(recs[:16], recs[16:], cfg, SMALL, checkpoint_path=ckpt, metrics_path=metrics)
    best = min(m["val_loss"] for m in res.metrics)
    assert res.best_val_loss == best
    loaded = load_checkpoint(ckpt)
    assert np.array_equal(loaded.predict(recs[16:]), res.model.predict(recs[16:]))
    rows = list(csv.DictReader(metrics.open()))
    assert list(rows[0]) == ["epoch", "train_loss", "val_loss", "lr"] and len(rows) == 15
    again = train(recs[:16], recs[16:], cfg, SMALL)
    assert again.metrics == res.metrics


def test_checkpoint_round_trip(tmp_path):
    recs = _records(10, seed=3)
    res = train(recs[:7], recs[7:], TrainConfig(lr=1e-3, epochs=2), SMALL)
    path = tmp_path / "c.json"
    save_checkpoint(path, res.model, TrainConfig())
    loaded = load_checkpoint(path, expect=SMALL)
    assert all(np.array_equal(loaded.params[k], res.model.params[k]) for k in res.model.params)
    assert np.array_equal(loaded.predict(recs), res.model.predict(recs))
    with pytest.raises(CheckpointError):
        load_checkpoint(path, expect=ModelConfig())
    path.write_text(path.read_text().replace('"version": 1', '"version": 2'))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_training_reduces_loss():
    recs = _records(30, seed=4)
    res = train(recs[:24], recs[24:], TrainConfig(lr=1e-3, epochs=20, batch_size=8), SMALL)
    assert res.metrics[-1]["train_loss"] < res.metrics[0]["train_loss"]


def test_empty_split_rejected():
    recs = _records(3)
    with pytest.raises(DatasetError):
        train(recs, [], TrainConfig(epochs=1), SMALL)


def test_evaluate_and_rmse():
    assert rmse([1.0, 0.0], [0.0, 0.0]) == pytest.approx(math.sqrt(0.5))
    recs = _records(9, seed=5)
    res = train(recs[:6], recs[6:], TrainConfig(epochs=1), SMALL)
    ev = evaluate(res.model, recs)
    assert ev["rmse"] == pytest.approx(rmse(ev["pred"], ev["target"]))
    assert set(ev["per_qubit"]) == {1, 2, 3}
