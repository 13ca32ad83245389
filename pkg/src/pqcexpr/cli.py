"""Command-line entry point: dataset generation, labeling, training and studies."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .circuit import circuit_to_dict, load_circuit
from .errors import DatasetError, PQCError
from .expressibility import ExprConfig, expressibility
from .gnn import ModelConfig, TrainConfig, evaluate, load_checkpoint, rmse, train
from .graphenc import (
    GLOBAL_FEATURES,
    CircuitGraph,
    encode_circuit,
    export_global_csv,
    read_dataset,
    split_dataset,
    write_dataset,
)
from .pqcgen import GenConfig, circuit_library, random_pqc
from .sim import load_backend

log = logging.getLogger("pqcexpr")

WORKERS_ENV = "PQCEXPR_WORKERS"


def derive_seed(master: int, *keys: int) -> int:
    """Independent 32-bit seed for a (master, keys...) coordinate."""
    return int(np.random.SeedSequence([master, *keys]).generate_state(1)[0])


def worker_count(requested: int | None = None) -> int:
    if requested:
        return max(1, requested)
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


# -- dataset generation -----------------------------------------------------------


@dataclass(frozen=True)
class GenerateJob:
    n_qubits: int
    index: int
    reps_max: int
    backend: str
    expr: ExprConfig
    seed: int

    @property
    def id(self) -> str:
        return f"n{self.n_qubits}_{self.index:05d}"


def _label_one(job: GenerateJob):
    """Build, label and encode one random circuit; returns (id, dict or None, error)."""
    try:
        gen_seed = derive_seed(job.seed, job.n_qubits, job.index, 0)
        reps = 1 + derive_seed(job.seed, job.n_qubits, job.index, 1) % job.reps_max
        cfg = GenConfig(job.n_qubits, reps, gen_seed)
        circuit = random_pqc(cfg)
        backend = load_backend(job.backend)
        expr_seed = derive_seed(job.seed, job.n_qubits, job.index, 2)
        res = expressibility(circuit, job.expr, backend=backend, seed=expr_seed)
        meta = {
            "generator": cfg.to_dict(),
            "seed": gen_seed,
            "expr_seed": expr_seed,
            "mode": job.expr.mode,
            "num_pairs": job.expr.num_pairs,
            "circuit": circuit_to_dict(circuit),
        }
        graph = encode_circuit(circuit, backend, expr=res.expr, id=job.id, meta=meta)
        return job.id, graph.to_dict(), None
    except (PQCError, ValueError, FloatingPointError) as exc:
        return job.id, None, f"{type(exc).__name__}: {exc}"


def generate_records(qubits, per_qubit: int, *, reps_max: int = 3, backend: str = "noiseless",
                     expr_cfg: ExprConfig | None = None, seed: int = 0, workers: int | None = None):
    """Label ``per_qubit`` random circuits for each qubit count, in a fixed order.

    Failures are logged and skipped.  Results do not depend on ``workers``.
    """
    expr_cfg = expr_cfg or ExprConfig()
    jobs = [GenerateJob(n, k, reps_max, backend, expr_cfg, seed) for n in qubits for k in range(per_qubit)]
    n_workers = worker_count(workers)
    if n_workers == 1:
        results = map(_label_one, jobs)
    else:
        pool = ProcessPoolExecutor(n_workers)
        results = pool.map(_label_one, jobs, chunksize=4)
    records = []
    try:
        for done, (cid, rec, err) in enumerate(results, start=1):
            if err is not None:
                log.warning("circuit %s skipped: %s", cid, err)
                continue
            records.append(CircuitGraph.from_dict(rec))
            if done % 100 == 0:
                log.info("labeled %d/%d circuits", done, len(jobs))
    finally:
        if n_workers > 1:
            pool.shutdown()
    return records


# -- manifests ---------------------------------------------------------------------


def write_manifest(out_path, command: str, args: dict, inputs, outputs, started: float) -> Path:
    path = Path(str(out_path) + ".manifest.json")
    manifest = {
        "command": command,
        "config": {k: (str(v) if isinstance(v, Path) else v) for k, v in args.items()},
        "seed": args.get("seed"),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "tool_version": __version__,
        "python": platform.python_version(),
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "wall_clock_s": round(time.time() - started, 3),
    }
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


# -- helpers shared by commands -------------------------------------------------------


def parse_range(text: str) -> list[int]:
    """``"1..5"`` or ``"1,3,4"`` or ``"3"``."""
    if ".." in text:
        a, b = text.split("..")
        return list(range(int(a), int(b) + 1))
    return [int(t) for t in text.split(",") if t]


def parse_split(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split("/")]
    if len(parts) != 3:
        raise ValueError("split must look like 70/10/20")
    total = sum(parts)
    return tuple(p / total for p in parts)


def train_config_from(args) -> TrainConfig:
    return TrainConfig(lr=args.lr, weight_decay=args.weight_decay, epochs=args.epochs,
                       batch_size=args.batch_size, seed=args.seed)


def model_config_from(args) -> ModelConfig:
    return ModelConfig(heads=args.heads, head_dim=args.head_dim, reverse_edges=args.reverse_edges)


def write_predictions(path, records, pred) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "n_qubits", "expr", "pred"])
        for r, p in zip(records, pred):
            w.writerow([r.id, r.n_qubits, repr(r.expr), repr(float(p))])


def pearson(x, y) -> tuple[float, bool]:
    """Pearson r, and a flag set when either input has zero variance (r reported as 0)."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    dx, dy = x - x.mean(), y - y.mean()
    den = np.sqrt(np.sum(dx * dx) * np.sum(dy * dy))
    if den < 1e-300:
        return 0.0, True
    return float(np.clip(np.sum(dx * dy) / den, -1.0, 1.0)), False


CORRELATION_COLUMNS = (*GLOBAL_FEATURES, "n_single_qubit_gates")


def feature_table(records) -> np.ndarray:
    g = np.stack([r.global_features for r in records])
    single = g[:, 3] + g[:, 4] + g[:, 5]
    return np.column_stack([g, single])


def correlation_study(records) -> tuple[list[dict], np.ndarray]:
    if len(records) < 2:
        raise DatasetError("need at least two labeled records")
    table = feature_table(records)
    y = np.array([r.expr for r in records], dtype=float)
    rows = []
    for j, name in enumerate(CORRELATION_COLUMNS):
        r, flag = pearson(table[:, j], y)
        rows.append({"feature": name, "r": r, "zero_variance": flag})
    cols = np.column_stack([table, y])
    k = cols.shape[1]
    matrix = np.array([[pearson(cols[:, a], cols[:, b])[0] for b in range(k)] for a in range(k)])
    return rows, matrix


def stratified_subset(records, per_stratum: int, seed: int):
    by_n: dict[int, list] = {}
    for r in records:
        by_n.setdefault(r.n_qubits, []).append(r)
    rng = np.random.default_rng(seed)
    out = []
    for n in sorted(by_n):
        group = by_n[n]
        if per_stratum > len(group):
            raise DatasetError(f"stratum n={n} has {len(group)} records, need {per_stratum}")
        out.extend(group[i] for i in np.sort(rng.permutation(len(group))[:per_stratum]))
    return out


def samplesize_study(pool, test, sizes, cfg: TrainConfig, model_cfg: ModelConfig, seed: int = 0):
    """Train one model per per-stratum size (7/8 train, 1/8 validation); score on ``test``."""
    rows = []
    for size in sizes:
        subset = stratified_subset(pool, size, seed)
        tr, va, _ = split_dataset(subset, (0.875, 0.125, 0.0), seed)
        res = train([subset[i] for i in tr], [subset[i] for i in va], cfg, model_cfg)
        rows.append({"train_size": size, "rmse": evaluate(res.model, test)["rmse"]})
    return rows


def extrapolation_study(records, train_max_qubits: int, cfg: TrainConfig, model_cfg: ModelConfig,
                        fractions=(0.7, 0.1, 0.2), seed: int = 0):
    """Train on strata ``<= q``; RMSE per qubit count on held-out in-range data and all out-of-range data."""
    counts = sorted({r.n_qubits for r in records})
    if train_max_qubits >= counts[-1]:
        raise DatasetError(f"nothing to extrapolate: data stops at {counts[-1]} qubits")
    inside = [r for r in records if r.n_qubits <= train_max_qubits]
    outside = [r for r in records if r.n_qubits > train_max_qubits]
    if not inside:
        raise DatasetError(f"no records with <= {train_max_qubits} qubits")
    tr, va, te = split_dataset(inside, fractions, seed)
    res = train([inside[i] for i in tr], [inside[i] for i in va], cfg, model_cfg)
    held = [inside[i] for i in te] + outside
    report = evaluate(res.model, held)
    rows = []
    for n in counts:
        regime = "interpolation" if n <= train_max_qubits else "extrapolation"
        rows.append({"n_qubits": n, "rmse": report["per_qubit"].get(n, float("nan")), "regime": regime,
                     "n_samples": sum(1 for r in held if r.n_qubits == n)})
    mask = np.array([r.n_qubits <= train_max_qubits for r in held])
    summary = {
        "interpolation_rmse": rmse(report["pred"][mask], report["target"][mask]),
        "extrapolation_rmse": rmse(report["pred"][~mask], report["target"][~mask]),
    }
    return rows, summary


def _write_rows(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def _split_records(records, args):
    tr, va, te = split_dataset(records, parse_split(args.split), args.split_seed)
    return [records[i] for i in tr], [records[i] for i in va], [records[i] for i in te]


# -- commands -----------------------------------------------------------------------------


def cmd_generate(args) -> dict:
    expr_cfg = ExprConfig(num_pairs=args.pairs, n_bins=args.bins, mode=args.mode, shots=args.shots)
    records = generate_records(parse_range(args.qubits), args.per_qubit, reps_max=args.reps_max,
                               backend=args.backend, expr_cfg=expr_cfg, seed=args.seed,
                               workers=args.workers)
    write_dataset(args.out, records)
    outputs = [args.out]
    if args.csv:
        export_global_csv(args.csv, records)
        outputs.append(args.csv)
    return {"records": len(records), "outputs": outputs, "inputs": []}


def cmd_expr(args) -> dict:
    circuit = circuit_library(args.library) if args.library else load_circuit(args.circuit)
    res = expressibility(circuit, ExprConfig(num_pairs=args.pairs, n_bins=args.bins, mode=args.mode,
                                             backend=args.backend, shots=args.shots, seed=args.seed))
    out = res.to_dict()
    print(json.dumps({k: v for k, v in out.items() if k != "histogram_counts"}))
    if args.out:
        Path(args.out).write_text(json.dumps(out) + "\n")
    return {"outputs": [args.out] if args.out else [], "inputs": [args.circuit or args.library]}


def cmd_train(args) -> dict:
    records = read_dataset(args.data)
    tr, va, te = _split_records(records, args)
    res = train(tr, va, train_config_from(args), model_config_from(args),
                checkpoint_path=args.out, metrics_path=args.metrics)
    report = evaluate(res.model, te) if te else {"rmse": float("nan")}
    print(json.dumps({"best_epoch": res.best_epoch, "best_val_loss": res.best_val_loss,
                      "test_rmse": report["rmse"]}))
    return {"inputs": [args.data], "outputs": [args.out] + ([args.metrics] if args.metrics else [])}


def cmd_eval(args) -> dict:
    records = read_dataset(args.data)
    if args.subset != "all":
        records = dict(zip(("train", "val", "test"), _split_records(records, args)))[args.subset]
    model = load_checkpoint(args.ckpt)
    report = evaluate(model, records)
    print(json.dumps({"rmse": report["rmse"], "n": len(records),
                      "per_qubit": {str(k): v for k, v in report["per_qubit"].items()}}))
    outputs = []
    if args.predictions:
        write_predictions(args.predictions, records, report["pred"])
        outputs.append(args.predictions)
    if args.per_qubit_csv:
        _write_rows(args.per_qubit_csv, [{"n_qubits": n, "rmse": v} for n, v in report["per_qubit"].items()])
        outputs.append(args.per_qubit_csv)
    return {"inputs": [args.data, args.ckpt], "outputs": outputs}


def cmd_predict(args) -> dict:
    model = load_checkpoint(args.ckpt)
    circuit = circuit_library(args.library) if args.library else load_circuit(args.circuit)
    graph = encode_circuit(circuit, args.backend)
    value = float(model.predict([graph])[0])
    print(json.dumps({"expr": value}))
    return {"inputs": [args.ckpt, args.circuit or args.library], "outputs": []}


def cmd_study_correlation(args) -> dict:
    records = read_dataset(args.data)
    if len(records) < 100:
        log.warning("only %d records; correlations will be noisy", len(records))
    rows, matrix = correlation_study(records)
    _write_rows(args.out, rows)
    outputs = [args.out]
    if args.matrix:
        with open(args.matrix, "w", newline="") as fh:
            w = csv.writer(fh)
            names = [*CORRELATION_COLUMNS, "expr"]
            w.writerow(["", *names])
            for name, row in zip(names, matrix):
                w.writerow([name, *(repr(float(v)) for v in row)])
        outputs.append(args.matrix)
    print(json.dumps({r["feature"]: r["r"] for r in rows}))
    return {"inputs": [args.data], "outputs": outputs}


def cmd_study_samplesize(args) -> dict:
    pool = read_dataset(args.data)
    test = read_dataset(args.test_data)
    rows = samplesize_study(pool, test, parse_range(args.sizes), train_config_from(args),
                            model_config_from(args), args.seed)
    _write_rows(args.out, rows)
    print(json.dumps(rows))
    return {"inputs": [args.data, args.test_data], "outputs": [args.out]}


def cmd_study_extrapolation(args) -> dict:
    records = read_dataset(args.data)
    rows, summary = extrapolation_study(records, args.train_max_qubits, train_config_from(args),
                                        model_config_from(args), parse_split(args.split), args.split_seed)
    _write_rows(args.out, rows)
    print(json.dumps(summary))
    return {"inputs": [args.data], "outputs": [args.out]}


# -- parser ---------------------------------------------------------------------------------


def _add_train_args(p) -> None:
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--weight-decay", type=float, default=1e-6)
    p.add_argument("--batch-size", type=int, default=1500)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--head-dim", type=int, default=16)
    p.add_argument("--reverse-edges", action="store_true")
    p.add_argument("--seed", type=int, default=0)


def _add_split_args(p) -> None:
    p.add_argument("--split", default="70/10/20")
    p.add_argument("--split-seed", type=int, default=0)


def _add_expr_args(p) -> None:
    p.add_argument("--pairs", type=int, default=5000)
    p.add_argument("--bins", type=int, default=75)
    p.add_argument("--mode", choices=("exact", "sampled", "noisy"), default="exact")
    p.add_argument("--shots", type=int, default=1024)
    p.add_argument("--backend", default="noiseless")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pqcexpr", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--manifest", type=Path, default=None,
                        help="manifest anchor for commands without --out (writes <path>.manifest.json)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate and label random circuits as JSONL graphs")
    p.add_argument("--qubits", default="1..5")
    p.add_argument("--per-qubit", type=int, required=True)
    p.add_argument("--reps-max", type=int, default=3)
    _add_expr_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--csv", type=Path, default=None, help="also export global features + labels")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("expr", help="expressibility of one circuit")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--circuit", type=Path)
    src.add_argument("--library")
    _add_expr_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_expr)

    p = sub.add_parser("train", help="train the graph regressor")
    p.add_argument("--data", type=Path, required=True)
    _add_split_args(p)
    _add_train_args(p)
    p.add_argument("--out", type=Path, required=True, help="checkpoint path")
    p.add_argument("--metrics", type=Path, default=None, help="per-epoch metrics CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="RMSE of a checkpoint on a dataset")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--subset", choices=("all", "train", "val", "test"), default="all")
    _add_split_args(p)
    p.add_argument("--predictions", type=Path, default=None)
    p.add_argument("--per-qubit-csv", type=Path, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predicted expressibility of one circuit")
    p.add_argument("--ckpt", type=Path, required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--circuit", type=Path)
    src.add_argument("--library")
    p.add_argument("--backend", default="noiseless")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("study-correlation", help="Pearson r of global features vs label")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--matrix", type=Path, default=None)
    p.set_defaults(func=cmd_study_correlation)

    p = sub.add_parser("study-samplesize", help="test RMSE vs per-stratum training size")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--test-data", type=Path, required=True)
    p.add_argument("--sizes", default="50,100,200,300")
    _add_train_args(p)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_study_samplesize)

    p = sub.add_parser("study-extrapolation", help="train on small circuits, test on larger")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--train-max-qubits", type=int, required=True)
    _add_split_args(p)
    _add_train_args(p)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_study_extrapolation)
    return parser


def _error_json(exc: BaseException) -> str:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("line", "column"):
        if getattr(exc, attr, None) is not None:
            payload[attr] = getattr(exc, attr)
    return json.dumps(payload)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    started = time.time()
    try:
        info = args.func(args)
    except (PQCError, ValueError, OSError, FloatingPointError) as exc:
        print(_error_json(exc), file=sys.stderr)
        return 1
    config = {k: v for k, v in vars(args).items() if k != "func"}
    anchor = args.manifest or getattr(args, "out", None) or getattr(args, "predictions", None)
    if anchor is not None:
        path = write_manifest(anchor, args.command, config, info.get("inputs", []),
                              info.get("outputs", []), started)
        log.info("manifest written to %s", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
