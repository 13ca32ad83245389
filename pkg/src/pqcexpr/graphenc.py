"""Graph records for native circuits: node features, wire edges, global features."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import NATIVE_KINDS, Circuit, GateKind, Sym
from .errors import DatasetError, EncodingError
from .sim import BackendModel, load_backend
from .transpile import transpile

log = logging.getLogger(__name__)

SCHEMA = "pqcexpr.graph"
SCHEMA_VERSION = 1

NODE_TYPES = ("INPUT", "MEASURE", "RZ", "X", "SX", "CX")
MAX_QUBITS = 10
CALIBRATION_FIELDS = ("t1", "t2", "frequency", "readout_error", "gate_error", "gate_duration", "reserved")
NODE_DIM = len(NODE_TYPES) + MAX_QUBITS + len(CALIBRATION_FIELDS)  # 23
GLOBAL_FEATURES = ("depth", "n_param_gates", "n_qubits", "count_rz", "count_sx", "count_x", "count_cx")

_TYPE_COL = {name: i for i, name in enumerate(NODE_TYPES)}
_QUBIT_OFF = len(NODE_TYPES)
_CAL_OFF = _QUBIT_OFF + MAX_QUBITS


@dataclass
class CircuitGraph:
    nodes: np.ndarray  # (V, 23)
    edges: np.ndarray  # (E, 2) int, source -> target
    global_features: np.ndarray  # (7,)
    n_qubits: int
    id: str = ""
    backend: str = ""
    expr: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "backend": self.backend,
            "n_qubits": self.n_qubits,
            "nodes": self.nodes.tolist(),
            "edges": self.edges.tolist(),
            "global": self.global_features.tolist(),
        }
        if self.expr is not None:
            out["expr"] = self.expr
        out["meta"] = self.meta
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CircuitGraph":
        for key in ("n_qubits", "nodes", "edges", "global"):
            if key not in data:
                raise DatasetError(f"missing field {key!r}")
        nodes = np.asarray(data["nodes"], dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != NODE_DIM:
            raise DatasetError(f"node vectors must have length {NODE_DIM}")
        edges = np.asarray(data["edges"], dtype=np.int64).reshape(-1, 2)
        if len(edges) and (edges.min() < 0 or edges.max() >= len(nodes)):
            raise DatasetError("edge refers to a missing node")
        glob = np.asarray(data["global"], dtype=float)
        if glob.shape != (len(GLOBAL_FEATURES),):
            raise DatasetError(f"global vector must have length {len(GLOBAL_FEATURES)}")
        expr = data.get("expr")
        if expr is not None and not isinstance(expr, (int, float)):
            raise DatasetError("expr must be a number")
        return cls(nodes, edges, glob, int(data["n_qubits"]), str(data.get("id", "")),
                   str(data.get("backend", "")), None if expr is None else float(expr),
                   dict(data.get("meta", {})))


def circuit_depth(circuit: Circuit) -> int:
    """Standard layer depth over non-measurement gates."""
    level = [0] * circuit.n_qubits
    for g in circuit.gates:
        if g.kind is GateKind.MEASURE:
            continue
        d = max(level[q] for q in g.qubits) + 1
        for q in g.qubits:
            level[q] = d
    return max(level, default=0)


def count_param_gates(circuit: Circuit) -> int:
    """Distinct free parameters carried by symbolic gates (0 for bound circuits)."""
    return len({g.param.index for g in circuit.gates if isinstance(g.param, Sym)})


def _calibration(backend: BackendModel, qubits, gate=None) -> np.ndarray:
    vec = np.zeros(len(CALIBRATION_FIELDS))
    if backend.noiseless:
        return vec
    cals = [backend.qubits[q] for q in qubits]
    vec[0] = np.mean([c.T1 for c in cals]) / 100.0
    vec[1] = np.mean([c.T2 for c in cals]) / 100.0
    vec[2] = np.mean([c.frequency for c in cals]) / 10.0
    vec[3] = np.mean([(c.readout_p01 + c.readout_p10) / 2 for c in cals])
    if gate is not None:
        vec[4] = backend.gate_error(gate)
        vec[5] = backend.gate_duration(gate) / 1000.0
    return vec


def _node(kind: str, qubits, calib: np.ndarray) -> np.ndarray:
    row = np.zeros(NODE_DIM)
    row[_TYPE_COL[kind]] = 1.0
    for q in qubits:
        row[_QUBIT_OFF + q] = 1.0
    row[_CAL_OFF:] = calib
    return row


def to_graph(circuit: Circuit, backend: BackendModel | str | None = None, *,
             expr: float | None = None, id: str = "", meta: dict | None = None) -> CircuitGraph:
    """Directed wire graph of a native circuit.

    Nodes are the ``n`` inputs, then gates in program order, then one MEASURE
    node per qubit.  Each node gets an edge from the previous node on each of
    its wires, so a gate's in-degree equals its arity.
    """
    backend = load_backend(backend if backend is not None else "noiseless")
    n = circuit.n_qubits
    if n > MAX_QUBITS:
        raise EncodingError(f"at most {MAX_QUBITS} qubits can be encoded")
    body = [g for g in circuit.gates if g.kind is not GateKind.MEASURE]
    for g in body:
        if g.kind not in NATIVE_KINDS:
            raise EncodingError(f"gate {g.kind.value} is not native; transpile first")
    if not backend.noiseless and n > backend.n_qubits:
        raise EncodingError(f"backend {backend.id} has only {backend.n_qubits} qubits")

    rows = [_node("INPUT", (q,), _calibration(backend, (q,))) for q in range(n)]
    last = list(range(n))
    edges = []
    for g in body:
        idx = len(rows)
        rows.append(_node(g.kind.value, g.qubits, _calibration(backend, g.qubits, g)))
        for q in g.qubits:
            edges.append((last[q], idx))
            last[q] = idx
    for q in range(n):
        idx = len(rows)
        rows.append(_node("MEASURE", (q,), _calibration(backend, (q,))))
        edges.append((last[q], idx))

    glob = np.array([
        circuit_depth(circuit),
        count_param_gates(circuit),
        n,
        circuit.count(GateKind.RZ),
        circuit.count(GateKind.SX),
        circuit.count(GateKind.X),
        circuit.count(GateKind.CX),
    ], dtype=float)
    return CircuitGraph(np.array(rows), np.array(edges, dtype=np.int64).reshape(-1, 2), glob, n,
                        id=id, backend=backend.id, expr=expr, meta=dict(meta or {}))


def check_graph(graph: CircuitGraph) -> None:
    """Raise ``EncodingError`` unless the structural invariants hold."""
    v, n = graph.n_nodes, graph.n_qubits
    x = graph.nodes
    if x.shape[1] != NODE_DIM:
        raise EncodingError("bad node width")
    types = x[:, :_QUBIT_OFF]
    if not np.all(types.sum(axis=1) == 1):
        raise EncodingError("node type is not one-hot")
    arity = x[:, _QUBIT_OFF:_CAL_OFF].sum(axis=1)
    indeg = np.bincount(graph.edges[:, 1], minlength=v)
    is_input = types[:, _TYPE_COL["INPUT"]] == 1
    if is_input.sum() != n or (types[:, _TYPE_COL["MEASURE"]] == 1).sum() != n:
        raise EncodingError("need one input and one output node per qubit")
    if np.any(indeg[is_input] != 0) or np.any(indeg[~is_input] != arity[~is_input]):
        raise EncodingError("in-degree does not match arity")
    if np.any(graph.edges[:, 0] >= graph.edges[:, 1]):
        raise EncodingError("edges must point forward in node order (DAG)")


# -- normalization ------------------------------------------------------------


@dataclass
class FeatureStats:
    node_mean: np.ndarray
    node_std: np.ndarray
    global_mean: np.ndarray
    global_std: np.ndarray

    def to_dict(self) -> dict:
        return {k: v.tolist() for k, v in vars(self).items()}

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureStats":
        return cls(**{k: np.asarray(data[k], dtype=float) for k in
                      ("node_mean", "node_std", "global_mean", "global_std")})


STD_FLOOR = 1e-12


def _scale(std: np.ndarray) -> np.ndarray:
    return np.where(std < STD_FLOOR, 1.0, std)


def fit_stats(records) -> FeatureStats:
    if not records:
        raise DatasetError("cannot compute statistics of an empty dataset")
    nodes = np.concatenate([r.nodes for r in records])
    glob = np.stack([r.global_features for r in records])
    return FeatureStats(nodes.mean(axis=0), nodes.std(axis=0), glob.mean(axis=0), glob.std(axis=0))


def apply_stats(records, stats: FeatureStats) -> list[CircuitGraph]:
    ns, gs = _scale(stats.node_std), _scale(stats.global_std)
    out = []
    for r in records:
        out.append(CircuitGraph((r.nodes - stats.node_mean) / ns, r.edges,
                                (r.global_features - stats.global_mean) / gs,
                                r.n_qubits, r.id, r.backend, r.expr, r.meta))
    return out


def normalize_features(records) -> tuple[FeatureStats, list[CircuitGraph]]:
    """Z-score node and global columns with statistics of ``records``.

    Zero-variance columns are centered only.  Pass the training split here and
    reuse the returned stats for validation, test and inference data.
    """
    stats = fit_stats(records)
    return stats, apply_stats(records, stats)


# -- JSONL dataset --------------------------------------------------------------


def schema_header() -> dict:
    return {
        "schema": SCHEMA,
        "version": SCHEMA_VERSION,
        "node_dim": NODE_DIM,
        "node_types": list(NODE_TYPES),
        "calibration": list(CALIBRATION_FIELDS),
        "global": list(GLOBAL_FEATURES),
    }


def write_dataset(path, records) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(schema_header()) + "\n")
        for r in records:
            fh.write(json.dumps(r.to_dict()) + "\n")


def read_dataset(path) -> list[CircuitGraph]:
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            if lineno == 1 and "schema" in obj:
                if obj.get("schema") != SCHEMA or obj.get("version") != SCHEMA_VERSION:
                    raise DatasetError(
                        f"unsupported schema {obj.get('schema')} v{obj.get('version')}", line=lineno)
                continue
            try:
                records.append(CircuitGraph.from_dict(obj))
            except DatasetError as exc:
                raise DatasetError(str(exc), line=lineno) from exc
            except (TypeError, ValueError) as exc:
                raise DatasetError(f"malformed record: {exc}", line=lineno) from exc
    return records


def export_global_csv(path, records) -> None:
    """Global features, derived single-qubit count and label, one row per record."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "n_qubits", *GLOBAL_FEATURES, "n_single_qubit_gates", "expr"])
        for r in records:
            g = r.global_features
            single = g[3] + g[4] + g[5]
            w.writerow([r.id, r.n_qubits, *(repr(float(v)) for v in g), repr(float(single)),
                        "" if r.expr is None else repr(r.expr)])


# -- splitting ------------------------------------------------------------------


def split_dataset(records, fractions=(0.7, 0.1, 0.2), seed: int = 0):
    """Per-qubit-count shuffled split; val and test sizes are rounded and the
    remainder goes to training.  Returns sorted index arrays."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or not math.isclose(sum(fractions), 1.0):
        raise ValueError("fractions must be three non-negative numbers summing to 1")
    strata: dict[int, list[int]] = {}
    for i, r in enumerate(records):
        strata.setdefault(r.n_qubits, []).append(i)
    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for n in sorted(strata):
        idx = np.array(strata[n])
        if len(idx) < 10:
            log.warning("stratum n=%d has only %d records; split may be degenerate", n, len(idx))
        idx = idx[rng.permutation(len(idx))]
        n_val = int(round(fractions[1] * len(idx)))
        n_test = int(round(fractions[2] * len(idx)))
        n_test = min(n_test, len(idx) - n_val)
        val.extend(idx[:n_val])
        test.extend(idx[n_val:n_val + n_test])
        train.extend(idx[n_val + n_test:])
    return tuple(np.sort(np.array(s, dtype=np.int64)) for s in (train, val, test))


def encode_circuit(circuit: Circuit, backend=None, **kwargs) -> CircuitGraph:
    """Transpile (symbolically, if unbound) onto ``backend`` and build the graph."""
    backend = load_backend(backend if backend is not None else "noiseless")
    return to_graph(transpile(circuit.without_measurements(), backend), backend, **kwargs)
