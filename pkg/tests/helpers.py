"""Shared circuit generators and comparison helpers for the test suite."""
import numpy as np

from pqcexpr.circuit import Circuit, Gate, GateKind, Sym

ABSTRACT_1Q = (GateKind.RX, GateKind.RY, GateKind.RZ, GateKind.H, GateKind.I, GateKind.X, GateKind.SX)
ABSTRACT_2Q = (GateKind.CX, GateKind.CRX, GateKind.CRY, GateKind.CRZ, GateKind.SWAP)


def random_bound_circuit(rng: np.random.Generator, n_qubits: int, n_gates: int,
                         allow_sx: bool = True) -> Circuit:
    """Random bound circuit over the full abstract gate set."""
    one = [k for k in ABSTRACT_1Q if allow_sx or k is not GateKind.SX]
    gates = []
    for _ in range(n_gates):
        if n_qubits >= 2 and rng.random() < 0.4:
            kind = ABSTRACT_2Q[rng.integers(len(ABSTRACT_2Q))]
            qubits = tuple(int(q) for q in rng.choice(n_qubits, 2, replace=False))
        else:
            kind = one[rng.integers(len(one))]
            qubits = (int(rng.integers(n_qubits)),)
        param = float(rng.uniform(-2 * np.pi, 2 * np.pi)) if kind.parameterized else None
        gates.append(Gate(kind, qubits, param))
    return Circuit(n_qubits, gates)


def random_symbolic_circuit(rng: np.random.Generator, n_qubits: int, n_gates: int) -> Circuit:
    """Like :func:`random_bound_circuit` (no SX) but every rotation carries a fresh symbol."""
    bound = random_bound_circuit(rng, n_qubits, n_gates, allow_sx=False)
    gates, k = [], 0
    for g in bound.gates:
        if g.kind.parameterized:
            gates.append(Gate(g.kind, g.qubits, Sym(k)))
            k += 1
        else:
            gates.append(g)
    return Circuit(n_qubits, gates)


def equal_up_to_phase(a: np.ndarray, b: np.ndarray) -> float:
    """Max elementwise deviation between ``a`` and ``e^{i phi} b`` for the best phase."""
    k = np.unravel_index(np.argmax(np.abs(b)), b.shape)
    phase = a[k] / b[k]
    phase /= abs(phase)
    return float(np.max(np.abs(a - phase * b)))



# -- gnn oracles ---------------------------------------------------------------------

FD_STEP = 1e-5
FD_FLOOR = 1e-4  # absolute scale for tensors whose exact gradient is zero


def tiny_model_case(seed: int):
    """Small random batch (each graph has at most 6 nodes) with hidden width 8."""
    from pqcexpr.gnn import GraphBatch, ModelConfig, init_params

    rng = np.random.default_rng(seed)
    cfg = ModelConfig(node_dim=5, global_dim=3, heads=2, head_dim=4, global_hidden=8, reg_hidden=(8, 4))
    xs, edges = [], []
    for _ in range(3):
        v = int(rng.integers(1, 7))
        xs.append(rng.normal(size=(v, cfg.node_dim)))
        e = [(int(rng.integers(0, i)), i) for i in range(1, v) for _ in range(int(rng.integers(1, 3)))]
        edges.append(np.array(e, dtype=np.int64).reshape(-1, 2))
    batch = GraphBatch.build(xs, edges, rng.normal(size=(3, cfg.global_dim)), y=rng.normal(size=3) * 2)
    params = {k: v + rng.normal(size=v.shape) * 0.3 for k, v in init_params(cfg, seed).items()}
    return cfg, batch, params


def fd_max_error(cfg, batch, params) -> float:
    """Worst per-tensor error ``|num - an| / max(|num|, |an|, floor)`` against central differences."""
    from pqcexpr.gnn import backward, forward, huber_grad, huber_loss, predict

    def loss(p):
        return huber_loss(predict(p, batch, cfg), batch.y)

    pred, cache = forward(params, batch, cfg)
    grads = backward(params, batch, cfg, cache, huber_grad(pred, batch.y))
    worst = 0.0
    for name, w in params.items():
        num = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            old = w[idx]
            w[idx] = old + FD_STEP
            up = loss(params)
            w[idx] = old - FD_STEP
            down = loss(params)
            w[idx] = old
            num[idx] = (up - down) / (2 * FD_STEP)
        an = grads[name]
        scale = max(np.linalg.norm(num), np.linalg.norm(an), FD_FLOOR)
        worst = max(worst, float(np.linalg.norm(num - an) / scale))
    return worst


def relabel(x: np.ndarray, edges: np.ndarray, perm: np.ndarray):
    """Graph with node ``i`` moved to position ``perm[i]``."""
    new_x = np.empty_like(x)
    new_x[perm] = x
    return new_x, perm[edges]


# -- acceptance reporting --------------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def report(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
