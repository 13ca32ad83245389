"""Lowering to the native gate set {RZ, X, SX, CX} and SWAP-based routing."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .circuit import Circuit, Gate, GateKind, Sym, gate_matrix
from .errors import RoutingError, UnsupportedGateError

DEGENERACY_TOL = 1e-12
RZ_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class CouplingMap:
    n_qubits: int
    edges: frozenset[tuple[int, int]]

    def __init__(self, n_qubits: int, edges=()):
        norm = set()
        for a, b in edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError(f"self-loop on qubit {a}")
            if not (0 <= a < n_qubits and 0 <= b < n_qubits):
                raise ValueError(f"edge ({a}, {b}) outside {n_qubits} qubits")
            norm.add((min(a, b), max(a, b)))
        object.__setattr__(self, "n_qubits", int(n_qubits))
        object.__setattr__(self, "edges", frozenset(norm))

    @classmethod
    def complete(cls, n_qubits: int) -> "CouplingMap":
        return cls(n_qubits, combinations(range(n_qubits), 2))

    @classmethod
    def linear(cls, n_qubits: int) -> "CouplingMap":
        return cls(n_qubits, [(i, i + 1) for i in range(n_qubits - 1)])

    def adjacent(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.edges

    def neighbors(self, q: int, limit: int | None = None) -> list[int]:
        limit = self.n_qubits if limit is None else limit
        out = [b if a == q else a for a, b in self.edges if q in (a, b)]
        return sorted(x for x in out if x < limit)

    def shortest_path(self, src: int, dst: int, limit: int | None = None) -> list[int] | None:
        """BFS over qubits ``< limit``; neighbors visited in ascending order."""
        prev = {src: None}
        queue = deque([src])
        while queue:
            q = queue.popleft()
            if q == dst:
                path = [q]
                while prev[path[-1]] is not None:
                    path.append(prev[path[-1]])
                return path[::-1]
            for nb in self.neighbors(q, limit):
                if nb not in prev:
                    prev[nb] = q
                    queue.append(nb)
        return None

    def to_dict(self) -> dict:
        return {"n_qubits": self.n_qubits, "edges": [list(e) for e in sorted(self.edges)]}

    @classmethod
    def from_dict(cls, data: dict) -> "CouplingMap":
        return cls(data["n_qubits"], [tuple(e) for e in data["edges"]])


# -- single-qubit Euler decomposition ---------------------------------------


def zyz_angles(u: np.ndarray) -> tuple[float, float, float]:
    """Angles with ``u ~ RZ(phi) RY(theta) RZ(lam)`` up to global phase, theta in [0, pi]."""
    v = u / np.sqrt(np.linalg.det(u))
    a, b = v[0, 0], v[1, 0]
    theta = 2 * math.atan2(abs(b), abs(a))
    arg_a = float(np.angle(a)) if abs(a) > DEGENERACY_TOL else 0.0
    arg_b = float(np.angle(b)) if abs(b) > DEGENERACY_TOL else 0.0
    return theta, arg_b - arg_a, -arg_a - arg_b


def _rz(q: int, a: float) -> Gate:
    return Gate(GateKind.RZ, (q,), a)


def decompose_1q(u: np.ndarray, q: int) -> list[Gate]:
    """ZXZXZ form ``RZ, SX, RZ, SX, RZ`` with short forms at degenerate angles."""
    theta, phi, lam = zyz_angles(u)
    if abs(theta) < DEGENERACY_TOL:
        return [_rz(q, phi + lam)]
    if abs(theta - math.pi / 2) < DEGENERACY_TOL:
        return [_rz(q, lam - math.pi / 2), Gate(GateKind.SX, (q,)), _rz(q, phi + math.pi / 2)]
    if abs(theta - math.pi) < DEGENERACY_TOL:
        return [Gate(GateKind.X, (q,)), _rz(q, phi - lam - math.pi)]
    sx = Gate(GateKind.SX, (q,))
    return [_rz(q, lam), sx, _rz(q, theta + math.pi), sx, _rz(q, phi + math.pi)]


def _crz(c: int, t: int, lam) -> list[Gate]:
    cx = Gate(GateKind.CX, (c, t))
    if isinstance(lam, Sym):
        half, neg_half = lam.shifted(0.5), lam.shifted(-0.5)
    else:
        half, neg_half = lam / 2, -lam / 2
    return [_rz(t, half), cx, _rz(t, neg_half), cx]


def _symbolic_1q(gate: Gate) -> list[Gate]:
    """Fixed templates keeping the symbol in a single RZ (the middle one)."""
    q = gate.qubits[0]
    sym = gate.param
    sx = Gate(GateKind.SX, (q,))
    if gate.kind is GateKind.RZ:
        return [gate]
    if gate.kind is GateKind.RX:
        return [_rz(q, math.pi / 2), sx, _rz(q, sym.shifted(offset=math.pi)), sx, _rz(q, math.pi / 2)]
    if gate.kind is GateKind.RY:
        return [sx, _rz(q, sym.shifted(offset=math.pi)), sx, _rz(q, math.pi)]
    raise UnsupportedGateError(f"no symbolic decomposition for {gate.kind.value}")


def decompose_gate(gate: Gate) -> list[Gate]:
    """Native-gate sequence equal to ``gate`` up to global phase.

    Bound single-qubit gates go through the numeric ZXZXZ path; gates with a
    symbolic angle use fixed templates so that binding afterwards gives the
    same unitary as decomposing the bound gate.
    """
    kind = gate.kind
    if kind in (GateKind.X, GateKind.SX, GateKind.CX, GateKind.MEASURE):
        return [gate]
    if kind.arity == 1:
        if not gate.is_bound:
            return _symbolic_1q(gate)
        if kind is GateKind.RZ:
            return [gate]
        return decompose_1q(gate_matrix(gate), gate.qubits[0])
    c, t = gate.qubits
    if kind is GateKind.SWAP:
        return [Gate(GateKind.CX, (c, t)), Gate(GateKind.CX, (t, c)), Gate(GateKind.CX, (c, t))]
    if kind is GateKind.CRZ:
        return _crz(c, t, gate.param)
    if kind is GateKind.CRX:
        pre = post = Gate(GateKind.H, (t,))
    elif kind is GateKind.CRY:
        pre = Gate(GateKind.RX, (t,), math.pi / 2)
        post = Gate(GateKind.RX, (t,), -math.pi / 2)
    else:
        raise UnsupportedGateError(f"no decomposition for {kind.value}")
    return decompose_gate(pre) + _crz(c, t, gate.param) + decompose_gate(post)


# -- routing ----------------------------------------------------------------


def route(circuit: Circuit, cmap: CouplingMap, initial_layout=None) -> Circuit:
    """Make every two-qubit gate act on a coupling-map edge.

    Physical qubits are restricted to ``range(circuit.n_qubits)``.  For each
    non-adjacent pair the first qubit is swapped along the BFS shortest path
    until it neighbours the second.  ``meta["initial_layout"]`` and
    ``meta["final_layout"]`` map logical qubit -> physical qubit.
    """
    n = circuit.n_qubits
    if n > cmap.n_qubits:
        raise RoutingError(f"circuit needs {n} qubits, coupling map has {cmap.n_qubits}")
    layout = list(range(n)) if initial_layout is None else [int(p) for p in initial_layout]
    if sorted(layout) != list(range(n)):
        raise RoutingError(f"initial layout {layout} is not a permutation of 0..{n - 1}")
    initial = list(layout)
    out: list[Gate] = []
    n_swaps = 0
    for g in circuit.gates:
        if g.kind.arity == 1:
            out.append(Gate(g.kind, (layout[g.qubits[0]],), g.param))
            continue
        a, b = g.qubits
        pa, pb = layout[a], layout[b]
        if not cmap.adjacent(pa, pb):
            path = cmap.shortest_path(pa, pb, limit=n)
            if path is None:
                raise RoutingError(f"no path between physical qubits {pa} and {pb}")
            inv = {p: l for l, p in enumerate(layout)}
            for u, v in zip(path[:-2], path[1:-1]):
                out.append(Gate(GateKind.SWAP, (u, v)))
                lu, lv = inv[u], inv[v]
                layout[lu], layout[lv] = v, u
                inv[u], inv[v] = lv, lu
                n_swaps += 1
            pa, pb = layout[a], layout[b]
        out.append(Gate(g.kind, (pa, pb), g.param))
    meta = dict(circuit.meta)
    meta.update(initial_layout=initial, final_layout=list(layout), n_swaps=n_swaps)
    return Circuit(n, out, circuit.n_params, meta=meta)


def permutation_matrix(layout, n: int) -> np.ndarray:
    """Basis permutation moving logical qubit ``l`` to physical ``layout[l]``."""
    dim = 1 << n
    p = np.zeros((dim, dim))
    for x in range(dim):
        y = 0
        for l, phys in enumerate(layout):
            if (x >> l) & 1:
                y |= 1 << phys
        p[y, x] = 1.0
    return p


# -- full pipeline ------------------------------------------------------------


def _wrap(angle: float) -> float:
    return math.remainder(angle, 2 * math.pi)


def merge_rz(circuit: Circuit) -> Circuit:
    """Fuse runs of bound RZ on a wire and drop RZ(0) (angles taken mod 2*pi).

    A symbolic RZ is kept as its own gate and ends the run on its wire.
    """
    pending: dict[int, float] = {}
    out: list[Gate] = []

    def flush(q):
        if q in pending:
            a = _wrap(pending.pop(q))
            if abs(a) > RZ_ZERO_TOL:
                out.append(_rz(q, a))

    for g in circuit.gates:
        if g.kind is GateKind.RZ and g.is_bound:
            q = g.qubits[0]
            pending[q] = pending.get(q, 0.0) + g.angle
            continue
        for q in g.qubits:
            flush(q)
        out.append(g)
    for q in sorted(pending):
        flush(q)
    # trailing RZ must precede the measurement layer
    body = [g for g in out if g.kind is not GateKind.MEASURE]
    meas = [g for g in out if g.kind is GateKind.MEASURE]
    return Circuit(circuit.n_qubits, body + meas, circuit.n_params, meta=dict(circuit.meta))


def transpile(circuit: Circuit, backend=None) -> Circuit:
    """Route onto ``backend.coupling`` then lower to native gates and fuse RZ.

    Symbolic circuits are accepted: the result keeps every parameter in
    dedicated RZ gates, and ``bind`` on it equals (up to global phase and RZ
    fusion) transpiling the bound circuit.
    """
    if backend is None:
        cmap = CouplingMap.complete(circuit.n_qubits)
    else:
        cmap = backend.coupling
    routed = route(circuit, cmap)
    lowered = [ng for g in routed.gates for ng in decompose_gate(g)]
    return merge_rz(Circuit(circuit.n_qubits, lowered, routed.n_params, meta=routed.meta))
