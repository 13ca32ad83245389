"""Statevector simulation, shot sampling and stochastic Pauli-trajectory noise."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ._kernels import apply_matrix, zero_states
from .circuit import Circuit, Gate, GateKind, Sym, gate_matrix, rotation_matrices
from .errors import ProfileError, UnboundParameterError, UnsupportedGateError
from .transpile import CouplingMap

NORM_TOL = 1e-10

_PAULI = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent Philox stream for ``(seed, *keys)``; order-independent by construction."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


# -- backend profiles -------------------------------------------------------


@dataclass(frozen=True)
class QubitCalibration:
    T1: float  # us
    T2: float  # us
    readout_p01: float  # P(read 1 | prepared 0)
    readout_p10: float  # P(read 0 | prepared 1)
    frequency: float  # GHz


@dataclass(frozen=True)
class BackendModel:
    id: str
    n_qubits: int
    coupling: CouplingMap
    noiseless: bool = True
    qubits: tuple[QubitCalibration, ...] = ()
    sx_error: tuple[float, ...] = ()
    x_error: tuple[float, ...] = ()
    sx_duration: tuple[float, ...] = ()  # ns
    x_duration: tuple[float, ...] = ()  # ns
    cx_error: dict = field(default_factory=dict)  # (a, b) with a < b -> prob
    cx_duration: dict = field(default_factory=dict)  # (a, b) with a < b -> ns

    def __post_init__(self):
        if self.coupling.n_qubits != self.n_qubits:
            raise ProfileError("coupling map size differs from backend size")
        if self.noiseless:
            return
        n = self.n_qubits
        for name in ("qubits", "sx_error", "x_error", "sx_duration", "x_duration"):
            if len(getattr(self, name)) != n:
                raise ProfileError(f"noisy profile {self.id!r}: '{name}' needs {n} entries")
        for edge in self.coupling.edges:
            if edge not in self.cx_error or edge not in self.cx_duration:
                raise ProfileError(f"noisy profile {self.id!r}: missing cx calibration for {edge}")
        probs = list(self.sx_error) + list(self.x_error) + list(self.cx_error.values())
        probs += [p for c in self.qubits for p in (c.readout_p01, c.readout_p10)]
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ProfileError(f"profile {self.id!r}: probability outside [0, 1]")
        durations = list(self.sx_duration) + list(self.x_duration) + list(self.cx_duration.values())
        if any(d < 0 for d in durations):
            raise ProfileError(f"profile {self.id!r}: negative gate duration")
        for q, c in enumerate(self.qubits):
            if c.T1 <= 0 or c.T2 <= 0 or c.T2 > 2 * c.T1:
                raise ProfileError(f"profile {self.id!r}: qubit {q} violates 0 < T2 <= 2*T1")

    def gate_error(self, gate: Gate) -> float:
        if self.noiseless:
            return 0.0
        k = gate.kind
        if k is GateKind.SX:
            return self.sx_error[gate.qubits[0]]
        if k is GateKind.X:
            return self.x_error[gate.qubits[0]]
        if k is GateKind.CX:
            return self.cx_error[_edge(gate.qubits)]
        return 0.0

    def gate_duration(self, gate: Gate) -> float:
        if self.noiseless:
            return 0.0
        k = gate.kind
        if k is GateKind.SX:
            return self.sx_duration[gate.qubits[0]]
        if k is GateKind.X:
            return self.x_duration[gate.qubits[0]]
        if k is GateKind.CX:
            return self.cx_duration[_edge(gate.qubits)]
        return 0.0

    def relaxation_probs(self, qubit: int, duration_ns: float) -> tuple[float, float, float]:
        """Pauli-twirled thermal relaxation ``(p_x, p_y, p_z)`` over ``duration_ns``."""
        if self.noiseless or duration_ns <= 0:
            return 0.0, 0.0, 0.0
        c = self.qubits[qubit]
        t_us = duration_ns * 1e-3
        decay1 = -math.expm1(-t_us / c.T1)
        decay2 = -math.expm1(-t_us / c.T2)
        pxy = decay1 / 4
        return pxy, pxy, max(0.0, decay2 / 2 - decay1 / 4)

    def to_dict(self) -> dict:
        out = {"id": self.id, "n_qubits": self.n_qubits, "noiseless": self.noiseless,
               "coupling": self.coupling.to_dict()}
        if self.noiseless:
            return out
        out["qubits"] = [vars(c).copy() for c in self.qubits]
        out["gates"] = {
            "sx": [{"qubit": q, "error": e, "duration": d}
                   for q, (e, d) in enumerate(zip(self.sx_error, self.sx_duration))],
            "x": [{"qubit": q, "error": e, "duration": d}
                  for q, (e, d) in enumerate(zip(self.x_error, self.x_duration))],
            "cx": [{"qubits": list(e), "error": self.cx_error[e], "duration": self.cx_duration[e]}
                   for e in sorted(self.cx_error)],
        }
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "BackendModel":
        try:
            n = int(data["n_qubits"])
            coupling = CouplingMap.from_dict(data["coupling"])
            noiseless = bool(data.get("noiseless", False))
            if noiseless:
                return cls(str(data["id"]), n, coupling, True)
            qubits = tuple(
                QubitCalibration(float(q["T1"]), float(q["T2"]), float(q["readout_p01"]),
                                 float(q["readout_p10"]), float(q["frequency"]))
                for q in data["qubits"]
            )
            gates = data["gates"]

            def per_qubit(name, key):
                vals = [None] * n
                for item in gates[name]:
                    vals[int(item["qubit"])] = float(item[key])
                if any(v is None for v in vals):
                    raise ProfileError(f"'{name}' calibration missing for some qubits")
                return tuple(vals)

            cx_error = {_edge(e["qubits"]): float(e["error"]) for e in gates["cx"]}
            cx_duration = {_edge(e["qubits"]): float(e["duration"]) for e in gates["cx"]}
            return cls(
                str(data["id"]), n, coupling, False, qubits,
                per_qubit("sx", "error"), per_qubit("x", "error"),
                per_qubit("sx", "duration"), per_qubit("x", "duration"),
                cx_error, cx_duration,
            )
        except (KeyError, TypeError) as exc:
            raise ProfileError(f"malformed backend profile: missing {exc}") from exc

    def with_zero_errors(self) -> "BackendModel":
        """Same device with every error rate zeroed and T1 = T2 = inf."""
        if self.noiseless:
            return self
        inf = math.inf
        return BackendModel(
            self.id + "_zeroed", self.n_qubits, self.coupling, False,
            tuple(QubitCalibration(inf, inf, 0.0, 0.0, c.frequency) for c in self.qubits),
            (0.0,) * self.n_qubits, (0.0,) * self.n_qubits, self.sx_duration, self.x_duration,
            {e: 0.0 for e in self.cx_error}, dict(self.cx_duration),
        )


def _edge(qubits) -> tuple[int, int]:
    a, b = (int(q) for q in qubits)
    return (a, b) if a < b else (b, a)


PRESETS = ("noiseless", "synth_guadalupe", "synth_mumbai", "synth_hanoi")


def noiseless_backend(n_qubits: int = 10) -> BackendModel:
    return BackendModel("noiseless", n_qubits, CouplingMap.complete(n_qubits), True)


def load_backend(name_or_path) -> BackendModel:
    """Load a shipped preset by name or a backend profile JSON file by path."""
    if isinstance(name_or_path, BackendModel):
        return name_or_path
    text = None
    if str(name_or_path) in PRESETS:
        text = resources.files("pqcexpr.profiles").joinpath(f"{name_or_path}.json").read_text()
    else:
        path = Path(name_or_path)
        if not path.exists():
            raise ProfileError(f"unknown backend {name_or_path!r} (presets: {', '.join(PRESETS)})")
        text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProfileError(f"backend profile is not valid JSON: {exc}") from exc
    return BackendModel.from_dict(data)


def synthetic_profile(profile_id: str, edges, *, t1: float, t2: float, sx_error: float,
                      cx_error: float, readout: float, seed: int, n_qubits: int = 10,
                      sx_duration: float = 35.5, cx_duration: float = 400.0,
                      spread: float = 0.25) -> BackendModel:
    """Calibration profile with per-qubit values jittered around the given means."""
    rng = substream(seed)

    def jitter(mean, size=None):
        return mean * np.exp(rng.normal(0.0, spread, size))

    qubits = []
    for _ in range(n_qubits):
        T1 = round(float(jitter(t1)), 3)
        T2 = min(round(float(jitter(t2)), 3), 2 * T1)
        qubits.append(QubitCalibration(T1, T2, round(float(jitter(readout * 0.8)), 5),
                                       round(float(jitter(readout * 1.2)), 5),
                                       round(float(4.9 + 0.3 * rng.random()), 4)))
    sx = tuple(round(float(v), 7) for v in jitter(sx_error, n_qubits))
    cmap = CouplingMap(n_qubits, edges)
    cx_err = {e: round(float(jitter(cx_error)), 6) for e in sorted(cmap.edges)}
    cx_dur = {e: round(float(cx_duration * (0.8 + 0.5 * rng.random())), 2) for e in sorted(cmap.edges)}
    return BackendModel(profile_id, n_qubits, cmap, False, tuple(qubits), sx, sx,
                        (sx_duration,) * n_qubits, (sx_duration,) * n_qubits, cx_err, cx_dur)


# -- statevector operations ---------------------------------------------------


def zero_state(n_qubits: int) -> np.ndarray:
    return zero_states(1, n_qubits)[0]


def apply_gate(state: np.ndarray, gate: Gate) -> np.ndarray:
    """Return ``gate`` applied to a single statevector."""
    if isinstance(gate.param, Sym):
        raise UnboundParameterError(f"{gate.kind.value} has unbound parameter")
    if gate.kind is GateKind.MEASURE:
        raise UnsupportedGateError("apply_gate does not handle MEASURE")
    n = int(state.shape[0]).bit_length() - 1
    return apply_matrix(state[None, :], gate_matrix(gate), gate.qubits, n)[0]


def simulate(circuit: Circuit) -> np.ndarray:
    state = zero_state(circuit.n_qubits)
    for g in circuit.gates:
        if g.kind is not GateKind.MEASURE:
            state = apply_gate(state, g)
    return state


def exact_zero_prob(circuit: Circuit) -> float:
    """``|<0...0| U |0...0>|^2`` for a bound circuit (measurements ignored)."""
    return float(min(1.0, abs(simulate(circuit)[0]) ** 2))


def _batched_matrix(gate: Gate, params: np.ndarray, negate: bool) -> np.ndarray:
    if isinstance(gate.param, Sym):
        angles = params[:, gate.param.index]
        return rotation_matrices(gate.kind, -angles if negate else angles)
    if gate.kind.parameterized:
        return rotation_matrices(gate.kind, [-gate.angle if negate else gate.angle])[0]
    return gate_matrix(gate)


def zero_prob_batch(circuit: Circuit, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """All-zeros probability of ``U(theta) U(phi)^dagger``, one row per parameter pair.

    Runs the compute-uncompute circuit directly on the abstract gate set, with
    per-row rotation matrices; ``theta`` and ``phi`` have shape ``(B, n_params)``.
    """
    n = circuit.n_qubits
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    gates = [g for g in circuit.gates if g.kind is not GateKind.MEASURE]
    states = zero_states(theta.shape[0], n)
    for g in gates:
        states = apply_matrix(states, _batched_matrix(g, theta, False), g.qubits, n)
    for g in reversed(gates):
        if g.kind is GateKind.SX:
            raise UnsupportedGateError("SX cannot be inverted before transpilation")
        states = apply_matrix(states, _batched_matrix(g, phi, True), g.qubits, n)
    return np.minimum(np.abs(states[:, 0]) ** 2, 1.0)


# -- sampling -------------------------------------------------------------------


def _measured(circuit: Circuit) -> Circuit:
    body = [g for g in circuit.gates if g.kind is not GateKind.MEASURE]
    measured = {g.qubits[0] for g in circuit.gates if g.kind is GateKind.MEASURE}
    if measured and measured != set(range(circuit.n_qubits)):
        raise UnsupportedGateError("sampling requires a full measurement layer")
    return Circuit(circuit.n_qubits, body)


def _draw(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw; ``cum`` is ``(dim,)`` or ``(shots, dim)``."""
    if cum.ndim == 1:
        return np.minimum(np.searchsorted(cum, u * cum[-1], side="right"), cum.shape[0] - 1)
    return np.minimum((cum <= (u * cum[:, -1])[:, None]).sum(axis=1), cum.shape[1] - 1)


def _apply_pauli_rows(states, rows, codes, qubits, n):
    """Apply Pauli string ``codes[r]`` (base-4 digits, first qubit most significant)."""
    k = len(qubits)
    for code in np.unique(codes):
        sel = rows[codes == code]
        sub = states[sel]
        for j, q in enumerate(qubits):
            digit = (int(code) >> (2 * (k - 1 - j))) & 3
            if digit:
                sub = apply_matrix(sub, _PAULI[digit], (q,), n)
        states[sel] = sub


def run_trajectories(circuit: Circuit, backend: BackendModel, shots: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Measured basis index per shot (little-endian integers, readout errors applied)."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    body = _measured(circuit)
    n = body.n_qubits
    if backend.noiseless:
        state = simulate(body)
        cum = np.cumsum(np.abs(state) ** 2)
        return _draw(cum, rng.random(shots))
    if n > backend.n_qubits:
        raise ProfileError(f"circuit uses {n} qubits, backend {backend.id!r} has {backend.n_qubits}")
    states = zero_states(shots, n)
    for g in body.gates:
        if g.kind not in (GateKind.RZ, GateKind.SX, GateKind.X, GateKind.CX):
            raise UnsupportedGateError(f"noisy simulation needs native gates, got {g.kind.value}")
        states = apply_matrix(states, gate_matrix(g), g.qubits, n)
        if g.kind is GateKind.RZ:
            continue
        p_dep = backend.gate_error(g)
        if p_dep > 0:
            rows = np.flatnonzero(rng.random(shots) < p_dep)
            if rows.size:
                codes = rng.integers(1, 4 ** len(g.qubits), size=rows.size)
                _apply_pauli_rows(states, rows, codes, g.qubits, n)
        duration = backend.gate_duration(g)
        for q in g.qubits:
            px, py, pz = backend.relaxation_probs(q, duration)
            if px + py + pz <= 0:
                continue
            u = rng.random(shots)
            codes = np.where(u < px, 1, np.where(u < px + py, 2, np.where(u < px + py + pz, 3, 0)))
            rows = np.flatnonzero(codes)
            if rows.size:
                _apply_pauli_rows(states, rows, codes[rows], (q,), n)
    cum = np.cumsum(np.abs(states) ** 2, axis=1)
    outcomes = _draw(cum, rng.random(shots))
    for q in range(n):
        cal = backend.qubits[q]
        if cal.readout_p01 <= 0 and cal.readout_p10 <= 0:
            continue
        bit = (outcomes >> q) & 1
        flip_p = np.where(bit == 1, cal.readout_p10, cal.readout_p01)
        flips = rng.random(shots) < flip_p
        outcomes = outcomes ^ (flips.astype(outcomes.dtype) << q)
    return outcomes


def sample_counts(circuit: Circuit, shots: int, backend: BackendModel | None = None,
                  rng: np.random.Generator | None = None) -> dict[str, int]:
    """Histogram of measured bitstrings (qubit ``n-1`` leftmost)."""
    backend = backend or noiseless_backend(max(circuit.n_qubits, 1))
    rng = rng if rng is not None else substream(0)
    outcomes = run_trajectories(circuit, backend, shots, rng)
    values, counts = np.unique(outcomes, return_counts=True)
    n = circuit.n_qubits
    return {format(int(v), f"0{n}b"): int(c) for v, c in zip(values, counts)}
