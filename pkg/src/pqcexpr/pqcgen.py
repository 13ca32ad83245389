"""Random PQC generator and the hardware-efficient real-amplitudes family."""
from __future__ import annotations

import re
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

from .circuit import Circuit, Gate, GateKind, Sym, parse_circuit
from .errors import LibraryLookupError
from .sim import substream

SINGLE_QUBIT_DRAW = (GateKind.RX, GateKind.RY, GateKind.RZ, GateKind.H, GateKind.I)
ENTANGLER_DRAW = (GateKind.CX, GateKind.CRX, GateKind.CRY, GateKind.CRZ, GateKind.SWAP)
ENTANGLEMENT_PATTERNS = ("full", "linear", "circular", "sca")


@dataclass(frozen=True)
class GenConfig:
    n_qubits: int
    reps: int = 1
    seed: int = 0
    p_second_single_layer: float = 0.5
    p_trailing_layers: float = 0.5
    max_entanglers_per_layer: int | None = None  # None -> n_qubits

    def __post_init__(self):
        if not 1 <= self.n_qubits <= 10:
            raise ValueError("n_qubits must be in 1..10")
        if not 1 <= self.reps <= 3:
            raise ValueError("reps must be in 1..3")
        for p in (self.p_second_single_layer, self.p_trailing_layers):
            if not 0.0 <= p <= 1.0:
                raise ValueError("layer probabilities must lie in [0, 1]")
        if self.max_entanglers_per_layer is not None and self.max_entanglers_per_layer < 1:
            raise ValueError("max_entanglers_per_layer must be >= 1")

    @property
    def max_entanglers(self) -> int:
        return self.max_entanglers_per_layer or self.n_qubits

    def to_dict(self) -> dict:
        return asdict(self)


class _Builder:
    def __init__(self):
        self.gates: list[Gate] = []
        self.n_params = 0

    def add(self, kind: GateKind, qubits):
        param = None
        if kind.parameterized:
            param = Sym(self.n_params)
            self.n_params += 1
        self.gates.append(Gate(kind, tuple(qubits), param))


def random_pqc(cfg: GenConfig) -> Circuit:
    """Layered random circuit; identical output for identical ``cfg``."""
    rng = substream(cfg.seed)
    n = cfg.n_qubits
    b = _Builder()

    def single_layer():
        for q in range(n):
            b.add(SINGLE_QUBIT_DRAW[rng.integers(len(SINGLE_QUBIT_DRAW))], (q,))

    blocks = []
    for _ in range(cfg.reps):
        start = len(b.gates)
        single_layer()
        if rng.random() < cfg.p_second_single_layer:
            single_layer()
        if n >= 2:
            for _ in range(int(rng.integers(1, cfg.max_entanglers + 1))):
                kind = ENTANGLER_DRAW[rng.integers(len(ENTANGLER_DRAW))]
                ctrl, tgt = (int(x) for x in rng.choice(n, size=2, replace=False))
                b.add(kind, (ctrl, tgt))
        if rng.random() < cfg.p_trailing_layers:
            for _ in range(int(rng.integers(1, 3))):
                single_layer()
        blocks.append((start, len(b.gates)))
    return Circuit(n, b.gates, meta={"generator": cfg.to_dict(), "blocks": blocks})


def entangling_pairs(n_qubits: int, pattern: str, block: int = 0) -> list[tuple[int, int]]:
    """CX (control, target) list for one entangling layer."""
    n = n_qubits
    if pattern not in ENTANGLEMENT_PATTERNS:
        raise ValueError(f"unknown entanglement {pattern!r}")
    if n < 2:
        return []
    linear = [(i, i + 1) for i in range(n - 1)]
    if pattern == "full":
        return [(i, j) for i in range(n) for j in range(i + 1, n)]
    if pattern == "linear" or n == 2:
        return linear
    circular = [(n - 1, 0)] + linear
    if pattern == "circular":
        return circular
    shift = block % n
    pairs = circular[shift:] + circular[:shift]
    if block % 2 == 1:
        pairs = [(t, c) for c, t in pairs]
    return pairs


def real_amplitudes(n_qubits: int, reps: int, entanglement: str = "full") -> Circuit:
    """RY layer followed by ``reps`` blocks of [CX entangler, RY layer]."""
    if not 1 <= n_qubits <= 4:
        raise ValueError("real_amplitudes supports 1..4 qubits")
    if not 1 <= reps <= 4:
        raise ValueError("real_amplitudes supports 1..4 repetitions")
    b = _Builder()
    for q in range(n_qubits):
        b.add(GateKind.RY, (q,))
    for block in range(reps):
        for c, t in entangling_pairs(n_qubits, entanglement, block):
            b.add(GateKind.CX, (c, t))
        for q in range(n_qubits):
            b.add(GateKind.RY, (q,))
    return Circuit(n_qubits, b.gates, meta={"family": "real_amplitudes", "reps": reps,
                                             "entanglement": entanglement})


def real_amplitudes_grid() -> list[tuple[str, Circuit]]:
    """The 64-circuit validation set: 1..4 qubits x 1..4 reps x 4 patterns."""
    out = []
    for n in range(1, 5):
        for reps in range(1, 5):
            for pattern in ENTANGLEMENT_PATTERNS:
                out.append((f"ra_{n}q_l{reps}_{pattern}", real_amplitudes(n, reps, pattern)))
    return out


_RA_ALIAS = re.compile(r"^ra_(\d+)q_l(\d+)_(full|linear|circular|sca)$")
_IDLE_ALIAS = re.compile(r"^idle_(\d+)q$")


def library_names(library_dir=None) -> list[str]:
    root = Path(library_dir) if library_dir else resources.files("pqcexpr.library")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def circuit_library(name: str, library_dir=None) -> Circuit:
    """Circuit from the JSON library directory, or an ``ra_*`` / ``idle_*`` alias."""
    root = Path(library_dir) if library_dir else resources.files("pqcexpr.library")
    candidate = root.joinpath(f"{name}.json")
    if candidate.is_file():
        return parse_circuit(candidate.read_text(), "json")
    m = _RA_ALIAS.match(name)
    if m:
        return real_amplitudes(int(m.group(1)), int(m.group(2)), m.group(3))
    m = _IDLE_ALIAS.match(name)
    if m:
        return Circuit(int(m.group(1)))
    raise LibraryLookupError(f"no circuit named {name!r} in the library")
