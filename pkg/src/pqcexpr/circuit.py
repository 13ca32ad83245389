"""Circuit intermediate representation.

A :class:`Circuit` is an immutable, ordered list of :class:`Gate` objects over
``n_qubits`` qubits.  Rotation angles are either bound floats (radians) or
:class:`Sym` references into a dense parameter vector.  Qubit ordering is
little-endian throughout: qubit 0 is the least significant bit of a basis
index.
"""
from __future__ import annotations

import ast
import enum
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._kernels import apply_matrix
from .errors import (
    CircuitParseError,
    CircuitValidationError,
    ParameterArityError,
    SizeGuardError,
    UnboundParameterError,
    UnsupportedGateError,
)

MAX_QUBITS = 10
MAX_UNITARY_QUBITS = 6


class GateKind(str, enum.Enum):
    RX = "RX"
    RY = "RY"
    RZ = "RZ"
    H = "H"
    I = "I"  # noqa: E741
    X = "X"
    SX = "SX"
    CX = "CX"
    CRX = "CRX"
    CRY = "CRY"
    CRZ = "CRZ"
    SWAP = "SWAP"
    MEASURE = "MEASURE"

    @property
    def arity(self) -> int:
        return 2 if self in TWO_QUBIT_KINDS else 1

    @property
    def parameterized(self) -> bool:
        return self in PARAMETERIZED_KINDS


TWO_QUBIT_KINDS = frozenset({GateKind.CX, GateKind.CRX, GateKind.CRY, GateKind.CRZ, GateKind.SWAP})
PARAMETERIZED_KINDS = frozenset(
    {GateKind.RX, GateKind.RY, GateKind.RZ, GateKind.CRX, GateKind.CRY, GateKind.CRZ}
)
NATIVE_KINDS = frozenset({GateKind.RZ, GateKind.X, GateKind.SX, GateKind.CX, GateKind.MEASURE})


@dataclass(frozen=True)
class Sym:
    """Angle ``scale * params[index] + offset``; plain symbols use the defaults."""

    index: int
    scale: float = 1.0
    offset: float = 0.0

    def value(self, params) -> float:
        return self.scale * float(params[self.index]) + self.offset

    def shifted(self, scale: float = 1.0, offset: float = 0.0) -> "Sym":
        """``scale * self + offset``."""
        return Sym(self.index, self.scale * scale, self.offset * scale + offset)


Param = Sym | float | None


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    qubits: tuple[int, ...]
    param: Param = None

    def __post_init__(self):
        kind = GateKind(self.kind)
        object.__setattr__(self, "kind", kind)
        qubits = tuple(int(q) for q in self.qubits)
        object.__setattr__(self, "qubits", qubits)
        if len(qubits) != kind.arity:
            raise CircuitValidationError(f"{kind.value} acts on {kind.arity} qubit(s), got {qubits}")
        if len(set(qubits)) != len(qubits):
            raise CircuitValidationError(f"{kind.value} qubits must be distinct, got {qubits}")
        if any(q < 0 for q in qubits):
            raise CircuitValidationError(f"negative qubit index in {qubits}")
        if kind.parameterized:
            if self.param is None:
                raise CircuitValidationError(f"{kind.value} requires a parameter")
            if not isinstance(self.param, Sym):
                object.__setattr__(self, "param", float(self.param))
        elif self.param is not None:
            raise CircuitValidationError(f"{kind.value} takes no parameter")

    @property
    def is_bound(self) -> bool:
        return not isinstance(self.param, Sym)

    @property
    def angle(self) -> float:
        if isinstance(self.param, Sym):
            raise UnboundParameterError(f"{self.kind.value} on {self.qubits} has unbound parameter")
        return self.param

    def on(self, *qubits: int) -> "Gate":
        return Gate(self.kind, qubits, self.param)


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple[Gate, ...] = ()
    n_params: int | None = None
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        n = self.n_qubits
        if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_QUBITS:
            raise CircuitValidationError(f"n_qubits must be in 1..{MAX_QUBITS}, got {n}")
        object.__setattr__(self, "n_qubits", int(n))
        used = set()
        seen_measure = False
        for g in self.gates:
            if any(q >= n for q in g.qubits):
                raise CircuitValidationError(f"{g.kind.value} on {g.qubits} exceeds {n} qubit(s)")
            if g.kind is GateKind.MEASURE:
                seen_measure = True
            elif seen_measure:
                raise CircuitValidationError("MEASURE is only allowed in a trailing measurement layer")
            if isinstance(g.param, Sym):
                used.add(g.param.index)
        n_params = max(used) + 1 if used else 0
        if self.n_params is None:
            object.__setattr__(self, "n_params", n_params)
        if used != set(range(self.n_params)):
            raise CircuitValidationError(
                f"parameter symbols {sorted(used)} do not cover 0..{self.n_params - 1}"
            )

    def __len__(self) -> int:
        return len(self.gates)

    @property
    def is_bound(self) -> bool:
        return self.n_params == 0

    def count(self, kind: GateKind) -> int:
        return sum(g.kind is kind for g in self.gates)

    def without_measurements(self) -> "Circuit":
        return Circuit(self.n_qubits, [g for g in self.gates if g.kind is not GateKind.MEASURE],
                       meta=dict(self.meta))

    def with_measurements(self) -> "Circuit":
        base = self.without_measurements()
        gates = list(base.gates) + [Gate(GateKind.MEASURE, (q,)) for q in range(self.n_qubits)]
        return Circuit(self.n_qubits, gates, meta=dict(self.meta))


def bind(circuit: Circuit, values: Sequence[float]) -> Circuit:
    """Return a copy with every ``Sym(i)`` replaced by ``values[i]``."""
    values = np.asarray(values, dtype=float).ravel()
    if len(values) != circuit.n_params:
        raise ParameterArityError(f"expected {circuit.n_params} values, got {len(values)}")
    gates = [
        Gate(g.kind, g.qubits, g.param.value(values)) if isinstance(g.param, Sym) else g
        for g in circuit.gates
    ]
    return Circuit(circuit.n_qubits, gates, meta=dict(circuit.meta))


_SELF_INVERSE = frozenset({GateKind.H, GateKind.X, GateKind.I, GateKind.CX, GateKind.SWAP})


def inverse_gate(gate: Gate) -> Gate:
    if gate.kind in PARAMETERIZED_KINDS:
        return Gate(gate.kind, gate.qubits, -gate.angle)
    if gate.kind in _SELF_INVERSE:
        return gate
    if gate.kind is GateKind.SX:
        raise UnsupportedGateError("SX cannot be inverted before transpilation")
    raise UnsupportedGateError(f"cannot invert {gate.kind.value}")


def inverse(circuit: Circuit) -> Circuit:
    if not circuit.is_bound:
        raise UnboundParameterError("inverse requires a fully bound circuit")
    return Circuit(circuit.n_qubits, [inverse_gate(g) for g in reversed(circuit.gates)])


def compose(first: Circuit, second: Circuit) -> Circuit:
    """``first`` followed by ``second`` (both bound, same width)."""
    if first.n_qubits != second.n_qubits:
        raise CircuitValidationError("cannot compose circuits of different width")
    if not (first.is_bound and second.is_bound):
        raise UnboundParameterError("compose requires bound circuits")
    return Circuit(first.n_qubits, first.gates + second.gates)


def compute_uncompute(circuit: Circuit, theta, phi) -> Circuit:
    """``U(theta)`` followed by ``U(phi)^dagger`` on the abstract gate set."""
    body = circuit.without_measurements()
    return compose(bind(body, theta), inverse(bind(body, phi)))


# -- gate matrices ---------------------------------------------------------

_SQ2 = 1 / math.sqrt(2)
_FIXED = {
    GateKind.H: np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex),
    GateKind.I: np.eye(2, dtype=complex),
    GateKind.X: np.array([[0, 1], [1, 0]], dtype=complex),
    GateKind.SX: 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]], dtype=complex),
    GateKind.CX: np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    GateKind.SWAP: np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
}


def rotation_matrices(kind: GateKind, angles) -> np.ndarray:
    """Stack of rotation matrices, shape ``(len(angles), d, d)``."""
    t = np.asarray(angles, dtype=float).reshape(-1) / 2
    c, s = np.cos(t), np.sin(t)
    base = {GateKind.RX: GateKind.RX, GateKind.CRX: GateKind.RX,
            GateKind.RY: GateKind.RY, GateKind.CRY: GateKind.RY,
            GateKind.RZ: GateKind.RZ, GateKind.CRZ: GateKind.RZ}[kind]
    m = np.zeros((len(t), 2, 2), dtype=complex)
    if base is GateKind.RX:
        m[:, 0, 0] = m[:, 1, 1] = c
        m[:, 0, 1] = m[:, 1, 0] = -1j * s
    elif base is GateKind.RY:
        m[:, 0, 0] = m[:, 1, 1] = c
        m[:, 0, 1] = -s
        m[:, 1, 0] = s
    else:
        m[:, 0, 0] = np.exp(-1j * t)
        m[:, 1, 1] = np.exp(1j * t)
    if kind.arity == 1:
        return m
    out = np.zeros((len(t), 4, 4), dtype=complex)
    out[:, 0, 0] = out[:, 1, 1] = 1.0
    out[:, 2:, 2:] = m
    return out


def gate_matrix(gate: Gate) -> np.ndarray:
    if gate.kind is GateKind.MEASURE:
        raise UnsupportedGateError("MEASURE has no unitary matrix")
    if gate.kind.parameterized:
        return rotation_matrices(gate.kind, [gate.angle])[0]
    return _FIXED[gate.kind]


def unitary(circuit: Circuit) -> np.ndarray:
    """Dense ``2**n x 2**n`` unitary of a bound, measurement-free circuit."""
    n = circuit.n_qubits
    if n > MAX_UNITARY_QUBITS:
        raise SizeGuardError(f"unitary limited to {MAX_UNITARY_QUBITS} qubits, got {n}")
    dim = 1 << n
    cols = np.eye(dim, dtype=complex)
    for g in circuit.gates:
        if g.kind is GateKind.MEASURE:
            raise UnsupportedGateError("unitary of a circuit containing MEASURE")
        cols = apply_matrix(cols, gate_matrix(g), g.qubits, n)
    return cols.T.copy()


# -- JSON I/O --------------------------------------------------------------


def circuit_to_dict(circuit: Circuit) -> dict:
    gates = []
    for g in circuit.gates:
        if g.param is None:
            p = None
        elif isinstance(g.param, Sym):
            p = {"sym": g.param.index}
            if g.param.scale != 1.0 or g.param.offset != 0.0:
                p.update(scale=g.param.scale, offset=g.param.offset)
        else:
            p = {"val": g.param}
        gates.append({"kind": g.kind.value, "qubits": list(g.qubits), "param": p})
    return {"n_qubits": circuit.n_qubits, "n_params": circuit.n_params, "gates": gates}


def circuit_from_dict(data: dict) -> Circuit:
    try:
        gates = []
        for g in data["gates"]:
            p = g.get("param")
            if p is None:
                param = None
            elif "sym" in p:
                param = Sym(int(p["sym"]), float(p.get("scale", 1.0)), float(p.get("offset", 0.0)))
            else:
                param = float(p["val"])
            gates.append(Gate(GateKind(g["kind"]), tuple(g["qubits"]), param))
        return Circuit(int(data["n_qubits"]), gates, data.get("n_params"))
    except (KeyError, TypeError) as exc:
        raise CircuitValidationError(f"malformed circuit object: {exc!r}") from exc
    except ValueError as exc:
        if isinstance(exc, CircuitValidationError):
            raise
        raise CircuitValidationError(str(exc)) from exc


# -- QASM subset ------------------------------------------------------------

_QASM_NAMES = {
    "rx": GateKind.RX, "ry": GateKind.RY, "rz": GateKind.RZ, "h": GateKind.H,
    "id": GateKind.I, "x": GateKind.X, "sx": GateKind.SX, "cx": GateKind.CX,
    "crx": GateKind.CRX, "cry": GateKind.CRY, "crz": GateKind.CRZ, "swap": GateKind.SWAP,
}
_QASM_OUT = {v: k for k, v in _QASM_NAMES.items()}

_GATE_RE = re.compile(r"^([a-z]+)\s*(?:\((.*)\))?\s+(.+)$", re.S)
_QARG_RE = re.compile(r"^([A-Za-z_]\w*)\s*\[\s*(\d+)\s*\]$")
_SYM_NAME = "theta"


def _eval_angle(expr: str):
    """Angle literal: arithmetic over numbers, ``pi`` and at most one ``theta[i]``.

    Returns a float, or a :class:`Sym` when the expression is affine in a
    parameter symbol.
    """
    # values are (offset, scale, index) with index None for constants

    def const(v):
        return (float(v), 0.0, None)

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return const(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return const(math.pi)
        if (isinstance(node, ast.Subscript) and isinstance(node.value, ast.Name)
                and node.value.id == _SYM_NAME and isinstance(node.slice, ast.Constant)
                and isinstance(node.slice.value, int)):
            return (0.0, 1.0, node.slice.value)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            o, k, i = ev(node.operand)
            return (-o, -k, i) if isinstance(node.op, ast.USub) else (o, k, i)
        if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.Add, ast.Sub, ast.Mult, ast.Div)):
            lo, lk, li = ev(node.left)
            ro, rk, ri = ev(node.right)
            if isinstance(node.op, (ast.Add, ast.Sub)):
                if li is not None and ri is not None and li != ri:
                    raise ValueError(f"angle mixes two symbols: {expr!r}")
                sign = 1.0 if isinstance(node.op, ast.Add) else -1.0
                return (lo + sign * ro, lk + sign * rk, li if li is not None else ri)
            if isinstance(node.op, ast.Mult):
                if li is not None and ri is not None:
                    raise ValueError(f"angle is not affine: {expr!r}")
                if li is None:
                    return (lo * ro, lo * rk, ri)
                return (lo * ro, lk * ro, li)
            if ri is not None:
                raise ValueError(f"division by a symbol: {expr!r}")
            return (lo / ro, lk / ro, li)
        raise ValueError(f"unsupported angle expression {expr!r}")

    offset, scale, index = ev(ast.parse(expr.strip(), mode="eval"))
    if index is None:
        return offset
    return Sym(index, scale, offset)


def _format_angle(param) -> str:
    if not isinstance(param, Sym):
        return repr(param)
    out = f"{_SYM_NAME}[{param.index}]"
    if param.scale != 1.0:
        out = f"{param.scale!r}*{out}"
    if param.offset != 0.0:
        out = f"{out} + {param.offset!r}"
    return out


def _statements(text: str):
    """Yield ``(statement, (line, column))`` with ``//`` comments stripped."""
    chars: list[str] = []
    start = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        for colno, ch in enumerate(raw.split("//", 1)[0], start=1):
            if ch == ";":
                yield "".join(chars).strip(), start or (lineno, colno)
                chars, start = [], None
                continue
            if start is None and not ch.isspace():
                start = (lineno, colno)
            chars.append(ch)
        chars.append(" ")
    rest = "".join(chars).strip()
    if rest:
        raise CircuitParseError(f"missing ';' after {rest!r}", *start)


def parse_qasm(text: str) -> Circuit:
    n_qubits = None
    qreg = None
    gates: list[Gate] = []
    header_seen = False
    for stmt, (line, col) in _statements(text):
        if not stmt:
            continue
        if not header_seen:
            if not re.fullmatch(r"OPENQASM\s+[23](\.\d+)?", stmt):
                raise CircuitParseError("expected 'OPENQASM 2.0' header", line, col)
            header_seen = True
            continue
        if stmt.startswith("include"):
            continue
        m = re.fullmatch(r"(qreg|creg)\s+([A-Za-z_]\w*)\s*\[\s*(\d+)\s*\]", stmt)
        if m:
            if m.group(1) == "qreg":
                if qreg is not None:
                    raise CircuitParseError("only one quantum register is supported", line, col)
                qreg, n_qubits = m.group(2), int(m.group(3))
            continue
        if qreg is None:
            raise CircuitParseError("gate before qreg declaration", line, col)
        if stmt.startswith("measure"):
            m = re.fullmatch(r"measure\s+(.+?)\s*->\s*(.+)", stmt)
            if not m:
                raise CircuitParseError("malformed measure statement", line, col)
            src = m.group(1).strip()
            if src == qreg:
                qs = list(range(n_qubits))
            else:
                qm = _QARG_RE.match(src)
                if not qm or qm.group(1) != qreg:
                    raise CircuitParseError(f"bad measure operand {src!r}", line, col)
                qs = [int(qm.group(2))]
            for q in qs:
                gates.append(_checked_gate(GateKind.MEASURE, (q,), None, n_qubits, line, col))
            continue
        m = _GATE_RE.match(stmt)
        if not m or m.group(1) not in _QASM_NAMES:
            name = stmt.split()[0].split("(")[0]
            raise CircuitParseError(f"unknown gate or statement {name!r}", line, col)
        kind = _QASM_NAMES[m.group(1)]
        param = None
        if m.group(2) is not None:
            try:
                param = _eval_angle(m.group(2))
            except (ValueError, SyntaxError, ZeroDivisionError) as exc:
                raise CircuitParseError(str(exc), line, col) from exc
        qubits = []
        for arg in m.group(3).split(","):
            qm = _QARG_RE.match(arg.strip())
            if not qm or qm.group(1) != qreg:
                raise CircuitParseError(f"bad qubit operand {arg.strip()!r}", line, col)
            qubits.append(int(qm.group(2)))
        gates.append(_checked_gate(kind, tuple(qubits), param, n_qubits, line, col))
    if not header_seen:
        raise CircuitParseError("empty program", 1, 1)
    if n_qubits is None:
        raise CircuitParseError("no qreg declared", 1, 1)
    return Circuit(n_qubits, gates)


def _checked_gate(kind, qubits, param, n_qubits, line, col) -> Gate:
    if any(q >= n_qubits for q in qubits):
        raise CircuitValidationError(
            f"line {line}, column {col}: qubit {max(qubits)} out of range for {n_qubits}-qubit register"
        )
    if kind.parameterized and param is None:
        raise CircuitParseError(f"{kind.value} needs an angle", line, col)
    if not kind.parameterized and param is not None:
        raise CircuitParseError(f"{kind.value} takes no angle", line, col)
    try:
        return Gate(kind, qubits, param)
    except CircuitValidationError as exc:
        raise CircuitParseError(str(exc), line, col) from exc


def to_qasm(circuit: Circuit) -> str:
    n = circuit.n_qubits
    lines = ["OPENQASM 2.0;", 'include "qelib1.inc";', f"qreg q[{n}];"]
    if any(g.kind is GateKind.MEASURE for g in circuit.gates):
        lines.append(f"creg c[{n}];")
    for g in circuit.gates:
        if g.kind is GateKind.MEASURE:
            lines.append(f"measure q[{g.qubits[0]}] -> c[{g.qubits[0]}];")
            continue
        args = ", ".join(f"q[{q}]" for q in g.qubits)
        name = _QASM_OUT[g.kind]
        if g.param is None:
            lines.append(f"{name} {args};")
        else:
            lines.append(f"{name}({_format_angle(g.param)}) {args};")
    return "\n".join(lines) + "\n"


def parse_circuit(text: str, format: str = "json") -> Circuit:
    """Parse a circuit from ``json`` or ``qasm`` (minimal OpenQASM 2 subset) text."""
    if format == "json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CircuitParseError(exc.msg, exc.lineno, exc.colno) from exc
        return circuit_from_dict(data)
    if format in ("qasm", "qasm-subset"):
        return parse_qasm(text)
    raise ValueError(f"unknown circuit format {format!r}")


def serialize_circuit(circuit: Circuit, format: str = "json") -> str:
    if format == "json":
        return json.dumps(circuit_to_dict(circuit))
    if format in ("qasm", "qasm-subset"):
        return to_qasm(circuit)
    raise ValueError(f"unknown circuit format {format!r}")


def load_circuit(path) -> Circuit:
    path = Path(path)
    fmt = "qasm" if path.suffix.lower() in (".qasm", ".qasm2") else "json"
    return parse_circuit(path.read_text(), fmt)


def circuit_from_gates(n_qubits: int, items: Iterable[tuple]) -> Circuit:
    """Shorthand: ``[("H", 0), ("CX", 0, 1), ("RX", 0, Sym(0))]``."""
    gates = []
    for item in items:
        kind = GateKind(item[0])
        qubits = tuple(item[1:1 + kind.arity])
        param = item[1 + kind.arity] if len(item) > 1 + kind.arity else None
        gates.append(Gate(kind, qubits, param))
    return Circuit(n_qubits, gates)
