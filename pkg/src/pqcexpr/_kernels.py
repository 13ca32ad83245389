"""Batched statevector kernels shared by the circuit oracle and the simulator.

States are stored row-wise as ``(batch, 2**n)`` complex arrays in little-endian
order: amplitude index ``sum(b_q << q)``.  A k-qubit gate matrix acting on
``qubits = (q0, q1, ...)`` uses the local index ``b_q0 * 2**(k-1) + ... ``, i.e.
the first listed qubit is the most significant one, so the textbook CX matrix
applies to ``(control, target)``.
"""
from __future__ import annotations

import numpy as np


def apply_matrix(states: np.ndarray, mat: np.ndarray, qubits, n: int) -> np.ndarray:
    """Apply ``mat`` to ``qubits`` of every row of ``states``.

    ``mat`` is either a single ``(d, d)`` matrix or a stack ``(batch, d, d)``
    with one matrix per row.
    """
    k = len(qubits)
    d = 1 << k
    b = states.shape[0]
    t = states.reshape((b,) + (2,) * n)
    axes = [n - q for q in qubits]
    dest = list(range(n + 1 - k, n + 1))
    t = np.moveaxis(t, axes, dest)
    shape = t.shape
    flat = t.reshape(b, -1, d)
    if mat.ndim == 2:
        flat = flat @ mat.T
    else:
        flat = flat @ np.swapaxes(mat, 1, 2)
    t = np.moveaxis(flat.reshape(shape), dest, axes)
    return np.ascontiguousarray(t.reshape(b, 1 << n))


def zero_states(batch: int, n: int) -> np.ndarray:
    states = np.zeros((batch, 1 << n), dtype=complex)
    states[:, 0] = 1.0
    return states
