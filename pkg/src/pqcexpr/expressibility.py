"""Ground-truth expressibility: KL divergence of sampled fidelities from Haar."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circuit import Circuit, compute_uncompute
from .sim import (
    BackendModel,
    exact_zero_prob,
    load_backend,
    noiseless_backend,
    run_trajectories,
    substream,
    zero_prob_batch,
)
from .transpile import transpile

MODES = ("exact", "sampled", "noisy")
TWO_PI = 2 * math.pi

# substream keys: (seed, stream kind, pair index)
_PARAM_STREAM = 0
_SHOT_STREAM = 1


def haar_bin_log_probs(n_qubits: int, n_bins: int = 75) -> np.ndarray:
    """Log of the Haar fidelity mass in each uniform bin on [0, 1].

    Bin ``[a, b]`` holds ``(1-a)**(N-1) - (1-b)**(N-1)``; evaluated in log space
    so the far tail stays finite for large ``N``.
    """
    if n_qubits < 1 or n_bins < 2:
        raise ValueError("need n_qubits >= 1 and n_bins >= 2")
    m = (1 << n_qubits) - 1
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    a, b = edges[:-1], edges[1:]
    with np.errstate(divide="ignore"):
        log_upper = m * np.log1p(-a)
        ratio = np.where(b < 1.0, m * (np.log1p(-b) - np.log1p(-a)), -np.inf)
    return log_upper + np.log(-np.expm1(ratio))


def haar_bin_probs(n_qubits: int, n_bins: int = 75) -> np.ndarray:
    """Haar fidelity mass per bin; tail bins may underflow to 0 for n >= 8."""
    if n_qubits < 1 or n_bins < 2:
        raise ValueError("need n_qubits >= 1 and n_bins >= 2")
    m = (1 << n_qubits) - 1
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    upper = (1.0 - edges) ** m
    return upper[:-1] - upper[1:]


def kl_divergence(p, q) -> float:
    """``sum p_k ln(p_k / q_k)`` in nats with ``0 ln 0 = 0``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("p and q must have the same length")
    if np.any(q <= 0):
        raise ValueError("q must be strictly positive")
    if abs(p.sum() - 1) > 1e-9 or abs(q.sum() - 1) > 1e-9:
        raise ValueError("p and q must each sum to 1")
    nz = p > 0
    return max(0.0, float(np.sum(p[nz] * (np.log(p[nz]) - np.log(q[nz])))))


def kl_divergence_log_q(p, log_q) -> float:
    """KL divergence with the reference given as log-probabilities."""
    p = np.asarray(p, dtype=float)
    nz = p > 0
    return max(0.0, float(np.sum(p[nz] * (np.log(p[nz]) - log_q[nz]))))


@dataclass
class FidelityHistogram:
    counts: np.ndarray
    n_bins: int = 75

    @classmethod
    def from_fidelities(cls, fidelities, n_bins: int = 75) -> "FidelityHistogram":
        f = np.clip(np.asarray(fidelities, dtype=float), 0.0, 1.0)
        idx = np.minimum((f * n_bins).astype(int), n_bins - 1)
        return cls(np.bincount(idx, minlength=n_bins).astype(int), n_bins)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def probs(self) -> np.ndarray:
        return self.counts / self.total

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_bins + 1)


@dataclass
class ExpressibilityResult:
    expr: float
    histogram: FidelityHistogram
    num_pairs: int
    mode: str
    shots_per_pair: int = 0

    def to_dict(self) -> dict:
        return {
            "expr": self.expr,
            "n_bins": self.histogram.n_bins,
            "num_pairs": self.num_pairs,
            "mode": self.mode,
            "shots": self.shots_per_pair,
            "histogram_counts": self.histogram.counts.tolist(),
        }


@dataclass
class ExprConfig:
    num_pairs: int = 5000
    n_bins: int = 75
    mode: str = "exact"
    backend: BackendModel | str | None = None
    shots: int = 1024
    seed: int = 0
    param_range: float = TWO_PI
    literal: bool = False  # exact mode: transpile every pair instead of the batched path


def sample_parameters(n_params: int, num_pairs: int, seed: int, param_range: float = TWO_PI):
    """``(theta, phi)``, each ``(num_pairs, n_params)`` uniform on ``[0, param_range)``."""
    rng = substream(seed, _PARAM_STREAM)
    draws = rng.random((num_pairs, 2, n_params)) * param_range
    return draws[:, 0, :], draws[:, 1, :]


def sample_fidelities(circuit: Circuit, num_pairs: int, mode: str = "exact",
                      backend: BackendModel | None = None, shots: int = 1024, seed: int = 0,
                      *, param_range: float = TWO_PI, literal: bool = False,
                      force_equal: bool = False, batch: int = 2048) -> np.ndarray:
    """One fidelity per random parameter pair via compute-uncompute.

    ``exact`` reads the all-zeros probability from the statevector; ``sampled``
    and ``noisy`` use the all-zeros frequency over ``shots`` trajectories of the
    transpiled circuit.  ``force_equal`` reuses theta as phi (test hook).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if num_pairs < 1:
        raise ValueError("num_pairs must be >= 1")
    if backend is None:
        backend = noiseless_backend(max(circuit.n_qubits, 10))
    backend = load_backend(backend)
    if mode == "noisy" and backend.noiseless:
        raise ValueError("noisy mode needs a noisy backend profile")
    if mode == "sampled" and not backend.noiseless:
        raise ValueError("sampled mode runs on the noiseless backend; use mode='noisy'")
    body = circuit.without_measurements()
    theta, phi = sample_parameters(body.n_params, num_pairs, seed, param_range)
    if force_equal:
        phi = theta
    if mode == "exact" and not literal:
        out = np.empty(num_pairs)
        for start in range(0, num_pairs, batch):
            sl = slice(start, start + batch)
            out[sl] = zero_prob_batch(body, theta[sl], phi[sl])
        return out
    fids = np.empty(num_pairs)
    for k in range(num_pairs):
        native = transpile(compute_uncompute(body, theta[k], phi[k]), backend)
        if mode == "exact":
            fids[k] = exact_zero_prob(native)
            continue
        outcomes = run_trajectories(native.with_measurements(), backend, shots,
                                    substream(seed, _SHOT_STREAM, k))
        fids[k] = np.count_nonzero(outcomes == 0) / shots
    return fids


def expressibility_from_fidelities(fidelities, n_qubits: int, n_bins: int = 75,
                                   mode: str = "exact", shots: int = 0) -> ExpressibilityResult:
    hist = FidelityHistogram.from_fidelities(fidelities, n_bins)
    expr = kl_divergence_log_q(hist.probs, haar_bin_log_probs(n_qubits, n_bins))
    return ExpressibilityResult(expr, hist, hist.total, mode, shots if mode != "exact" else 0)


def expressibility(circuit: Circuit, cfg: ExprConfig | None = None, **overrides) -> ExpressibilityResult:
    """KL divergence (nats) of the circuit's fidelity histogram from the Haar bins."""
    cfg = cfg or ExprConfig()
    if overrides:
        cfg = ExprConfig(**{**vars(cfg), **overrides})
    fids = sample_fidelities(
        circuit, cfg.num_pairs, cfg.mode, cfg.backend, cfg.shots, cfg.seed,
        param_range=cfg.param_range, literal=cfg.literal,
    )
    return expressibility_from_fidelities(fids, circuit.n_qubits, cfg.n_bins, cfg.mode, cfg.shots)
