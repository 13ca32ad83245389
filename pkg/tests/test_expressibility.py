import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from pqcexpr.circuit import Circuit, circuit_from_gates, Sym
from pqcexpr.expressibility import (
    ExprConfig,
    FidelityHistogram,
    expressibility,
    expressibility_from_fidelities,
    haar_bin_log_probs,
    haar_bin_probs,
    kl_divergence,
    sample_fidelities,
    sample_parameters,
)
from helpers import random_symbolic_circuit

LN75 = math.log(75)


def test_haar_bins_single_qubit_uniform():
    assert np.allclose(haar_bin_probs(1), np.full(75, 1 / 75), atol=1e-15)


def test_haar_bins_two_qubits_first_bin():
    assert haar_bin_probs(2)[0] == pytest.approx(1 - (74 / 75) ** 3, abs=1e-12)
    assert haar_bin_probs(2)[0] == pytest.approx(0.039466, abs=1e-5)


@pytest.mark.parametrize("n", range(1, 8))
def test_haar_bins_sum_positive_monotone(n):
    p = haar_bin_probs(n)
    assert abs(p.sum() - 1) < 1e-12
    assert np.all(p > 0)
    if n >= 2:
        assert np.all(np.diff(p) < 0)
    assert np.allclose(np.exp(haar_bin_log_probs(n)), p, rtol=1e-9, atol=0)


def test_haar_log_bins_stay_finite_for_large_n():
    lp = haar_bin_log_probs(10)
    assert np.all(np.isfinite(lp))
    assert lp[-1] == pytest.approx(-(2**10 - 1) * LN75, rel=1e-12)


def test_haar_bins_match_density_integral():
    # Haar fidelity density (N-1)(1-F)^(N-2)
    n_states = 8
    edges = np.linspace(0, 1, 76)
    ref = [integrate.quad(lambda f: (n_states - 1) * (1 - f) ** (n_states - 2), a, b)[0]
           for a, b in zip(edges[:-1], edges[1:])]
    assert np.allclose(haar_bin_probs(3), ref, atol=1e-12)


def test_kl_examples():
    q = np.full(75, 1 / 75)
    assert kl_divergence(q, q) == 0.0
    delta = np.zeros(75)
    delta[10] = 1
    assert kl_divergence(delta, q) == pytest.approx(LN75, abs=1e-12)
    assert kl_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.143841, abs=1e-6)


@pytest.mark.parametrize("p,q", [
    ([0.5, 0.5], [1.0, 0.0]),
    ([0.5, 0.5], [0.5, 0.5, 0.0]),
    ([0.5, 0.6], [0.5, 0.5]),
])
def test_kl_domain_errors(p, q):
    with pytest.raises(ValueError):
        kl_divergence(p, q)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_idle_circuit_closed_form(n):
    res = expressibility(Circuit(n), num_pairs=200)
    assert abs(res.expr - (2**n - 1) * LN75) < 1e-9
    assert res.histogram.counts[-1] == 200


def test_no_parameter_circuit_has_unit_fidelity():
    c = circuit_from_gates(2, [("H", 0), ("CX", 0, 1)])
    assert np.allclose(sample_fidelities(c, 50), 1.0, atol=1e-12)


def test_rx_closed_form_fidelity():
    c = circuit_from_gates(1, [("RX", 0, Sym(0))])
    fids = sample_fidelities(c, 300, seed=4)
    theta, phi = sample_parameters(1, 300, 4)
    assert np.allclose(fids, np.cos((theta[:, 0] - phi[:, 0]) / 2) ** 2, atol=1e-12)


def test_force_equal_gives_unit_fidelity(rng):
    c = random_symbolic_circuit(rng, 3, 12)
    assert np.allclose(sample_fidelities(c, 40, force_equal=True), 1.0, atol=1e-10)


def _rx_oracle_expr(n_bins=75):
    # F = cos^2(D/2) with D uniform: density 1 / (pi sqrt(F(1-F)))
    edges = np.linspace(0, 1, n_bins + 1)
    dens = lambda f: 1 / (math.pi * math.sqrt(f * (1 - f)))
    p = np.array([integrate.quad(dens, a, b)[0] for a, b in zip(edges[:-1], edges[1:])])
    return kl_divergence(p / p.sum(), np.full(n_bins, 1 / n_bins))


def test_rx_matches_numeric_integration_oracle():
    c = circuit_from_gates(1, [("RX", 0, Sym(0))])
    oracle = _rx_oracle_expr()
    for seed in range(3):
        assert abs(expressibility(c, seed=seed).expr - oracle) < 0.05


def test_literal_and_batched_paths_agree(rng):
    c = random_symbolic_circuit(rng, 3, 10)
    fast = sample_fidelities(c, 60, seed=2)
    slow = sample_fidelities(c, 60, seed=2, literal=True)
    assert np.max(np.abs(fast - slow)) < 1e-10


def test_expressibility_is_deterministic(rng):
    c = random_symbolic_circuit(rng, 2, 8)
    a = expressibility(c, num_pairs=500, seed=9)
    b = expressibility(c, num_pairs=500, seed=9)
    assert a.expr == b.expr and np.array_equal(a.histogram.counts, b.histogram.counts)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=200), st.integers(1, 4), st.randoms())
def test_expr_nonnegative_and_order_invariant(fids, n, rnd):
    a = expressibility_from_fidelities(fids, n).expr
    shuffled = list(fids)
    rnd.shuffle(shuffled)
    assert a >= 0
    assert expressibility_from_fidelities(shuffled, n).expr == pytest.approx(a, abs=1e-12)


def test_histogram_last_bin_right_closed():
    h = FidelityHistogram.from_fidelities([0.0, 1.0, 1.0, 0.5])
    assert h.counts[-1] == 2 and h.counts[0] == 1 and h.total == 4


def test_result_to_dict():
    d = expressibility(Circuit(1), num_pairs=10).to_dict()
    assert set(d) == {"expr", "n_bins", "num_pairs", "mode", "shots", "histogram_counts"}
    assert d["mode"] == "exact" and d["shots"] == 0 and len(d["histogram_counts"]) == 75


def test_noisy_mode_requires_noisy_backend():
    c = circuit_from_gates(1, [("RX", 0, Sym(0))])
    with pytest.raises(ValueError):
        sample_fidelities(c, 5, mode="noisy", backend="noiseless")
    with pytest.raises(ValueError):
        sample_fidelities(c, 5, mode="sampled", backend="synth_hanoi")
    with pytest.raises(ValueError):
        sample_fidelities(c, 5, mode="bogus")


def test_sampled_mode_near_exact():
    c = circuit_from_gates(1, [("RX", 0, Sym(0))])
    exact = sample_fidelities(c, 40, seed=1)
    shot = sample_fidelities(c, 40, mode="sampled", shots=4096, seed=1)
    assert np.max(np.abs(exact - shot)) < 5 * 0.5 / math.sqrt(4096)


def test_config_defaults():
    cfg = ExprConfig()
    assert (cfg.num_pairs, cfg.n_bins, cfg.mode, cfg.shots) == (5000, 75, "exact", 1024)
    assert cfg.param_range == pytest.approx(2 * math.pi)
