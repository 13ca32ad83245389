import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import random_bound_circuit, random_symbolic_circuit
from pqcexpr.circuit import Gate, GateKind, Sym, circuit_from_gates, compute_uncompute, unitary
from pqcexpr.errors import ProfileError, UnboundParameterError
from pqcexpr.sim import (
    PRESETS,
    BackendModel,
    apply_gate,
    exact_zero_prob,
    load_backend,
    run_trajectories,
    sample_counts,
    simulate,
    substream,
    zero_prob_batch,
    zero_state,
)
from pqcexpr.transpile import transpile


def test_apply_gate_examples():
    s = apply_gate(zero_state(1), Gate(GateKind.H, (0,)))
    assert np.allclose(s, [1 / math.sqrt(2), 1 / math.sqrt(2)], atol=1e-15)
    assert np.allclose(apply_gate(zero_state(1), Gate(GateKind.X, (0,))), [0, 1])
    psi = apply_gate(zero_state(1), Gate(GateKind.H, (0,)))
    phased = apply_gate(psi, Gate(GateKind.RZ, (0,), 0.9))
    assert np.allclose(np.abs(phased), np.abs(psi), atol=1e-15)


def test_apply_gate_unbound():
    with pytest.raises(UnboundParameterError):
        apply_gate(zero_state(1), Gate(GateKind.RZ, (0,), Sym(0)))


def test_apply_gate_touches_only_target_strata():
    rng = np.random.default_rng(0)
    psi = rng.normal(size=8) + 1j * rng.normal(size=8)
    psi /= np.linalg.norm(psi)
    out = apply_gate(psi, Gate(GateKind.X, (1,)))
    for i in range(8):
        assert out[i] == psi[i ^ 0b010]


@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(0, 30))
def test_norm_preserved(seed, n, k):
    c = random_bound_circuit(np.random.default_rng(seed), n, k)
    state = zero_state(n)
    for g in c.gates:
        state = apply_gate(state, g)
        assert abs(np.linalg.norm(state) - 1) < 1e-10


def test_simulate_matches_unitary_column(rng):
    for _ in range(10):
        c = random_bound_circuit(rng, 3, 20)
        assert np.allclose(simulate(c), unitary(c)[:, 0], atol=1e-12)


def test_exact_zero_prob_examples():
    assert exact_zero_prob(circuit_from_gates(1, [("H", 0)])) == pytest.approx(0.5, abs=1e-15)
    assert exact_zero_prob(circuit_from_gates(1, [("RX", 0, 0.8), ("RX", 0, -0.8)])) == pytest.approx(1.0)
    c = circuit_from_gates(1, [("RX", 0, Sym(0))])
    assert exact_zero_prob(compute_uncompute(c, [0.0], [math.pi / 2])) == pytest.approx(0.5, abs=1e-15)


def test_zero_prob_batch_matches_per_pair(rng):
    b = load_backend("synth_hanoi")
    c = random_symbolic_circuit(rng, 3, 14)
    theta = rng.uniform(0, 2 * np.pi, (30, c.n_params))
    phi = rng.uniform(0, 2 * np.pi, (30, c.n_params))
    fast = zero_prob_batch(c, theta, phi)
    for k in range(30):
        slow = exact_zero_prob(transpile(compute_uncompute(c, theta[k], phi[k]), b))
        assert abs(fast[k] - slow) < 1e-12


def test_sample_counts_noiseless_examples():
    c = circuit_from_gates(1, [("X", 0)]).with_measurements()
    assert sample_counts(c, 100) == {"1": 100}
    h = circuit_from_gates(1, [("H", 0)]).with_measurements()
    counts = sample_counts(h, 100_000, rng=substream(7))
    assert abs(counts["0"] / 100_000 - 0.5) < 0.005
    assert sum(counts.values()) == 100_000


def test_bitstring_order_little_endian():
    c = circuit_from_gates(3, [("X", 0)]).with_measurements()
    assert sample_counts(c, 10) == {"001": 10}


def _profile_dict(name="synth_guadalupe"):
    return load_backend(name).to_dict()


def test_readout_flip_degenerate_profile(tmp_path):
    data = _profile_dict()
    for q in data["qubits"]:
        q["readout_p10"] = 1.0
        q["readout_p01"] = 0.0
    for section in data["gates"].values():
        for entry in section:
            entry["error"] = 0.0
    for q in data["qubits"]:
        q["T1"] = q["T2"] = 1e30
    path = tmp_path / "flip.json"
    path.write_text(json.dumps(data))
    b = load_backend(path)
    c = transpile(circuit_from_gates(1, [("X", 0)]), b).with_measurements()
    assert sample_counts(c, 500, b, substream(3)) == {"0": 500}


def test_zero_error_profile_reproduces_noiseless_stream(rng):
    noisy = load_backend("synth_mumbai").with_zero_errors()
    clean = load_backend("noiseless")
    c = transpile(random_bound_circuit(rng, 3, 15), noisy).with_measurements()
    a = run_trajectories(c, noisy, 2000, substream(11, 5))
    b = run_trajectories(c, clean, 2000, substream(11, 5))
    assert np.array_equal(a, b)


def test_sampled_frequency_converges(rng):
    c = random_bound_circuit(rng, 2, 8)
    p = exact_zero_prob(c)
    meas = c.with_measurements()
    freqs = [np.mean(run_trajectories(meas, load_backend("noiseless"), 1024, substream(99, i)) == 0)
             for i in range(50)]
    assert abs(np.mean(freqs) - p) < 4 * math.sqrt(p * (1 - p) / (50 * 1024)) + 1e-12


def test_noise_lowers_return_probability():
    b = load_backend("synth_guadalupe")
    c = transpile(circuit_from_gates(2, [("H", 0), ("CX", 0, 1), ("CX", 0, 1), ("H", 0)] * 4), b)
    hits = np.mean(run_trajectories(c.with_measurements(), b, 4000, substream(1)) == 0)
    assert hits < 0.99


def test_presets_load_and_validate():
    for name in PRESETS:
        b = load_backend(name)
        assert b.id == name and b.n_qubits == 10
        assert BackendModel.from_dict(b.to_dict()) == b
        for cal in b.qubits:
            assert cal.T2 <= 2 * cal.T1


def test_profile_validation(tmp_path):
    data = _profile_dict()
    data["qubits"][0]["T2"] = 3 * data["qubits"][0]["T1"]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ProfileError):
        load_backend(path)
    data = _profile_dict()
    del data["qubits"][0]["T1"]
    path.write_text(json.dumps(data))
    with pytest.raises(ProfileError):
        load_backend(path)
    with pytest.raises(ProfileError):
        load_backend("no_such_backend")


def test_relaxation_probabilities():
    b = load_backend("synth_hanoi")
    cal = b.qubits[0]
    px, py, pz = b.relaxation_probs(0, 400.0)
    t = 400.0 / 1000.0  # ns -> us
    assert px == pytest.approx((1 - math.exp(-t / cal.T1)) / 4)
    assert py == px
    assert pz == pytest.approx(max(0.0, (1 - math.exp(-t / cal.T2)) / 2 - px))


def test_substreams_are_independent_of_creation_order():
    a = substream(5, 1, 2).random(3)
    substream(5, 0).random(10)
    assert np.array_equal(a, substream(5, 1, 2).random(3))
    assert not np.array_equal(a, substream(5, 2, 1).random(3))
