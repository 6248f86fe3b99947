import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nuqsim.circuits import Circuit, circuit_unitary, compile_circuit, gate_counts, swap_network_circuit
from nuqsim.gates import cx_gate
from nuqsim.model import build_model
from nuqsim.noise import (
    NoiseModel,
    amplify_noise,
    apply_confusion,
    calibration_run,
    confusion_matrix,
    depolarize_pair,
    evolve_density,
    ideal_probabilities,
    measure,
    run_noisy,
)
from nuqsim.qsim import new_basis_state, partial_trace, pauli_matrix


def compiled(n=4, t=2.0):
    return compile_circuit(swap_network_circuit(build_model(n), t))


def test_amplify_examples():
    c = compiled()
    assert amplify_noise(c, 1) is c
    one = Circuit(2, [cx_gate(0, 1)])
    three = amplify_noise(one, 3)
    assert gate_counts(three) == (3, 0)
    assert np.allclose(circuit_unitary(three), circuit_unitary(one), atol=1e-10)
    ent, _ = gate_counts(c)
    assert ent == 18 and gate_counts(amplify_noise(c, 3))[0] == 54
    for r in (0, 2, -1):
        with pytest.raises(ValueError):
            amplify_noise(c, r)


@pytest.mark.parametrize("r", [3, 5, 7])
def test_amplification_preserves_unitary(r):
    c = compiled(3, 1.1)
    amp = amplify_noise(c, r)
    assert gate_counts(amp)[0] == r * gate_counts(c)[0]
    assert np.allclose(circuit_unitary(amp), circuit_unitary(c), atol=1e-10)


@given(st.floats(0, 1), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_depolarizing_channel(p, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=8) + 1j * rng.normal(size=8)
    rho = np.outer(v, v.conj()) / np.vdot(v, v).real
    out = depolarize_pair(rho, 0, 2, 3, p)
    assert np.trace(out).real == pytest.approx(1.0)
    assert np.linalg.eigvalsh(out).min() > -1e-12
    # spectator qubit untouched, pair relaxes toward 1/4
    assert np.allclose(partial_trace(out, 3, [1]), partial_trace(rho, 3, [1]), atol=1e-12)
    pair = partial_trace(out, 3, [0, 2])
    assert np.allclose(pair, (1 - p) * partial_trace(rho, 3, [0, 2]) + p * np.eye(4) / 4, atol=1e-12)


def test_noiseless_evolution_matches_unitary():
    c = compiled()
    psi = circuit_unitary(c) @ new_basis_state(4, "0101").amplitudes
    rho = evolve_density(c, new_basis_state(4, "0101"), NoiseModel.noiseless(4))
    assert np.allclose(rho, np.outer(psi, psi.conj()), atol=1e-10)


def test_noiseless_counts_follow_ideal_probabilities():
    c = compiled()
    rec = run_noisy(c, new_basis_state(4, "0011"), NoiseModel.noiseless(4), "ZZZZ", 20000, 4)
    p = np.abs(circuit_unitary(c) @ new_basis_state(4, "0011").amplitudes) ** 2
    freq = rec.vector(4) / rec.shots
    assert np.all(np.abs(freq - p) <= 5 * np.sqrt(p * (1 - p) / rec.shots) + 1e-12)


def test_readout_error_on_empty_circuit():
    noise = NoiseModel(0.0, (0.1, 0.0), (0.0, 0.0))
    rec = run_noisy(Circuit(2), new_basis_state(2, "00"), noise, "ZZ", 8192, 9)
    frac = sum(c for bits, c in rec.counts.items() if bits[0] == "1") / rec.shots
    assert abs(frac - 0.1) < 5 * np.sqrt(0.09 / 8192)
    assert all(bits[1] == "0" for bits in rec.counts)


def test_heavy_depolarization_mixes_everything():
    c = amplify_noise(compiled(), 7)
    rho = evolve_density(c, new_basis_state(4, "0011"), NoiseModel.uniform(4, 0.5, 0, 0))
    for p in ("ZIII", "IXII", "ZZII", "XYZI"):
        assert abs(np.trace(pauli_matrix(p) @ rho)) < 1e-3
    assert np.allclose(np.diag(rho).real, 1 / 16, atol=1e-3)


def test_measurement_basis_rotation():
    plus = np.full((2, 2), 0.5, dtype=complex)
    assert np.allclose(ideal_probabilities(plus, 1, "X"), [1, 0])
    assert np.allclose(ideal_probabilities(plus, 1, "Z"), [0.5, 0.5])
    rho = np.zeros((8, 8), dtype=complex)
    rho[0b011, 0b011] = 1
    # settings list qubits in measurement order
    assert np.allclose(ideal_probabilities(rho, 3, [(2, "Z"), (0, "Z")]), [0, 0, 1, 0])


def test_confusion_application():
    mats = [confusion_matrix(0.1, 0.05), confusion_matrix(0.0, 0.2)]
    p = np.array([0.1, 0.2, 0.3, 0.4])
    assert np.allclose(apply_confusion(p, mats), np.kron(*mats) @ p)


def test_calibration_examples():
    cal = calibration_run(NoiseModel.noiseless(3), 3, 1000, 0)
    assert cal.zeros.counts == {"000": 1000} and cal.ones.counts == {"111": 1000}
    cal = calibration_run(NoiseModel.uniform(4, 0.0, 0.05, 0.05), 4, 8192, 1)
    f0, f1 = cal.flip_counts()
    sigma = np.sqrt(0.05 * 0.95 / 8192)
    assert np.all(np.abs(f0 / 8192 - 0.05) < 5 * sigma)
    assert np.all(np.abs(f1 / 8192 - 0.05) < 5 * sigma)


def test_measure_is_seeded():
    rho = np.eye(4, dtype=complex) / 4
    noise = NoiseModel.uniform(2, 0.0, 0.02, 0.02)
    assert measure(rho, 2, "XY", noise, 100, 3) == measure(rho, 2, "XY", noise, 100, 3)


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(1.5)
    with pytest.raises(ValueError):
        NoiseModel(0.0, (0.1,), ())
