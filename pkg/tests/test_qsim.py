import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nuqsim.model import build_model, exact_evolve, field_term, hermitian_expm, pair_hamiltonian
from nuqsim.qsim import (
    CNOT,
    SWAP,
    X,
    CountsRecord,
    DensityMatrix,
    Statevector,
    apply_1q,
    apply_2q,
    expectation_pauli,
    new_basis_state,
    partial_trace,
    reduced_density,
    sample_counts,
)
from nuqsim.tomography import linear_inversion_dm, pauli_coefficients

BELL = Statevector(2, np.array([1, 0, 0, 1]) / np.sqrt(2))


def random_state(n, rng):
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return Statevector(n, v / np.linalg.norm(v))


def test_basis_states():
    assert np.allclose(new_basis_state(2, "00").amplitudes, [1, 0, 0, 0])
    assert np.allclose(new_basis_state(1, "1").amplitudes, [0, 1])
    psi = new_basis_state(4, "0011")
    assert psi.amplitudes[0b0011] == 1 and psi.norm() == 1


@pytest.mark.parametrize("n, bits", [(2, "0"), (2, "012"), (3, "0101")])
def test_basis_state_rejects_bad_bitstrings(n, bits):
    with pytest.raises(ValueError):
        new_basis_state(n, bits)


def test_single_qubit_gates():
    assert np.allclose(apply_1q(new_basis_state(1, "0"), X, 0).amplitudes, [0, 1])
    psi = random_state(3, np.random.default_rng(0))
    assert np.allclose(apply_1q(psi, np.eye(2), 1).amplitudes, psi.amplitudes)
    with pytest.raises(ValueError):
        apply_1q(psi, np.array([[1, 1], [0, 1]]), 0)


@given(st.floats(-8, 8), st.integers(0, 2), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_field_rotation_inverts(t, target, seed):
    b = build_model(4).b
    psi = random_state(3, np.random.default_rng(seed))
    out = apply_1q(apply_1q(psi, hermitian_expm(field_term(b), t), target), hermitian_expm(field_term(b), -t), target)
    assert np.allclose(out.amplitudes, psi.amplitudes, atol=1e-10)


def test_two_qubit_gates():
    assert np.allclose(apply_2q(new_basis_state(2, "01"), SWAP, (0, 1)).amplitudes, new_basis_state(2, "10").amplitudes)
    assert np.allclose(apply_2q(new_basis_state(2, "10"), CNOT, (0, 1)).amplitudes, new_basis_state(2, "11").amplitudes)
    # control on the right-hand qubit
    assert np.allclose(apply_2q(new_basis_state(2, "01"), CNOT, (1, 0)).amplitudes, new_basis_state(2, "11").amplitudes)
    with pytest.raises(ValueError):
        apply_2q(new_basis_state(2, "00"), SWAP, (1, 1))


@given(st.floats(-8, 8), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_pair_propagator_inverts(t, seed):
    model = build_model(4)
    h = pair_hamiltonian(model, 0, 2)
    psi = random_state(4, np.random.default_rng(seed))
    out = apply_2q(apply_2q(psi, hermitian_expm(h, t), (0, 2)), hermitian_expm(h, -t), (0, 2))
    assert np.allclose(out.amplitudes, psi.amplitudes, atol=1e-10)


@given(st.integers(0, 2**32 - 1), st.sampled_from([(0, 1), (1, 3), (3, 0), (2, 1)]))
@settings(max_examples=30, deadline=None)
def test_apply_2q_matches_dense_embedding(seed, targets):
    rng = np.random.default_rng(seed)
    g, _ = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
    psi = random_state(4, rng)
    # oracle: permute the target qubits to the front, act, and permute back
    t = psi.amplitudes.reshape((2,) * 4)
    rest = [q for q in range(4) if q not in targets]
    front = np.transpose(t, list(targets) + rest).reshape(4, -1)
    back = (g @ front).reshape((2,) * 4)
    expect = np.transpose(back, np.argsort(list(targets) + rest)).reshape(-1)
    assert np.allclose(apply_2q(psi, g, targets).amplitudes, expect, atol=1e-12)


def test_pauli_expectations():
    assert expectation_pauli(new_basis_state(2, "01"), "ZI") == pytest.approx(1.0)
    assert expectation_pauli(new_basis_state(2, "01"), "IZ") == pytest.approx(-1.0)
    assert expectation_pauli(BELL, "XX") == pytest.approx(1.0)
    assert expectation_pauli(BELL, "YY") == pytest.approx(-1.0)
    # neutrinos 1 and 3 of |0011>
    assert expectation_pauli(new_basis_state(4, "0011"), "ZIZI") == pytest.approx(-1.0)


def test_reduced_density_examples():
    one = reduced_density(new_basis_state(3, "010"), [1])
    assert np.allclose(one.matrix, [[0, 0], [0, 1]])
    for q in (0, 1):
        assert np.allclose(reduced_density(BELL, [q]).matrix, np.eye(2) / 2)


def test_reduced_density_matches_linear_inversion():
    model = build_model(4)
    phi = exact_evolve(new_basis_state(4, "0011"), model, 2.5)
    rho = reduced_density(phi, [0, 1]).matrix
    M = np.array([[expectation_pauli(phi, a + b + "II") for b in "IXYZ"] for a in "IXYZ"])
    assert np.allclose(linear_inversion_dm(M), rho, atol=1e-10)
    assert np.allclose(pauli_coefficients(rho), M, atol=1e-10)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_partial_trace_is_a_density_matrix(seed):
    rng = np.random.default_rng(seed)
    psi = random_state(4, rng)
    keep = sorted(rng.choice(4, size=2, replace=False))
    DensityMatrix(2, partial_trace(np.outer(psi.amplitudes, psi.amplitudes.conj()), 4, keep)).check()


def test_sample_counts_examples():
    assert sample_counts([1, 0, 0, 0], 100, 3).counts == {"00": 100}
    rec = sample_counts([0.5, 0.5], 8192, 7)
    assert abs(rec.counts["0"] - 4096) < 5 * np.sqrt(8192 * 0.25)
    assert sample_counts([0.1, 0.2, 0.3, 0.4], 500, 11) == sample_counts([0.1, 0.2, 0.3, 0.4], 500, 11)
    with pytest.raises(ValueError):
        sample_counts([1.1, -0.1], 10, 0)


def test_counts_record_validation():
    with pytest.raises(ValueError):
        CountsRecord("Z", {"0": 3, "1": 2}, shots=4)
    with pytest.raises(ValueError):
        CountsRecord("Z", {"0": 3, "11": 2})
    rec = CountsRecord.from_vector("ZZ", [1, 0, 2, 3], 2)
    assert rec.counts == {"00": 1, "10": 2, "11": 3} and rec.shots == 6
    assert np.array_equal(rec.vector(), [1, 0, 2, 3])
