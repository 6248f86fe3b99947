"""N-neutrino two-flavor spin Hamiltonian.

Energies are in units of the two-body coupling eta and times in 1/eta.
Neutrino indices are 0-based here; user-facing I/O is 1-based.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .qsim import PAULI, Statevector, apply_1q_tensor, apply_2q_tensor

SIGMAS = (PAULI["X"], PAULI["Y"], PAULI["Z"])
# sigma.sigma on two qubits (the exchange operator 2*SWAP - 1)
SIGMA_DOT_SIGMA = sum(np.kron(s, s) for s in SIGMAS)


@dataclass(frozen=True)
class NeutrinoModel:
    n: int
    b: np.ndarray
    J: np.ndarray
    theta_v: float = 0.195
    matter_A: float = 0.0

    def pairs(self) -> list[tuple[int, int]]:
        return list(combinations(range(self.n), 2))


def build_model(n: int = 4, theta_v: float = 0.195, max_cos: float = 0.9, matter_A: float = 0.0) -> NeutrinoModel:
    """Monochromatic beam (Delta_i = 2 eta) with a linear grid of relative angles.

    ``theta_pq = arccos(max_cos) |p - q| / (n - 1)`` and ``J_pq = 1 - cos(theta_pq)``.
    The matter potential enters as ``A/2`` on the z component of the field.
    """
    if n < 2:
        raise ValueError("need at least two neutrinos")
    if not 0 < max_cos <= 1:
        raise ValueError("max_cos must lie in (0, 1]")
    b = np.array([np.sin(2 * theta_v), 0.0, -np.cos(2 * theta_v) + matter_A / 2])
    idx = np.arange(n)
    theta = np.arccos(max_cos) * np.abs(idx[:, None] - idx[None, :]) / (n - 1)
    J = 1.0 - np.cos(theta)
    np.fill_diagonal(J, 0.0)
    return NeutrinoModel(n=n, b=b, J=J, theta_v=theta_v, matter_A=matter_A)


def field_term(b: np.ndarray) -> np.ndarray:
    """2x2 matrix b . sigma."""
    return sum(bi * s for bi, s in zip(b, SIGMAS))


def pair_hamiltonian(model: NeutrinoModel, p: int, q: int) -> np.ndarray:
    """4x4 pair Hamiltonian h_pq on (p, q), p as the more significant qubit."""
    if not 0 <= p < q < model.n:
        raise ValueError(f"need 0 <= p < q < {model.n}, got ({p}, {q})")
    one = field_term(model.b) / (model.n - 1)
    return (
        np.kron(one, PAULI["I"])
        + np.kron(PAULI["I"], one)
        + model.J[p, q] * SIGMA_DOT_SIGMA
    )


def embed(op: np.ndarray, qubits: tuple[int, ...], n: int) -> np.ndarray:
    """Dense 2**n matrix of a 1- or 2-qubit operator acting on ``qubits``."""
    d = 2**n
    out = np.empty((d, d), dtype=complex)
    eye = np.eye(d, dtype=complex)
    for j in range(d):
        if len(qubits) == 1:
            out[:, j] = apply_1q_tensor(eye[:, j], op, qubits[0], n)
        else:
            out[:, j] = apply_2q_tensor(eye[:, j], op, qubits[0], qubits[1], n)
    return out


def full_hamiltonian(model: NeutrinoModel) -> np.ndarray:
    n = model.n
    h = np.zeros((2**n, 2**n), dtype=complex)
    fb = field_term(model.b)
    for k in range(n):
        h += embed(fb, (k,), n)
    for p, q in model.pairs():
        if model.J[p, q] != 0:
            h += model.J[p, q] * embed(SIGMA_DOT_SIGMA, (p, q), n)
    return h


def hermitian_expm(h: np.ndarray, t: float) -> np.ndarray:
    """exp(-i h t) for Hermitian h via eigendecomposition."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def exact_propagator(model: NeutrinoModel, t: float) -> np.ndarray:
    return hermitian_expm(full_hamiltonian(model), t)


def exact_evolve(state: Statevector, model: NeutrinoModel, t: float) -> Statevector:
    if state.n_qubits != model.n:
        raise ValueError("state and model sizes differ")
    return Statevector(model.n, exact_propagator(model, t) @ state.amplitudes)


def qubit_permutation_operator(perm: list[int] | tuple[int, ...], n: int) -> np.ndarray:
    """Operator that moves the content of qubit ``i`` to qubit ``perm[i]``."""
    d = 2**n
    out = np.zeros((d, d))
    for idx in range(d):
        bits = [(idx >> (n - 1 - i)) & 1 for i in range(n)]
        new = [0] * n
        for i, b in enumerate(bits):
            new[perm[i]] = b
        out[int("".join(map(str, new)), 2), idx] = 1.0
    return out
