"""Dense statevector / density-matrix engine.

Conventions
-----------
Qubit 0 is the leftmost character of a bitstring and the most significant
bit of a basis-state index, so ``|q0 q1 ... q_{n-1}>`` maps to index
``int("q0q1...", 2)``.  Two-qubit gate matrices act on ``(q1, q2)`` with
``q1`` as the more significant bit of the 4x4 basis.

Sampling uses ``numpy.random.Generator`` backed by PCG64, seeded either by an
integer or by a ``numpy.random.SeedSequence``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Mapping, Sequence

import numpy as np

UNITARY_ATOL = 1e-10

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
SDG = np.array([[1, 0], [0, -1j]], dtype=complex)
PAULI = {"I": I2, "X": X, "Y": Y, "Z": Z}

CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)

# Rotation into the eigenbasis of each Pauli, so that a Z-basis readout
# afterwards measures that Pauli.
BASIS_ROTATION = {"X": H, "Y": H @ SDG, "Z": I2}


def is_unitary(m: np.ndarray, atol: float = UNITARY_ATOL) -> bool:
    m = np.asarray(m)
    return m.shape[0] == m.shape[1] and np.allclose(
        m.conj().T @ m, np.eye(m.shape[0]), atol=atol, rtol=0
    )


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator from an int, a SeedSequence, or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


@dataclass
class Statevector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (2**self.n_qubits,):
            raise ValueError(
                f"expected {2**self.n_qubits} amplitudes, got shape {self.amplitudes.shape}"
            )

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def density_matrix(self) -> "DensityMatrix":
        return DensityMatrix(self.n_qubits, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass
class DensityMatrix:
    n_qubits: int
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        d = 2**self.n_qubits
        if self.matrix.shape != (d, d):
            raise ValueError(f"expected a {d}x{d} matrix, got {self.matrix.shape}")

    def check(self, atol: float = 1e-10, eig_tol: float = 1e-9) -> None:
        """Raise ValueError unless Hermitian, unit trace and PSD."""
        m = self.matrix
        if not np.allclose(m, m.conj().T, atol=atol, rtol=0):
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1) > atol:
            raise ValueError(f"density matrix trace {np.trace(m).real:.3g} != 1")
        if np.linalg.eigvalsh(m).min() < -eig_tol:
            raise ValueError("density matrix has negative eigenvalues")

    def probabilities(self) -> np.ndarray:
        return np.clip(np.diag(self.matrix).real, 0.0, None)


@dataclass
class CountsRecord:
    """Measurement outcomes for one basis setting.

    Bitstring keys list the measured qubits in measurement order.
    """

    setting: str
    counts: dict[str, int]
    shots: int = field(default=-1)

    def __post_init__(self):
        total = int(sum(self.counts.values()))
        if self.shots < 0:
            self.shots = total
        if total != self.shots:
            raise ValueError(f"counts sum to {total}, expected {self.shots} shots")
        lengths = {len(k) for k in self.counts}
        if len(lengths) > 1:
            raise ValueError("bitstring keys have inconsistent lengths")
        if any(v < 0 for v in self.counts.values()):
            raise ValueError("negative count")

    @property
    def n_measured(self) -> int:
        return len(next(iter(self.counts))) if self.counts else 0

    def vector(self, n_measured: int | None = None) -> np.ndarray:
        """Counts as a dense array indexed by the bitstring's integer value."""
        n = self.n_measured if n_measured is None else n_measured
        out = np.zeros(2**n)
        for bits, c in self.counts.items():
            out[int(bits, 2)] += c
        return out

    @classmethod
    def from_vector(cls, setting: str, vec: Sequence[int], n_measured: int) -> "CountsRecord":
        vec = np.asarray(vec)
        counts = {format(i, f"0{n_measured}b"): int(c) for i, c in enumerate(vec) if c}
        return cls(setting, counts, int(vec.sum()))

    def to_dict(self) -> dict:
        return {"setting": self.setting, "counts": dict(sorted(self.counts.items())), "shots": self.shots}


def new_basis_state(n_qubits: int, bitstring: str) -> Statevector:
    if n_qubits < 1:
        raise ValueError("n_qubits must be >= 1")
    if len(bitstring) != n_qubits or set(bitstring) - {"0", "1"}:
        raise ValueError(f"bitstring {bitstring!r} is not a {n_qubits}-bit string")
    amps = np.zeros(2**n_qubits, dtype=complex)
    amps[int(bitstring, 2)] = 1.0
    return Statevector(n_qubits, amps)


def _check_qubit(n: int, q: int) -> None:
    if not 0 <= q < n:
        raise ValueError(f"qubit {q} out of range for {n} qubits")


def apply_1q_tensor(psi: np.ndarray, gate: np.ndarray, target: int, n: int) -> np.ndarray:
    """Apply ``gate`` to axis ``target`` of a flat 2**n vector (no checks)."""
    t = psi.reshape((2,) * n)
    t = np.tensordot(gate, t, axes=([1], [target]))
    return np.moveaxis(t, 0, target).reshape(-1)


def apply_2q_tensor(psi: np.ndarray, gate: np.ndarray, q1: int, q2: int, n: int) -> np.ndarray:
    t = psi.reshape((2,) * n)
    g = gate.reshape(2, 2, 2, 2)
    t = np.tensordot(g, t, axes=([2, 3], [q1, q2]))
    return np.moveaxis(t, [0, 1], [q1, q2]).reshape(-1)


def apply_1q(state: Statevector, gate: np.ndarray, target: int) -> Statevector:
    gate = np.asarray(gate, dtype=complex)
    if gate.shape != (2, 2) or not is_unitary(gate):
        raise ValueError("gate is not a 2x2 unitary")
    _check_qubit(state.n_qubits, target)
    return Statevector(
        state.n_qubits, apply_1q_tensor(state.amplitudes, gate, target, state.n_qubits)
    )


def apply_2q(state: Statevector, gate: np.ndarray, targets: tuple[int, int]) -> Statevector:
    gate = np.asarray(gate, dtype=complex)
    q1, q2 = targets
    if q1 == q2:
        raise ValueError("two-qubit gate targets must differ")
    if gate.shape != (4, 4) or not is_unitary(gate):
        raise ValueError("gate is not a 4x4 unitary")
    _check_qubit(state.n_qubits, q1)
    _check_qubit(state.n_qubits, q2)
    return Statevector(
        state.n_qubits, apply_2q_tensor(state.amplitudes, gate, q1, q2, state.n_qubits)
    )


def pauli_matrix(ops: str) -> np.ndarray:
    """Dense matrix of a Pauli string such as ``"XIZ"`` (qubit 0 leftmost)."""
    m = np.ones((1, 1), dtype=complex)
    for c in ops:
        m = np.kron(m, PAULI[c])
    return m


def expectation_pauli(state: Statevector, p: str) -> float:
    if len(p) != state.n_qubits:
        raise ValueError(f"Pauli string {p!r} does not match {state.n_qubits} qubits")
    psi = state.amplitudes
    phi = psi
    for q, c in enumerate(p):
        if c != "I":
            phi = apply_1q_tensor(phi, PAULI[c], q, state.n_qubits)
    return float(np.vdot(psi, phi).real)


def partial_trace(rho: np.ndarray, n: int, keep: Sequence[int]) -> np.ndarray:
    """Reduce a 2**n density matrix to the qubits in ``keep`` (in that order)."""
    keep = list(keep)
    traced = [q for q in range(n) if q not in keep]
    t = rho.reshape((2,) * (2 * n))
    # bring (keep, traced | keep', traced') order, then contract traced axes
    perm = keep + traced + [n + q for q in keep] + [n + q for q in traced]
    t = t.transpose(perm)
    k, r = len(keep), len(traced)
    t = t.reshape(2**k, 2**r, 2**k, 2**r)
    return np.einsum("ajbj->ab", t)


def reduced_density(state: Statevector, keep: Sequence[int]) -> DensityMatrix:
    keep = list(keep)
    if not keep or len(set(keep)) != len(keep):
        raise ValueError("keep must be a nonempty set of distinct qubits")
    for q in keep:
        _check_qubit(state.n_qubits, q)
    n = state.n_qubits
    traced = [q for q in range(n) if q not in keep]
    t = state.amplitudes.reshape((2,) * n).transpose(keep + traced)
    t = t.reshape(2 ** len(keep), -1)
    return DensityMatrix(len(keep), t @ t.conj().T)


def sample_counts(
    probabilities: Sequence[float], shots: int, seed, setting: str = "Z"
) -> CountsRecord:
    """Multinomial draw of ``shots`` outcomes over ``len(probabilities)`` bitstrings."""
    p = np.asarray(probabilities, dtype=float)
    n = int(np.log2(p.size))
    if p.size < 2 or 2**n != p.size:
        raise ValueError("probability vector length must be a power of two >= 2")
    if p.min() < -1e-9:
        raise ValueError("negative probability")
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if abs(total - 1) > 1e-9:
        raise ValueError(f"probabilities sum to {total}")
    p = p / total
    vec = make_rng(seed).multinomial(shots, p)
    return CountsRecord.from_vector(setting, vec, n)


# ---- density-matrix kernels used by the noisy backend ----

def dm_apply_1q(rho: np.ndarray, gate: np.ndarray, target: int, n: int) -> np.ndarray:
    d = 2**n
    t = rho.reshape((2,) * (2 * n))
    t = np.moveaxis(np.tensordot(gate, t, axes=([1], [target])), 0, target)
    t = np.moveaxis(np.tensordot(gate.conj(), t, axes=([1], [n + target])), 0, n + target)
    return t.reshape(d, d)


def dm_apply_2q(rho: np.ndarray, gate: np.ndarray, q1: int, q2: int, n: int) -> np.ndarray:
    d = 2**n
    g = gate.reshape(2, 2, 2, 2)
    t = rho.reshape((2,) * (2 * n))
    t = np.moveaxis(np.tensordot(g, t, axes=([2, 3], [q1, q2])), [0, 1], [q1, q2])
    t = np.moveaxis(
        np.tensordot(g.conj(), t, axes=([2, 3], [n + q1, n + q2])), [0, 1], [n + q1, n + q2]
    )
    return t.reshape(d, d)


def all_bitstrings(n: int) -> list[str]:
    return ["".join(b) for b in product("01", repeat=n)]


def counts_from_mapping(setting: str, counts: Mapping[str, int]) -> CountsRecord:
    return CountsRecord(setting, {k: int(v) for k, v in counts.items()})
