"""Parametric noise: two-qubit depolarizing after every entangler plus
independent per-qubit readout bit flips, simulated exactly on the density
matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .circuits import Circuit
from .gates import Gate
from .qsim import (
    BASIS_ROTATION,
    CountsRecord,
    Statevector,
    dm_apply_1q,
    dm_apply_2q,
    make_rng,
)

NOISE_LEVELS = (1, 3, 5, 7)


@dataclass(frozen=True)
class NoiseModel:
    depol_2q: float = 0.01
    readout_e0: tuple[float, ...] = ()
    readout_e1: tuple[float, ...] = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "readout_e0", tuple(float(x) for x in self.readout_e0))
        object.__setattr__(self, "readout_e1", tuple(float(x) for x in self.readout_e1))
        if len(self.readout_e0) != len(self.readout_e1):
            raise ValueError("readout_e0 and readout_e1 must have equal length")
        for x in (self.depol_2q, *self.readout_e0, *self.readout_e1):
            if not 0 <= x <= 1:
                raise ValueError(f"probability {x} outside [0, 1]")

    @classmethod
    def uniform(cls, n_qubits: int, depol_2q: float = 0.01, e0: float = 0.02, e1: float = 0.02, seed: int = 0):
        return cls(depol_2q, (e0,) * n_qubits, (e1,) * n_qubits, seed)

    @classmethod
    def noiseless(cls, n_qubits: int) -> "NoiseModel":
        return cls.uniform(n_qubits, 0.0, 0.0, 0.0)

    def e0(self, q: int) -> float:
        return self.readout_e0[q] if self.readout_e0 else 0.0

    def e1(self, q: int) -> float:
        return self.readout_e1[q] if self.readout_e1 else 0.0

    def confusion(self, q: int) -> np.ndarray:
        """Column-stochastic P(read i | true j) for qubit q."""
        return confusion_matrix(self.e0(q), self.e1(q))


def confusion_matrix(e0: float, e1: float) -> np.ndarray:
    return np.array([[1 - e0, e1], [e0, 1 - e1]])


@dataclass
class CalibrationRecord:
    zeros: CountsRecord
    ones: CountsRecord
    shots: int = field(default=0)

    def __post_init__(self):
        if self.zeros.shots != self.ones.shots:
            raise ValueError("calibration preparations have different shot totals")
        self.shots = self.zeros.shots

    @property
    def n_qubits(self) -> int:
        return self.zeros.n_measured

    def flip_counts(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-qubit counts of 0->1 flips (all-zeros prep) and 1->0 flips (all-ones prep)."""
        n = self.n_qubits
        f0, f1 = np.zeros(n, dtype=int), np.zeros(n, dtype=int)
        for bits, c in self.zeros.counts.items():
            f0 += c * np.array([b == "1" for b in bits])
        for bits, c in self.ones.counts.items():
            f1 += c * np.array([b == "0" for b in bits])
        return f0, f1


def amplify_noise(circuit: Circuit, r: int) -> Circuit:
    """Fold every entangler G -> G (G^dag G)^((r-1)/2); CNOT becomes r CNOTs."""
    if r < 1 or r % 2 == 0:
        raise ValueError(f"noise level must be an odd positive integer, got {r}")
    if r == 1:
        return circuit
    gates = []
    for g in circuit.gates:
        gates.append(g)
        if g.is_entangler:
            inv = Gate(g.kind, g.targets, g.matrix.conj().T, g.label, g.angle)
            for _ in range((r - 1) // 2):
                gates.extend((inv, g))
    return Circuit(circuit.n_qubits, gates, circuit.initial_layout, circuit.final_layout, circuit.global_phase)


def depolarize_pair(rho: np.ndarray, q1: int, q2: int, n: int, p: float) -> np.ndarray:
    """rho -> (1 - p) rho + p (1/4 on (q1, q2)) x Tr_{q1 q2} rho."""
    if p == 0:
        return rho
    d = 2**n
    axes = [q1, q2, n + q1, n + q2]
    t = np.moveaxis(rho.reshape((2,) * (2 * n)), axes, [0, 1, 2, 3])
    reduced = np.einsum("abab...->...", t)
    mixed = np.einsum("ac,bd,...->abcd...", np.eye(2), np.eye(2), reduced) / 4
    mixed = np.moveaxis(mixed, [0, 1, 2, 3], axes).reshape(d, d)
    return (1 - p) * rho + p * mixed


def evolve_density(circuit: Circuit, initial: Statevector | np.ndarray, noise: NoiseModel) -> np.ndarray:
    """Density matrix after the circuit, depolarizing after each entangler.

    Uncompiled "2q" gates are applied noiselessly; compile first to attach
    noise to the CNOTs.  The global phase drops out of rho.
    """
    n = circuit.n_qubits
    rho = initial.density_matrix().matrix if isinstance(initial, Statevector) else np.asarray(initial, dtype=complex)
    for g in circuit.gates:
        if g.n_targets == 1:
            rho = dm_apply_1q(rho, g.matrix, g.targets[0], n)
        else:
            rho = dm_apply_2q(rho, g.matrix, g.targets[0], g.targets[1], n)
            if g.is_entangler:
                rho = depolarize_pair(rho, g.targets[0], g.targets[1], n, noise.depol_2q)
    return rho


def _parse_setting(setting, n: int) -> list[tuple[int, str]]:
    if isinstance(setting, str):
        if len(setting) != n:
            raise ValueError(f"basis string {setting!r} must cover all {n} qubits")
        return [(q, b) for q, b in enumerate(setting)]
    return [(int(q), str(b)) for q, b in setting]


def ideal_probabilities(rho: np.ndarray, n: int, setting) -> np.ndarray:
    """Outcome distribution over the measured qubits (in setting order), no readout error."""
    pairs = _parse_setting(setting, n)
    for q, b in pairs:
        if b not in BASIS_ROTATION:
            raise ValueError(f"unknown measurement basis {b!r}")
        if b != "Z":
            rho = dm_apply_1q(rho, BASIS_ROTATION[b], q, n)
    probs = np.clip(np.diag(rho).real, 0, None).reshape((2,) * n)
    measured = [q for q, _ in pairs]
    rest = tuple(q for q in range(n) if q not in measured)
    marg = probs.sum(axis=rest) if rest else probs
    # sum keeps remaining axes in increasing qubit order; reorder to setting order
    order = sorted(measured)
    marg = np.transpose(marg, [order.index(q) for q in measured])
    return marg.reshape(-1) / marg.sum()


def apply_confusion(probs: np.ndarray, mats: Sequence[np.ndarray]) -> np.ndarray:
    """Apply per-qubit 2x2 maps to a distribution over len(mats) qubits."""
    k = len(mats)
    t = probs.reshape((2,) * k)
    for i, m in enumerate(mats):
        t = np.moveaxis(np.tensordot(m, t, axes=([1], [i])), 0, i)
    return t.reshape(-1)


def measure(rho: np.ndarray, n: int, setting, noise: NoiseModel, shots: int, seed) -> CountsRecord:
    pairs = _parse_setting(setting, n)
    p = ideal_probabilities(rho, n, pairs)
    p = apply_confusion(p, [noise.confusion(q) for q, _ in pairs])
    p = np.clip(p, 0, None)
    vec = make_rng(seed).multinomial(shots, p / p.sum())
    label = "".join(b for _, b in pairs)
    return CountsRecord.from_vector(label, vec, len(pairs))


def run_noisy(circuit: Circuit, initial: Statevector, noise: NoiseModel, basis_setting, shots: int, seed=None) -> CountsRecord:
    rho = evolve_density(circuit, initial, noise)
    return measure(rho, circuit.n_qubits, basis_setting, noise, shots, noise.seed if seed is None else seed)


def calibration_run(noise: NoiseModel, n_qubits: int, shots: int, seed) -> CalibrationRecord:
    """Measure |0...0> and |1...1> under readout corruption only."""
    rng = make_rng(seed)
    out = []
    for bit in "01":
        p = np.zeros(2**n_qubits)
        p[int(bit * n_qubits, 2)] = 1.0
        p = apply_confusion(p, [noise.confusion(q) for q in range(n_qubits)])
        p = np.clip(p, 0, None)
        vec = rng.multinomial(shots, p / p.sum())
        out.append(CountsRecord.from_vector("Z" * n_qubits, vec, n_qubits))
    return CalibrationRecord(out[0], out[1])
