"""Flavor and entanglement observables."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .inference import EnsembleEstimate, ensemble_statistics
from .qsim import PAULI, CountsRecord, DensityMatrix, partial_trace

NEG_EIG_TOL = 1e-6
YY = np.kron(PAULI["Y"], PAULI["Y"])


@dataclass
class ObservableSeries:
    name: str
    times: np.ndarray
    estimates: list[EnsembleEstimate]
    r: int | None = None
    tag: str = "bare"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size and np.any(np.diff(self.times) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if len(self.estimates) != len(self.times):
            raise ValueError("need exactly one estimate per time point")

    @property
    def means(self) -> np.ndarray:
        return np.array([e.mean for e in self.estimates])


def _matrix(rho) -> np.ndarray:
    return rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)


def inversion_probability(counts: CountsRecord, neutrino: int, initial_flavor: int | str, permutation: Sequence[int]) -> float:
    """Fraction of shots where the qubit holding ``neutrino`` reads the flipped flavor bit.

    ``permutation[k]`` is the physical qubit carrying logical neutrino k at
    measurement time (Circuit.permutation).
    """
    n = counts.n_measured
    perm = tuple(int(p) for p in permutation)
    if sorted(perm) != list(range(n)):
        raise ValueError(f"{perm} is not a permutation of the {n} measured qubits")
    if set(counts.setting) - {"Z"}:
        raise ValueError("inversion probability needs Z-basis counts")
    q = perm[neutrino]
    flipped = "1" if str(initial_flavor) == "0" else "0"
    hits = sum(c for bits, c in counts.counts.items() if bits[q] == flipped)
    return hits / counts.shots


def inversion_from_probabilities(probs: np.ndarray, n: int, neutrino: int, initial_flavor: int | str, permutation: Sequence[int]) -> np.ndarray:
    """Same as inversion_probability for (..., 2^n) probability or quasi-probability arrays."""
    q = tuple(permutation)[neutrino]
    bits = (np.arange(2**n) >> (n - 1 - q)) & 1
    target = 1 if str(initial_flavor) == "0" else 0
    return np.asarray(probs)[..., bits == target].sum(axis=-1)


def _eigvals(rho) -> np.ndarray:
    m = _matrix(rho)
    return np.linalg.eigvalsh((m + np.swapaxes(m.conj(), -1, -2)) / 2)


def von_neumann_entropy(rho) -> float | np.ndarray:
    """Entropy in bits; accepts a single matrix or a (..., d, d) stack."""
    lam = _eigvals(rho)
    if np.any(lam < -NEG_EIG_TOL):
        raise ValueError(f"unphysical density matrix (eigenvalue {lam.min():.3g})")
    lam = np.clip(lam, 0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(lam > 0, -lam * np.log2(np.where(lam > 0, lam, 1)), 0.0)
    s = np.clip(terms.sum(axis=-1), 0.0, np.log2(lam.shape[-1]))
    return float(s) if np.ndim(s) == 0 else s


def single_spin_entropies(pair_rho, keep_first: bool) -> np.ndarray:
    """Entropy of one qubit of a (..., 4, 4) pair state."""
    m = _matrix(pair_rho).reshape(np.shape(_matrix(pair_rho))[:-2] + (2, 2, 2, 2))
    red = np.einsum("...ajbj->...ab", m) if keep_first else np.einsum("...jajb->...ab", m)
    return np.asarray(von_neumann_entropy(red))


def single_spin_entropy_avg(pair_estimates, pairs: Sequence[tuple[int, int]], k: int) -> EnsembleEstimate:
    """Average single-spin entropy of neutrino k over its three pair reductions.

    ``pair_estimates[i]`` holds replicas of the pair ``pairs[i]`` state, either a
    DensityMatrixEstimate or a (L, 4, 4) array.  The error bar is the mean of
    the three per-pair half-widths, centred on the averaged mean.
    """
    if len(pair_estimates) != len(pairs):
        raise ValueError("one estimate per pair is required")
    per_pair = []
    for est, pair in zip(pair_estimates, pairs):
        if k not in pair:
            raise ValueError(f"pair {pair} does not contain neutrino {k}")
        reps = est.replica_array() if hasattr(est, "replica_array") else np.asarray(est)
        per_pair.append(single_spin_entropies(reps, keep_first=pair[0] == k))
    return combine_pair_estimates(per_pair)


def combine_pair_estimates(per_pair, valid=None) -> EnsembleEstimate:
    """Average of per-pair ensembles; error bar is the mean of the half-widths.

    ``valid`` (optional, one boolean mask per pair) drops replicas from the
    statistics of that pair; the combined samples keep only replicas valid
    for every pair.
    """
    per_pair = [np.asarray(s, dtype=float) for s in per_pair]
    valid = [np.ones(len(s), dtype=bool) for s in per_pair] if valid is None else [np.asarray(v, dtype=bool) for v in valid]
    every = np.logical_and.reduce(valid)
    n_invalid = int((~every).sum())
    if not all(v.any() for v in valid):
        return EnsembleEstimate(np.empty(0), float("nan"), float("nan"), float("nan"), True, n_invalid)
    stats = [ensemble_statistics(s[v]) for s, v in zip(per_pair, valid)]
    samples = np.mean([s[every] for s in per_pair], axis=0)
    mean = float(np.mean([s.mean for s in stats]))
    half = float(np.mean([s.half_width for s in stats]))
    degenerate = any(s.degenerate for s in stats)
    if degenerate:
        return EnsembleEstimate(samples, mean, float("nan"), float("nan"), True, n_invalid)
    return EnsembleEstimate(samples, mean, mean - half, mean + half, False, n_invalid)


def _concurrence_lambdas(rho) -> np.ndarray:
    m = _matrix(rho)
    lam, v = np.linalg.eigh((m + np.swapaxes(m.conj(), -1, -2)) / 2)
    if np.any(lam < -NEG_EIG_TOL):
        raise ValueError(f"unphysical density matrix (eigenvalue {lam.min():.3g})")
    sq = np.einsum("...ij,...j,...kj->...ik", v, np.sqrt(np.clip(lam, 0, None)), v.conj())
    tilde = YY @ m.conj() @ YY
    # same spectrum as rho * tilde, but Hermitian PSD
    mu = np.linalg.eigvalsh(sq @ tilde @ sq)
    if np.any(mu < -NEG_EIG_TOL):
        raise ArithmeticError(f"negative eigenvalue {mu.min():.3g} in concurrence matrix")
    return np.sqrt(np.clip(mu, 0, None))[..., ::-1]


def extended_concurrence(rho) -> float | np.ndarray:
    lam = _concurrence_lambdas(rho)
    c = lam[..., 0] - lam[..., 1] - lam[..., 2] - lam[..., 3]
    return float(c) if np.ndim(c) == 0 else c


def concurrence(rho) -> float | np.ndarray:
    c = np.maximum(0.0, extended_concurrence(rho))
    return float(c) if np.ndim(c) == 0 else c


def pair_reduced(rho_full: np.ndarray, n: int, pair: tuple[int, int]) -> np.ndarray:
    """4x4 state of (pair[0], pair[1]) with pair[0] as the more significant qubit."""
    return partial_trace(rho_full, n, list(pair))
