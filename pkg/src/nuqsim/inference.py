"""Bayesian resampling of measurement counts and readout-error mitigation.

Statistical uncertainty is propagated by posterior-predictive replicas:
draw outcome probabilities from the conjugate posterior of the observed
counts, then draw a fresh count vector at those probabilities.  Any estimator
evaluated on the replicas gives an ensemble whose spread is the error bar.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from .noise import CalibrationRecord, confusion_matrix
from .qsim import CountsRecord, make_rng

DEFAULT_REPLICAS = 1000
CI_PERCENTILES = (16.0, 84.0)


@dataclass(frozen=True)
class BetaPosterior:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"beta parameters must be positive, got ({self.alpha}, {self.beta})")

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)


@dataclass(frozen=True)
class DirichletPosterior:
    concentration: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.concentration, dtype=float)
        if c.ndim != 1 or not np.all(c > 0):
            raise ValueError("Dirichlet concentration must be a positive vector")
        object.__setattr__(self, "concentration", c)

    @property
    def mean(self) -> np.ndarray:
        return self.concentration / self.concentration.sum()

    @classmethod
    def uniform(cls, k: int) -> "DirichletPosterior":
        return cls(np.ones(k))


@dataclass(frozen=True)
class ReadoutParams:
    e0: np.ndarray
    e1: np.ndarray

    def __post_init__(self):
        e0 = np.atleast_1d(np.asarray(self.e0, dtype=float))
        e1 = np.atleast_1d(np.asarray(self.e1, dtype=float))
        if e0.shape != e1.shape:
            raise ValueError("e0 and e1 need the same shape")
        if np.any((e0 < 0) | (e0 > 1) | (e1 < 0) | (e1 > 1)):
            raise ValueError("readout error probabilities must lie in [0, 1]")
        object.__setattr__(self, "e0", e0)
        object.__setattr__(self, "e1", e1)

    @property
    def n_qubits(self) -> int:
        return len(self.e0)


@dataclass
class EnsembleEstimate:
    samples: np.ndarray
    mean: float
    ci_low: float
    ci_high: float
    # set when fewer than two samples were available (no interval)
    degenerate: bool = False
    # replicas dropped upstream, e.g. where an extrapolation ansatz failed
    n_invalid: int = 0
    # sample count of a deserialized estimate whose samples were not stored
    stored_count: int | None = None

    @property
    def n_samples(self) -> int:
        return len(self.samples) if self.stored_count is None else self.stored_count

    @property
    def half_width(self) -> float:
        return (self.ci_high - self.ci_low) / 2


@dataclass
class ReadoutEnsemble:
    """Replicas from mitigate_readout_ensemble, all indexed by replica first."""

    raw_counts: np.ndarray  # (L, 2^k) predictive count replicas
    e0: np.ndarray  # (L, k) sampled P(read 1 | 0)
    e1: np.ndarray  # (L, k) sampled P(read 0 | 1)
    quasi_probs: np.ndarray  # (L, 2^k) corrected, unclipped
    qubits: tuple[int, ...] = ()
    degenerate: bool = False

    @property
    def n_replicas(self) -> int:
        return len(self.raw_counts)

    def confusion(self) -> np.ndarray:
        """(L, 2^k, 2^k) forward readout maps of the sampled parameters."""
        return np.array([_kron_confusion(a, b) for a, b in zip(self.e0, self.e1)])


def beta_update(prior: BetaPosterior, m: int, M: int) -> BetaPosterior:
    if m < 0 or M < 0 or m > M:
        raise ValueError(f"need 0 <= m <= M, got m={m}, M={M}")
    return BetaPosterior(prior.alpha + m, prior.beta + M - m)


def dirichlet_update(prior: DirichletPosterior, counts) -> DirichletPosterior:
    counts = np.asarray(counts, dtype=float)
    if counts.shape != prior.concentration.shape:
        raise ValueError("counts and prior have different numbers of categories")
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    return DirichletPosterior(prior.concentration + counts)


def sample_predictive(posterior, M: int, L: int, seed) -> np.ndarray:
    """L posterior-predictive replicas of M trials.

    Beta posteriors give an (L,) array of success counts, Dirichlet posteriors
    an (L, K) array of count vectors.
    """
    if L < 1:
        raise ValueError("need at least one replica")
    rng = make_rng(seed)
    if isinstance(posterior, BetaPosterior):
        p = rng.beta(posterior.alpha, posterior.beta, size=L)
        return rng.binomial(M, p)
    if isinstance(posterior, DirichletPosterior):
        p = rng.dirichlet(posterior.concentration, size=L)
        return rng.multinomial(M, p)
    raise TypeError(f"unsupported posterior {type(posterior).__name__}")


def _kron_confusion(e0, e1) -> np.ndarray:
    return reduce(np.kron, [confusion_matrix(a, b) for a, b in zip(e0, e1)])


def readout_correction_map(params: ReadoutParams) -> np.ndarray:
    """Tensor product of inverted per-qubit confusion matrices (qubit 0 leftmost)."""
    singular = np.nonzero(params.e0 + params.e1 >= 1)[0]
    if singular.size:
        raise ValueError(f"confusion matrix not invertible for qubits {singular.tolist()} (e0 + e1 >= 1)")
    return reduce(np.kron, [np.linalg.inv(confusion_matrix(a, b)) for a, b in zip(params.e0, params.e1)])


def calibration_posteriors(calibration: CalibrationRecord, qubits=None) -> tuple[list[BetaPosterior], list[BetaPosterior]]:
    """Beta posteriors (uniform prior) for e0 and e1 of each requested qubit."""
    f0, f1 = calibration.flip_counts()
    qubits = range(calibration.n_qubits) if qubits is None else qubits
    shots = calibration.shots
    prior = BetaPosterior(1.0, 1.0)
    post0 = [beta_update(prior, int(f0[q]), shots) for q in qubits]
    post1 = [beta_update(prior, int(f1[q]), shots) for q in qubits]
    return post0, post1


def sample_readout_params(calibration: CalibrationRecord, L: int, seed, qubits=None) -> tuple[np.ndarray, np.ndarray]:
    post0, post1 = calibration_posteriors(calibration, qubits)
    rng = make_rng(seed)
    e0 = np.stack([rng.beta(p.alpha, p.beta, size=L) for p in post0], axis=1)
    e1 = np.stack([rng.beta(p.alpha, p.beta, size=L) for p in post1], axis=1)
    return e0, e1


def mitigate_readout_ensemble(
    measurement: CountsRecord,
    calibration: CalibrationRecord,
    L: int = DEFAULT_REPLICAS,
    seed=0,
    qubits=None,
) -> ReadoutEnsemble:
    """Posterior-predictive count replicas paired with sampled readout parameters.

    ``qubits`` names the physical qubit behind each measured bit (default:
    bit i is qubit i).  Each replica's counts are corrected with the inverse
    of its own sampled confusion map; the quasi-probabilities are not clipped.
    """
    if L < 1:
        raise ValueError("need at least one replica")
    k = measurement.n_measured
    qubits = tuple(range(k)) if qubits is None else tuple(qubits)
    if len(qubits) != k:
        raise ValueError("one calibrated qubit is needed per measured bit")
    if max(qubits) >= calibration.n_qubits:
        raise ValueError("calibration does not cover every measured qubit")
    seq = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    s_counts, s_params = seq.spawn(2)
    post = dirichlet_update(DirichletPosterior.uniform(2**k), measurement.vector(k))
    raw = sample_predictive(post, measurement.shots, L, s_counts)
    e0, e1 = sample_readout_params(calibration, L, s_params, qubits)
    corrected = np.empty(raw.shape, dtype=float)
    for i in range(L):
        corr = readout_correction_map(ReadoutParams(e0[i], e1[i]))
        corrected[i] = corr @ (raw[i] / measurement.shots)
    return ReadoutEnsemble(raw, e0, e1, corrected, qubits, degenerate=L < 2)


def ensemble_statistics(samples, n_invalid: int = 0) -> EnsembleEstimate:
    """Mean and central 68% percentile interval of an ensemble."""
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise ValueError("empty ensemble")
    mean = float(samples.mean())
    if samples.size < 2:
        return EnsembleEstimate(samples, mean, float("nan"), float("nan"), True, n_invalid)
    lo, hi = np.percentile(samples, CI_PERCENTILES)
    return EnsembleEstimate(samples, mean, float(lo), float(hi), False, n_invalid)
