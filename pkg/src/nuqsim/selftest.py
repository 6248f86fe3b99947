"""Self-checks shared by the CLI and the acceptance suite."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .circuits import compile_circuit, physical_bitstring, swap_network_circuit
from .config import ExperimentConfig
from .experiment import pair_replicas, sample_point, stream
from .inference import ensemble_statistics, mitigate_readout_ensemble, readout_correction_map, ReadoutParams
from .model import build_model, exact_propagator
from .noise import NoiseModel, amplify_noise, apply_confusion, calibration_run, confusion_matrix, evolve_density, measure
from .observables import combine_pair_estimates, extended_concurrence, inversion_from_probabilities, single_spin_entropies, von_neumann_entropy
from .qsim import CountsRecord, new_basis_state, partial_trace
from .tomography import SETTING_LABELS, measurement_settings, ml_reconstruct_batch, pair_counts_table
from .zne import ASYMPTOTES, extrapolate_replicas


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(0.5 * np.abs(np.linalg.eigvalsh(a - b)).sum())


def exact_state(config: ExperimentConfig, t: float) -> np.ndarray:
    model = build_model(config.n, config.theta_v, config.max_cos, config.matter_A)
    return exact_propagator(model, t) @ new_basis_state(config.n, config.initial_state).amplitudes


def tomography_selftest(config: ExperimentConfig, shots: int = 8192) -> np.ndarray:
    """Trace distance (times x pairs) between ML fits of sampled exact pair
    marginals and the exact reduced density matrices."""
    n = config.n
    pairs = list(combinations(range(n), 2))
    noise = NoiseModel.noiseless(n)
    tables, refs = [], []
    for ti, t in enumerate(config.times):
        psi = exact_state(config, t)
        rho = np.outer(psi, psi.conj())
        for pi, pair in enumerate(pairs):
            recs = [
                CountsRecord(SETTING_LABELS[si], measure(rho, n, list(s), noise, shots, stream(config.seed, ti, 0, 99, pi, si)).counts)
                for si, s in enumerate(measurement_settings(pair))
            ]
            tables.append(pair_counts_table(recs))
            refs.append(partial_trace(rho, n, list(pair)))
    fits = ml_reconstruct_batch(np.array(tables))
    dist = [trace_distance(f, r) for f, r in zip(fits, refs)]
    return np.array(dist).reshape(len(config.times), len(pairs))


def readout_roundtrip_error(e0=(0.05, 0.05), e1=(0.05, 0.05), seed: int = 0) -> float:
    """Max error of corrupt-then-correct on random exact probability vectors."""
    rng = np.random.default_rng(seed)
    corr = readout_correction_map(ReadoutParams(e0, e1))
    mats = [confusion_matrix(a, b) for a, b in zip(e0, e1)]
    worst = 0.0
    for _ in range(20):
        p = rng.dirichlet(np.ones(2 ** len(e0)))
        worst = max(worst, float(np.abs(corr @ apply_confusion(p, mats) - p).max()))
    return worst


@dataclass
class CoverageResult:
    covered: int
    trials: int

    @property
    def fraction(self) -> float:
        return self.covered / self.trials


def readout_coverage(trials: int = 200, e: float = 0.05, shots: int = 8192, replicas: int = 1000, seed: int = 0) -> CoverageResult:
    """How often the readout-mitigated ensemble's 68% interval covers <Z> = 1 on |0>."""
    noise = NoiseModel.uniform(1, 0.0, e, e)
    rho = np.array([[1, 0], [0, 0]], dtype=complex)
    hits = 0
    for k in range(trials):
        s_meas, s_cal, s_ens = np.random.SeedSequence(seed, spawn_key=(k,)).spawn(3)
        m = measure(rho, 1, "Z", noise, shots, s_meas)
        cal = calibration_run(noise, 1, shots, s_cal)
        q = mitigate_readout_ensemble(m, cal, replicas, s_ens).quasi_probs
        est = ensemble_statistics(q[:, 0] - q[:, 1])
        hits += bool(est.ci_low <= 1.0 <= est.ci_high)
    return CoverageResult(hits, trials)


def zne_synthetic_errors() -> dict:
    """Worst recovery error of each extrapolator on data drawn from its own ansatz."""
    rng = np.random.default_rng(1)
    out = {"richardson": 0.0, "exp": 0.0, "shifted-exp": 0.0}
    for _ in range(50):
        a, b, alpha = rng.uniform(-2, 2), rng.uniform(-1, 1), rng.uniform(0.05, 1.0)
        amp = rng.choice([-1, 1]) * rng.uniform(0.1, 2)
        asym = rng.uniform(-1, 2)
        lin = {r: np.array([a + b * r]) for r in (1, 3)}
        ex = {r: np.array([amp * np.exp(-alpha * r)]) for r in (1, 3)}
        sh = {r: np.array([asym + amp * np.exp(-alpha * r)]) for r in (1, 3)}
        out["richardson"] = max(out["richardson"], abs(extrapolate_replicas(lin, "richardson")[0][0] - a))
        out["exp"] = max(out["exp"], abs(extrapolate_replicas(ex, "exp")[0][0] - amp))
        out["shifted-exp"] = max(out["shifted-exp"], abs(extrapolate_replicas(sh, "shifted-exp", asym)[0][0] - (asym + amp)))
    return out


def depolarized_observables(config: ExperimentConfig, t: float = 4.0, depol: float = 1.0) -> dict:
    """Exact observables of the compiled circuit's output under heavy depolarization."""
    n = config.n
    model = build_model(n, config.theta_v, config.max_cos, config.matter_A)
    circuit = compile_circuit(swap_network_circuit(model, t, ordering=config.ordering))
    init = new_basis_state(n, physical_bitstring(config.initial_state, circuit.initial_layout))
    rho = evolve_density(circuit, init, NoiseModel.uniform(n, depol, 0.0, 0.0))
    perm = circuit.permutation
    probs = np.clip(np.diag(rho).real, 0, None)
    out = {"inversion_probability": [float(inversion_from_probabilities(probs, n, k, config.initial_state[k], perm)) for k in range(n)]}
    pair_rhos = [partial_trace(rho, n, [perm[p], perm[q]]) for p, q in combinations(range(n), 2)]
    out["pair_entropy"] = [float(von_neumann_entropy(r)) for r in pair_rhos]
    out["extended_concurrence"] = [float(extended_concurrence(r)) for r in pair_rhos]
    out["single_spin_entropy"] = [float(von_neumann_entropy(partial_trace(rho, n, [perm[k]]))) for k in range(n)]
    return out


@dataclass
class ZnePoint:
    t: float
    mitigated: float
    mitigated_half: float
    reference: float
    reference_half: float

    @property
    def sigma(self) -> float:
        return float(np.hypot(self.mitigated_half, self.reference_half))

    @property
    def within_3sigma(self) -> bool:
        return abs(self.mitigated - self.reference) <= 3 * self.sigma


def _single_spin_samples(config, rho, perm, ti, r, noise, k):
    pairs = [tuple(sorted((k, q))) for q in range(config.n) if q != k]
    data = sample_point(config, rho, perm, ti, r, noise, pairs)
    reps = pair_replicas(config, data, ti, r, readout=False)
    return [single_spin_entropies(reps[p], keep_first=p[0] == k) for p in pairs]


def noiseless_reference(config: ExperimentConfig, k: int) -> list:
    """Sampled single-spin entropy of neutrino k from the noiseless single-step circuit."""
    n = config.n
    model = build_model(n, config.theta_v, config.max_cos, config.matter_A)
    clean = NoiseModel.noiseless(n)
    out = []
    for ti, t in enumerate(config.times):
        circuit = compile_circuit(swap_network_circuit(model, t, ordering=config.ordering))
        init = new_basis_state(n, physical_bitstring(config.initial_state, circuit.initial_layout))
        rho = evolve_density(circuit, init, clean)
        out.append(combine_pair_estimates(_single_spin_samples(config, rho, circuit.permutation, ti, 1, clean, k)))
    return out


def zne_recovery_trial(config: ExperimentConfig, k: int, reference: list) -> list[ZnePoint]:
    """Shifted-exponential mitigated single-spin entropy of neutrino k against a reference."""
    n = config.n
    model = build_model(n, config.theta_v, config.max_cos, config.matter_A)
    noise = config.noise_model()
    r1, r3 = config.extrapolation_levels
    points = []
    for ti, t in enumerate(config.times):
        circuit = compile_circuit(swap_network_circuit(model, t, ordering=config.ordering))
        init = new_basis_state(n, physical_bitstring(config.initial_state, circuit.initial_layout))
        by_r = {}
        for r in (r1, r3):
            rho = evolve_density(amplify_noise(circuit, r), init, noise)
            by_r[r] = _single_spin_samples(config, rho, circuit.permutation, ti, r, noise, k)
        vals, valid = zip(*[
            extrapolate_replicas({r1: by_r[r1][i], r3: by_r[r3][i]}, "shifted-exp", ASYMPTOTES["single_spin_entropy"], (r1, r3))
            for i in range(len(by_r[r1]))
        ])
        est = combine_pair_estimates(vals, valid)
        ref = reference[ti]
        points.append(ZnePoint(t, est.mean, est.half_width, ref.mean, ref.half_width))
    return points
