"""End-to-end pipeline: simulate, tomograph, mitigate, extrapolate.

Seed discipline: every random draw comes from
``stream(master, t_index, r, kind, *detail)``, a SeedSequence keyed by the
task, so any subset of a run can be reproduced on its own and the result
does not depend on execution order.  ``kind`` is one of the STREAM_* codes.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from . import __version__
from .circuits import (
    Circuit,
    compile_circuit,
    default_ordering,
    gate_counts,
    physical_bitstring,
    swap_network_circuit,
    trotter_u1_circuit,
    u1_matrix,
    u2_matrix,
)
from .config import ExperimentConfig
from .inference import (
    DirichletPosterior,
    EnsembleEstimate,
    dirichlet_update,
    ensemble_statistics,
    mitigate_readout_ensemble,
    sample_readout_params,
    _kron_confusion,
)
from .model import build_model, exact_propagator
from .noise import CalibrationRecord, NoiseModel, amplify_noise, calibration_run, evolve_density, measure
from .observables import (
    ObservableSeries,
    combine_pair_estimates,
    extended_concurrence,
    inversion_from_probabilities,
    single_spin_entropies,
    von_neumann_entropy,
)
from .qsim import CountsRecord, make_rng, new_basis_state
from .tomography import SETTING_LABELS, ConvergenceError, measurement_settings, ml_reconstruct_batch, pair_counts_table
from .zne import extrapolate_replicas

STREAM_Z, STREAM_TOMO, STREAM_CAL, STREAM_Z_REP, STREAM_PAIR_REP, STREAM_RO_Z, STREAM_RO_PAIR = range(7)
CSV_HEADER = ("t", "r_or_tag", "mean", "ci_low", "ci_high")
ENTROPY_FAMILIES = ("single_spin_entropy", "pair_entropy")


def stream(master: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))


# ---------------------------------------------------------------- simulation


def build_circuit(config: ExperimentConfig, t: float) -> Circuit | None:
    """Compiled single-step circuit at time t (None for the exact propagator)."""
    model = build_model(config.n, config.theta_v, config.max_cos, config.matter_A)
    if config.propagator == "exact":
        return None
    if config.propagator == "u1":
        return compile_circuit(trotter_u1_circuit(model, t, ordering=config.ordering))
    return compile_circuit(swap_network_circuit(model, t, ordering=config.ordering))


def final_state(config: ExperimentConfig, circuit: Circuit | None, t: float, r: int, noise: NoiseModel) -> tuple[np.ndarray, tuple[int, ...]]:
    """Physical density matrix after the (noise-amplified) circuit and the
    logical -> physical qubit map at measurement time."""
    n = config.n
    if circuit is None:
        model = build_model(n, config.theta_v, config.max_cos, config.matter_A)
        psi = exact_propagator(model, t) @ new_basis_state(n, config.initial_state).amplitudes
        return np.outer(psi, psi.conj()), tuple(range(n))
    init = new_basis_state(n, physical_bitstring(config.initial_state, circuit.initial_layout))
    rho = evolve_density(amplify_noise(circuit, r), init, noise)
    return rho, circuit.permutation


@dataclass
class PointData:
    """Raw measurements at one (t, r)."""

    z_counts: CountsRecord
    pair_counts: dict  # logical pair -> (9, 4) count table
    calibration: CalibrationRecord
    permutation: tuple[int, ...]


def sample_point(config: ExperimentConfig, rho: np.ndarray, permutation, t_index: int, r: int, noise: NoiseModel, pairs=None) -> PointData:
    n, seed = config.n, config.seed
    pairs = list(combinations(range(n), 2)) if pairs is None else [tuple(p) for p in pairs]
    z = measure(rho, n, "Z" * n, noise, config.shots, stream(seed, t_index, r, STREAM_Z))
    tables = {}
    for pair in pairs:
        pi = _pair_index(n, pair)
        phys = (permutation[pair[0]], permutation[pair[1]])
        recs = []
        for si, setting in enumerate(measurement_settings(phys)):
            rec = measure(rho, n, list(setting), noise, config.shots, stream(seed, t_index, r, STREAM_TOMO, pi, si))
            recs.append(CountsRecord(SETTING_LABELS[si], rec.counts, rec.shots))
        tables[pair] = pair_counts_table(recs)
    cal = calibration_run(noise, n, config.calibration_shots, stream(seed, t_index, r, STREAM_CAL))
    return PointData(z, tables, cal, tuple(permutation))


def _pair_index(n: int, pair) -> int:
    return list(combinations(range(n), 2)).index(tuple(pair))


# ---------------------------------------------------------------- replicas


def predictive_tables(table: np.ndarray, L: int, seed) -> np.ndarray:
    """(L, 9, 4) posterior-predictive replicas of a (9, 4) count table."""
    rng = make_rng(seed)
    out = np.empty((L,) + table.shape, dtype=np.int64)
    for s, row in enumerate(table):
        post = dirichlet_update(DirichletPosterior.uniform(len(row)), row)
        p = rng.dirichlet(post.concentration, size=L)
        out[:, s] = rng.multinomial(int(row.sum()), p)
    return out


def _ml(tables, confusion, context: str) -> np.ndarray:
    try:
        return ml_reconstruct_batch(tables, confusion)
    except ConvergenceError as err:
        raise ConvergenceError(f"{context}, replicas {list(err.indices)[:10]}: {err}", err.best, err.grad_norm, err.indices) from err


def pair_replicas(config: ExperimentConfig, data: PointData, t_index: int, r: int, readout: bool) -> dict:
    """ML density-matrix replicas (L, 4, 4) for each measured pair.

    With ``readout`` each replica is fitted through its own sampled readout
    confusion (shared by the nine settings of that replica).
    """
    L, seed, t = config.replicas, config.seed, config.times[t_index]
    out = {}
    for pair, table in data.pair_counts.items():
        pi = _pair_index(config.n, pair)
        reps = predictive_tables(table, L, stream(seed, t_index, r, STREAM_PAIR_REP, pi))
        confusion = None
        if readout:
            phys = (data.permutation[pair[0]], data.permutation[pair[1]])
            e0, e1 = sample_readout_params(data.calibration, L, stream(seed, t_index, r, STREAM_RO_PAIR, pi), phys)
            c = np.array([_kron_confusion(a, b) for a, b in zip(e0, e1)])
            confusion = np.broadcast_to(c[:, None], (L, 9, 4, 4))
        context = f"t={t:g}, r={r}, pair {pair[0] + 1}{pair[1] + 1}" + (", readout-corrected" if readout else "")
        out[pair] = _ml(reps, confusion, context)
    return out


def z_replicas(config: ExperimentConfig, data: PointData, t_index: int, r: int, readout: bool) -> np.ndarray:
    """(L, 2^n) outcome (quasi-)probability replicas of the Z-basis run."""
    L, seed, n = config.replicas, config.seed, config.n
    if readout:
        ens = mitigate_readout_ensemble(data.z_counts, data.calibration, L, stream(seed, t_index, r, STREAM_RO_Z), tuple(range(n)))
        return ens.quasi_probs
    post = dirichlet_update(DirichletPosterior.uniform(2**n), data.z_counts.vector(n))
    rng = make_rng(stream(seed, t_index, r, STREAM_Z_REP))
    p = rng.dirichlet(post.concentration, size=L)
    return rng.multinomial(data.z_counts.shots, p) / data.z_counts.shots


# ---------------------------------------------------------------- observables


def observable_samples(config: ExperimentConfig, z_probs: np.ndarray, pair_reps: dict, permutation) -> tuple[dict, dict]:
    """Replica samples of every observable at one (t, r, tag).

    Returns (samples by series name, single-spin samples by (k, pair)).
    """
    n = config.n
    out, single = {}, {}
    for k in range(n):
        out[f"inversion_probability_{k + 1}"] = inversion_from_probabilities(z_probs, n, k, config.initial_state[k], permutation)
    for pair, reps in pair_reps.items():
        name = f"{pair[0] + 1}{pair[1] + 1}"
        out[f"pair_entropy_{name}"] = von_neumann_entropy(reps)
        out[f"extended_concurrence_{name}"] = extended_concurrence(reps)
        single[(pair[0], pair)] = single_spin_entropies(reps, keep_first=True)
        single[(pair[1], pair)] = single_spin_entropies(reps, keep_first=False)
    return out, single


def family(name: str) -> str:
    return name.rsplit("_", 1)[0]


def series_names(n: int) -> list[str]:
    names = [f"inversion_probability_{k + 1}" for k in range(n)]
    names += [f"single_spin_entropy_{k + 1}" for k in range(n)]
    for prefix in ("pair_entropy", "concurrence", "extended_concurrence"):
        names += [f"{prefix}_{p + 1}{q + 1}" for p, q in combinations(range(n), 2)]
    return names


def _estimate(samples, valid=None) -> EnsembleEstimate:
    samples = np.asarray(samples, dtype=float)
    if valid is None:
        return ensemble_statistics(samples)
    n_invalid = int((~valid).sum())
    if not valid.any():
        return EnsembleEstimate(np.empty(0), float("nan"), float("nan"), float("nan"), True, n_invalid)
    return ensemble_statistics(samples[valid], n_invalid)


def _single_spin(single: dict, k: int, valid: dict | None = None) -> EnsembleEstimate:
    keys = sorted(key for key in single if key[0] == k)
    return combine_pair_estimates([single[key] for key in keys], None if valid is None else [valid[key] for key in keys])


def point_estimates(samples: dict, single: dict, n: int) -> dict:
    """EnsembleEstimates for every series name from one tag's samples."""
    est = {name: _estimate(s) for name, s in samples.items() if not name.startswith("extended")}
    for name, s in samples.items():
        if name.startswith("extended"):
            est[name] = _estimate(s)
            est["concurrence" + name[len("extended_concurrence"):]] = _estimate(np.maximum(0.0, s))
    for k in range(n):
        if any(key[0] == k for key in single):
            est[f"single_spin_entropy_{k + 1}"] = _single_spin(single, k)
    return est


def mitigated_estimates(config: ExperimentConfig, by_r: dict, single_by_r: dict) -> dict:
    """Zero-noise extrapolated estimates, tag -> name -> EnsembleEstimate.

    ``by_r[r]`` / ``single_by_r[r]`` are the replica samples at noise level r.
    Richardson uses every configured level, the exponential forms the two
    extrapolation levels.  Replicas where an ansatz fails are dropped and
    counted in n_invalid.
    """
    levels = sorted(by_r)
    out: dict[str, dict] = {}
    names = list(by_r[levels[0]])
    for name in names:
        fam = family(name)
        for method in config.mitigation.get(fam, ()):
            use = levels if method == "richardson" else config.extrapolation_levels
            vals, valid = extrapolate_replicas({r: by_r[r][name] for r in use}, method, config.asymptote(fam), tuple(use))
            tag = out.setdefault(method, {})
            tag[name] = _estimate(vals, valid)
            if fam == "extended_concurrence":
                tag["concurrence" + name[len("extended_concurrence"):]] = _estimate(np.maximum(0.0, np.nan_to_num(vals)), valid)
    for method in config.mitigation.get("single_spin_entropy", ()):
        use = levels if method == "richardson" else config.extrapolation_levels
        vals, valid = {}, {}
        for key in single_by_r[levels[0]]:
            vals[key], valid[key] = extrapolate_replicas(
                {r: single_by_r[r][key] for r in use}, method, config.asymptote("single_spin_entropy"), tuple(use)
            )
        for k in range(config.n):
            if any(key[0] == k for key in vals):
                out.setdefault(method, {})[f"single_spin_entropy_{k + 1}"] = _single_spin(vals, k, valid)
    return out


# ---------------------------------------------------------------- bundle


@dataclass
class ResultsBundle:
    config: dict
    config_hash: str
    seed: int
    version: str
    series: dict = field(default_factory=dict)  # name -> list[ObservableSeries]
    circuits: list = field(default_factory=list)  # per-time gate counts and layouts

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "version": self.version,
            "circuits": self.circuits,
            "series": {name: [_series_dict(s) for s in items] for name, items in self.series.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ResultsBundle":
        series = {name: [_series_from_dict(name, s) for s in items] for name, items in d["series"].items()}
        return cls(d["config"], d["config_hash"], d["seed"], d["version"], series, d["circuits"])

    @classmethod
    def from_json(cls, text: str) -> "ResultsBundle":
        return cls.from_dict(json.loads(text))


def tag_label(s: ObservableSeries) -> str:
    if s.tag == "bare":
        return f"r{s.r}"
    if s.tag == "readout":
        return f"ro-r{s.r}"
    return s.tag


def _series_dict(s: ObservableSeries) -> dict:
    below = family(s.name) in ENTROPY_FAMILIES
    return {
        "tag": s.tag,
        "r": s.r,
        "label": tag_label(s),
        "config_hash": s.meta.get("config_hash", ""),
        "times": [float(t) for t in s.times],
        "estimates": [
            {
                "mean": e.mean,
                "ci_low": e.ci_low,
                "ci_high": e.ci_high,
                "degenerate": e.degenerate,
                "n_invalid": e.n_invalid,
                "n_samples": e.n_samples,
                **({"below_zero": bool(e.mean < 0)} if below else {}),
            }
            for e in s.estimates
        ],
    }


def _series_from_dict(name: str, d: dict) -> ObservableSeries:
    # replica samples are not serialized
    ests = [EnsembleEstimate(np.empty(0), e["mean"], e["ci_low"], e["ci_high"], e["degenerate"], e["n_invalid"], e["n_samples"]) for e in d["estimates"]]
    return ObservableSeries(name, d["times"], ests, d["r"], d["tag"], {"config_hash": d["config_hash"]})


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def series_csv(items: list[ObservableSeries]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for s in items:
        label = tag_label(s)
        for t, e in zip(s.times, s.estimates):
            w.writerow((_fmt(t), label, _fmt(e.mean), _fmt(e.ci_low), _fmt(e.ci_high)))
    return buf.getvalue()


def emit_series(bundle: ResultsBundle, out_dir: str | Path, fmt: str = "csv") -> list[Path]:
    """One file per observable plus bundle.json with the full metadata."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, items in bundle.series.items():
        path = out / f"{name}.{fmt}"
        if fmt == "csv":
            text = series_csv(items)
        else:
            text = json.dumps({"name": name, "config_hash": bundle.config_hash, "series": [_series_dict(s) for s in items]}, indent=1, sort_keys=True)
        path.write_text(text, encoding="utf-8")
        written.append(path)
    path = out / "bundle.json"
    path.write_text(bundle.to_json(), encoding="utf-8")
    written.append(path)
    return written


# ---------------------------------------------------------------- driver


def run_experiment(config: ExperimentConfig, write: bool = True, fmt: str = "csv", log=None) -> ResultsBundle:
    """Full pipeline over the time grid and noise levels; deterministic per seed."""
    n = config.n
    noise = config.noise_model() if config.propagator != "exact" else NoiseModel(0.0, config.readout_e0, config.readout_e1, config.seed)
    readout = config.readout_mitigation and any(config.readout_e0 + config.readout_e1)
    levels = sorted(config.noise_levels)
    chash = config.config_hash()
    per_time: list[dict] = []
    circuits = []
    for ti, t in enumerate(config.times):
        circuit = build_circuit(config, t)
        ests: dict[str, dict] = {}
        src_by_r, single_by_r = {}, {}
        for r in levels:
            rho, perm = final_state(config, circuit, t, r, noise)
            data = sample_point(config, rho, perm, ti, r, noise)
            bare_s, bare_single = observable_samples(config, z_replicas(config, data, ti, r, False), pair_replicas(config, data, ti, r, False), perm)
            ests[f"r{r}"] = point_estimates(bare_s, bare_single, n)
            src_s, src_single = bare_s, bare_single
            if readout:
                src_s, src_single = observable_samples(config, z_replicas(config, data, ti, r, True), pair_replicas(config, data, ti, r, True), perm)
                ests[f"ro-r{r}"] = point_estimates(src_s, src_single, n)
            src_by_r[r], single_by_r[r] = src_s, src_single
            if log:
                log(f"t={t:g} r={r} done")
        if len(levels) >= 2:
            ests.update(mitigated_estimates(config, src_by_r, single_by_r))
        per_time.append(ests)
        meta = {"t": t, "permutation": list(circuit.permutation) if circuit else list(range(n))}
        if circuit is not None:
            ent, rot = gate_counts(circuit)
            meta.update(entanglers=ent, rotations=rot, initial_layout=list(circuit.initial_layout), final_layout=list(circuit.final_layout))
        circuits.append(meta)
    bundle = ResultsBundle(config.to_dict(), chash, config.seed, __version__, {}, circuits)
    tags = list(per_time[0])
    for name in series_names(n):
        items = []
        for tag in tags:
            if name not in per_time[0][tag]:
                continue
            if tag.startswith("ro-"):
                kind, r = "readout", int(tag[4:])
            elif tag[0] == "r" and tag[1:].isdigit():
                kind, r = "bare", int(tag[1:])
            else:
                kind, r = tag, None
            items.append(ObservableSeries(name, config.times, [pt[tag][name] for pt in per_time], r, kind, {"config_hash": chash}))
        bundle.series[name] = items
    if write:
        emit_series(bundle, config.out_dir, fmt)
    return bundle


# ---------------------------------------------------------------- propagators


@dataclass
class PropagatorReport:
    times: np.ndarray
    columns: dict  # column name -> values over the grid

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", *self.columns])
        for i, t in enumerate(self.times):
            w.writerow([_fmt(t), *(_fmt(v[i]) for v in self.columns.values())])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"t": [float(t) for t in self.times], **{k: [float(x) for x in v] for k, v in self.columns.items()}}, indent=1)


def propagator_variants(config: ExperimentConfig) -> dict:
    """Approximate propagators compared against exp(-iHt), keyed by report prefix."""
    ident = default_ordering(config.n)
    return {
        "u1": lambda m, t: u1_matrix(m, t, config.ordering),
        "u1_lex": lambda m, t: u1_matrix(m, t, None),
        "u2": lambda m, t: u2_matrix(m, t, config.ordering),
        "u2_identity_order": lambda m, t: u2_matrix(m, t, ident),
    }


def compare_propagators(config: ExperimentConfig) -> PropagatorReport:
    """Matrix 2-norm errors, state fidelities and P_inv of neutrinos 1 and 2."""
    n = config.n
    model = build_model(n, config.theta_v, config.max_cos, config.matter_A)
    psi0 = new_basis_state(n, config.initial_state).amplitudes
    variants = propagator_variants(config)
    cols: dict[str, list] = {"p_inv_1_exact": [], "p_inv_2_exact": []}
    for key in variants:
        cols.update({f"norm_{key}": [], f"fidelity_{key}": [], f"p_inv_1_{key}": [], f"p_inv_2_{key}": []})
    for t in config.times:
        u_ex = exact_propagator(model, t)
        phi = u_ex @ psi0
        for k in (0, 1):
            cols[f"p_inv_{k + 1}_exact"].append(float(inversion_from_probabilities(np.abs(phi) ** 2, n, k, config.initial_state[k], range(n))))
        for key, make in variants.items():
            u = make(model, t)
            psi = u @ psi0
            cols[f"norm_{key}"].append(float(np.linalg.norm(u_ex - u, 2)))
            cols[f"fidelity_{key}"].append(float(abs(np.vdot(phi, psi)) ** 2))
            for k in (0, 1):
                cols[f"p_inv_{k + 1}_{key}"].append(float(inversion_from_probabilities(np.abs(psi) ** 2, n, k, config.initial_state[k], range(n))))
    return PropagatorReport(np.asarray(config.times), {k: np.asarray(v) for k, v in cols.items()})
