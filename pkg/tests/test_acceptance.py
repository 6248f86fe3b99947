"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import time
from math import comb

import numpy as np
import pytest

from nuqsim.circuits import compile_circuit, gate_counts, logical_unitary, pair_unitary, swap_network_circuit, u1_matrix, u2_matrix
from nuqsim.config import ExperimentConfig
from nuqsim.experiment import run_experiment
from nuqsim.inference import BetaPosterior, DirichletPosterior, beta_update, dirichlet_update, sample_predictive
from nuqsim.model import build_model, embed, exact_propagator
from nuqsim.observables import concurrence, extended_concurrence, inversion_from_probabilities
from nuqsim.qsim import new_basis_state
from nuqsim.selftest import (
    depolarized_observables,
    noiseless_reference,
    readout_coverage,
    readout_roundtrip_error,
    tomography_selftest,
    zne_recovery_trial,
    zne_synthetic_errors,
)

GRID = tuple(0.5 * k for k in range(17))


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return emit


def layer_product(model, t, ordering):
    """Oracle: pair propagators multiplied in swap-network order, tracked by hand."""
    n = model.n
    line = [k - 1 for k in ordering]
    u = np.eye(2**n, dtype=complex)
    for layer in range(n):
        for i in range(layer % 2, n - 1, 2):
            p, q = sorted((line[i], line[i + 1]))
            u = embed(pair_unitary(model, p, q, t), (p, q), n) @ u
            line[i], line[i + 1] = line[i + 1], line[i]
    return u


def p_inv(psi, n, state):
    probs = np.abs(psi) ** 2
    return np.array([inversion_from_probabilities(probs, n, k, state[k], range(n)) for k in range(n)])


def test_c01_swap_network_exactness(report):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for n in (2, 3, 4, 5):
        model = build_model(n)
        ordering = (1, 3, 2, 4) if n == 4 else tuple(range(1, n + 1))
        for t in rng.uniform(0, 8, 20):
            c = compile_circuit(swap_network_circuit(model, t, ordering))
            worst = max(worst, np.abs(logical_unitary(c) - layer_product(model, t, ordering)).max())
    elapsed = time.perf_counter() - start
    report(1, worst < 1e-8 and elapsed < 10, f"max deviation {worst:.2e} (< 1e-8), {elapsed:.1f} s (< 10 s)")


def test_c02_gate_count_bounds(report):
    model = build_model(4)
    counts = [gate_counts(compile_circuit(swap_network_circuit(model, t, (1, 3, 2, 4)))) for t in GRID[1:]]
    ent4, rot4 = max(c[0] for c in counts), max(c[1] for c in counts)
    general = {n: gate_counts(compile_circuit(swap_network_circuit(build_model(n), 2.7)))[0] for n in range(2, 7)}
    ok = ent4 <= 18 and rot4 <= 90 and all(general[n] <= 3 * comb(n, 2) for n in general)
    report(2, ok, f"N=4: {ent4} entanglers (<= 18), {rot4} rotations (<= 90); N=2..6 entanglers {general}")


def test_c03_trotter_order(report):
    model = build_model(4)
    ratios = {}
    for name, make in (("U1", lambda t: u1_matrix(model, t, (1, 3, 2, 4))), ("U2", lambda t: u2_matrix(model, t, (1, 3, 2, 4)))):
        err = lambda t: np.linalg.norm(make(t) - exact_propagator(model, t), 2)  # noqa: E731
        ratios[name] = [err(t) / err(t / 2) for t in (0.1, 0.05, 0.02)]
    ok = all(abs(r - 4) <= 0.5 for rs in ratios.values() for r in rs)
    detail = ", ".join(f"{k} ratios " + "/".join(f"{r:.3f}" for r in v) for k, v in ratios.items())
    report(3, ok, detail + " (4.0 +- 0.5)")


def test_c04_pair_propagator_advantage(report):
    model = build_model(4)
    psi0 = new_basis_state(4, "0011").amplitudes
    rows = []
    for t in [t for t in GRID if 4 <= t <= 8]:
        phi = exact_propagator(model, t) @ psi0
        f1 = abs(np.vdot(phi, u1_matrix(model, t, (1, 3, 2, 4)) @ psi0)) ** 2
        f2 = abs(np.vdot(phi, u2_matrix(model, t, (1, 3, 2, 4)) @ psi0)) ** 2
        rows.append((t, f1, f2))
    ok = all(f2 >= f1 for _, f1, f2 in rows)
    margin = min(f2 - f1 for _, f1, f2 in rows)
    report(4, ok, f"F(U2) - F(U1) >= {margin:.4f} over t in [4, 8] ({len(rows)} points)")


def test_c05_symmetry_and_u2_deviation(report):
    model = build_model(4)
    psi0 = new_basis_state(4, "0011").amplitudes
    sym, dev = 0.0, 0.0
    for t in np.linspace(0, 8, 161):
        p = p_inv(exact_propagator(model, t) @ psi0, 4, "0011")
        sym = max(sym, abs(p[0] - p[3]))
    for t in [t for t in GRID if t <= 6]:
        exact = p_inv(exact_propagator(model, t) @ psi0, 4, "0011")
        approx = p_inv(u2_matrix(model, t, (1, 3, 2, 4)) @ psi0, 4, "0011")
        dev = max(dev, np.abs(exact - approx).max())
    report(5, sym < 1e-9 and dev < 0.10, f"|P1 - P4| <= {sym:.1e} (< 1e-9); max U2 P_inv deviation for t <= 6: {dev:.3f} (< 0.10)")


def test_c06_depolarization_limits(report):
    cfg = ExperimentConfig()
    targets = {"inversion_probability": 0.5, "single_spin_entropy": 1.0, "pair_entropy": 2.0, "extended_concurrence": -0.5}
    worst = {k: 0.0 for k in targets}
    for t in (0.5, 4.0, 8.0):
        obs = depolarized_observables(cfg, t, depol=1.0)
        for k, v in targets.items():
            worst[k] = max(worst[k], max(abs(x - v) for x in obs[k]))
    ok = all(w <= 0.02 for w in worst.values())
    report(6, ok, "max deviation from limits " + ", ".join(f"{k} {w:.1e}" for k, w in worst.items()) + " (<= 0.02)")


def test_c07_zne_recovery(report):
    synth = zne_synthetic_errors()
    base = ExperimentConfig(times=(0.0, 2.0, 4.0, 6.0, 8.0), readout_e0=0.0, readout_e1=0.0, readout_mitigation=False, seed=12345)
    reference = noiseless_reference(base, 1)
    hits = []
    for seed in range(10):
        points = zne_recovery_trial(base.with_overrides(seed=seed), 1, reference)
        hits.append(sum(p.within_3sigma for p in points))
    ok = max(synth.values()) < 1e-10 and all(h >= 4 for h in hits)
    detail = f"synthetic recovery {max(synth.values()):.1e} (< 1e-10); points within 3 sigma per seed {hits} (each >= 4 of 5)"
    report(7, ok, detail)


def test_c08_tomography_fidelity(report):
    start = time.perf_counter()
    dist = tomography_selftest(ExperimentConfig())
    elapsed = time.perf_counter() - start
    ok = dist.shape == (17, 6) and dist.max() <= 0.03 and elapsed < 120
    report(8, ok, f"max trace distance {dist.max():.4f} over {dist.size} fits (<= 0.03), {elapsed:.1f} s (< 120 s)")


def test_c09_bayesian_layer(report):
    rng = np.random.default_rng(9)
    exact = True
    for _ in range(200):
        a, b = rng.integers(1, 20, 2)
        M = int(rng.integers(0, 10**6))
        m = int(rng.integers(0, M + 1))
        post = beta_update(BetaPosterior(int(a), int(b)), m, M)
        exact &= (post.alpha, post.beta) == (a + m, b + M - m)
        counts = rng.integers(0, 10**5, 4)
        exact &= np.array_equal(dirichlet_update(DirichletPosterior.uniform(4), counts).concentration, counts + 1)
    L = 10**5
    a, b, M = 12.0, 30.0, 200
    var = sample_predictive(BetaPosterior(a, b), M, L, 1).var()
    bb = M * a * b * (a + b + M) / ((a + b) ** 2 * (a + b + 1))
    conc = np.array([5.0, 9.0, 2.0, 14.0])
    A = conc.sum()
    dm = sample_predictive(DirichletPosterior(conc), M, L, 2).var(axis=0)
    pk = conc / A
    dm_exact = M * pk * (1 - pk) * (A + M) / (A + 1)
    rel = max(abs(var / bb - 1), np.abs(dm / dm_exact - 1).max())
    report(9, bool(exact) and rel < 0.02, f"updates exact: {bool(exact)}; predictive variance off closed form by {rel:.2%} (< 2%)")


def test_c10_readout_mitigation(report):
    err = readout_roundtrip_error()
    cov = readout_coverage(trials=200, e=0.05, shots=8192, replicas=1000, seed=0)
    ok = err < 1e-12 and 0.60 <= cov.fraction <= 0.76
    report(10, ok, f"round trip {err:.1e} (< 1e-12); 68% CI covered <Z> = 1 in {cov.covered}/{cov.trials} = {cov.fraction:.1%} (60-76%)")


def test_c11_concurrence_anchors(report):
    bell = np.zeros((4, 4), dtype=complex)
    bell[np.ix_([0, 3], [0, 3])] = 0.5
    rng = np.random.default_rng(11)
    products = []
    for _ in range(20):
        a, b = (rng.normal(size=2) + 1j * rng.normal(size=2) for _ in range(2))
        v = np.kron(a / np.linalg.norm(a), b / np.linalg.norm(b))
        products.append(concurrence(np.outer(v, v.conj())))
    mixed = extended_concurrence(np.eye(4) / 4)
    c_bell = concurrence(bell)
    ok = abs(c_bell - 1) < 1e-12 and max(products) < 1e-6 and abs(mixed + 0.5) < 1e-12
    report(11, ok, f"C(Bell) = {c_bell:.12f}, max C(product) = {max(products):.1e}, C~(1/4) = {mixed:.12f}")


def test_c12_end_to_end_determinism(report, tmp_path):
    cfg = ExperimentConfig()
    run_experiment(cfg.with_overrides(out_dir=str(tmp_path / "a")))
    run_experiment(cfg.with_overrides(out_dir=str(tmp_path / "b")))
    files = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    same = [((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()) for f in files]
    report(12, len(files) == 26 and all(same), f"{sum(same)}/{len(files)} CSV files byte-identical across two seeded default runs")

