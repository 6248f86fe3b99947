import csv
import io
import json

import numpy as np
import pytest

from nuqsim.config import ExperimentConfig
from nuqsim.observables import inversion_probability
from nuqsim.experiment import (
    ResultsBundle,
    build_circuit,
    compare_propagators,
    emit_series,
    final_state,
    predictive_tables,
    run_experiment,
    sample_point,
    series_csv,
    series_names,
)

SMALL = ExperimentConfig(times=(0.0, 2.0, 4.0), shots=2048, calibration_shots=2048, replicas=40, seed=3)


@pytest.fixture(scope="module")
def bundle():
    return run_experiment(SMALL, write=False)


def test_series_inventory(bundle):
    names = set(bundle.series)
    assert names == set(series_names(4))
    count = lambda prefix: sum(1 for n in names if n.startswith(prefix))  # noqa: E731
    assert count("inversion_probability_") == 4 and count("single_spin_entropy_") == 4
    assert count("pair_entropy_") == 6 and count("concurrence_") == 6 and count("extended_concurrence_") == 6


def test_tags(bundle):
    labels = lambda name: [s.tag if s.r is None else ("r" if s.tag == "bare" else "ro-r") + str(s.r) for s in bundle.series[name]]  # noqa: E731
    assert labels("pair_entropy_12") == ["r1", "ro-r1", "r3", "ro-r3", "richardson", "exp", "shifted-exp"]
    assert labels("inversion_probability_1") == ["r1", "ro-r1", "r3", "ro-r3", "richardson", "exp"]


def test_noise_lowers_signal(bundle):
    # pair entropy grows toward 2 bits as the noise is amplified
    by = {s.tag + str(s.r): s.means for s in bundle.series["pair_entropy_23"]}
    assert np.all(by["bare3"][1:] > by["bare1"][1:])
    ro = {s.tag + str(s.r): s.means for s in bundle.series["inversion_probability_2"]}
    assert ro["readout1"][0] < ro["bare1"][0]


def test_estimates_carry_intervals(bundle):
    for items in bundle.series.values():
        for s in items:
            for e in s.estimates:
                if not e.degenerate:
                    assert e.ci_low <= e.ci_high


def test_csv_rows(bundle):
    for name, items in bundle.series.items():
        rows = list(csv.reader(io.StringIO(series_csv(items))))
        assert rows[0] == ["t", "r_or_tag", "mean", "ci_low", "ci_high"]
        assert len(rows) - 1 == len(SMALL.times) * len(items)


def test_json_round_trip(bundle, tmp_path):
    back = ResultsBundle.from_json(bundle.to_json())
    assert back.to_dict() == json.loads(bundle.to_json())
    assert back.config_hash == SMALL.config_hash() and back.seed == 3
    files = emit_series(bundle, tmp_path, "json")
    assert len(files) == len(bundle.series) + 1
    data = json.loads((tmp_path / "pair_entropy_12.json").read_text())
    assert all("below_zero" in e for s in data["series"] for e in s["estimates"])


def test_circuit_metadata(bundle):
    meta = bundle.circuits[1]
    assert meta["entanglers"] == 18 and meta["rotations"] <= 90
    assert [p + 1 for p in meta["permutation"]] == [4, 2, 3, 1]


def test_deterministic_csv(tmp_path):
    cfg = ExperimentConfig(times=(0.0, 3.0), shots=1024, calibration_shots=1024, replicas=20, seed=9)
    run_experiment(cfg.with_overrides(out_dir=str(tmp_path / "a")))
    run_experiment(cfg.with_overrides(out_dir=str(tmp_path / "b")))
    for path in sorted((tmp_path / "a").glob("*.csv")):
        assert path.read_bytes() == (tmp_path / "b" / path.name).read_bytes()
    other = run_experiment(cfg.with_overrides(seed=10), write=False)
    first = run_experiment(cfg, write=False)
    assert series_csv(other.series["pair_entropy_12"]) != series_csv(first.series["pair_entropy_12"])


def test_exact_mode_starts_uninverted():
    cfg = ExperimentConfig(
        propagator="exact", times=(0.0, 1.0), readout_e0=0.0, readout_e1=0.0, depol_2q=0.0,
        noise_levels=(1, 3), replicas=20, shots=1024, calibration_shots=1024,
    )
    rho, perm = final_state(cfg, build_circuit(cfg, 0.0), 0.0, 1, cfg.noise_model())
    data = sample_point(cfg, rho, perm, 0, 1, cfg.noise_model())
    assert [inversion_probability(data.z_counts, k, "0011"[k], perm) for k in range(4)] == [0, 0, 0, 0]
    out = run_experiment(cfg, write=False)
    # replica means carry the uniform-prior pseudo-counts: 8 flipped outcomes of 16
    floor = 8 / (1024 + 16)
    for k in range(1, 5):
        first = out.series[f"inversion_probability_{k}"][0].estimates[0]
        assert 0 < first.mean < 2 * floor and first.ci_low < floor
    assert not any(s.tag == "readout" for s in out.series["pair_entropy_12"])


def test_predictive_tables_shape_and_totals():
    table = np.array([[10, 0, 5, 1]] * 9)
    reps = predictive_tables(table, 30, 0)
    assert reps.shape == (30, 9, 4) and np.all(reps.sum(axis=2) == 16)
    assert np.array_equal(reps, predictive_tables(table, 30, 0))


def test_propagator_report():
    cfg = ExperimentConfig(times=(0.0, 0.05, 0.1, 4.0, 6.0, 8.0))
    rep = compare_propagators(cfg)
    for key in ("u1", "u1_lex", "u2", "u2_identity_order"):
        assert rep.columns[f"norm_{key}"][0] == pytest.approx(0, abs=1e-12)
        assert rep.columns[f"fidelity_{key}"][0] == pytest.approx(1)
    ratio = rep.columns["norm_u2"][2] / rep.columns["norm_u2"][1]
    assert ratio == pytest.approx(4, abs=0.5)
    assert rep.to_csv().count("\n") == len(cfg.times) + 1
    assert set(json.loads(rep.to_json())) == {"t", *rep.columns}
