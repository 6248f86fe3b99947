import csv
import json

import pytest
import yaml

from nuqsim.cli import build_parser, main

SMALL = {
    "times": [0.0, 2.0],
    "shots": 1024,
    "calibration_shots": 1024,
    "replicas": 20,
    "seed": 5,
}


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(SMALL))
    return path


def test_run_writes_csv(config_file, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", str(config_file), "--out", str(out)]) == 0
    assert "26 observables" in capsys.readouterr().out
    rows = list(csv.DictReader((out / "inversion_probability_1.csv").open()))
    assert {r["r_or_tag"] for r in rows} == {"r1", "r3", "ro-r1", "ro-r3", "richardson", "exp"}
    assert json.loads((out / "bundle.json").read_text())["seed"] == 5


def test_run_flags_override_file(config_file, tmp_path):
    out = tmp_path / "json"
    args = ["run", "--config", str(config_file), "--out", str(out), "--format", "json",
            "--seed", "8", "--propagator", "u1", "--noise-levels", "1,3,5"]
    assert main(args) == 0
    bundle = json.loads((out / "bundle.json").read_text())
    assert bundle["seed"] == 8 and bundle["config"]["propagator"] == "u1"
    assert bundle["config"]["noise_levels"] == [1, 3, 5]
    tags = [s["label"] for s in json.loads((out / "pair_entropy_12.json").read_text())["series"]]
    assert tags[:6] == ["r1", "ro-r1", "r3", "ro-r3", "r5", "ro-r5"]


def test_bad_config_exits_with_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"noise_levels": [2]}))
    assert main(["run", "--config", str(bad)]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_bad_flags_are_rejected():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["run", "--noise-levels", "1,x"])
    with pytest.raises(SystemExit):
        build_parser().parse_args(["run", "--format", "xml"])
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_compare_propagators(tmp_path, capsys):
    assert main(["compare-propagators", "--out", str(tmp_path)]) == 0
    assert "U2 fidelity >= U1 on t >= 4: True" in capsys.readouterr().out
    rows = list(csv.DictReader((tmp_path / "propagators.csv").open()))
    assert len(rows) == 17 and "fidelity_u1_lex" in rows[0] and "norm_u2_identity_order" in rows[0]


def test_tomography_selftest(tmp_path, config_file):
    assert main(["tomography-selftest", "--config", str(config_file), "--out", str(tmp_path), "--format", "json"]) == 0
    assert json.loads((tmp_path / "tomography_selftest.json").read_text())["worst"] <= 0.03
