from pathlib import Path

import pytest
import yaml

from nuqsim.config import ExperimentConfig, config_from_dict, load_config

SCRIPTS = Path(__file__).resolve().parents[1] / "scripts"


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.n == 4 and cfg.initial_state == "0011" and cfg.ordering == (1, 3, 2, 4)
    assert cfg.times == tuple(0.5 * k for k in range(17))
    assert cfg.readout_e0 == (0.02,) * 4 and cfg.depol_2q == 0.01 and cfg.shots == 8192
    assert cfg.noise_levels == (1, 3) and cfg.replicas == 1000
    assert cfg.asymptote("extended_concurrence") == -0.5


def test_shipped_yaml_is_the_default():
    assert load_config(SCRIPTS / "default.yaml") == ExperimentConfig()
    assert load_config(None) == ExperimentConfig()


def test_hash_ignores_output_location():
    a = ExperimentConfig()
    assert a.config_hash() == a.with_overrides(out_dir="elsewhere").config_hash()
    assert a.config_hash() != a.with_overrides(seed=7).config_hash()
    assert len(a.config_hash()) == 16


def test_overrides_skip_none():
    cfg = ExperimentConfig().with_overrides(seed=None, noise_levels=(1, 3, 5))
    assert cfg.seed == 2021 and cfg.noise_levels == (1, 3, 5)


def test_nested_and_scalar_keys():
    cfg = config_from_dict({"model": {"n": 2}, "times": [0, 1], "noise": {"readout_e0": [0.01, 0.03]}})
    assert cfg.n == 2 and cfg.initial_state == "01" and cfg.ordering == (1, 2)
    assert cfg.readout_e0 == (0.01, 0.03) and cfg.readout_e1 == (0.02, 0.02)
    assert config_from_dict({"times": {"start": 0, "stop": 1, "num": 3}}).times == (0.0, 0.5, 1.0)


@pytest.mark.parametrize(
    "bad",
    [
        {"n": 1},
        {"initial_state": "001"},
        {"ordering": [1, 2, 2, 4]},
        {"times": []},
        {"times": [0, 2, 1]},
        {"propagator": "u3"},
        {"noise_levels": [1, 2]},
        {"extrapolation_levels": [1, 5]},
        {"replicas": 0},
        {"mitigation": {"pair_entropy": ["cubic"]}},
        {"mitigation": {"energy": ["exp"]}},
        {"noise": {"depol_2q": 1.5}},
        {"noise": {"readout_e0": [0.1, 0.1]}},
        {"colour": "blue"},
    ],
)
def test_invalid_configs(bad):
    with pytest.raises(ValueError):
        config_from_dict(bad)


def test_yaml_round_trip(tmp_path):
    cfg = ExperimentConfig(seed=11, times=(0.0, 2.0), replicas=20)
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(cfg.to_dict()))
    assert load_config(path) == cfg
