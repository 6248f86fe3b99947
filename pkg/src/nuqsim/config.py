"""Experiment configuration: a YAML file mapped onto ExperimentConfig.

Schema (every key optional; defaults shown)::

    model: {n: 4, theta_v: 0.195, max_cos: 0.9, matter_A: 0.0}
    initial_state: "0011"          # bit per neutrino, 0 = electron flavor
    ordering: [1, 3, 2, 4]         # swap-network start layout (1-based)
    times: {start: 0.0, stop: 8.0, num: 17}   # or an explicit list
    propagator: u2                 # exact | u1 | u2
    noise: {depol_2q: 0.01, readout_e0: 0.02, readout_e1: 0.02}
    noise_levels: [1, 3]
    extrapolation_levels: [1, 3]
    shots: 8192
    calibration_shots: 8192
    replicas: 1000
    readout_mitigation: true
    mitigation:                    # extrapolators per observable family
      inversion_probability: [richardson, exp]
      single_spin_entropy: [richardson, exp, shifted-exp]
      pair_entropy: [richardson, exp, shifted-exp]
      extended_concurrence: [richardson, exp, shifted-exp]
    asymptotes: {}                 # overrides for shifted-exp
    seed: 2021
    out_dir: results

``readout_e0`` / ``readout_e1`` accept a scalar (same on every qubit) or a
per-qubit list.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .noise import NoiseModel
from .zne import ASYMPTOTES

PROPAGATORS = ("exact", "u1", "u2")
METHODS = ("richardson", "exp", "shifted-exp")
FAMILIES = ("inversion_probability", "single_spin_entropy", "pair_entropy", "extended_concurrence")


def default_times() -> tuple[float, ...]:
    return tuple(float(t) for t in np.linspace(0.0, 8.0, 17))


def default_mitigation() -> dict[str, tuple[str, ...]]:
    return {
        "inversion_probability": ("richardson", "exp"),
        "single_spin_entropy": METHODS,
        "pair_entropy": METHODS,
        "extended_concurrence": METHODS,
    }


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 4
    theta_v: float = 0.195
    max_cos: float = 0.9
    matter_A: float = 0.0
    initial_state: str = "0011"
    ordering: tuple[int, ...] = (1, 3, 2, 4)
    times: tuple[float, ...] = field(default_factory=default_times)
    propagator: str = "u2"
    depol_2q: float = 0.01
    readout_e0: tuple[float, ...] = (0.02,) * 4
    readout_e1: tuple[float, ...] = (0.02,) * 4
    noise_levels: tuple[int, ...] = (1, 3)
    extrapolation_levels: tuple[int, int] = (1, 3)
    shots: int = 8192
    calibration_shots: int = 8192
    replicas: int = 1000
    readout_mitigation: bool = True
    mitigation: dict = field(default_factory=default_mitigation)
    asymptotes: dict = field(default_factory=dict)
    seed: int = 2021
    out_dir: str = "results"

    def __post_init__(self):
        object.__setattr__(self, "ordering", tuple(int(k) for k in self.ordering))
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "noise_levels", tuple(int(r) for r in self.noise_levels))
        object.__setattr__(self, "extrapolation_levels", tuple(int(r) for r in self.extrapolation_levels))
        object.__setattr__(self, "readout_e0", _per_qubit(self.readout_e0, self.n))
        object.__setattr__(self, "readout_e1", _per_qubit(self.readout_e1, self.n))
        object.__setattr__(self, "mitigation", {k: tuple(v) for k, v in dict(self.mitigation).items()})
        object.__setattr__(self, "asymptotes", {k: float(v) for k, v in dict(self.asymptotes).items()})
        self.validate()

    def validate(self) -> None:
        if self.n < 2:
            raise ValueError("need at least two neutrinos")
        if len(self.initial_state) != self.n or set(self.initial_state) - {"0", "1"}:
            raise ValueError(f"initial_state must be a {self.n}-bit string")
        if sorted(self.ordering) != list(range(1, self.n + 1)):
            raise ValueError(f"ordering must be a permutation of 1..{self.n}")
        if not self.times:
            raise ValueError("time grid is empty")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("time grid must be strictly increasing")
        if self.propagator not in PROPAGATORS:
            raise ValueError(f"propagator must be one of {PROPAGATORS}")
        if not self.noise_levels or any(r < 1 or r % 2 == 0 for r in self.noise_levels):
            raise ValueError("noise levels must be odd positive integers")
        if len(self.extrapolation_levels) != 2 or not set(self.extrapolation_levels) <= set(self.noise_levels):
            raise ValueError("extrapolation_levels must be two of the configured noise levels")
        if self.shots < 1 or self.calibration_shots < 1:
            raise ValueError("shots must be >= 1")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        for fam, methods in self.mitigation.items():
            if fam not in FAMILIES:
                raise ValueError(f"unknown observable family {fam!r}")
            bad = set(methods) - set(METHODS)
            if bad:
                raise ValueError(f"unknown extrapolation methods {sorted(bad)}")
        self.noise_model()  # probability range checks

    def noise_model(self) -> NoiseModel:
        return NoiseModel(self.depol_2q, self.readout_e0, self.readout_e1, self.seed)

    def asymptote(self, family: str) -> float:
        return self.asymptotes.get(family, ASYMPTOTES[family])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mitigation"] = {k: list(v) for k, v in self.mitigation.items()}
        for key in ("ordering", "times", "noise_levels", "extrapolation_levels", "readout_e0", "readout_e1"):
            d[key] = list(d[key])
        return d

    def config_hash(self) -> str:
        # the output location does not change results
        d = self.to_dict()
        d.pop("out_dir")
        text = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


def _per_qubit(value, n: int) -> tuple[float, ...]:
    if np.isscalar(value):
        return (float(value),) * n
    value = tuple(float(v) for v in value)
    if len(value) != n:
        raise ValueError(f"expected {n} per-qubit readout probabilities, got {len(value)}")
    return value


def config_from_dict(d: dict) -> ExperimentConfig:
    d = dict(d or {})
    kw = {}
    model = d.pop("model", {}) or {}
    for key in ("n", "theta_v", "max_cos", "matter_A"):
        if key in model:
            kw[key] = model[key]
    noise = d.pop("noise", {}) or {}
    for key in ("depol_2q", "readout_e0", "readout_e1"):
        if key in noise:
            kw[key] = noise[key]
    times = d.pop("times", None)
    if isinstance(times, dict):
        kw["times"] = tuple(np.linspace(float(times.get("start", 0.0)), float(times.get("stop", 8.0)), int(times.get("num", 17))))
    elif times is not None:
        kw["times"] = tuple(times)
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kw.update(d)
    n = int(kw.get("n", 4))
    kw.setdefault("readout_e0", 0.02)
    kw.setdefault("readout_e1", 0.02)
    if "initial_state" not in kw and n != 4:
        kw["initial_state"] = "0" * (n // 2) + "1" * (n - n // 2)
    if "ordering" not in kw and n != 4:
        kw["ordering"] = tuple(range(1, n + 1))
    return ExperimentConfig(**kw)


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(yaml.safe_load(fh))
