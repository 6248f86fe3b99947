"""Command-line entry point: ``nuqsim <subcommand> [flags]``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import PROPAGATORS, load_config
from .experiment import compare_propagators, run_experiment
from .selftest import readout_coverage, readout_roundtrip_error, tomography_selftest, zne_synthetic_errors


def _levels(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"bad noise level list {text!r}") from err


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nuqsim", description="Noisy neutrino flavor-evolution experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "full pipeline over the time grid and noise levels"),
        ("compare-propagators", "norm errors, fidelities and inversion probabilities of the product formulas"),
        ("tomography-selftest", "ML tomography against exact pair states"),
        ("mitigation-selftest", "readout round trip, ensemble coverage and extrapolator recovery"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, default=None, help="YAML configuration file")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides the file)")
        p.add_argument("--out", type=str, default=None, help="output directory (overrides the file)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--propagator", choices=PROPAGATORS, default=None)
        p.add_argument("--noise-levels", type=_levels, default=None, help="comma-separated odd r values, e.g. 1,3")
    return parser


def _config(args):
    cfg = load_config(args.config)
    levels = args.noise_levels
    extra = {}
    if levels is not None and not set(cfg.extrapolation_levels) <= set(levels):
        extra["extrapolation_levels"] = tuple(sorted(levels)[:2]) if len(levels) >= 2 else cfg.extrapolation_levels
    return cfg.with_overrides(seed=args.seed, out_dir=args.out, propagator=args.propagator, noise_levels=levels, **extra)


def _write(out_dir: str, name: str, text: str) -> Path:
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    path = path / name
    path.write_text(text, encoding="utf-8")
    return path


def cmd_run(cfg, fmt: str) -> int:
    bundle = run_experiment(cfg, write=True, fmt=fmt, log=lambda msg: print(msg, file=sys.stderr))
    print(f"wrote {len(bundle.series)} observables to {cfg.out_dir} (config {bundle.config_hash})")
    return 0


def cmd_compare(cfg, fmt: str) -> int:
    report = compare_propagators(cfg)
    text = report.to_csv() if fmt == "csv" else report.to_json()
    path = _write(cfg.out_dir, f"propagators.{fmt}", text)
    late = report.times >= 4
    better = bool(np.all(report.columns["fidelity_u2"][late] >= report.columns["fidelity_u1"][late]))
    print(f"wrote {path}; U2 fidelity >= U1 on t >= 4: {better}")
    return 0


def cmd_tomography(cfg, fmt: str) -> int:
    dist = tomography_selftest(cfg)
    worst = float(dist.max())
    payload = {"times": list(cfg.times), "max_trace_distance": [float(d) for d in dist.max(axis=1)], "worst": worst}
    if fmt == "csv":
        text = "t,max_trace_distance\n" + "".join(f"{t:.12g},{d:.12g}\n" for t, d in zip(cfg.times, dist.max(axis=1)))
    else:
        text = json.dumps(payload, indent=1)
    path = _write(cfg.out_dir, f"tomography_selftest.{fmt}", text)
    print(f"wrote {path}; worst trace distance {worst:.4f}")
    return 0 if worst <= 0.03 else 1


def cmd_mitigation(cfg, fmt: str) -> int:
    cov = readout_coverage(seed=cfg.seed)
    payload = {
        "readout_roundtrip_error": readout_roundtrip_error(),
        "readout_coverage": cov.fraction,
        "zne_recovery_error": zne_synthetic_errors(),
    }
    if fmt == "csv":
        rows = [("readout_roundtrip_error", payload["readout_roundtrip_error"]), ("readout_coverage", cov.fraction)]
        rows += [(f"zne_recovery_error_{k}", v) for k, v in payload["zne_recovery_error"].items()]
        text = "check,value\n" + "".join(f"{k},{v:.12g}\n" for k, v in rows)
    else:
        text = json.dumps(payload, indent=1)
    path = _write(cfg.out_dir, f"mitigation_selftest.{fmt}", text)
    print(f"wrote {path}; coverage {cov.fraction:.3f}, round trip {payload['readout_roundtrip_error']:.2e}")
    return 0


COMMANDS = {
    "run": cmd_run,
    "compare-propagators": cmd_compare,
    "tomography-selftest": cmd_tomography,
    "mitigation-selftest": cmd_mitigation,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return COMMANDS[args.command](cfg, args.format)


if __name__ == "__main__":
    sys.exit(main())
