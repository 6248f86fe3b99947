"""Run the reference experiment and print a short summary of the mitigated series."""
import argparse
import sys
from pathlib import Path

from nuqsim.config import load_config
from nuqsim.experiment import run_experiment

HERE = Path(__file__).resolve().parent


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", type=Path, default=HERE / "default.yaml")
    parser.add_argument("--out", default=None)
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args()
    cfg = load_config(args.config).with_overrides(out_dir=args.out, seed=args.seed)
    bundle = run_experiment(cfg, log=lambda m: print(m, file=sys.stderr))
    for name, items in bundle.series.items():
        for s in items:
            if s.tag == "shifted-exp" or (s.tag == "exp" and name.startswith("inversion")):
                row = " ".join(f"{m:6.3f}" for m in s.means)
                print(f"{name:26s} {s.tag:11s} {row}")
    print(f"results in {cfg.out_dir}")


if __name__ == "__main__":
    main()
