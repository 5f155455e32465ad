"""Final PSNR statistics across sigma values, several seeds each."""

import argparse
from pathlib import Path

from gtmean.trainer import TrainConfig, sigma_sweep_train, summary_to_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/sigma_sweep.csv")
    ap.add_argument("--sigmas", nargs="+", default=["0", "0.05", "0.1", "0.2", "0.4"])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--iterations", type=int, default=2000)
    args = ap.parse_args()

    summary = sigma_sweep_train(
        TrainConfig(iterations=args.iterations), [float(s) for s in args.sigmas], args.repeats, labels=args.sigmas
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(summary_to_csv(summary))
    print(summary_to_csv(summary), end="")


if __name__ == "__main__":
    main()
