"""Train the curve model under each loss strategy and compare the final rows."""

import argparse
from dataclasses import replace
from pathlib import Path

from gtmean.losses import GtMeanConfig
from gtmean.trainer import Strategy, TrainConfig, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results/strategies")
    ap.add_argument("--iterations", type=int, default=2000)
    ap.add_argument("--sigma", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = TrainConfig(iterations=args.iterations, seed=args.seed, gt_cfg=GtMeanConfig(args.sigma))
    print(f"{'strategy':<15}{'loss':>10}{'w_mean':>8}{'psnr':>9}{'gt_psnr':>9}{'ssim':>8}{'bright':>9}")
    for name in Strategy.NAMES:
        trace = train(replace(base, strategy=Strategy(name)))
        (out / f"trace_{name}.csv").write_text(trace.to_csv())
        (out / f"theta_{name}.txt").write_text(trace.theta_text())
        r = trace.final
        print(
            f"{name:<15}{r.loss:>10.5f}{r.w_mean:>8.3f}{r.psnr:>9.3f}{r.gt_mean_psnr:>9.3f}"
            f"{r.ssim:>8.4f}{r.brightness_discrepancy:>9.4f}"
        )


if __name__ == "__main__":
    main()
