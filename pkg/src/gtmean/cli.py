"""Command-line entry point.

Exit codes: 0 success, 1 usage, 2 input I/O or parse error, 3 shape
mismatch, 4 output I/O, 5 numeric abort, 6 gradient check failure. Standard
output only carries JSON; diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from .imaging import (
    DomainError,
    MetricMode,
    NetpbmError,
    brightness_discrepancy,
    load_ppm,
    psnr,
    ssim,
)
from .landscape import argmin_eta, eta_sweep, standard_batch, sweep_to_csv
from .losses import GtMeanConfig, LambdaMode, LossKind, finite_difference_check, gt_mean_loss, random_smooth_pair
from .trainer import NonFiniteLossError, Strategy, sigma_sweep_train, summary_to_csv, train

log = logging.getLogger("gtmean")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_SHAPE, EXIT_OUTPUT, EXIT_NUMERIC, EXIT_GRADCHECK = range(7)
GRADCHECK_TOL = 1e-4
SWEEP_SIGMAS = ("0", "0.05", "0.1", "0.2", "0.4")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(payload) -> None:
    sys.stdout.write(json.dumps(payload, sort_keys=True) + "\n")


def _num(x: float):
    return "inf" if math.isinf(x) else x


def _load_pair(pred_path, target_path):
    images = []
    for p in (pred_path, target_path):
        try:
            images.append(load_ppm(p))
        except (OSError, NetpbmError) as exc:
            raise CliError(f"cannot read {p}: {exc}", EXIT_INPUT) from None
    pred, target = images
    if pred.shape != target.shape:
        raise CliError(f"shape mismatch: {pred.shape} vs {target.shape}", EXIT_SHAPE)
    return pred, target


def _kind(args) -> LossKind:
    return LossKind(args.kind, eps=args.eps, beta=args.beta)


def _load_cli_config(args) -> config_mod.CliConfig:
    if getattr(args, "config", None) is None:
        return config_mod.CliConfig()
    try:
        return config_mod.load_config(args.config)
    except OSError as exc:
        raise CliError(f"cannot read config {args.config}: {exc}", EXIT_INPUT) from None
    except config_mod.ConfigError as exc:
        raise CliError(f"invalid config {args.config}: {exc}", EXIT_INPUT) from None


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_OUTPUT) from None


# --------------------------------------------------------------------------
# commands


def cmd_loss_eval(args) -> int:
    pred, target = _load_pair(args.pred, args.target)
    cfg = GtMeanConfig(sigma_coeff=args.sigma, lambda_mode=LambdaMode(args.lambda_mode))
    out = gt_mean_loss(_kind(args), pred, target, cfg)
    _emit(
        {
            "value": out.value,
            "w": out.w,
            "d_b": _num(out.d_b),
            "lambda": out.lam,
            "original_term": out.original_term,
            "aligned_term": out.aligned_term,
        }
    )
    return EXIT_OK


def cmd_metrics(args) -> int:
    pred, target = _load_pair(args.pred, args.target)
    mode = MetricMode(args.mode)
    try:
        s = ssim(pred, target, mode)
    except DomainError as exc:
        raise CliError(str(exc), EXIT_SHAPE) from None
    _emit(
        {
            "psnr": psnr(pred, target, mode),
            "ssim": s,
            "brightness_discrepancy": brightness_discrepancy(pred, target),
        }
    )
    return EXIT_OK


def _landscape_config(args) -> config_mod.CliConfig:
    cfg = _load_cli_config(args)
    sweep = cfg.sweep
    overrides = {}
    if args.sigma:
        overrides["sigma_list"] = tuple(args.sigma)
    for name in ("eta_min", "eta_max", "steps"):
        if getattr(args, name) is not None:
            overrides[name] = getattr(args, name)
    if args.kind is not None:
        overrides["kind"] = LossKind(args.kind, eps=sweep.kind.eps, beta=sweep.kind.beta)
    try:
        return dataclasses.replace(cfg, sweep=dataclasses.replace(sweep, **overrides))
    except DomainError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None


def cmd_landscape(args) -> int:
    cfg = _landscape_config(args)
    if args.dump_config:
        sys.stdout.write(config_mod.dump_config(cfg))
        return EXIT_OK
    if args.synthetic:
        preds, targets = standard_batch(seed=cfg.train.seed)
    elif args.pred and args.target:
        if len(args.pred) != len(args.target):
            raise CliError("--pred and --target must be given the same number of times", EXIT_USAGE)
        pairs = [_load_pair(p, t) for p, t in zip(args.pred, args.target)]
        if len({p.shape for p, _ in pairs}) != 1:
            raise CliError("all image pairs must share one shape", EXIT_SHAPE)
        preds, targets = [p for p, _ in pairs], [t for _, t in pairs]
    else:
        raise CliError("give --pred/--target or --synthetic", EXIT_USAGE)

    out_dir = Path(args.out_dir)
    result = eta_sweep(preds, targets, cfg.sweep, cfg.gt_mean)
    files, minima = {}, {}
    for sigma, rows in result.items():
        label = str(sigma)
        path = out_dir / f"landscape_sigma_{label}.csv"
        _write(path, sweep_to_csv(rows))
        files[label] = str(path)
        minima[label] = argmin_eta(rows)
    _emit({"files": files, "min_eta": minima})
    return EXIT_OK


def _train_config(args) -> config_mod.CliConfig:
    cfg = _load_cli_config(args)
    train_over, gt_over = {}, {}
    if args.strategy is not None:
        train_over["strategy"] = dataclasses.replace(cfg.train.strategy, name=args.strategy)
    if args.iterations is not None:
        train_over["iterations"] = args.iterations
    if args.seed is not None:
        train_over["seed"] = args.seed
    if args.sigma is not None:
        gt_over["sigma_coeff"] = args.sigma
    try:
        return dataclasses.replace(
            cfg,
            train=dataclasses.replace(cfg.train, **train_over),
            gt_mean=dataclasses.replace(cfg.gt_mean, **gt_over),
        )
    except DomainError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None


def cmd_train(args) -> int:
    cfg = _train_config(args)
    if args.dump_config:
        sys.stdout.write(config_mod.dump_config(cfg))
        return EXIT_OK
    try:
        trace = train(cfg.train_config())
    except NonFiniteLossError as exc:
        raise CliError(str(exc), EXIT_NUMERIC) from None
    out_dir = Path(args.out_dir)
    trace_path = out_dir / "trace.csv"
    theta_path = out_dir / "theta.txt"
    _write(trace_path, trace.to_csv())
    _write(theta_path, trace.theta_text())
    _emit({"trace": str(trace_path), "theta": str(theta_path)})
    return EXIT_OK


def cmd_sigma_sweep(args) -> int:
    cfg = _train_config(args)
    if args.dump_config:
        sys.stdout.write(config_mod.dump_config(cfg))
        return EXIT_OK
    labels = args.sigmas or list(SWEEP_SIGMAS)
    try:
        summaries = sigma_sweep_train(cfg.train_config(), [float(s) for s in labels], args.repeats, labels=labels)
    except NonFiniteLossError as exc:
        raise CliError(str(exc), EXIT_NUMERIC) from None
    path = Path(args.out_dir) / "sigma_sweep.csv"
    _write(path, summary_to_csv(summaries))
    _emit({"summary": str(path)})
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    kind = _kind(args)
    cfg = None
    if args.sigma is not None:
        cfg = GtMeanConfig(sigma_coeff=args.sigma, lambda_mode=LambdaMode(args.lambda_mode))
    pred, target = random_smooth_pair(rng)
    if args.adversarial:
        pred = target.copy()
    try:
        err = finite_difference_check(kind, cfg, pred, target, args.step)
    except DomainError as exc:
        log.error("gradient check precondition violated: %s", exc)
        _emit({"max_rel_error": None, "error": str(exc)})
        return EXIT_GRADCHECK
    _emit({"max_rel_error": err})
    if not err <= GRADCHECK_TOL:
        log.error("max relative error %.3g exceeds %.0e", err, GRADCHECK_TOL)
        return EXIT_GRADCHECK
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _add_kind_flags(p, default="l1"):
    p.add_argument("--kind", choices=LossKind.NAMES, default=default)
    p.add_argument("--eps", type=float, default=1e-3, help="Charbonnier epsilon")
    p.add_argument("--beta", type=float, default=1.0, help="smooth-L1 beta")


def _add_train_flags(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--strategy", choices=Strategy.NAMES)
    p.add_argument("--sigma", type=float, help="GT-mean sigma coefficient")
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--dump-config", action="store_true", help="print the normalised config and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gtmean", description="GT-mean loss tools: evaluation, metrics, landscapes and toy training.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    modes = [m.value for m in LambdaMode]

    p = sub.add_parser("loss-eval", help="evaluate the GT-mean loss on an image pair")
    p.add_argument("pred")
    p.add_argument("target")
    _add_kind_flags(p)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--lambda-mode", choices=modes, default="differentiable")
    p.set_defaults(func=cmd_loss_eval)

    p = sub.add_parser("metrics", help="PSNR, SSIM and brightness discrepancy")
    p.add_argument("pred")
    p.add_argument("target")
    p.add_argument("--mode", choices=[m.value for m in MetricMode], default="normal")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("landscape", help="eta sweep, one CSV per sigma")
    p.add_argument("--config")
    p.add_argument("--pred", action="append")
    p.add_argument("--target", action="append")
    p.add_argument("--synthetic", action="store_true", help="use the built-in synthetic batch")
    p.add_argument("--sigma", action="append", help="sigma coefficient (repeatable; text names the file)")
    p.add_argument("--eta-min", type=float)
    p.add_argument("--eta-max", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--kind", choices=LossKind.NAMES)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--dump-config", action="store_true")
    p.set_defaults(func=cmd_landscape)

    p = sub.add_parser("train", help="train the toy curve model and write its trace")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sigma-sweep", help="train across sigma values with repeats")
    _add_train_flags(p)
    p.add_argument("--sigmas", nargs="+", help="sigma values (default: 0 0.05 0.1 0.2 0.4)")
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(func=cmd_sigma_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference check of the analytic gradient")
    _add_kind_flags(p)
    p.add_argument("--sigma", type=float, help="check the GT-mean loss with this sigma (plain loss if absent)")
    p.add_argument("--lambda-mode", choices=modes, default="differentiable")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--adversarial", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # usage errors and --help: hand the code back instead of exiting
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except CliError as exc:
        print(f"gtmean: {exc}", file=sys.stderr)
        return exc.code
    except DomainError as exc:
        print(f"gtmean: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
