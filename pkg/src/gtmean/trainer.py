"""Deterministic desk-scale trainer for the GT-mean loss.

A 9-parameter per-channel cubic tone curve is fitted with Adam on synthetic
low-light pairs. Four strategies are available: the plain base loss, a hybrid
schedule that blends linearly into the brightness-aligned term, the aligned
term alone, and the GT-mean loss.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .imaging import (
    MetricMode,
    DomainError,
    batch_psnr,
    batch_ssim,
)
from .losses import BatchLossOutput, GtMeanConfig, LossKind, batch_gt_mean_loss

log = logging.getLogger(__name__)

TRACE_HEADER = ["iter", "loss", "w_mean", "lambda_mean", "psnr", "gt_mean_psnr", "ssim", "brightness_discrepancy"]
SUMMARY_HEADER = ["sigma", "psnr_mean", "psnr_var", "gtmean_psnr_mean", "gtmean_psnr_var"]

FAMILIES = ("gradient", "checkerboard", "noise", "shapes")


class NonFiniteLossError(RuntimeError):
    def __init__(self, iteration: int, detail: str = ""):
        super().__init__(f"non-finite loss at iteration {iteration}{': ' + detail if detail else ''}")
        self.iteration = iteration


def fmt(x: float) -> str:
    """Nine significant digits; infinities as ``inf``."""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.9g}"


# --------------------------------------------------------------------------
# Data


def _pattern(family: str, size: int, rng: np.random.Generator) -> np.ndarray:
    """One (3, size, size) pattern with values in [0, 1] before mean fitting."""
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    tint = rng.uniform(0.6, 1.0, size=(3, 1, 1))
    if family == "gradient":
        angle = rng.uniform(0, 2 * np.pi)
        base = np.cos(angle) * xx + np.sin(angle) * yy
        base = (base - base.min()) / (base.max() - base.min())
        out = tint * base + (1 - tint) * base[::-1, ::-1]
    elif family == "checkerboard":
        period = int(rng.integers(2, max(3, size // 4) + 1))
        iy, ix = np.mgrid[0:size, 0:size] // period
        base = ((iy + ix) % 2).astype(np.float64)
        lo = rng.uniform(0.0, 0.3, size=(3, 1, 1))
        out = lo + (tint - lo) * base
    elif family == "noise":
        field_ = rng.normal(size=(3, size, size))
        out = ndimage.gaussian_filter(field_, sigma=(0, size / 16, size / 16), mode="wrap")
        out = (out - out.min()) / (out.max() - out.min())
    elif family == "shapes":
        out = np.broadcast_to(rng.uniform(0.1, 0.5, size=(3, 1, 1)), (3, size, size)).copy()
        for _ in range(int(rng.integers(3, 7))):
            color = rng.uniform(0.0, 1.0, size=(3, 1, 1))
            if rng.random() < 0.5:
                x0, y0 = rng.uniform(0, 0.7, 2)
                w, h = rng.uniform(0.1, 0.4, 2)
                mask = (xx >= x0) & (xx < x0 + w) & (yy >= y0) & (yy < y0 + h)
            else:
                cx, cy = rng.uniform(0.1, 0.9, 2)
                r = rng.uniform(0.05, 0.3)
                mask = (xx - cx) ** 2 + (yy - cy) ** 2 < r * r
            out = np.where(mask[None], color, out)
    else:
        raise ValueError(family)
    return out


def generate_base_images(count: int, size: int = 64, seed: int = 0) -> list[np.ndarray]:
    """Procedural clean images cycling through the four pattern families.

    Each image is rescaled about its mean so the mean lands in [0.35, 0.65]
    while every value stays in [0, 1].
    """
    if count < 1:
        raise DomainError("count must be >= 1")
    images = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        pat = _pattern(FAMILIES[i % len(FAMILIES)], size, rng)
        target_mean = rng.uniform(0.35, 0.65)
        m, lo, hi = pat.mean(), pat.min(), pat.max()
        c = 1.0
        if m > lo:
            c = min(c, target_mean / (m - lo))
        if hi > m:
            c = min(c, (1.0 - target_mean) / (hi - m))
        images.append(np.clip(target_mean + c * (pat - m), 0.0, 1.0))
    return images


@dataclass(frozen=True)
class DegradationSpec:
    gamma: float = 2.5
    gain: float = 0.3
    noise_sigma: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError("gamma must be > 0")
        if not 0 < self.gain <= 1:
            raise DomainError("gain must be in (0, 1]")
        if not self.noise_sigma >= 0:
            raise DomainError("noise_sigma must be >= 0")


def degrade(clean, spec: DegradationSpec, stream: Sequence[int] = ()) -> np.ndarray:
    """Low-light version ``clamp(gain * clean**gamma + noise, 0, 1)``.

    ``stream`` extends the seed so that different images of one dataset get
    independent noise from the same spec.
    """
    clean = np.asarray(clean, dtype=np.float64)
    rng = np.random.default_rng([spec.seed, *stream])
    noise = rng.normal(0.0, spec.noise_sigma, size=clean.shape) if spec.noise_sigma > 0 else 0.0
    return np.clip(spec.gain * clean**spec.gamma + noise, 0.0, 1.0)


# --------------------------------------------------------------------------
# Model


@dataclass
class CurveModel:
    """Per-channel cubic ``theta1*x + theta2*x**2 + theta3*x**3``; theta has shape (3, 3)."""

    theta: np.ndarray = field(default_factory=lambda: np.tile([1.0, 0.0, 0.0], (3, 1)))

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64).reshape(3, 3)

    @classmethod
    def identity(cls):
        return cls()


@dataclass
class CurveCache:
    powers: tuple[np.ndarray, np.ndarray, np.ndarray]
    active: np.ndarray


def input_powers(x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 3 or x.shape[-3] != 3:
        raise DomainError("curve model expects 3-channel input")
    x2 = x * x
    return x, x2, x2 * x


def curve_forward(model: CurveModel, x, powers=None) -> tuple[np.ndarray, CurveCache]:
    """Apply the curve to ``(..., 3, H, W)`` input and clamp to [0, 1].

    ``powers`` may carry ``input_powers(x)`` precomputed, since the trainer's
    inputs never change between steps.
    """
    x, x2, x3 = powers if powers is not None else input_powers(x)
    th = model.theta[:, :, None, None]
    u = th[:, 0] * x
    u += th[:, 1] * x2
    u += th[:, 2] * x3
    active = (u > 0.0) & (u < 1.0)
    np.clip(u, 0.0, 1.0, out=u)
    return u, CurveCache((x, x2, x3), active)


def curve_backward(cache: CurveCache, grad_pred) -> np.ndarray:
    grad_pred = np.asarray(grad_pred, dtype=np.float64)
    if grad_pred.shape != cache.active.shape:
        raise DomainError(f"gradient shape {grad_pred.shape} does not match cache {cache.active.shape}")
    g = np.where(cache.active, grad_pred, 0.0)
    # contract every axis except the channel axis, without full-size temporaries
    lead = g.ndim - 3
    axes = "abcdefgh"[:lead]
    spec = f"{axes}chw,{axes}chw->c"
    return np.stack([np.einsum(spec, g, p) for p in cache.powers], axis=1)


class Adam:
    def __init__(self, lr: float = 5e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# --------------------------------------------------------------------------
# Strategies


@dataclass(frozen=True)
class Strategy:
    """``baseline``, ``hybrid``, ``full_alignment`` or ``gtmean``."""

    name: str = "gtmean"
    switch_start_frac: float = 0.467
    switch_end_frac: float = 0.533

    NAMES = ("baseline", "hybrid", "full_alignment", "gtmean")

    def __post_init__(self):
        if self.name not in self.NAMES:
            raise DomainError(f"unknown strategy {self.name!r}; expected one of {self.NAMES}")
        if not 0 <= self.switch_start_frac < self.switch_end_frac <= 1:
            raise DomainError("need 0 <= switch_start_frac < switch_end_frac <= 1")

    def hybrid_t(self, iteration: int, total: int) -> float:
        start = self.switch_start_frac * total
        end = self.switch_end_frac * total
        return min(max((iteration - start) / (end - start), 0.0), 1.0)


def iteration_loss(
    strategy: Strategy,
    iteration: int,
    total: int,
    kind: LossKind,
    gt_cfg: GtMeanConfig,
    pred,
    target,
) -> BatchLossOutput:
    """Loss for one step of ``strategy`` on a batch ``(B, C, H, W)``.

    Every strategy routes through the GT-mean computation with W pinned
    (1 for baseline, 0 for alignment only, ``1 - t`` for the hybrid), so the
    reductions between strategies hold bit for bit.
    """
    if not 0 <= iteration < total:
        raise DomainError(f"iteration {iteration} outside [0, {total})")
    if strategy.name == "baseline":
        w = 1.0
    elif strategy.name == "full_alignment":
        w = 0.0
    elif strategy.name == "hybrid":
        w = 1.0 - strategy.hybrid_t(iteration, total)
    else:
        w = None
    return batch_gt_mean_loss(kind, pred, target, gt_cfg, w_override=w)


# --------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 2000
    learning_rate: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    kind: LossKind = field(default_factory=LossKind.l1)
    gt_cfg: GtMeanConfig = field(default_factory=GtMeanConfig)
    strategy: Strategy = field(default_factory=Strategy)
    dataset_size: int = 16
    image_size: int = 64
    record_every: int = 5
    seed: int = 0
    degradation: DegradationSpec = field(default_factory=DegradationSpec)

    def __post_init__(self):
        for name in ("iterations", "dataset_size", "image_size", "record_every"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be >= 1")
        if not self.learning_rate > 0:
            raise DomainError("learning_rate must be > 0")


@dataclass
class TraceRow:
    iter: int
    loss: float
    w_mean: float
    lambda_mean: float
    psnr: float
    gt_mean_psnr: float
    ssim: float
    brightness_discrepancy: float
    original_mean: float = field(default=float("nan"), repr=False)
    aligned_mean: float = field(default=float("nan"), repr=False)

    def csv_fields(self) -> list[str]:
        return [str(self.iter)] + [fmt(getattr(self, k)) for k in TRACE_HEADER[1:]]


@dataclass
class TrainTrace:
    rows: list[TraceRow]
    theta: np.ndarray

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    @property
    def final(self) -> TraceRow:
        return self.rows[-1]

    def to_csv(self) -> str:
        return rows_to_csv(TRACE_HEADER, [r.csv_fields() for r in self.rows])

    def theta_text(self) -> str:
        return "\n".join(f"{v:.9f}" for v in self.theta.reshape(-1)) + "\n"


def rows_to_csv(header: list[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def build_dataset(config: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    """Return (low-light inputs, clean targets), both of shape (B, 3, S, S)."""
    clean = generate_base_images(config.dataset_size, config.image_size, config.seed)
    low = [degrade(c, config.degradation, stream=(config.seed, i)) for i, c in enumerate(clean)]
    return np.stack(low), np.stack(clean)


def _record(iteration: int, out: BatchLossOutput, pred: np.ndarray, target: np.ndarray) -> TraceRow:
    axes = (1, 2, 3)
    return TraceRow(
        iter=iteration,
        loss=out.value,
        w_mean=float(out.w.mean()),
        lambda_mean=float(out.lam.mean()),
        psnr=float(batch_psnr(pred, target).mean()),
        gt_mean_psnr=float(batch_psnr(pred, target, MetricMode.GT_MEAN).mean()),
        ssim=float(batch_ssim(pred, target).mean()),
        brightness_discrepancy=float(np.abs(target.mean(axis=axes) - pred.mean(axis=axes)).mean()),
        original_mean=float(out.original_term.mean()),
        aligned_mean=float(out.aligned_term.mean()),
    )


def train(config: TrainConfig, dataset: Optional[tuple[np.ndarray, np.ndarray]] = None) -> TrainTrace:
    """Full-batch Adam from the identity curve; one trace row per ``record_every`` steps plus the last."""
    low, clean = dataset if dataset is not None else build_dataset(config)
    model = CurveModel.identity()
    opt = Adam(config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    total = config.iterations
    rows = []
    powers = input_powers(low)
    for it in range(total):
        pred, cache = curve_forward(model, low, powers)
        out = iteration_loss(config.strategy, it, total, config.kind, config.gt_cfg, pred, clean)
        if not math.isfinite(out.value) or not np.all(np.isfinite(out.grad)):
            raise NonFiniteLossError(it, f"loss={out.value}")
        if it % config.record_every == 0 or it == total - 1:
            rows.append(_record(it, out, pred, clean))
        grad_theta = curve_backward(cache, out.grad)
        new_theta = opt.step(model.theta, grad_theta)
        if not np.all(np.isfinite(new_theta)):
            raise NonFiniteLossError(it, "parameters became non-finite")
        model.theta = new_theta
    log.debug("finished %d iterations, final loss %.6g", total, rows[-1].loss)
    return TrainTrace(rows, model.theta.copy())


@dataclass
class SigmaSummary:
    sigma: float
    psnr_mean: float
    psnr_var: float
    gtmean_psnr_mean: float
    gtmean_psnr_var: float
    label: str = ""

    def csv_fields(self) -> list[str]:
        return [self.label or fmt(self.sigma)] + [
            fmt(v) for v in (self.psnr_mean, self.psnr_var, self.gtmean_psnr_mean, self.gtmean_psnr_var)
        ]


def sigma_sweep_train(
    config: TrainConfig,
    sigma_list: Sequence[float],
    repeats: int = 3,
    labels: Optional[Sequence[str]] = None,
) -> list[SigmaSummary]:
    """Train once per (sigma, repeat) with seed ``config.seed + repeat``.

    Variances are population variances over repeats. Results are keyed by
    sigma and repeat, so evaluation order does not matter.
    """
    if repeats < 1:
        raise DomainError("repeats must be >= 1")
    finals: dict[tuple[int, int], TraceRow] = {}
    datasets = {r: build_dataset(replace(config, seed=config.seed + r)) for r in range(repeats)}
    for si, sigma in enumerate(sigma_list):
        for r in range(repeats):
            cfg = replace(
                config,
                seed=config.seed + r,
                gt_cfg=replace(config.gt_cfg, sigma_coeff=float(sigma)),
            )
            finals[si, r] = train(cfg, datasets[r]).final
    out = []
    for si, sigma in enumerate(sigma_list):
        p = np.array([finals[si, r].psnr for r in range(repeats)])
        g = np.array([finals[si, r].gt_mean_psnr for r in range(repeats)])
        out.append(
            SigmaSummary(
                float(sigma),
                float(p.mean()),
                float(p.var()),
                float(g.mean()),
                float(g.var()),
                label=labels[si] if labels else "",
            )
        )
    return out


def summary_to_csv(summaries: Sequence[SigmaSummary]) -> str:
    return rows_to_csv(SUMMARY_HEADER, [s.csv_fields() for s in summaries])
