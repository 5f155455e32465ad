"""Loss landscape along a global brightness factor eta.

Every prediction of a batch is multiplied by eta on a uniform grid and the
plain loss, the brightness-aligned term, the GT-mean loss and the weight W
are recorded. The aligned term does not depend on eta, which is what turns
the GT-mean curve into a basin around the mean-matching factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .imaging import DomainError, check_same_shape
from .losses import GtMeanConfig, LossKind, batch_gt_mean_loss
from .trainer import DegradationSpec, degrade, fmt, generate_base_images, rows_to_csv

SWEEP_HEADER = ["eta", "original_loss", "aligned_term", "gt_mean_loss", "weight", "d_b"]


@dataclass(frozen=True)
class SweepSpec:
    eta_min: float = 0.0
    eta_max: float = 3.0
    steps: int = 301
    sigma_list: tuple = (0.05, 0.1, 0.2)
    kind: LossKind = field(default_factory=LossKind.l1)

    def __post_init__(self):
        object.__setattr__(self, "sigma_list", tuple(self.sigma_list))
        if not self.eta_min < self.eta_max:
            raise DomainError("eta_min must be < eta_max")
        if self.steps < 2:
            raise DomainError("steps must be >= 2")
        if any(not float(s) >= 0 for s in self.sigma_list):
            raise DomainError("sigma values must be >= 0")

    def grid(self) -> np.ndarray:
        return np.linspace(self.eta_min, self.eta_max, self.steps)


@dataclass
class SweepRow:
    eta: float
    original_loss: float
    aligned_term: float
    gt_mean_loss: float
    weight: float
    d_b: float

    def csv_fields(self) -> list[str]:
        return [fmt(getattr(self, k)) for k in SWEEP_HEADER]


def _stack(images: Sequence[np.ndarray]) -> np.ndarray:
    return np.stack([np.asarray(im, dtype=np.float64) for im in images])


def sweep_one(preds: np.ndarray, targets: np.ndarray, etas: np.ndarray, kind: LossKind, cfg: GtMeanConfig) -> list[SweepRow]:
    rows = []
    for eta in etas:
        out = batch_gt_mean_loss(kind, eta * preds, targets, cfg)
        rows.append(
            SweepRow(
                eta=float(eta),
                original_loss=float(out.original_term.mean()),
                aligned_term=float(out.aligned_term.mean()),
                gt_mean_loss=out.value,
                weight=float(out.w.mean()),
                d_b=float(out.d_b.mean()),
            )
        )
    return rows


def eta_sweep(preds, targets, spec: SweepSpec, cfg: GtMeanConfig | None = None) -> dict[float, list[SweepRow]]:
    """Rows in ascending eta for each sigma of ``spec.sigma_list``.

    Per-image W and lambda; each row reports batch means. Scaled predictions
    are deliberately not clamped.
    """
    cfg = cfg or GtMeanConfig()
    if len(preds) == 0 or len(preds) != len(targets):
        raise DomainError("need non-empty, equally long prediction and target lists")
    for p, t in zip(preds, targets):
        check_same_shape(p, t)
    p = _stack(preds)
    t = _stack(targets)
    etas = spec.grid()
    return {sigma: sweep_one(p, t, etas, spec.kind, replace(cfg, sigma_coeff=float(sigma))) for sigma in spec.sigma_list}


def eta_star(preds, targets) -> float:
    """Batch-level mean-matching factor ``sum(E[y]) / sum(E[f(x)])``."""
    return float(np.mean([np.mean(t) for t in targets]) / np.mean([np.mean(p) for p in preds]))


def argmin_eta(rows: Sequence[SweepRow]) -> float:
    best = min(range(len(rows)), key=lambda i: rows[i].gt_mean_loss)
    return rows[best].eta


def nearest_row(rows: Sequence[SweepRow], eta: float) -> SweepRow:
    return min(rows, key=lambda r: abs(r.eta - eta))


def sweep_to_csv(rows: Sequence[SweepRow]) -> str:
    return rows_to_csv(SWEEP_HEADER, [r.csv_fields() for r in rows])


def standard_batch(count: int = 8, size: int = 64, seed: int = 0) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Synthetic (prediction, target) pairs standing in for a trained enhancer's output.

    Predictions are mildly darkened, tone-shifted and noisy versions of the
    targets, so the mean-matching factor sits a little above 1.
    """
    targets = generate_base_images(count, size, seed)
    spec = DegradationSpec(gamma=1.3, gain=0.9, noise_sigma=0.03, seed=seed)
    preds = [degrade(t, spec, stream=(i,)) for i, t in enumerate(targets)]
    return preds, targets


def basin_holds(rows: Sequence[SweepRow], star: float, offset: float = 0.5) -> bool:
    centre = nearest_row(rows, star).gt_mean_loss
    return all(centre <= nearest_row(rows, star + s * offset).gt_mean_loss for s in (-1, 1))


def drop_count(rows: Sequence[SweepRow]) -> int:
    """Number of grid points where W has left 1."""
    return sum(1 for r in rows if r.weight < 1.0)


def is_degenerate(d_b: float) -> bool:
    return math.isinf(d_b)
