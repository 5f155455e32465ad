"""Gaussian model of average brightness and the dynamic weight W."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imaging import DEFAULT_MEAN_FLOOR, DomainError

DEGENERATE = math.inf


@dataclass(frozen=True)
class BrightnessGaussian:
    mu: float
    sigma_abs: float

    def __post_init__(self):
        if not (self.mu >= 0 and self.sigma_abs >= 0):
            raise DomainError(f"invalid brightness Gaussian ({self.mu}, {self.sigma_abs})")


@dataclass(frozen=True)
class WeightResult:
    d_b: float
    w: float

    @property
    def degenerate(self) -> bool:
        return math.isinf(self.d_b)


def from_image_mean(mean: float, sigma_coeff: float) -> BrightnessGaussian:
    """The observed mean brightness with relative spread ``sigma_coeff``."""
    if mean < 0 or sigma_coeff < 0:
        raise DomainError("mean and sigma coefficient must be non-negative")
    return BrightnessGaussian(float(mean), float(sigma_coeff) * float(mean))


def bhattacharyya(p: BrightnessGaussian, q: BrightnessGaussian) -> float:
    """Closed-form Bhattacharyya distance between two 1-D Gaussians."""
    if p.sigma_abs <= 0 or q.sigma_abs <= 0:
        raise DomainError("Bhattacharyya distance needs strictly positive sigmas")
    # spreads are normalised by the larger one so tiny sigmas do not underflow
    scale = max(p.sigma_abs, q.sigma_abs)
    rp, rq = p.sigma_abs / scale, q.sigma_abs / scale
    rel_var = rp * rp + rq * rq
    z = (p.mu - q.mu) / scale
    quad = 0.25 * (z * z) / rel_var
    # split log limits cancellation near p == q
    log_term = 0.5 * math.log(rel_var) - 0.5 * math.log(2.0 * rp * rq)
    return quad + max(log_term, 0.0)


def weight_w(
    mean_target: float,
    mean_pred: float,
    sigma_coeff: float,
    floor: float = DEFAULT_MEAN_FLOOR,
) -> WeightResult:
    """W = clip(D_B, 0, 1), with W = 1 on the degenerate path.

    The degenerate path covers ``sigma_coeff == 0`` (plain base loss) and a
    mean below ``floor`` on either side, where alignment is meaningless.
    """
    if mean_target < 0 or mean_pred < 0 or sigma_coeff < 0:
        raise DomainError("means and sigma coefficient must be non-negative")
    if floor <= 0:
        raise DomainError("floor must be positive")
    if sigma_coeff == 0 or mean_target < floor or mean_pred < floor:
        return WeightResult(DEGENERATE, 1.0)
    p = from_image_mean(mean_target, sigma_coeff)
    q = from_image_mean(mean_pred, sigma_coeff)
    if p.sigma_abs == 0 or q.sigma_abs == 0:
        # sigma underflowed: the zero-spread limit
        d_b = 0.0 if p.mu == q.mu else math.inf
    else:
        d_b = bhattacharyya(p, q)
    return WeightResult(d_b, min(max(d_b, 0.0), 1.0))


def weight_w_batch(mean_target, mean_pred, sigma_coeff: float, floor: float = DEFAULT_MEAN_FLOOR):
    """Vectorised ``weight_w`` over arrays of per-image means; returns (d_b, w)."""
    mt = np.asarray(mean_target, dtype=np.float64)
    mp = np.asarray(mean_pred, dtype=np.float64)
    degenerate = (sigma_coeff == 0) | (mt < floor) | (mp < floor)
    safe_t = np.where(degenerate, 1.0, mt)
    safe_p = np.where(degenerate, 1.0, mp)
    coeff = sigma_coeff if sigma_coeff > 0 else 1.0
    st = coeff * safe_t
    sp = coeff * safe_p
    underflow = (st == 0) | (sp == 0)
    scale = np.where(underflow, 1.0, np.maximum(st, sp))
    rt = np.where(underflow, 1.0, st / scale)
    rp = np.where(underflow, 1.0, sp / scale)
    rel_var = rt * rt + rp * rp
    with np.errstate(over="ignore"):
        z = (safe_t - safe_p) / scale
        quad = 0.25 * (z * z) / rel_var
    log_term = np.maximum(0.5 * np.log(rel_var) - 0.5 * np.log(2.0 * rt * rp), 0.0)
    d_b = quad + log_term
    d_b = np.where(underflow, np.where(safe_t == safe_p, 0.0, np.inf), d_b)
    d_b = np.where(degenerate, np.inf, d_b)
    w = np.where(degenerate, 1.0, np.clip(d_b, 0.0, 1.0))
    return d_b, w
