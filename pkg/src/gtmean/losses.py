"""Base reconstruction losses with analytic gradients and their GT-mean extension.

Every loss is the mean of an elementwise penalty on the residual
``d = pred - target``; gradients are exact and already divided by the
element count. The GT-mean form mixes the plain loss with the same loss
evaluated after rescaling the prediction to the target's mean brightness,
weighted by ``W`` from :mod:`gtmean.brightness`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .brightness import weight_w_batch
from .imaging import DEFAULT_MEAN_FLOOR, DomainError, check_same_shape


class LambdaMode(enum.Enum):
    DIFFERENTIABLE = "differentiable"
    DETACHED = "detached"


@dataclass(frozen=True)
class LossKind:
    """One of ``l1``, ``l2``, ``charbonnier`` (uses ``eps``) or ``smooth_l1`` (uses ``beta``)."""

    name: str
    eps: float = 1e-3
    beta: float = 1.0

    NAMES = ("l1", "l2", "charbonnier", "smooth_l1")

    def __post_init__(self):
        if self.name not in self.NAMES:
            raise DomainError(f"unknown loss kind {self.name!r}; expected one of {self.NAMES}")
        if self.name == "charbonnier" and not self.eps > 0:
            raise DomainError("charbonnier eps must be > 0")
        if self.name == "smooth_l1" and not self.beta > 0:
            raise DomainError("smooth_l1 beta must be > 0")

    @classmethod
    def l1(cls):
        return cls("l1")

    @classmethod
    def l2(cls):
        return cls("l2")

    @classmethod
    def charbonnier(cls, eps: float = 1e-3):
        return cls("charbonnier", eps=eps)

    @classmethod
    def smooth_l1(cls, beta: float = 1.0):
        return cls("smooth_l1", beta=beta)

    @property
    def has_kink(self) -> bool:
        return self.name in ("l1", "smooth_l1")


@dataclass(frozen=True)
class GtMeanConfig:
    sigma_coeff: float = 0.1
    lambda_mode: LambdaMode = LambdaMode.DIFFERENTIABLE
    mean_floor: float = DEFAULT_MEAN_FLOOR

    def __post_init__(self):
        object.__setattr__(self, "lambda_mode", LambdaMode(self.lambda_mode))
        if not (np.isfinite(self.sigma_coeff) and self.sigma_coeff >= 0):
            raise DomainError("sigma_coeff must be finite and >= 0")
        if not self.mean_floor > 0:
            raise DomainError("mean_floor must be > 0")


@dataclass
class LossOutput:
    value: float
    grad: np.ndarray
    w: float
    d_b: float
    lam: float
    original_term: float
    aligned_term: float


@dataclass
class BatchLossOutput:
    """Batch-mean loss; per-image diagnostics are arrays of length B."""

    value: float
    grad: np.ndarray
    w: np.ndarray
    d_b: np.ndarray
    lam: np.ndarray
    original_term: np.ndarray
    aligned_term: np.ndarray
    per_image: np.ndarray = field(repr=False, default=None)


def _penalty(kind: LossKind, d: np.ndarray, need_der: bool = True):
    """Elementwise penalty and its derivative w.r.t. the residual (or None).

    ``d`` is a scratch residual and may be overwritten with the derivative.
    """
    if kind.name == "l1":
        val = np.abs(d)
        return val, np.sign(d, out=d) if need_der else None
    if kind.name == "l2":
        val = d * d
        if need_der:
            d *= 2.0
        return val, d if need_der else None
    if kind.name == "charbonnier":
        r = d * d
        r += kind.eps**2
        np.sqrt(r, out=r)
        return r, np.divide(d, r, out=d) if need_der else None
    beta = kind.beta
    small = np.abs(d) < beta
    val = np.where(small, 0.5 * d * d / beta, np.abs(d) - 0.5 * beta)
    der = np.where(small, d / beta, np.sign(d)) if need_der else None
    return val, der


def _per_image(kind: LossKind, pred: np.ndarray, target: np.ndarray, need_der: bool = True, scale=None):
    """Per-image mean penalty over all but the first axis, and the raw derivative.

    ``scale`` (one factor per image) multiplies ``pred`` before the residual
    is taken, without an extra temporary.
    """
    if scale is None:
        d = pred - target
    else:
        d = scale * pred
        d -= target
    val, der = _penalty(kind, d, need_der)
    return val.reshape(val.shape[0], -1).mean(axis=1), der


def base_loss(kind: LossKind, pred, target) -> tuple[float, np.ndarray]:
    """Mean elementwise penalty and its gradient w.r.t. ``pred``."""
    check_same_shape(pred, target)
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.size == 0:
        raise DomainError("loss of an empty tensor is undefined")
    val, der = _per_image(kind, pred[None], target[None])
    return float(val[0]), der[0] / pred.size


def batch_gt_mean_loss(
    kind: LossKind,
    preds,
    targets,
    cfg: GtMeanConfig,
    w_override=None,
    lam_override=None,
) -> BatchLossOutput:
    """GT-mean loss averaged over a batch with W and lambda computed per image.

    ``w_override`` replaces the computed weight (scalar or per-image array);
    it is how W is frozen for finite differences and forced to 0 for
    alignment-only training. ``lam_override`` pins the scale factor the same
    way and is only meaningful together with ``LambdaMode.DETACHED``.
    """
    check_same_shape(preds, targets)
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    # cheap sum test first; the full scan only runs when it trips
    if not np.isfinite(preds.sum()) and not np.all(np.isfinite(preds)):
        raise DomainError("prediction contains non-finite values")
    b = preds.shape[0]
    n = preds[0].size
    flat = (b, -1)
    bshape = (b,) + (1,) * (preds.ndim - 1)

    mean_t = targets.reshape(flat).mean(axis=1)
    mean_p = preds.reshape(flat).mean(axis=1)
    d_b, w = weight_w_batch(mean_t, mean_p, cfg.sigma_coeff, cfg.mean_floor)
    if w_override is not None:
        w = np.broadcast_to(np.asarray(w_override, dtype=np.float64), (b,)).copy()

    floored = mean_p < cfg.mean_floor
    lam = mean_t / np.maximum(mean_p, cfg.mean_floor)
    if lam_override is not None:
        lam = np.broadcast_to(np.asarray(lam_override, dtype=np.float64), (b,)).copy()

    # with every W at 1 the aligned gradient is multiplied by zero; skipping it
    # leaves the result bitwise unchanged
    aligned_active = bool(np.any(w != 1.0))
    original, der_o = _per_image(kind, preds, targets)
    aligned, der_a = _per_image(kind, preds, targets, aligned_active, scale=lam.reshape(bshape))

    # grad = (w * der_o + (1 - w) * (lam * der_a - chain)) / (b * n); ordered so
    # that w = 1 or lam = 1 reproduce the plain gradient bit for bit
    # the derivative buffers are scratch space and are scaled in place
    chain = None
    if aligned_active and cfg.lambda_mode is LambdaMode.DIFFERENTIABLE:
        # d lambda / d p_i = -lambda / (n * mean_p), zero while the floor is active
        proj = np.einsum("ij,ij->i", der_a.reshape(flat), preds.reshape(flat))
        chain = np.where(floored, 0.0, (1.0 - w) * lam * proj / (b * n * np.maximum(mean_p, cfg.mean_floor)))
    grad = der_o
    grad *= (w / b).reshape(bshape)
    if aligned_active:
        der_a *= ((1.0 - w) * lam / b).reshape(bshape)
        grad += der_a
    if chain is not None:
        grad -= chain.reshape(bshape)
    grad /= n

    per_image = w * original + (1.0 - w) * aligned
    return BatchLossOutput(
        value=float(per_image.mean()),
        grad=grad,
        w=w,
        d_b=d_b,
        lam=lam,
        original_term=original,
        aligned_term=aligned,
        per_image=per_image,
    )


def gt_mean_loss(
    kind: LossKind,
    pred,
    target,
    cfg: Optional[GtMeanConfig] = None,
    w_override=None,
    lam_override=None,
) -> LossOutput:
    """GT-mean loss for one image pair.

    W is a constant with respect to ``pred``; lambda carries a gradient only
    in ``LambdaMode.DIFFERENTIABLE``.
    """
    cfg = cfg or GtMeanConfig()
    check_same_shape(pred, target)
    out = batch_gt_mean_loss(
        kind, np.asarray(pred)[None], np.asarray(target)[None], cfg, w_override, lam_override
    )
    return LossOutput(
        value=out.value,
        grad=out.grad[0],
        w=float(out.w[0]),
        d_b=float(out.d_b[0]),
        lam=float(out.lam[0]),
        original_term=float(out.original_term[0]),
        aligned_term=float(out.aligned_term[0]),
    )


def finite_difference_check(
    kind: LossKind,
    cfg: Optional[GtMeanConfig],
    pred,
    target,
    step: float = 1e-5,
) -> float:
    """Max relative error between the analytic gradient and central differences.

    With ``cfg=None`` the plain base loss is checked. For the GT-mean loss W is
    frozen at the evaluation point, matching its stop-gradient role; in
    detached mode lambda is frozen as well.
    Evaluation points near a kink (L1, smooth L1) raise :class:`DomainError`.
    """
    if not step > 0:
        raise DomainError("step must be > 0")
    check_same_shape(pred, target)
    pred = np.array(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    margin = 10.0 * step

    if cfg is None:
        residuals = [pred - target]
        analytic = base_loss(kind, pred, target)[1]

        def f(p):
            return base_loss(kind, p, target)[0]

    else:
        if pred.mean() < cfg.mean_floor:
            raise DomainError("prediction mean is below the floor")
        out = gt_mean_loss(kind, pred, target, cfg)
        w0 = out.w
        lam0 = out.lam if cfg.lambda_mode is LambdaMode.DETACHED else None
        residuals = [pred - target, out.lam * pred - target]
        analytic = out.grad

        def f(p):
            return gt_mean_loss(kind, p, target, cfg, w_override=w0, lam_override=lam0).value

    if kind.has_kink:
        for r in residuals:
            if np.any(np.abs(r) <= margin):
                raise DomainError("evaluation point is within 10 steps of a loss kink")
        if kind.name == "smooth_l1":
            for r in residuals:
                if np.any(np.abs(np.abs(r) - kind.beta) <= margin):
                    raise DomainError("evaluation point is within 10 steps of the smooth-L1 branch switch")

    flat = pred.reshape(-1)
    numeric = np.empty(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f(pred)
        flat[i] = orig - step
        fm = f(pred)
        flat[i] = orig
        numeric[i] = (fp - fm) / (2.0 * step)
    analytic = analytic.reshape(-1)
    rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-8)
    return float(rel.max())


def random_smooth_pair(rng: np.random.Generator, shape=(3, 4, 4), margin: float = 0.02):
    """Random (pred, target) with every plain and mean-aligned residual at least ``margin`` from zero.

    Residuals stay below 0.2, inside the quadratic branch of smooth L1 with
    the default beta, so all four loss kinds are smooth there.
    """
    while True:
        target = rng.uniform(0.15, 0.85, shape)
        sign = rng.choice([-1.0, 1.0], shape)
        pred = np.clip(target + sign * rng.uniform(0.05, 0.15, shape), 0.01, 0.99)
        lam = target.mean() / pred.mean()
        if np.all(np.abs(pred - target) > margin) and np.all(np.abs(lam * pred - target) > margin):
            return pred, target
