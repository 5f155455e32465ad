"""Image container helpers, Netpbm I/O, brightness statistics and quality metrics.

Images are plain ``numpy`` arrays of shape ``(C, H, W)`` with ``C`` in {1, 3}.
Arrays that come from files or from a model forward pass hold intensities in
[0, 1]; gradients and rescaled predictions may leave that range.
"""

from __future__ import annotations

import enum
import os
from typing import Union

import numpy as np

PSNR_CAP = 99.0
DEFAULT_MEAN_FLOOR = 1e-6

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

PathLike = Union[str, os.PathLike]


class DomainError(ValueError):
    """Raised when an input violates a numeric precondition."""


class ShapeMismatchError(ValueError):
    pass


class NetpbmError(ValueError):
    """Base class for PPM/PGM parse failures; ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class UnsupportedFormatError(NetpbmError):
    pass


class MalformedHeaderError(NetpbmError):
    pass


class UnsupportedMaxvalError(NetpbmError):
    pass


class TruncatedPayloadError(NetpbmError):
    pass


class MetricMode(enum.Enum):
    NORMAL = "normal"
    GT_MEAN = "gtmean"


def check_tensor(arr, *, unit_range: bool = False, name: str = "image") -> np.ndarray:
    """Validate a ``(C, H, W)`` tensor and return it as float64."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 3:
        raise DomainError(f"{name} must have shape (C, H, W), got {arr.shape}")
    if arr.shape[0] not in (1, 3):
        raise DomainError(f"{name} must have 1 or 3 channels, got {arr.shape[0]}")
    if arr.size == 0:
        raise DomainError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    if unit_range and (arr.min() < 0.0 or arr.max() > 1.0):
        raise DomainError(f"{name} has values outside [0, 1]")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if np.shape(a) != np.shape(b):
        raise ShapeMismatchError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")


# --------------------------------------------------------------------------
# Netpbm

_WHITESPACE = b" \t\n\r\v\f"


def _read_token(data: bytes, pos: int) -> tuple[bytes, int, int]:
    """Return (token, token_start, position after token), skipping comments."""
    n = len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c in _WHITESPACE:
            pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos : pos + 1] not in _WHITESPACE and data[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise MalformedHeaderError("unexpected end of header", start)
    return data[start:pos], start, pos


def decode_netpbm(data: bytes) -> np.ndarray:
    """Decode binary P5/P6 bytes (maxval 255) into a channel-major tensor."""
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise UnsupportedFormatError(f"unsupported magic {magic!r}; expected P5 or P6", 0)
    pos = 2
    fields = []
    for label in ("width", "height", "maxval"):
        tok, start, pos = _read_token(data, pos)
        if not tok.isdigit():
            raise MalformedHeaderError(f"invalid {label} {tok!r}", start)
        fields.append((int(tok), start))
    (width, _), (height, hstart), (maxval, mstart) = fields
    if width < 1 or height < 1:
        raise MalformedHeaderError("image dimensions must be positive", hstart)
    if maxval != 255:
        raise UnsupportedMaxvalError(f"maxval {maxval} not supported; only 255", mstart)
    if pos >= len(data) or data[pos : pos + 1] not in _WHITESPACE:
        raise MalformedHeaderError("missing whitespace after maxval", pos)
    pos += 1

    channels = 3 if magic == b"P6" else 1
    expected = width * height * channels
    payload = data[pos : pos + expected]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"payload has {len(payload)} bytes, expected {expected}", pos + len(payload)
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return np.ascontiguousarray(pixels.transpose(2, 0, 1)).astype(np.float64) / 255.0


def encode_netpbm(img) -> bytes:
    img = check_tensor(img, unit_range=True)
    channels, height, width = img.shape
    # np.rint rounds half to even
    raw = np.rint(img * 255.0).astype(np.uint8).transpose(1, 2, 0)
    magic = b"P6" if channels == 3 else b"P5"
    header = magic + b"\n%d %d\n255\n" % (width, height)
    return header + raw.tobytes()


def load_ppm(path: PathLike) -> np.ndarray:
    """Load a binary PPM (P6) or PGM (P5) file with maxval 255.

    PNG files are accepted too when Pillow is importable; that path is a
    convenience and is not bit-exact tested.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _load_png(path)
    return decode_netpbm(data)


def _load_png(path: PathLike) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        mode = "L" if im.mode in ("L", "1", "P;L") else "RGB"
        arr = np.asarray(im.convert(mode), dtype=np.uint8)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr.transpose(2, 0, 1).astype(np.float64) / 255.0


def save_ppm(img, path: PathLike) -> None:
    data = encode_netpbm(img)
    with open(path, "wb") as fh:
        fh.write(data)


# --------------------------------------------------------------------------
# Brightness


def mean_brightness(img) -> float:
    arr = np.asarray(img, dtype=np.float64)
    if arr.size == 0:
        raise DomainError("mean brightness of an empty tensor is undefined")
    return float(arr.mean())


def scale_to_target_mean(pred, target, floor: float = DEFAULT_MEAN_FLOOR) -> tuple[np.ndarray, float]:
    """Rescale ``pred`` so its mean matches ``target``; returns (scaled, lambda).

    The result is not clamped. The prediction mean is floored at ``floor`` so
    an all-black prediction gives a large but finite factor.
    """
    check_same_shape(pred, target)
    if floor <= 0:
        raise DomainError("floor must be positive")
    pred = np.asarray(pred, dtype=np.float64)
    lam = mean_brightness(target) / max(mean_brightness(pred), floor)
    return lam * pred, lam


def brightness_discrepancy(pred, target) -> float:
    check_same_shape(pred, target)
    return abs(mean_brightness(target) - mean_brightness(pred))


# --------------------------------------------------------------------------
# Metrics


def _prepare(pred, target, mode: MetricMode) -> tuple[np.ndarray, np.ndarray]:
    check_same_shape(pred, target)
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    mode = MetricMode(mode)
    if mode is MetricMode.GT_MEAN:
        scaled, _ = scale_to_target_mean(pred, target)
        pred = np.clip(scaled, 0.0, 1.0)
    return pred, target


def psnr(pred, target, mode: MetricMode = MetricMode.NORMAL) -> float:
    """Peak-1 PSNR in dB; zero error returns ``PSNR_CAP``."""
    pred, target = _prepare(pred, target, mode)
    mse = float(np.mean((pred - target) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable correlation over the last two axes, keeping only full windows
    k = g.size
    x = np.lib.stride_tricks.sliding_window_view(x, k, axis=-1) @ g
    x = np.lib.stride_tricks.sliding_window_view(x, k, axis=-2) @ g
    return x


def to_luma(img: np.ndarray) -> np.ndarray:
    """Collapse the channel axis (third from last) to luma."""
    if img.shape[-3] == 1:
        return img[..., 0, :, :]
    return np.tensordot(LUMA_WEIGHTS, np.moveaxis(img, -3, 0), axes=1)


def ssim_luma(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Mean SSIM over valid windows for 2-D planes, batched over leading axes."""
    g = gaussian_window()
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a**2
    var_b = _filter_valid(b * b, g) - mu_b**2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a**2 + mu_b**2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return (num / den).mean(axis=(-2, -1))


def ssim(pred, target, mode: MetricMode = MetricMode.NORMAL) -> float:
    """Single-scale SSIM on luma with an 11x11 Gaussian window (sigma 1.5)."""
    pred, target = _prepare(pred, target, mode)
    if pred.ndim != 3 or pred.shape[1] < SSIM_WINDOW or pred.shape[2] < SSIM_WINDOW:
        raise DomainError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {pred.shape}")
    return float(ssim_luma(to_luma(pred), to_luma(target)))


# --------------------------------------------------------------------------
# Batched variants, used by the trainer for per-iteration tracing


def batch_gt_scaled(preds: np.ndarray, targets: np.ndarray, floor: float = DEFAULT_MEAN_FLOOR) -> np.ndarray:
    """Per-image mean matching followed by a clamp to [0, 1]."""
    axes = tuple(range(1, preds.ndim))
    lam = targets.mean(axis=axes) / np.maximum(preds.mean(axis=axes), floor)
    return np.clip(lam.reshape((-1,) + (1,) * (preds.ndim - 1)) * preds, 0.0, 1.0)


def batch_psnr(preds: np.ndarray, targets: np.ndarray, mode: MetricMode = MetricMode.NORMAL) -> np.ndarray:
    if MetricMode(mode) is MetricMode.GT_MEAN:
        preds = batch_gt_scaled(preds, targets)
    mse = np.mean((preds - targets) ** 2, axis=tuple(range(1, preds.ndim)))
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(1.0 / mse)
    return np.where(mse == 0.0, PSNR_CAP, np.minimum(out, PSNR_CAP))


def batch_ssim(preds: np.ndarray, targets: np.ndarray, mode: MetricMode = MetricMode.NORMAL) -> np.ndarray:
    if MetricMode(mode) is MetricMode.GT_MEAN:
        preds = batch_gt_scaled(preds, targets)
    return ssim_luma(to_luma(preds), to_luma(targets))
