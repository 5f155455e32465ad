"""Brightness-aware GT-mean loss for low-light enhancement, with a toy trainer and landscape tools."""

from .brightness import BrightnessGaussian, WeightResult, bhattacharyya, from_image_mean, weight_w
from .imaging import DomainError, MetricMode, load_ppm, mean_brightness, psnr, save_ppm, ssim
from .losses import GtMeanConfig, LambdaMode, LossKind, base_loss, finite_difference_check, gt_mean_loss

__version__ = "0.1.0"
