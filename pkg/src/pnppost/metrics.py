"""PSNR and SSIM with the usual 8-bit conventions."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import laplace, uniform_filter

from .core import as_array

PEAK = 255.0


@dataclass(frozen=True)
class QualityReport:
    psnr: float
    ssim: float

    def __str__(self):
        return f"psnr={self.psnr:.6g} ssim={self.ssim:.6g}"


def _pair(ref, test):
    a, b = as_array(ref), as_array(test)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(ref, test) -> float:
    """``10 log10(255^2 / MSE)``; ``inf`` for identical images."""
    a, b = _pair(ref, test)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(PEAK * PEAK / mse)


def _window(size: int = 11, std: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x * x) / (2 * std * std))
    w = np.outer(g, g)
    return w / w.sum()


def _filter_valid(x, w):
    return np.einsum("ijkl,kl->ij", sliding_window_view(x, w.shape), w)


def ssim(ref, test, k1: float = 0.01, k2: float = 0.03, window: int = 11, std: float = 1.5) -> float:
    """Mean SSIM over all fully-contained 11x11 Gaussian windows (std 1.5)."""
    a, b = _pair(ref, test)
    if a.shape[0] < window or a.shape[1] < window:
        raise ValueError(f"images must be at least {window}x{window}, got {a.shape}")
    c1 = (k1 * PEAK) ** 2
    c2 = (k2 * PEAK) ** 2
    w = _window(window, std)
    mu_a = _filter_valid(a, w)
    mu_b = _filter_valid(b, w)
    var_a = _filter_valid(a * a, w) - mu_a * mu_a
    var_b = _filter_valid(b * b, w) - mu_b * mu_b
    cov = _filter_valid(a * b, w) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def quality(ref, test) -> QualityReport:
    return QualityReport(psnr(ref, test), ssim(ref, test))


def flat_mask(ref, max_std: float, size: int = 5) -> np.ndarray:
    """Pixels whose ``size x size`` neighbourhood in ``ref`` has std below ``max_std``."""
    a = as_array(ref)
    m = uniform_filter(a, size, mode="reflect")
    var = uniform_filter(a * a, size, mode="reflect") - m * m
    return np.sqrt(np.maximum(var, 0.0)) < max_std


def false_contour_energy(ref, test, mask) -> float:
    """Mean absolute Laplacian of the error ``test - ref`` over ``mask``.

    In regions that are flat in the reference, a quantizer turns slow ramps
    into plateaus separated by steps; those steps dominate this measure.
    """
    a, b = _pair(ref, test)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape or not mask.any():
        raise ValueError("mask must match the image shape and select at least one pixel")
    return float(np.mean(np.abs(laplace(b - a, mode="reflect"))[mask]))
