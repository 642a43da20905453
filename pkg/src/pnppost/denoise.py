"""Gaussian denoisers used as the plug-in prior.

A denoiser is any callable ``denoise(image, sigma) -> image`` where ``sigma``
is the noise standard deviation in pixel units. Stronger priors such as BM3D
attach through :class:`SubprocessDenoiser`.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dctn, idctn
from scipy.ndimage import correlate1d

from .codecs import CodecError, SubprocessCodec
from .core import ImageBuffer, as_array


def gaussian_kernel(std: float, truncate: float = 4.0) -> np.ndarray:
    """Normalized 1D Gaussian taps covering ``truncate`` standard deviations."""
    radius = max(1, int(math.ceil(truncate * std)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / std) ** 2)
    return k / k.sum()


def blur_width(sigma: float, factor: float = 0.5, lo: float = 0.3, hi: float = 5.0) -> float:
    return min(max(factor * sigma, lo), hi)


def gaussian_blur_denoiser(img, sigma: float) -> ImageBuffer:
    """Separable Gaussian smoothing, kernel width ``0.5 * sigma`` clamped to [0.3, 5] px."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    k = gaussian_kernel(blur_width(sigma))
    x = as_array(img)
    # scipy's 'reflect' is the half-sample symmetric extension (d c b a | a b c d)
    y = correlate1d(x, k, axis=0, mode="reflect")
    y = correlate1d(y, k, axis=1, mode="reflect")
    return ImageBuffer(y)


def dct_threshold_denoiser(img, sigma: float, threshold: float = 2.7, patch: int = 8) -> ImageBuffer:
    """Sliding-window DCT hard thresholding.

    Every ``patch x patch`` window (stride 1) is transformed with the
    orthonormal 2D DCT; AC coefficients with magnitude below
    ``threshold * sigma`` are zeroed, the DC term is always kept, and the
    reconstructed windows are averaged with uniform weights.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    x = as_array(img)
    h, w = x.shape
    ph, pw = min(patch, h), min(patch, w)
    windows = sliding_window_view(x, (ph, pw))  # (H-ph+1, W-pw+1, ph, pw)
    coef = dctn(windows, axes=(-2, -1), norm="ortho")
    keep = np.abs(coef) >= threshold * sigma
    keep[..., 0, 0] = True
    rec = idctn(np.where(keep, coef, 0.0), axes=(-2, -1), norm="ortho")

    acc = np.zeros_like(x)
    hits = np.zeros_like(x)
    nh, nw = windows.shape[:2]
    for i in range(ph):
        for j in range(pw):
            acc[i : i + nh, j : j + nw] += rec[:, :, i, j]
            hits[i : i + nh, j : j + nw] += 1.0
    return ImageBuffer(acc / hits)


def identity_denoiser(img, sigma: float) -> ImageBuffer:
    return ImageBuffer(as_array(img))


class DenoiserError(RuntimeError):
    """An external denoiser failed."""


class SubprocessDenoiser:
    """External denoiser run like :class:`~pnppost.codecs.SubprocessCodec`.

    The template may use ``{sigma}`` in addition to ``{in}`` and ``{out}``.
    """

    def __init__(self, template: str, workdir=None, timeout: float = 300.0):
        self._runner = SubprocessCodec(template, workdir=workdir, timeout=timeout)

    @property
    def descriptor(self):
        return self._runner.descriptor

    def __call__(self, img, sigma: float) -> ImageBuffer:
        try:
            return ImageBuffer(self._runner.run_command(as_array(img), sigma=f"{sigma:.6g}"))
        except CodecError as exc:
            raise DenoiserError(str(exc)) from exc


DENOISERS = {
    "gauss": gaussian_blur_denoiser,
    "dct": dct_threshold_denoiser,
    "identity": identity_denoiser,
}


def parse_denoiser(spec: str):
    if spec.startswith("cmd:"):
        return SubprocessDenoiser(spec[4:])
    try:
        return DENOISERS[spec]
    except KeyError:
        raise ValueError(f"unknown denoiser {spec!r}; expected one of {sorted(DENOISERS)} or cmd:TEMPLATE") from None
