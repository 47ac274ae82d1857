"""Bicubic degradation and upsampling.

Implements the conventional antialiased-resize definition: the Keys
cubic kernel (a = -0.5), half-pixel-centered coordinate mapping
(source of output pixel k is (k + 0.5) / scale - 0.5), kernel stretched
by the scale factor on downsampling for antialiasing, out-of-range taps
clamped to the edge pixel, and each output pixel's weights renormalized
to sum to 1. Upsampling uses the same convention without antialiasing.
"""

from __future__ import annotations

import math

import numpy as np

from .image_core import DepthMap, as_image

__all__ = [
    "SCALE_FACTORS",
    "check_scale",
    "bicubic_kernel",
    "bicubic_downsample",
    "bicubic_upsample",
    "degrade",
    "crop_to_multiple",
]

SCALE_FACTORS = (2, 4, 8, 16)

# Keys kernel support half-width.
_SUPPORT = 2.0


def check_scale(s: int) -> int:
    if s not in SCALE_FACTORS:
        raise ValueError(f"scale must be one of {SCALE_FACTORS}, got {s}")
    return int(s)


def bicubic_kernel(x) -> np.ndarray:
    """Keys cubic interpolation kernel with a = -0.5."""
    a = -0.5
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2 = x * x
    x3 = x2 * x
    near = (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0
    far = a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a
    out = np.where(x < 1.0, near, np.where(x < 2.0, far, 0.0))
    return out if out.ndim else float(out)


def _axis_weights(n_in: int, n_out: int, antialias: bool) -> np.ndarray:
    """Dense (n_out, n_in) resampling matrix for one axis.

    Taps falling outside the signal are clamped onto the edge pixel, then
    each row is renormalized to sum to exactly 1 so constants survive the
    resample bit for bit.
    """
    scale = n_out / n_in
    kscale = min(scale, 1.0) if antialias else 1.0
    half = _SUPPORT / kscale
    W = np.zeros((n_out, n_in), dtype=np.float64)
    for k in range(n_out):
        u = (k + 0.5) / scale - 0.5
        lo = math.floor(u - half)
        taps = np.arange(lo, math.floor(u + half) + 2)
        w = bicubic_kernel((u - taps) * kscale) * kscale
        np.add.at(W[k], np.clip(taps, 0, n_in - 1), w)
        W[k] /= W[k].sum()
    return W


def bicubic_downsample(img, s: int, antialias: bool = True) -> np.ndarray:
    """Antialiased bicubic reduction by an integer factor.

    Dimensions must be divisible by s; output is (M/s, N/s).
    """
    img = as_image(img)
    s = check_scale(s)
    M, N = img.shape
    if M % s or N % s:
        raise ValueError(f"dimensions {img.shape} not divisible by scale {s}")
    wr = _axis_weights(M, M // s, antialias)
    wc = _axis_weights(N, N // s, antialias)
    return wr @ img @ wc.T


def bicubic_upsample(img, s: int) -> np.ndarray:
    """Bicubic interpolation by an integer factor, output (M*s, N*s)."""
    img = as_image(img)
    s = check_scale(s)
    M, N = img.shape
    wr = _axis_weights(M, M * s, antialias=False)
    wc = _axis_weights(N, N * s, antialias=False)
    return wr @ img @ wc.T


def degrade(gt: DepthMap, s: int, antialias: bool = True) -> tuple[DepthMap, DepthMap]:
    """Synthesize the low-resolution input and its upsampled counterpart.

    Returns (lr, up) where lr = downsample(gt, s) and up = upsample(lr, s);
    up has exactly gt's dimensions. Negative bicubic overshoot is clipped
    to zero (depth is nonnegative).
    """
    s = check_scale(s)
    lr = np.maximum(bicubic_downsample(gt.data, s, antialias), 0.0)
    up = np.maximum(bicubic_upsample(lr, s), 0.0)
    return DepthMap(lr, gt.unit_scale), DepthMap(up, gt.unit_scale)


def crop_to_multiple(img, s: int) -> np.ndarray:
    """Crop from the bottom/right to the largest size divisible by s."""
    img = as_image(img)
    s = check_scale(s)
    M, N = img.shape
    if M < s or N < s:
        raise ValueError(f"image {img.shape} smaller than scale {s}")
    return img[: (M // s) * s, : (N // s) * s]
