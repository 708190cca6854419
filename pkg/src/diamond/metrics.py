"""Image quality indices: RMSE, PSNR, and SSIM.

Images live in [0, 1] internally; the metrics rescale by 255 so the
reported magnitudes follow the usual 8-bit conventions (RMSE on a
0-255 scale, PSNR against peak 255, SSIM with L = 255).

Identical inputs have infinite PSNR; that outcome is raised as
:class:`InfinitePsnrError` rather than returned as a sentinel float,
so callers must treat it as the distinct "perfect" case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imagebuf import Image

PEAK = 255.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


class InfinitePsnrError(ValueError):
    """PSNR requested for identical images (zero error, infinite ratio)."""


def _check_pair(a: Image, b: Image) -> None:
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")


def rmse(a: Image, b: Image) -> float:
    """Root mean squared error on the 0-255 intensity scale."""
    _check_pair(a, b)
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    return PEAK * math.sqrt(float(np.mean(diff * diff)))


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB against peak 255."""
    err = rmse(a, b)
    if err == 0.0:
        raise InfinitePsnrError("images are identical; PSNR is infinite")
    return psnr_from_rmse(err)


def psnr_from_rmse(err: float) -> float:
    if err <= 0:
        raise InfinitePsnrError("zero RMSE has no finite PSNR")
    return 20.0 * math.log10(PEAK / err)


def _ssim_window() -> np.ndarray:
    c = (SSIM_WINDOW - 1) / 2.0
    ii, jj = np.mgrid[0:SSIM_WINDOW, 0:SSIM_WINDOW]
    w = np.exp(-(((ii - c) ** 2 + (jj - c) ** 2) / (2.0 * SSIM_SIGMA ** 2)))
    return w / w.sum()


_WINDOW = _ssim_window()


def ssim(a: Image, b: Image) -> float:
    """Mean local SSIM, 11x11 Gaussian window sigma 1.5, K1/K2 = 0.01/0.03.

    Computed on 255-rescaled intensities over the valid (fully covered)
    window positions, matching the original SSIM reference defaults.
    """
    _check_pair(a, b)
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(
            f"image {a.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )
    x = a.data.astype(np.float64) * PEAK
    y = b.data.astype(np.float64) * PEAK
    c1 = (SSIM_K1 * PEAK) ** 2
    c2 = (SSIM_K2 * PEAK) ** 2

    half = SSIM_WINDOW // 2
    crop = (slice(half, -half), slice(half, -half))

    def wmean(z):
        return ndimage.correlate(z, _WINDOW, mode="nearest")[crop]

    mu_x = wmean(x)
    mu_y = wmean(y)
    xx = wmean(x * x) - mu_x * mu_x
    yy = wmean(y * y) - mu_y * mu_y
    xy = wmean(x * y) - mu_x * mu_y

    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class MetricReport:
    """rmse (0-255 scale), psnr in dB (None when infinite), ssim."""

    rmse: float
    psnr: float | None
    ssim: float

    @property
    def psnr_infinite(self) -> bool:
        return self.psnr is None

    def csv_line(self) -> str:
        p = "inf" if self.psnr is None else format_metric(self.psnr)
        return f"{format_metric(self.rmse)},{p},{format_metric(self.ssim)}"


def format_metric(x: float) -> str:
    """Canonical float formatting shared by every CSV artifact."""
    return format(float(x), ".10g")


def metric_report(a: Image, b: Image) -> MetricReport:
    err = rmse(a, b)
    return MetricReport(
        rmse=err,
        psnr=None if err == 0.0 else psnr_from_rmse(err),
        ssim=ssim(a, b),
    )
