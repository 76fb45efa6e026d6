"""Reference-based quality metrics: MSE, PSNR, SSIM, frame averages.

SSIM is computed from global statistics over the full tensor (means,
variances, covariance computed once, population convention) because the
simulator's latents are small abstract tensors; a uniform-window variant is
available for image-like tensors loaded from traces.
"""

import math
from dataclasses import dataclass

import numpy as np

PSNR_INFINITE = float("inf")


@dataclass(frozen=True)
class MetricConfig:
    peak_value: float = 1.0
    ssim_c1: float | None = None   # defaults to (0.01 * peak)^2
    ssim_c2: float | None = None   # defaults to (0.03 * peak)^2

    def __post_init__(self):
        if self.peak_value <= 0:
            raise ValueError("peak_value must be positive")
        if self.ssim_c1 is not None and self.ssim_c1 <= 0:
            raise ValueError("ssim_c1 must be positive")
        if self.ssim_c2 is not None and self.ssim_c2 <= 0:
            raise ValueError("ssim_c2 must be positive")

    @property
    def c1(self) -> float:
        return self.ssim_c1 if self.ssim_c1 is not None else (0.01 * self.peak_value) ** 2

    @property
    def c2(self) -> float:
        return self.ssim_c2 if self.ssim_c2 is not None else (0.03 * self.peak_value) ** 2


def _check_shapes(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _check_shapes(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, cfg: MetricConfig = MetricConfig()) -> float:
    """10 * log10(R^2 / MSE); identical inputs give the infinity sentinel."""
    err = mse(a, b)
    if err == 0.0:
        return PSNR_INFINITE
    return 10.0 * math.log10(cfg.peak_value**2 / err)


def ssim(a, b, cfg: MetricConfig = MetricConfig(), window: int | None = None) -> float:
    """Structural similarity in [-1, 1]; 1 iff the tensors are identical.

    window=None computes one global value; an odd window size computes the
    mean of a uniform-window SSIM map over the last two axes.
    """
    a, b = _check_shapes(a, b)
    if a.size < 2:
        raise ValueError("ssim needs at least 2 elements")
    if window is None:
        mu_a, mu_b = a.mean(), b.mean()
        var_a, var_b = a.var(), b.var()
        cov = float(np.mean((a - mu_a) * (b - mu_b)))
        num = (2 * mu_a * mu_b + cfg.c1) * (2 * cov + cfg.c2)
        den = (mu_a**2 + mu_b**2 + cfg.c1) * (var_a + var_b + cfg.c2)
        return float(num / den)
    return _windowed_ssim(a, b, cfg, window)


def _windowed_ssim(a, b, cfg, window) -> float:
    from scipy.ndimage import uniform_filter

    if window < 2 or window % 2 == 0:
        raise ValueError("window must be an odd integer >= 3")
    if a.ndim < 2 or min(a.shape[-2:]) < window:
        raise ValueError("tensor too small for the requested window")
    size = (1,) * (a.ndim - 2) + (window, window)
    mu_a = uniform_filter(a, size=size)
    mu_b = uniform_filter(b, size=size)
    var_a = uniform_filter(a * a, size=size) - mu_a**2
    var_b = uniform_filter(b * b, size=size) - mu_b**2
    cov = uniform_filter(a * b, size=size) - mu_a * mu_b
    num = (2 * mu_a * mu_b + cfg.c1) * (2 * cov + cfg.c2)
    den = (mu_a**2 + mu_b**2 + cfg.c1) * (var_a + var_b + cfg.c2)
    half = window // 2
    core = (np.s_[:],) * (a.ndim - 2) + (np.s_[half:-half], np.s_[half:-half])
    return float(np.mean((num / den)[core]))


@dataclass(frozen=True)
class FrameAverage:
    value: float
    frames_used: int
    frames_skipped: int   # frames whose metric was infinite (PSNR of identical frames)

    def __float__(self):
        return self.value


def frame_average(metric, a_frames, b_frames) -> FrameAverage:
    """Apply `metric` per frame (leading axis) and average the finite values.

    Infinite per-frame values (identical frames under PSNR) are excluded
    from the mean and counted in frames_skipped; if every frame is infinite
    the average itself is the infinity sentinel.
    """
    a_frames, b_frames = _check_shapes(a_frames, b_frames)
    if a_frames.shape[0] == 0:
        raise ValueError("no frames to average")
    values = [metric(a_frames[i], b_frames[i]) for i in range(a_frames.shape[0])]
    finite = [v for v in values if math.isfinite(v)]
    skipped = len(values) - len(finite)
    if not finite:
        return FrameAverage(PSNR_INFINITE, 0, skipped)
    return FrameAverage(float(np.mean(finite)), len(finite), skipped)
