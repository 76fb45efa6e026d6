"""Noise schedule and the generic single-step denoising update.

The sampler is the deterministic flavour of the standard non-Markovian
sampler: one reverse step is

    x_{t-1} = f(t-1) * x_t - g(t-1) * eps_hat(x_t, t)

with f and g derived from the cumulative signal level alpha_bar.  Timesteps
count DOWN during inference, from total_steps to 0; index t-1 of the
coefficient pair is the destination index of the step that consumes
timestep t.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SamplerSchedule:
    """Cumulative signal levels alpha_bar[0..T] plus the generating betas."""

    total_steps: int
    alpha_bar: np.ndarray
    beta_start: float = 0.0
    beta_end: float = 0.0

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        object.__setattr__(self, "alpha_bar", ab)
        if self.total_steps < 2:
            raise ValueError("total_steps must be >= 2")
        if ab.shape != (self.total_steps + 1,):
            raise ValueError(
                f"alpha_bar must have length total_steps+1, got {ab.shape}"
            )
        if ab[0] != 1.0:
            raise ValueError("alpha_bar[0] must be exactly 1 (clean-data endpoint)")
        if np.any(ab <= 0.0) or np.any(ab > 1.0):
            raise ValueError("alpha_bar values must lie in (0, 1]")
        if np.any(np.diff(ab) > 0.0):
            raise ValueError("alpha_bar must be non-increasing in the diffusion index")

    @property
    def T(self) -> int:
        return self.total_steps


def make_linear_schedule(total_steps: int, beta_start: float, beta_end: float) -> SamplerSchedule:
    """Build a schedule from per-index betas interpolated linearly.

    alpha_bar[t] = prod_{j<=t} (1 - beta_j).  beta_start = beta_end = 0 is
    allowed and yields the flat (identity-step) schedule used in tests.
    """
    if total_steps < 2:
        raise ValueError("total_steps must be >= 2")
    if not (0.0 <= beta_start <= beta_end < 1.0):
        raise ValueError(
            f"betas must satisfy 0 <= beta_start <= beta_end < 1, "
            f"got ({beta_start}, {beta_end})"
        )
    betas = np.linspace(beta_start, beta_end, total_steps)
    alpha_bar = np.empty(total_steps + 1, dtype=np.float64)
    alpha_bar[0] = 1.0
    alpha_bar[1:] = np.cumprod(1.0 - betas)
    return SamplerSchedule(total_steps, alpha_bar, float(beta_start), float(beta_end))


def coefficients(schedule: SamplerSchedule, t: int) -> tuple[float, float]:
    """Deterministic update coefficients (f(t), g(t)) for 0 <= t <= T-1."""
    if not 0 <= t <= schedule.total_steps - 1:
        raise IndexError(
            f"coefficient index {t} outside [0, {schedule.total_steps - 1}]"
        )
    ab = schedule.alpha_bar
    f = float(np.sqrt(ab[t] / ab[t + 1]))
    g = float(f * np.sqrt(1.0 - ab[t + 1]) - np.sqrt(1.0 - ab[t]))
    return f, g


@dataclass
class LatentState:
    """The tensor being denoised, tagged with its current timestep."""

    data: np.ndarray
    timestep: int

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.timestep < 0:
            raise ValueError("timestep must be nonnegative")

    def copy(self) -> "LatentState":
        return LatentState(self.data.copy(), self.timestep)


def denoise_step(x: LatentState, eps: np.ndarray, schedule: SamplerSchedule) -> LatentState:
    """Apply one reverse update, moving the latent from timestep t to t-1."""
    if x.timestep < 1:
        raise ValueError("cannot denoise below timestep 0")
    if x.timestep > schedule.total_steps:
        raise ValueError(
            f"latent timestep {x.timestep} exceeds schedule length {schedule.total_steps}"
        )
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != x.data.shape:
        raise ValueError(f"noise shape {eps.shape} != latent shape {x.data.shape}")
    f, g = coefficients(schedule, x.timestep - 1)
    data = f * x.data - g * eps
    if not np.all(np.isfinite(data)):
        raise FloatingPointError("denoise step produced non-finite values")
    return LatentState(data, x.timestep - 1)
