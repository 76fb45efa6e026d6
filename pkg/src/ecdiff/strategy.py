"""The k-step noise approximation strategy for the cloud inference phase.

After p model-predicted warm-up steps the per-step change of the predicted
noise (the noise gradient) is initialized from the last two predictions.
The loop then alternates k gradient-extrapolated steps, which cost no model
calls, with one model-predicted correction step, after which the gradient
is refreshed from the correction discrepancy damped by the smoothing
factor.  The loop exits once the correction step's timestep has reached the
switching point, so the cloud phase may overshoot below it by up to k+1
steps.
"""

from dataclasses import dataclass, field

import numpy as np

from .predictors import ConditionId, NoisePredictor
from .schedule import LatentState, SamplerSchedule, denoise_step
from .traceio import (
    SOURCE_APPROXIMATED,
    SOURCE_CORRECTED,
    SOURCE_MODEL,
    NoiseQuantizer,
    StepRecord,
    TraceRecorder,
)


@dataclass(frozen=True)
class StrategyConfig:
    """Tuple (p, k, alpha, s): warm-up steps, approximation steps per cycle,
    gradient smoothing factor, and the edge switching point."""

    pre_inference_steps: int
    approximation_steps: int
    smoothing_factor: float
    switching_point: int
    # Ablation knob: run the correction twice per cycle instead of once.
    double_correction: bool = False

    def validate(self, total_steps: int) -> None:
        p, k, s = self.pre_inference_steps, self.approximation_steps, self.switching_point
        if p < 2:
            raise ValueError("pre_inference_steps must be >= 2 (gradient init needs two predictions)")
        if k < 1:
            raise ValueError("approximation_steps must be >= 1")
        if not 0.0 < self.smoothing_factor <= 1.0:
            raise ValueError("smoothing_factor must lie in (0, 1]")
        if not 0 <= s < total_steps:
            raise ValueError(f"switching_point must lie in [0, {total_steps})")
        # s == T - p is the degenerate config where the loop never starts.
        if p > total_steps - s:
            raise ValueError("pre-inference steps do not fit before the switching point")


def init_gradient(eps_newer: np.ndarray, eps_older: np.ndarray) -> np.ndarray:
    """Initial noise gradient: newer prediction minus the one before it."""
    eps_newer = np.asarray(eps_newer, dtype=np.float64)
    eps_older = np.asarray(eps_older, dtype=np.float64)
    if eps_newer.shape != eps_older.shape:
        raise ValueError("prediction shapes must match")
    return eps_newer - eps_older


def approximate_noise(base_noise: np.ndarray, gradient: np.ndarray, j: int) -> np.ndarray:
    """Extrapolate j steps ahead: base plus j copies of the gradient.

    Accumulated by repeated addition so it agrees bit-for-bit with the
    cumulative one-step form the strategy loop applies (a fused j*gradient
    would differ in the last ulp).
    """
    base_noise = np.asarray(base_noise, dtype=np.float64)
    gradient = np.asarray(gradient, dtype=np.float64)
    if base_noise.shape != gradient.shape:
        raise ValueError("noise and gradient shapes must match")
    if j < 1:
        raise ValueError("extrapolation distance must be >= 1")
    out = base_noise.copy()
    for _ in range(j):
        out += gradient
    return out


def update_gradient(eps_model_corrected: np.ndarray, eps_last_approx: np.ndarray,
                    alpha: float) -> np.ndarray:
    """Refresh the gradient from the correction discrepancy, damped by alpha.

    The correction prediction overshoots the true gradient because the model
    also compensates accumulated error; alpha < 1 damps that bias.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("smoothing factor must lie in (0, 1]")
    a = np.asarray(eps_model_corrected, dtype=np.float64)
    b = np.asarray(eps_last_approx, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("prediction shapes must match")
    return alpha * (a - b)


@dataclass
class StrategyState:
    """Mutable loop state: the current latent, the last noise (predicted or
    extrapolated), the gradient, and the per-step source log.

    Only the most recent two noises matter to the strategy, so nothing
    older is retained.
    """

    latent: LatentState
    recent_noises: list[np.ndarray]
    gradient: np.ndarray | None = None
    log: list[StepRecord] = field(default_factory=list)

    @property
    def timestep(self) -> int:
        return self.latent.timestep

    def last_noise(self) -> np.ndarray:
        return self.recent_noises[-1]

    def set_gradient(self, gradient: np.ndarray) -> None:
        if gradient.shape != self.latent.data.shape:
            raise ValueError("gradient shape must match the latent shape")
        self.gradient = gradient

    def consume(self, eps: np.ndarray, source: int, schedule: SamplerSchedule,
                recorder: TraceRecorder | NoiseQuantizer | None) -> None:
        """Apply one step with `eps`, logging the noise actually used."""
        if recorder is not None:
            eps = recorder.quantize(eps)
        step = self.latent.timestep
        self.latent = denoise_step(self.latent, eps, schedule)
        self.log.append(StepRecord(step, source, eps, self.latent.data))
        if recorder is not None:
            recorder.append(step, source, eps, self.latent.data)
        self.recent_noises = (self.recent_noises + [eps])[-2:]


@dataclass
class CloudPhaseResult:
    latent: LatentState
    model_calls: int
    log: list[StepRecord]
    corrections: int
    approximated_steps: int


def run_plain_phase(
    predictor: NoisePredictor,
    schedule: SamplerSchedule,
    state: LatentState,
    condition: ConditionId,
    stop_timestep: int = 0,
    log: list[StepRecord] | None = None,
    recorder: TraceRecorder | NoiseQuantizer | None = None,
) -> tuple[LatentState, int]:
    """Model-predicted inference from `state` down to `stop_timestep`."""
    if log is None:
        log = []
    loop = StrategyState(state.copy(), [], log=log)
    calls = 0
    while loop.timestep > stop_timestep:
        eps = predictor.evaluate(loop.latent.data, loop.timestep, condition)
        calls += 1
        loop.consume(eps, SOURCE_MODEL, schedule, recorder)
    return loop.latent, calls


def run_cloud_phase(
    cloud: NoisePredictor,
    schedule: SamplerSchedule,
    x_T: LatentState,
    cfg: StrategyConfig,
    condition: ConditionId = None,
    recorder: TraceRecorder | NoiseQuantizer | None = None,
) -> CloudPhaseResult:
    """Execute the approximation strategy until the switch test fires.

    Warm-up runs p model steps and initializes the gradient from the last
    two predictions.  Each loop cycle runs k approximated steps and one
    correction step (two with double_correction), refreshes the gradient,
    and breaks once the correction step's timestep is at or below the
    switching point.  When the warm-up already ends at the switching point
    the loop never starts.
    """
    cfg.validate(schedule.total_steps)
    if x_T.timestep != schedule.total_steps:
        raise ValueError("cloud phase must start at timestep T")
    p, k, alpha, s = (cfg.pre_inference_steps, cfg.approximation_steps,
                      cfg.smoothing_factor, cfg.switching_point)

    loop = StrategyState(x_T.copy(), [])
    calls = 0

    for _ in range(p):
        eps = cloud.evaluate(loop.latent.data, loop.timestep, condition)
        calls += 1
        loop.consume(eps, SOURCE_MODEL, schedule, recorder)

    loop.set_gradient(init_gradient(loop.recent_noises[-1], loop.recent_noises[-2]))
    corrections = 0
    approx_steps = 0

    # The switch test runs only after a correction step, so a low switching
    # point can drive the loop toward timestep 0; the trajectory simply ends
    # there.
    exhausted = False
    if loop.timestep > s:
        while not exhausted:
            for _ in range(k):
                if loop.timestep == 0:
                    exhausted = True
                    break
                eps = approximate_noise(loop.last_noise(), loop.gradient, 1)
                loop.consume(eps, SOURCE_APPROXIMATED, schedule, recorder)
                approx_steps += 1
            if exhausted:
                break
            correction_timestep = None
            for _ in range(2 if cfg.double_correction else 1):
                if loop.timestep == 0:
                    exhausted = True
                    break
                correction_timestep = loop.timestep
                eps = cloud.evaluate(loop.latent.data, loop.timestep, condition)
                calls += 1
                loop.consume(eps, SOURCE_CORRECTED, schedule, recorder)
                corrections += 1
            if exhausted or correction_timestep is None:
                break
            loop.set_gradient(update_gradient(loop.recent_noises[-1],
                                              loop.recent_noises[-2], alpha))
            if correction_timestep <= s:
                break

    return CloudPhaseResult(loop.latent, calls, loop.log, corrections, approx_steps)
