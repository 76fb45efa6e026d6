"""Exact accounting of the error the approximation strategy injects.

Bookkeeping quantities, all measured by running the strategy trajectory
next to model-only reference trajectories:

  beta        at an approximated step: the model prediction on the
              reference path at that timestep minus the approximated noise
              actually used.  Measuring against the reference path is the
              definition under which the cumulative-error identities below
              are exact; the perturbed state's own prediction differs from
              it by exactly the correction-capacity gap captured in beta'.
  beta'       at a correction step: model prediction on the perturbed
              trajectory minus the prediction on the reference trajectory
              at the same timestep (the over-prediction spent on absorbing
              accumulated error).
  beta_tri    in cycles after the first: the deviation of the reference
              path's prediction from the linear extrapolation along the
              previous cycle's prediction difference (the triangle path).

Each strategy cycle gets its own reference trajectory, re-based at the
cycle's start latent and following the model for k+1 steps; the first
cycle's reference coincides with plain inference from x_T because the
warm-up prefix is shared.

The identities evaluated here use exact coefficient products.  The relaxed
bound additionally assumes f, g <= 1, which schedule-derived coefficients
generally violate (f >= 1); its result therefore carries the largest f seen
so callers can tell whether the relaxation applies.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .predictors import ConditionId, NoisePredictor
from .schedule import LatentState, SamplerSchedule, coefficients, denoise_step
from .strategy import (
    StrategyConfig,
    approximate_noise,
    init_gradient,
    update_gradient,
)
from .traceio import SOURCE_APPROXIMATED, SOURCE_CORRECTED, SOURCE_MODEL, SOURCE_NAMES


@dataclass
class CycleRecord:
    """Everything measured for one strategy cycle (k approximations plus one
    correction), including a model-only reference re-based at the cycle start."""

    index: int
    start_timestep: int                 # latent timestep at cycle start
    approx_steps: list[int]             # timesteps consumed by approximations
    correction_step: int                # timestep of the correction call
    betas: list[np.ndarray]             # per approximated step, oldest first
    beta_prime: np.ndarray
    correction_noise: np.ndarray        # model prediction actually used
    reference_noises: dict[int, np.ndarray]   # re-based reference, step -> prediction
    delta_after_approx: np.ndarray      # strategy minus reference, before correction
    delta_after_correction: np.ndarray  # strategy minus reference, after correction
    beta_triangle: list[np.ndarray] | None = None   # cycles >= 1 only
    gradient_base: np.ndarray | None = None         # prev-cycle prediction difference


@dataclass
class ErrorTrace:
    schedule: SamplerSchedule
    config: StrategyConfig
    cycles: list[CycleRecord]
    # (step, source, l2 distance of the strategy latent from plain inference)
    per_step_error: list[tuple[int, int, float]] = field(default_factory=list)


def _reference_run(predictor, schedule, start: LatentState, n_steps: int, condition):
    """Model-only trajectory from `start`, n_steps long; returns noises and latents."""
    noises: dict[int, np.ndarray] = {}
    latents: dict[int, np.ndarray] = {start.timestep: start.data.copy()}
    state = start.copy()
    for _ in range(n_steps):
        eps = predictor.evaluate(state.data, state.timestep, condition)
        noises[state.timestep] = eps
        state = denoise_step(state, eps, schedule)
        latents[state.timestep] = state.data.copy()
    return noises, latents


def measure_betas(
    cloud: NoisePredictor,
    schedule: SamplerSchedule,
    cfg: StrategyConfig,
    x_T: LatentState,
    condition: ConditionId = None,
) -> ErrorTrace:
    """Run the strategy and measure beta / beta' / beta_tri per cycle.

    Mirrors the strategy loop step for step (same break placement) while
    additionally advancing the reference trajectories the quantities are
    defined against.
    """
    cfg.validate(schedule.total_steps)
    if cfg.double_correction:
        raise ValueError("error measurement covers single-correction cycles only")
    if x_T.timestep != schedule.total_steps:
        raise ValueError("measurement must start at timestep T")
    p, k, alpha, s = (cfg.pre_inference_steps, cfg.approximation_steps,
                      cfg.smoothing_factor, cfg.switching_point)

    # Plain inference from the same x_T, for the per-step error series.
    global_noises, global_latents = _reference_run(
        cloud, schedule, x_T, schedule.total_steps, condition
    )

    state = x_T.copy()
    last_noises: list[np.ndarray] = []
    per_step: list[tuple[int, int, float]] = []

    def advance(eps, source):
        nonlocal state
        step = state.timestep
        state = denoise_step(state, eps, schedule)
        err = float(np.linalg.norm(state.data - global_latents[state.timestep]))
        per_step.append((step, source, err))
        return eps

    for _ in range(p):
        eps = cloud.evaluate(state.data, state.timestep, condition)
        advance(eps, SOURCE_MODEL)
        last_noises = (last_noises + [eps])[-2:]

    gradient = init_gradient(last_noises[-1], last_noises[-2])
    cycles: list[CycleRecord] = []

    if state.timestep > s:
        while True:
            start_t = state.timestep
            if start_t < k + 1:
                break  # not enough trajectory left for a full measured cycle
            ref_noises, ref_latents = _reference_run(
                cloud, schedule, state, k + 1, condition
            )
            approx_steps: list[int] = []
            betas: list[np.ndarray] = []
            eps_used: list[np.ndarray] = []
            for _ in range(k):
                eps = approximate_noise(last_noises[-1], gradient, 1)
                betas.append(ref_noises[state.timestep] - eps)
                approx_steps.append(state.timestep)
                eps_used.append(eps)
                advance(eps, SOURCE_APPROXIMATED)
                last_noises = (last_noises + [eps])[-2:]
            delta_after_approx = state.data - ref_latents[state.timestep]

            correction_t = state.timestep
            eps_corr = cloud.evaluate(state.data, state.timestep, condition)
            beta_prime = eps_corr - ref_noises[correction_t]
            advance(eps_corr, SOURCE_CORRECTED)
            last_noises = (last_noises + [eps_corr])[-2:]
            delta_after_correction = state.data - ref_latents[state.timestep]

            beta_triangle = None
            gradient_base = None
            if cycles:
                prev = cycles[-1]
                # Prediction difference along the previous cycle's reference
                # at (its correction step, the step before it).
                i = prev.correction_step
                gradient_base = prev.reference_noises[i] - prev.reference_noises[i + 1]
                base = prev.reference_noises[i]
                beta_triangle = [
                    ref_noises[i - m] - (base + m * gradient_base)
                    for m in range(1, k + 1)
                ]

            cycles.append(CycleRecord(
                index=len(cycles),
                start_timestep=start_t,
                approx_steps=approx_steps,
                correction_step=correction_t,
                betas=betas,
                beta_prime=beta_prime,
                correction_noise=eps_corr,
                reference_noises=ref_noises,
                delta_after_approx=delta_after_approx,
                delta_after_correction=delta_after_correction,
                beta_triangle=beta_triangle,
                gradient_base=gradient_base,
            ))
            gradient = update_gradient(last_noises[-1], last_noises[-2], alpha)
            if correction_t <= s:
                break

    return ErrorTrace(schedule, cfg, cycles, per_step)


def first_cycle_weights(schedule: SamplerSchedule, last_model_step: int, k: int):
    """Coefficient products of the first-cycle identity.

    With i the timestep of the last warm-up model call, the weight of the
    m-th approximation error (m = 0..k-1) is
    prod_{j=i-k-2}^{i-3-m} f(j) * g(i-2-m), and the correction error carries
    weight g(i-k-2).
    """
    i = last_model_step
    weights = []
    for m in range(k):
        prod_f = 1.0
        for j in range(i - k - 2, i - 2 - m):
            prod_f *= coefficients(schedule, j)[0]
        weights.append(prod_f * coefficients(schedule, i - 2 - m)[1])
    correction_weight = coefficients(schedule, i - k - 2)[1]
    return weights, correction_weight


def first_cycle_error_identity(trace: ErrorTrace, schedule: SamplerSchedule,
                               p: int, k: int) -> np.ndarray:
    """Exact first-cycle deviation from the betas and coefficient products.

    Equals the measured (perturbed minus reference) latent difference right
    after the first correction step.
    """
    if not trace.cycles:
        raise ValueError("trace contains no completed strategy cycle")
    cycle = trace.cycles[0]
    if len(cycle.betas) != k:
        raise ValueError(f"first cycle holds {len(cycle.betas)} betas, expected k={k}")
    i = schedule.total_steps - p + 1
    if cycle.approx_steps[0] != i - 1:
        raise ValueError("trace was measured with a different warm-up length")
    weights, correction_weight = first_cycle_weights(schedule, i, k)
    out = np.zeros_like(cycle.beta_prime)
    for w, beta in zip(weights, cycle.betas):
        out += w * beta
    out -= correction_weight * cycle.beta_prime
    return out


@dataclass
class FirstCycleBound:
    value: float                 # norm of (sum of betas - beta')
    max_coefficient: float       # largest f over the cycle's window
    relaxation_applies: bool     # the f,g <= 1 relaxation assumption holds


def first_cycle_error_bound(trace: ErrorTrace, p: int, k: int,
                            norm: str = "l2") -> FirstCycleBound:
    """Relaxed first-cycle bound: ||sum_m beta_m - beta'||.

    Valid as an upper bound of the identity norm only when every f over the
    cycle's window is <= 1; max_coefficient reports the actual maximum so
    callers can tell.
    """
    if not trace.cycles:
        raise ValueError("trace contains no completed strategy cycle")
    cycle = trace.cycles[0]
    if len(cycle.betas) != k:
        raise ValueError(f"first cycle holds {len(cycle.betas)} betas, expected k={k}")
    total = np.zeros_like(cycle.beta_prime)
    for beta in cycle.betas:
        total += beta
    total -= cycle.beta_prime
    if norm == "l2":
        value = float(np.linalg.norm(total.ravel()))
    elif norm == "linf":
        value = float(np.max(np.abs(total)))
    else:
        raise ValueError(f"unknown norm {norm!r}")
    i = trace.schedule.total_steps - p + 1
    fs = [coefficients(trace.schedule, j)[0] for j in range(i - k - 2, i - 1)]
    max_f = max(fs)
    return FirstCycleBound(value, max_f, max_f <= 1.0 + 1e-12)


def subsequent_cycle_error(trace: ErrorTrace, k: int, alpha: float,
                           cycle_index: int = 1) -> np.ndarray:
    """Exact deviation accumulated by the k approximations of a later cycle.

    Evaluates the full pre-relaxation expansion: with i the previous cycle's
    correction timestep and F_m = prod_{j=m+1}^{k} f(i-1-j),

        sum_m F_m g(i-1-m) * [ beta_tri_{i-m}
                               - (1 + m*alpha) * beta'_i
                               - m*alpha * beta_{i+1}
                               - m*(alpha - 1) * d_org ]

    where beta'_i and beta_{i+1} come from the previous cycle and d_org is
    the previous cycle's reference prediction difference.  Equals the
    measured (perturbed minus re-based reference) difference right before
    this cycle's correction.
    """
    if cycle_index < 1:
        raise ValueError("subsequent-cycle expansion applies to cycle_index >= 1")
    if cycle_index >= len(trace.cycles):
        raise ValueError(f"trace holds {len(trace.cycles)} cycles, wanted {cycle_index}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    cycle = trace.cycles[cycle_index]
    prev = trace.cycles[cycle_index - 1]
    if len(cycle.betas) != k or cycle.beta_triangle is None:
        raise ValueError("cycle was not measured with the requested k")
    i = prev.correction_step
    beta_prime_prev = prev.beta_prime
    beta_last_prev = prev.betas[-1]          # beta_{i+1}
    d_org = cycle.gradient_base
    sched = trace.schedule

    out = np.zeros_like(beta_prime_prev)
    for m in range(1, k + 1):
        prod_f = 1.0
        for j in range(m + 1, k + 1):
            prod_f *= coefficients(sched, i - 1 - j)[0]
        g = coefficients(sched, i - 1 - m)[1]
        term = (cycle.beta_triangle[m - 1]
                - (1.0 + m * alpha) * beta_prime_prev
                - (m * alpha) * beta_last_prev
                - (m * alpha - m) * d_org)
        out += prod_f * g * term
    return out


def write_error_csv(path, trace: ErrorTrace) -> None:
    """Per-step error magnitudes vs plain inference: step, source, l2_error."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "source", "l2_error"])
        for step, source, err in trace.per_step_error:
            writer.writerow([step, SOURCE_NAMES[source], repr(err)])
