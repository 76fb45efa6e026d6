"""Noise predictors: the analytic cloud model, degraded edge variants,
replay from recorded traces, and synthetic predictors used in tests.

A predictor estimates the forward-process noise component of a latent at a
given timestep under a condition.  All predictors are deterministic:
identical (x, t, condition) always yields identical output.  Each carries a
configured per-call wall-time cost so latency accounting stays exact and
reproducible (no measured timing).
"""

from dataclasses import dataclass

import numpy as np

from .schedule import LatentState, SamplerSchedule, denoise_step
from .seeding import substream
from . import traceio
from .traceio import SOURCE_MODEL, TraceFile, TraceMissingStepError, TraceRecorder

# Defaults taken from the per-model generation-time table: 245 s and 91 s
# over 50 steps.
DEFAULT_CLOUD_STEP_SECONDS = 4.9
DEFAULT_EDGE_STEP_SECONDS = 1.82

ConditionId = tuple[int, ...] | None


class NoisePredictor:
    """Contract: deterministic evaluate(), a per-call cost, a fidelity label."""

    cost_seconds: float = 0.0
    fidelity_label: str = "cloud"
    dims: tuple[int, ...] | None = None

    def evaluate(self, x: np.ndarray, t: int, condition: ConditionId) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class GaussianMixtureModelSpec:
    """Mixture of isotropic Gaussians standing in for a trained data model.

    A condition is a tuple of component indices selecting the subset the
    sample is conditioned on (None means all components).
    """

    component_means: np.ndarray          # (n_components, *dims)
    component_weights: np.ndarray        # (n_components,)
    data_sigma: float

    def __post_init__(self):
        means = np.asarray(self.component_means, dtype=np.float64)
        weights = np.asarray(self.component_weights, dtype=np.float64)
        object.__setattr__(self, "component_means", means)
        object.__setattr__(self, "component_weights", weights)
        if means.ndim < 2:
            raise ValueError("component_means must be (n_components, *dims)")
        if weights.shape != (means.shape[0],):
            raise ValueError("one weight per component required")
        if np.any(weights < 0.0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")
        if self.data_sigma < 0.0:
            raise ValueError("data_sigma must be nonnegative")

    @property
    def dims(self) -> tuple[int, ...]:
        return self.component_means.shape[1:]

    @property
    def n_components(self) -> int:
        return self.component_means.shape[0]

    def resolve_condition(self, condition: ConditionId) -> np.ndarray:
        if condition is None:
            return np.arange(self.n_components)
        idx = np.asarray(condition, dtype=int)
        if idx.size == 0:
            raise ValueError("condition selects no mixture components")
        if np.any(idx < 0) or np.any(idx >= self.n_components):
            raise ValueError(f"condition {condition} out of range")
        return idx


def optimal_noise(
    spec: GaussianMixtureModelSpec,
    schedule: SamplerSchedule,
    x: np.ndarray,
    t: int,
    condition: ConditionId = None,
) -> np.ndarray:
    """Conditional expectation of the forward noise given the noisy latent.

    For component j the time-t marginal is Gaussian with mean
    sqrt(alpha_bar[t]) * mu_j and per-dimension variance
    v = alpha_bar[t] * sigma^2 + (1 - alpha_bar[t]); the estimate is the
    posterior-weighted sum of (x - sqrt(alpha_bar[t]) * mu_j) * sqrt(1 -
    alpha_bar[t]) / v, with posterior weights proportional to component
    weight times the marginal density at x.
    """
    if not 1 <= t <= schedule.total_steps:
        raise ValueError(f"timestep {t} outside [1, {schedule.total_steps}]")
    idx = spec.resolve_condition(condition)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != spec.dims:
        raise ValueError(f"latent shape {x.shape} != model dims {spec.dims}")
    a = schedule.alpha_bar[t]
    var = a * spec.data_sigma**2 + (1.0 - a)
    if var <= 0.0:
        raise ValueError("degenerate marginal: zero variance at this timestep")
    residuals = x[None, ...] - np.sqrt(a) * spec.component_means[idx]
    sq = residuals.reshape(len(idx), -1)
    log_post = -0.5 * np.einsum("ij,ij->i", sq, sq) / var
    log_post += np.log(spec.component_weights[idx])
    log_post -= log_post.max()
    post = np.exp(log_post)
    post /= post.sum()
    weighted = np.tensordot(post, residuals, axes=(0, 0))
    return weighted * (np.sqrt(1.0 - a) / var)


class GaussianMixturePredictor(NoisePredictor):
    """Closed-form optimal predictor over a Gaussian-mixture data model."""

    def __init__(
        self,
        spec: GaussianMixtureModelSpec,
        schedule: SamplerSchedule,
        cost_seconds: float = DEFAULT_CLOUD_STEP_SECONDS,
        fidelity_label: str = "cloud",
    ):
        self.spec = spec
        self.schedule = schedule
        self.cost_seconds = float(cost_seconds)
        self.fidelity_label = fidelity_label
        self.dims = spec.dims

    def evaluate(self, x, t, condition):
        return optimal_noise(self.spec, self.schedule, x, t, condition)


@dataclass(frozen=True)
class DegradationSpec:
    """Controlled, reproducible deviation knobs for the edge stand-in.

    additive_bias_scale b adds b * u * (1 + |base|) elementwise, where u is a
    fixed pseudo-random direction in [-1, 1] derived from `seed` and the
    tensor shape.  parameter_quantization_bits > 0 snaps outputs onto the
    uniform grid of 2^bits levels spanning [-quantization_range,
    quantization_range].  Both zero reproduces the base exactly.
    """

    additive_bias_scale: float = 0.0
    parameter_quantization_bits: int = 0
    quantization_range: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.additive_bias_scale < 0.0:
            raise ValueError("additive_bias_scale must be nonnegative")
        if self.parameter_quantization_bits < 0:
            raise ValueError("parameter_quantization_bits must be nonnegative")
        if self.parameter_quantization_bits and self.quantization_range <= 0.0:
            raise ValueError("quantization_range must be positive")


class DegradedPredictor(NoisePredictor):
    def __init__(self, base: NoisePredictor, degradation: DegradationSpec,
                 cost_seconds: float = DEFAULT_EDGE_STEP_SECONDS):
        self.base = base
        self.degradation = degradation
        self.cost_seconds = float(cost_seconds)
        self.fidelity_label = "edge"
        self.dims = base.dims
        self._bias_cache: dict[tuple[int, ...], np.ndarray] = {}
        if self.dims is not None:
            self._bias_direction(tuple(self.dims))  # immutable after construction

    def _bias_direction(self, shape: tuple[int, ...]) -> np.ndarray:
        if shape not in self._bias_cache:
            rng = substream(self.degradation.seed, "edge_bias:" + "x".join(map(str, shape)))
            self._bias_cache[shape] = rng.uniform(-1.0, 1.0, size=shape)
        return self._bias_cache[shape]

    def evaluate(self, x, t, condition):
        out = self.base.evaluate(x, t, condition)
        d = self.degradation
        if d.additive_bias_scale == 0.0 and d.parameter_quantization_bits == 0:
            return out
        if d.additive_bias_scale > 0.0:
            u = self._bias_direction(out.shape)
            out = out + d.additive_bias_scale * u * (1.0 + np.abs(out))
        if d.parameter_quantization_bits > 0:
            levels = 2 ** d.parameter_quantization_bits
            r = d.quantization_range
            delta = 2.0 * r / (levels - 1)
            q = np.clip(np.round((out + r) / delta), 0, levels - 1)
            out = -r + q * delta
        return out


def make_edge_predictor(
    base: NoisePredictor,
    degradation: DegradationSpec,
    cost_seconds: float = DEFAULT_EDGE_STEP_SECONDS,
) -> NoisePredictor:
    """Wrap a predictor with deterministic quality degradation."""
    return DegradedPredictor(base, degradation, cost_seconds)


class ConstantPredictor(NoisePredictor):
    """eps(x, t) = value; gradient extrapolation is exact for it."""

    def __init__(self, value: np.ndarray, cost_seconds: float = 0.0,
                 fidelity_label: str = "cloud"):
        self.value = np.asarray(value, dtype=np.float64)
        self.cost_seconds = float(cost_seconds)
        self.fidelity_label = fidelity_label
        self.dims = self.value.shape

    def evaluate(self, x, t, condition):
        return self.value.copy()


class LinearTrendPredictor(NoisePredictor):
    """eps(x, t) = offset + slope * (T - t), independent of x.

    The per-step change of the prediction equals `slope` exactly, so the
    k-step approximation strategy reproduces full inference bit-for-bit
    (up to float error) once the gradient is initialized.
    """

    def __init__(self, offset: np.ndarray, slope: np.ndarray, total_steps: int,
                 cost_seconds: float = 0.0, fidelity_label: str = "cloud"):
        self.offset = np.asarray(offset, dtype=np.float64)
        self.slope = np.asarray(slope, dtype=np.float64)
        if self.offset.shape != self.slope.shape:
            raise ValueError("offset and slope shapes must match")
        self.total_steps = int(total_steps)
        self.cost_seconds = float(cost_seconds)
        self.fidelity_label = fidelity_label
        self.dims = self.offset.shape

    def evaluate(self, x, t, condition):
        return self.offset + self.slope * float(self.total_steps - t)


class ReplayPredictor(NoisePredictor):
    """Serves recorded noise by step; errors on any step not in the trace."""

    def __init__(self, trace: TraceFile, cost_seconds: float = 0.0,
                 fidelity_label: str = "cloud"):
        self.trace = trace
        self.cost_seconds = float(cost_seconds)
        self.fidelity_label = fidelity_label
        self.dims = trace.dims
        self._by_step = {rec.step: rec.noise for rec in trace.records}

    def evaluate(self, x, t, condition):
        x = np.asarray(x)
        if x.shape != self.trace.dims:
            raise ValueError(f"latent shape {x.shape} != trace dims {self.trace.dims}")
        try:
            return self._by_step[int(t)].copy()
        except KeyError:
            raise TraceMissingStepError(f"trace has no record for step {t}") from None


def replay_predictor(trace: TraceFile, cost_seconds: float = 0.0,
                     fidelity_label: str = "cloud") -> ReplayPredictor:
    return ReplayPredictor(trace, cost_seconds, fidelity_label)


def record_trace(
    predictor: NoisePredictor,
    schedule: SamplerSchedule,
    x_T: LatentState,
    condition: ConditionId,
    path,
    include_latents: bool = True,
) -> TraceFile:
    """Run plain inference from x_T and write every step to `path`.

    The run consumes the storage-rounded noises it records (see traceio),
    so replaying the file reproduces this exact trajectory.
    """
    if x_T.timestep != schedule.total_steps:
        raise ValueError("recording must start at timestep T")
    recorder = TraceRecorder(schedule.total_steps, x_T.data.shape, include_latents)
    state = x_T.copy()
    while state.timestep > 0:
        eps = recorder.quantize(predictor.evaluate(state.data, state.timestep, condition))
        new_state = denoise_step(state, eps, schedule)
        recorder.append(state.timestep, SOURCE_MODEL, eps, new_state.data)
        state = new_state
    trace = recorder.to_trace()
    traceio.write_trace(path, trace)
    return trace


def sample_conditions(n_components: int, count: int, rng: np.random.Generator,
                      max_size: int | None = None) -> list[tuple[int, ...]]:
    """Draw `count` nonempty component subsets, the desk-scale prompt set."""
    if n_components < 1:
        raise ValueError("need at least one component")
    cap = n_components if max_size is None else min(max_size, n_components)
    out = []
    for _ in range(count):
        size = int(rng.integers(1, cap + 1))
        idx = rng.choice(n_components, size=size, replace=False)
        out.append(tuple(sorted(int(i) for i in idx)))
    return out
