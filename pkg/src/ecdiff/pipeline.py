"""End-to-end pipeline orchestration and the analytic latency model.

Four modes share one seeded initial noise so quality metrics compare like
with like:

    cloud_only       all steps on the cloud predictor, no transfer
    edge_only        all steps on the edge predictor, no transfer
    hybrid_baseline  plain split at switch_step: cloud runs T - switch_step
                     steps, one latent handoff, edge finishes
    ec_diff          the approximation strategy on the cloud, one handoff,
                     edge finishes from the handoff latent

Latency is fully analytic: predictor calls times per-step cost plus one
transfer per hybrid run.  Approximated steps invoke no predictor and cost
zero model time.  The transfer is payload bytes over bandwidth; prompt
upload is treated as free.
"""

from dataclasses import dataclass, field

import numpy as np

from .metrics import MetricConfig, mse, psnr, ssim
from .predictors import ConditionId, NoisePredictor
from .schedule import LatentState, SamplerSchedule
from .seeding import substream
from .strategy import StrategyConfig, run_cloud_phase, run_plain_phase
from .traceio import NoiseQuantizer, StepRecord, TraceRecorder

MODES = ("cloud_only", "edge_only", "hybrid_baseline", "ec_diff")


@dataclass(frozen=True)
class PayloadSpec:
    """Tensor dims shipped at the handoff, in elements of bytes_per_element."""

    latent_dims: tuple[int, ...]
    embedding_dims: tuple[int, ...]
    bytes_per_element: int = 2   # FP16

    def __post_init__(self):
        for dims in (self.latent_dims, self.embedding_dims):
            if any(d <= 0 for d in dims):
                raise ValueError("payload dims must be positive")
        if self.bytes_per_element <= 0:
            raise ValueError("bytes_per_element must be positive")


def payload_bytes(spec: PayloadSpec) -> int:
    lat = int(np.prod(spec.latent_dims)) if spec.latent_dims else 0
    emb = int(np.prod(spec.embedding_dims)) if spec.embedding_dims else 0
    return (lat + emb) * spec.bytes_per_element


def transfer_time(nbytes: int, bandwidth_bits_per_second: float) -> float:
    """Seconds to move nbytes over the link: 8 * bytes / bandwidth."""
    if bandwidth_bits_per_second <= 0:
        raise ValueError("bandwidth must be positive")
    if nbytes < 0:
        raise ValueError("payload size must be nonnegative")
    return 8.0 * nbytes / bandwidth_bits_per_second


@dataclass(frozen=True)
class LatencyModel:
    """Per-step costs, link bandwidth, and the handoff payload.

    Step costs default to the predictors' configured cost_seconds; an
    explicit transfer override replaces the payload arithmetic when a run
    must reproduce an externally stated transfer budget.
    """

    bandwidth_bits_per_second: float
    payload: PayloadSpec
    cloud_step_seconds: float | None = None
    edge_step_seconds: float | None = None
    transfer_seconds_override: float | None = None

    def __post_init__(self):
        if self.bandwidth_bits_per_second <= 0:
            raise ValueError("bandwidth must be positive")
        for v in (self.cloud_step_seconds, self.edge_step_seconds):
            if v is not None and v < 0:
                raise ValueError("step costs must be nonnegative")

    def transfer_seconds(self) -> float:
        if self.transfer_seconds_override is not None:
            return self.transfer_seconds_override
        return transfer_time(payload_bytes(self.payload), self.bandwidth_bits_per_second)

    def cloud_cost(self, predictor: NoisePredictor) -> float:
        return self.cloud_step_seconds if self.cloud_step_seconds is not None else predictor.cost_seconds

    def edge_cost(self, predictor: NoisePredictor) -> float:
        return self.edge_step_seconds if self.edge_step_seconds is not None else predictor.cost_seconds


@dataclass(frozen=True)
class PipelineConfig:
    mode: str
    seed: int
    latency: LatencyModel
    condition: ConditionId = None
    switch_step: int | None = None          # hybrid_baseline only
    strategy: StrategyConfig | None = None  # ec_diff only

    def validate(self, total_steps: int) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.mode == "hybrid_baseline":
            if self.switch_step is None or not 0 <= self.switch_step <= total_steps:
                raise ValueError(f"hybrid_baseline needs switch_step in [0, {total_steps}]")
        if self.mode == "ec_diff":
            if self.strategy is None:
                raise ValueError("ec_diff needs a strategy config")
            self.strategy.validate(total_steps)


@dataclass(frozen=True)
class LatencyBreakdown:
    cloud_compute: float
    transfer: float
    edge_compute: float

    @property
    def total(self) -> float:
        return self.cloud_compute + self.transfer + self.edge_compute


@dataclass
class RunReport:
    mode: str
    seed: int
    final_latent: LatentState
    cloud_calls: int
    edge_calls: int
    approximated_steps: int
    corrections: int
    cloud_phase_steps: int
    edge_phase_steps: int
    latency: LatencyBreakdown
    speedup_vs_cloud_only: float
    metrics: dict | None = None
    log: list[StepRecord] = field(default_factory=list)


def initial_noise(seed: int, dims: tuple[int, ...], total_steps: int) -> LatentState:
    """The shared seeded x_T all modes of one comparison start from."""
    rng = substream(seed, "init_noise")
    return LatentState(rng.standard_normal(dims), total_steps)


def run(
    config: PipelineConfig,
    cloud: NoisePredictor,
    edge: NoisePredictor,
    schedule: SamplerSchedule,
    x_T: LatentState | None = None,
    reference: LatentState | None = None,
    metric_cfg: MetricConfig = MetricConfig(),
    recorder: TraceRecorder | NoiseQuantizer | None = None,
) -> RunReport:
    """Execute one pipeline run and account its latency.

    `reference` (typically the cloud_only final latent from the same x_T)
    enables the quality metrics in the report.  The learned-perceptual and
    multi-dimension video scores are reported as unavailable: they require
    pretrained networks this simulator does not ship.
    """
    config.validate(schedule.total_steps)
    T = schedule.total_steps
    if x_T is None:
        dims = cloud.dims or edge.dims
        if dims is None:
            raise ValueError("cannot infer latent dims; pass x_T explicitly")
        x_T = initial_noise(config.seed, dims, T)
    if x_T.timestep != T:
        raise ValueError("x_T must start at timestep T")

    cloud_cost = config.latency.cloud_cost(cloud)
    edge_cost = config.latency.edge_cost(edge)
    cloud_only_total = T * cloud_cost

    log: list[StepRecord] = []
    cloud_calls = edge_calls = approx = corrections = 0
    transfer = 0.0

    if config.mode == "cloud_only":
        state, cloud_calls = run_plain_phase(cloud, schedule, x_T, config.condition,
                                             log=log, recorder=recorder)
    elif config.mode == "edge_only":
        state, edge_calls = run_plain_phase(edge, schedule, x_T, config.condition,
                                            log=log, recorder=recorder)
    elif config.mode == "hybrid_baseline":
        state, cloud_calls = run_plain_phase(cloud, schedule, x_T, config.condition,
                                             stop_timestep=config.switch_step,
                                             log=log, recorder=recorder)
        transfer = config.latency.transfer_seconds()
        state, edge_calls = run_plain_phase(edge, schedule, state, config.condition,
                                            log=log, recorder=recorder)
    else:  # ec_diff
        phase = run_cloud_phase(cloud, schedule, x_T, config.strategy,
                                config.condition, recorder=recorder)
        log.extend(phase.log)
        cloud_calls = phase.model_calls
        approx = phase.approximated_steps
        corrections = phase.corrections
        transfer = config.latency.transfer_seconds()
        # The tail-placed switch test leaves the latent at or below s (the
        # degenerate no-cycle config leaves it exactly at s), so the edge
        # phase starts at min(current timestep, s) = current timestep.
        state = phase.latent
        state, edge_calls = run_plain_phase(edge, schedule, state, config.condition,
                                            log=log, recorder=recorder)

    cloud_phase_steps = cloud_calls + approx
    edge_phase_steps = edge_calls
    breakdown = LatencyBreakdown(
        cloud_compute=cloud_calls * cloud_cost,
        transfer=transfer,
        edge_compute=edge_calls * edge_cost,
    )
    speedup = cloud_only_total / breakdown.total if breakdown.total > 0 else float("inf")

    metric_values = None
    if reference is not None:
        metric_values = {
            "mse": mse(state.data, reference.data),
            "psnr": psnr(state.data, reference.data, metric_cfg),
            "ssim": ssim(state.data, reference.data, metric_cfg),
            "lpips": None,    # needs a pretrained perceptual network
            "vbench": None,   # needs the full video benchmark stack
        }

    return RunReport(
        mode=config.mode,
        seed=config.seed,
        final_latent=state,
        cloud_calls=cloud_calls,
        edge_calls=edge_calls,
        approximated_steps=approx,
        corrections=corrections,
        cloud_phase_steps=cloud_phase_steps,
        edge_phase_steps=edge_phase_steps,
        latency=breakdown,
        speedup_vs_cloud_only=speedup,
        metrics=metric_values,
        log=log,
    )
