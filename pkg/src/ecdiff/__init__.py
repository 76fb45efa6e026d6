"""Desk-scale simulator for edge-cloud collaborative diffusion inference.

The cloud phase accelerates denoising by extrapolating model predictions
along their per-step gradient, correcting periodically with real model
calls; the edge model finishes the trajectory after one latent handoff.
Analytic Gaussian-mixture predictors and recorded noise traces stand in
for pretrained networks, which keeps every run exact, seeded, and cheap
enough to verify the error-accumulation identities directly.
"""

from .errors import (
    CycleRecord,
    ErrorTrace,
    FirstCycleBound,
    first_cycle_error_bound,
    first_cycle_error_identity,
    measure_betas,
    subsequent_cycle_error,
)
from .metrics import FrameAverage, MetricConfig, frame_average, mse, psnr, ssim
from .pipeline import (
    LatencyBreakdown,
    LatencyModel,
    PayloadSpec,
    PipelineConfig,
    RunReport,
    initial_noise,
    payload_bytes,
    run,
    transfer_time,
)
from .predictors import (
    ConstantPredictor,
    DegradationSpec,
    GaussianMixtureModelSpec,
    GaussianMixturePredictor,
    LinearTrendPredictor,
    NoisePredictor,
    make_edge_predictor,
    optimal_noise,
    record_trace,
    replay_predictor,
    sample_conditions,
)
from .schedule import (
    LatentState,
    SamplerSchedule,
    coefficients,
    denoise_step,
    make_linear_schedule,
)
from .search import (
    ObjectiveWeights,
    SearchSpace,
    burden,
    efficiency,
    exhaustive_stage1,
    exhaustive_stage2,
    greedy_stage1,
    greedy_stage2,
    objective,
    quality,
)
from .seeding import substream
from .strategy import (
    CloudPhaseResult,
    StrategyConfig,
    StrategyState,
    approximate_noise,
    init_gradient,
    run_cloud_phase,
    run_plain_phase,
    update_gradient,
)
from .traceio import (
    SOURCE_APPROXIMATED,
    SOURCE_CORRECTED,
    SOURCE_MODEL,
    StepRecord,
    TraceFile,
    TraceFormatError,
    TraceMissingStepError,
    TraceRecorder,
    read_trace,
    write_trace,
)

__version__ = "0.1.0"
