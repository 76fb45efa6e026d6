"""Config-driven experiment setup and search orchestration.

A single structured config file (JSON or YAML) describes the schedule, the
mixture data model, predictor costs and degradation, the pipeline mode, the
latency model, and optional search spaces.  All randomness flows from the
one config seed through named substreams.  See the README for the full key
reference.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .metrics import MetricConfig
from .pipeline import LatencyModel, PayloadSpec, PipelineConfig, run
from .predictors import (
    DEFAULT_CLOUD_STEP_SECONDS,
    DEFAULT_EDGE_STEP_SECONDS,
    DegradationSpec,
    GaussianMixtureModelSpec,
    GaussianMixturePredictor,
    NoisePredictor,
    make_edge_predictor,
    replay_predictor,
    sample_conditions,
)
from .schedule import LatentState, SamplerSchedule, make_linear_schedule
from .search import (
    ObjectiveWeights,
    SearchSpace,
    StageOneResult,
    StageTwoResult,
    burden,
    efficiency,
    greedy_stage1,
    greedy_stage2,
    objective,
    quality,
)
from .seeding import substream
from .strategy import StrategyConfig
from . import traceio


class ConfigError(ValueError):
    """Invalid or unresolvable experiment configuration."""


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() in (".yaml", ".yml"):
            import yaml

            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
    except Exception as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return data


@dataclass
class ExperimentSetup:
    seed: int
    schedule: SamplerSchedule
    mixture: GaussianMixtureModelSpec
    cloud: NoisePredictor
    edge: NoisePredictor
    latency: LatencyModel
    metric_cfg: MetricConfig
    condition: tuple[int, ...] | None
    mode: str
    strategy: StrategyConfig | None
    switch_step: int | None
    weights: ObjectiveWeights
    space: SearchSpace
    search_p: int
    search_conditions: int
    output: dict = field(default_factory=dict)

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            mode=self.mode,
            seed=self.seed,
            latency=self.latency,
            condition=self.condition,
            switch_step=self.switch_step,
            strategy=self.strategy,
        )


def _get(cfg: dict, key: str, default=None):
    value = cfg.get(key, default)
    return default if value is None else value


def build_setup(cfg: dict, seed_override: int | None = None) -> ExperimentSetup:
    try:
        return _build_setup(cfg, seed_override)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _build_setup(cfg: dict, seed_override: int | None) -> ExperimentSetup:
    seed = int(cfg.get("seed", 0)) if seed_override is None else int(seed_override)

    sch = _get(cfg, "schedule", {})
    schedule = make_linear_schedule(
        int(_get(sch, "total_steps", 50)),
        float(_get(sch, "beta_start", 1e-4)),
        float(_get(sch, "beta_end", 0.02)),
    )

    mix = _get(cfg, "mixture", {})
    if "means" in mix and mix["means"] is not None:
        means = np.asarray(mix["means"], dtype=np.float64)
    else:
        dims = mix.get("dims")
        if dims is None:
            dims = (int(_get(mix, "dim", 8)),)
        else:
            dims = tuple(int(d) for d in dims)
        count = int(_get(mix, "component_count", 5))
        scale = float(_get(mix, "mean_scale", 1.5))
        means = substream(seed, "mixture").normal(0.0, scale, size=(count,) + dims)
    weights = mix.get("weights")
    if weights is None:
        weights = np.full(means.shape[0], 1.0 / means.shape[0])
    mixture = GaussianMixtureModelSpec(
        means, np.asarray(weights, dtype=np.float64), float(_get(mix, "data_sigma", 0.12))
    )

    preds = _get(cfg, "predictors", {})
    cloud_cfg = _get(preds, "cloud", {})
    edge_cfg = _get(preds, "edge", {})
    cloud_cost = float(_get(cloud_cfg, "cost_seconds", DEFAULT_CLOUD_STEP_SECONDS))
    edge_cost = float(_get(edge_cfg, "cost_seconds", DEFAULT_EDGE_STEP_SECONDS))

    if cloud_cfg.get("trace"):
        trace = traceio.read_trace(cloud_cfg["trace"])
        if trace.total_steps != schedule.total_steps:
            raise ConfigError(
                f"trace was recorded for T={trace.total_steps}, "
                f"config schedule has T={schedule.total_steps}"
            )
        cloud: NoisePredictor = replay_predictor(trace, cloud_cost)
    else:
        cloud = GaussianMixturePredictor(mixture, schedule, cloud_cost)

    degradation = DegradationSpec(
        additive_bias_scale=float(_get(edge_cfg, "additive_bias_scale", 0.0)),
        parameter_quantization_bits=int(_get(edge_cfg, "parameter_quantization_bits", 0)),
        quantization_range=float(_get(edge_cfg, "quantization_range", 4.0)),
        seed=seed,
    )
    edge = make_edge_predictor(cloud, degradation, edge_cost)

    lat = _get(cfg, "latency", {})
    pay = _get(lat, "payload", {})
    payload = PayloadSpec(
        latent_dims=tuple(int(d) for d in _get(pay, "latent_dims", (4, 64, 64))),
        embedding_dims=tuple(int(d) for d in _get(pay, "embedding_dims", (2, 77, 768))),
        bytes_per_element=int(_get(pay, "bytes_per_element", 2)),
    )
    latency = LatencyModel(
        bandwidth_bits_per_second=float(_get(lat, "bandwidth_mbps", 18.88)) * 1e6,
        payload=payload,
        cloud_step_seconds=lat.get("cloud_step_seconds"),
        edge_step_seconds=lat.get("edge_step_seconds"),
        transfer_seconds_override=lat.get("transfer_seconds_override"),
    )

    met = _get(cfg, "metrics", {})
    metric_cfg = MetricConfig(peak_value=float(_get(met, "peak_value", 1.0)))

    cond_raw = cfg.get("condition", "all")
    if cond_raw in (None, "all"):
        condition = None
    else:
        condition = tuple(sorted(int(i) for i in cond_raw))
        mixture.resolve_condition(condition)

    pipe = _get(cfg, "pipeline", {})
    mode = str(_get(pipe, "mode", "cloud_only"))
    strategy = None
    if pipe.get("strategy") is not None:
        st = pipe["strategy"]
        strategy = StrategyConfig(
            pre_inference_steps=int(st["pre_inference_steps"]),
            approximation_steps=int(st["approximation_steps"]),
            smoothing_factor=float(st["smoothing_factor"]),
            switching_point=int(st["switching_point"]),
            double_correction=bool(st.get("double_correction", False)),
        )
    switch_step = pipe.get("switch_step")
    switch_step = int(switch_step) if switch_step is not None else None

    srch = _get(cfg, "search", {})
    wts = _get(srch, "weights", {})
    weights = ObjectiveWeights(
        w1=float(_get(wts, "w1", 0.3)),
        w2=float(_get(wts, "w2", 0.3)),
        w3=float(_get(wts, "w3", 0.4)),
        s_prime=int(_get(wts, "s_prime", 30)),
    )
    if weights.s_prime >= schedule.total_steps:
        raise ConfigError("s_prime must be below total_steps")
    spc = _get(srch, "space", {})
    space = SearchSpace(
        k_values=tuple(int(k) for k in _get(spc, "k_values", (1, 2, 3, 4, 5))),
        alpha_values=tuple(float(a) for a in _get(
            spc, "alpha_values", (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9))),
        s_values=tuple(int(s) for s in _get(spc, "s_values", tuple(range(30, 41)))),
        alpha_start=float(_get(spc, "alpha_start", 0.5)),
        s_start=int(_get(spc, "s_start", 35)),
        patience=int(_get(spc, "patience", 3)),
    )

    # Mode/strategy consistency is validated by run(); search configs may
    # legitimately omit the strategy the search itself will produce.
    return ExperimentSetup(
        seed=seed,
        schedule=schedule,
        mixture=mixture,
        cloud=cloud,
        edge=edge,
        latency=latency,
        metric_cfg=metric_cfg,
        condition=condition,
        mode=mode,
        strategy=strategy,
        switch_step=switch_step,
        weights=weights,
        space=space,
        search_p=int(_get(srch, "pre_inference_steps", 6)),
        search_conditions=int(_get(srch, "conditions", 16)),
        output=_get(cfg, "output", {}),
    )


class PipelineEvaluator:
    """Objective evaluator backing the two-stage search.

    Averages Quality and Efficiency over a seeded prompt set (mixture
    conditions with per-condition initial noise); Burden depends only on
    the candidate switching point.  Cloud-only references are computed once
    per condition and cached.  Per-condition evaluations may run on a
    thread pool; the reduction order is fixed, so results are independent
    of the job count.
    """

    def __init__(self, setup: ExperimentSetup, jobs: int = 1):
        if setup.latency.cloud_cost(setup.cloud) <= setup.latency.edge_cost(setup.edge):
            raise ConfigError("efficiency is undefined unless cloud steps cost more than edge steps")
        self.setup = setup
        self.jobs = max(1, int(jobs))
        rng = substream(setup.seed, "prompt_sampling")
        self.conditions = sample_conditions(
            setup.mixture.n_components, setup.search_conditions, rng
        )
        T = setup.schedule.total_steps
        dims = setup.mixture.dims
        self.x_T = [
            LatentState(substream(setup.seed, f"init_noise:{i}").standard_normal(dims), T)
            for i in range(len(self.conditions))
        ]
        self.t_cloud = T * setup.latency.cloud_cost(setup.cloud)
        self.t_edge = T * setup.latency.edge_cost(setup.edge)
        self._references = self._map(self._reference)
        self.evaluations = 0

    def _map(self, fn):
        indices = range(len(self.conditions))
        if self.jobs == 1:
            return [fn(i) for i in indices]
        with ThreadPoolExecutor(max_workers=self.jobs) as pool:
            return list(pool.map(fn, indices))

    def _reference(self, i: int) -> np.ndarray:
        cfg = PipelineConfig("cloud_only", self.setup.seed, self.setup.latency,
                             condition=self.conditions[i])
        report = run(cfg, self.setup.cloud, self.setup.edge, self.setup.schedule,
                     x_T=self.x_T[i].copy())
        return report.final_latent.data

    def _candidate(self, p: int, k: int, alpha: float, s: int):
        strategy = StrategyConfig(p, k, alpha, s)

        def one(i: int):
            cfg = PipelineConfig("ec_diff", self.setup.seed, self.setup.latency,
                                 condition=self.conditions[i], strategy=strategy)
            report = run(cfg, self.setup.cloud, self.setup.edge, self.setup.schedule,
                         x_T=self.x_T[i].copy())
            q = quality(self._references[i], report.final_latent.data, self.setup.metric_cfg)
            e = efficiency(self.t_cloud, self.t_edge, report.latency.total)
            return q, e

        results = self._map(one)
        self.evaluations += 1
        q_mean = float(np.mean([r[0] for r in results]))
        e_mean = float(np.mean([r[1] for r in results]))
        b = burden(self.setup.schedule.total_steps, s, self.setup.weights.s_prime)
        return objective(self.setup.weights, q_mean, e_mean, b)

    def stage1(self, p: int, k: int, alpha: float) -> float:
        # s is pinned to the stage-2 start value while (k, alpha) is searched,
        # so Burden is constant across stage-1 candidates.
        return self._candidate(p, k, alpha, self.setup.space.s_start)

    def stage2_evaluator(self, p: int, k: int, alpha: float):
        def evaluate(s: int) -> float:
            return self._candidate(p, k, alpha, s)
        return evaluate


@dataclass
class TwoStageResult:
    p: int
    stage1: StageOneResult
    stage2: StageTwoResult

    def to_payload(self) -> dict:
        visits = [
            {"stage": v.stage, "k": v.k, "alpha": v.alpha, "s": v.s, "value": v.value}
            for v in self.stage1.visits + self.stage2.visits
        ]
        return {
            "p": self.p,
            "k_best": self.stage1.k_best,
            "alpha_best": self.stage1.alpha_best,
            "s_best": self.stage2.s_best,
            "objective": self.stage2.value,
            "evaluations": self.stage1.evaluations + self.stage2.evaluations,
            "visit_log": visits,
        }


def run_two_stage_search(setup: ExperimentSetup, jobs: int = 1) -> TwoStageResult:
    evaluator = PipelineEvaluator(setup, jobs=jobs)
    p = setup.search_p
    stage1 = greedy_stage1(evaluator.stage1, setup.space, p)
    stage2 = greedy_stage2(
        evaluator.stage2_evaluator(p, stage1.k_best, stage1.alpha_best), setup.space
    )
    return TwoStageResult(p, stage1, stage2)
