"""Command-line entry point.

Subcommands: run, search, report-curves, trace-record, trace-replay.
Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import traceio
from .experiment import ConfigError, build_setup, load_config, run_two_stage_search
from .pipeline import PipelineConfig, run
from .predictors import replay_predictor
from .reporting import (
    LATENT_ERROR_HEADER,
    NOISE_DIFF_HEADER,
    csv_rows_repr,
    latent_error_rows,
    noise_difference_rows,
    report_payload,
    write_csv_atomic,
    write_json_atomic,
    write_meta,
)
from .traceio import TraceFormatError, TraceRecorder


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecdiff",
        description="Edge-cloud collaborative diffusion inference simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="experiment config (JSON or YAML)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--jobs", type=int, default=1, help="parallel evaluations where applicable")

    p_run = sub.add_parser("run", help="execute one pipeline run and write its report")
    common(p_run)

    p_search = sub.add_parser("search", help="two-stage greedy parameter search")
    common(p_search)

    p_curves = sub.add_parser("report-curves", help="emit curve CSVs (and figures) from traces")
    p_curves.add_argument("trace", help="recorded trace file")
    p_curves.add_argument("--reference", default=None,
                          help="reference trace with latents, enables the latent-error curve")
    p_curves.add_argument("--out", required=True)
    p_curves.add_argument("--no-figures", action="store_true")

    p_rec = sub.add_parser("trace-record", help="run the configured pipeline, recording a trace")
    common(p_rec)

    p_rep = sub.add_parser("trace-replay", help="re-run the configured pipeline from a trace")
    p_rep.add_argument("--trace", required=True)
    common(p_rep)
    return parser


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _setup_from_args(args, validate_pipeline: bool = True):
    cfg = load_config(args.config)
    setup = build_setup(cfg, seed_override=args.seed)
    if validate_pipeline:
        try:
            setup.pipeline_config().validate(setup.schedule.total_steps)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return cfg, setup


def _reference_latent(setup):
    cfg = PipelineConfig("cloud_only", setup.seed, setup.latency, condition=setup.condition)
    return run(cfg, setup.cloud, setup.edge, setup.schedule).final_latent


def cmd_run(args) -> int:
    cfg, setup = _setup_from_args(args)
    if setup.mode == "ec_diff":
        requested = bool((cfg.get("search") or {}).get("requested"))
        if requested and setup.strategy is not None:
            raise ConfigError(
                "an ec_diff run takes either an explicit strategy or a search request, not both"
            )
        if requested:
            raise ConfigError("search-requested configs go through the `search` command")
    out = _outdir(args)
    reference = None if setup.mode == "cloud_only" else _reference_latent(setup)
    report = run(setup.pipeline_config(), setup.cloud, setup.edge, setup.schedule,
                 reference=reference, metric_cfg=setup.metric_cfg)
    write_json_atomic(out / "report.json", report_payload(report, setup.schedule))
    write_meta(out / "meta.json", {"command": "run"})
    if setup.output.get("latents"):
        from .reporting import _atomic_write_bytes

        _atomic_write_bytes(
            out / "final_latent.bin",
            np.ascontiguousarray(report.final_latent.data, dtype="<f4").tobytes(),
        )
    print(f"run complete: mode={report.mode} total_latency={report.latency.total:.3f}s "
          f"speedup={report.speedup_vs_cloud_only:.3f}x")
    return 0


def cmd_search(args) -> int:
    _, setup = _setup_from_args(args, validate_pipeline=False)
    out = _outdir(args)
    result = run_two_stage_search(setup, jobs=args.jobs)
    write_json_atomic(out / "search_result.json", result.to_payload())
    write_meta(out / "meta.json", {"command": "search"})
    best = result.to_payload()
    print(f"search complete: k={best['k_best']} alpha={best['alpha_best']} "
          f"s={best['s_best']} objective={best['objective']:.6f} "
          f"({best['evaluations']} evaluations)")
    return 0


def cmd_report_curves(args) -> int:
    out = _outdir(args)
    trace = traceio.read_trace(args.trace)
    if not trace.records:
        raise ConfigError("trace contains no records")
    noise_rows = noise_difference_rows(trace.records)
    write_csv_atomic(out / "noise_differences.csv", NOISE_DIFF_HEADER, csv_rows_repr(noise_rows))
    wrote = ["noise_differences.csv"]
    error_rows = None
    if args.reference:
        reference = traceio.read_trace(args.reference)
        error_rows = latent_error_rows(trace.records, reference.records)
        write_csv_atomic(out / "latent_errors.csv", LATENT_ERROR_HEADER, csv_rows_repr(error_rows))
        wrote.append("latent_errors.csv")
    if not args.no_figures:
        from . import plots

        plots.render_noise_differences(noise_rows, out / "noise_differences.png")
        wrote.append("noise_differences.png")
        if error_rows is not None:
            plots.render_latent_errors(error_rows, out / "latent_errors.png")
            wrote.append("latent_errors.png")
    print("wrote " + ", ".join(wrote))
    return 0


def cmd_trace_record(args) -> int:
    _, setup = _setup_from_args(args)
    out = _outdir(args)
    recorder = TraceRecorder(setup.schedule.total_steps, setup.mixture.dims, include_latents=True)
    report = run(setup.pipeline_config(), setup.cloud, setup.edge, setup.schedule,
                 recorder=recorder)
    traceio.write_trace(out / "trace.bin", recorder.to_trace())
    write_json_atomic(out / "report.json", report_payload(report, setup.schedule))
    write_meta(out / "meta.json", {"command": "trace-record"})
    print(f"recorded {len(recorder.records)} steps to trace.bin")
    return 0


def cmd_trace_replay(args) -> int:
    cfg, setup = _setup_from_args(args)
    trace = traceio.read_trace(args.trace)
    if trace.total_steps != setup.schedule.total_steps:
        raise ConfigError(
            f"trace was recorded for T={trace.total_steps}, "
            f"config schedule has T={setup.schedule.total_steps}"
        )
    if trace.dims != setup.mixture.dims:
        raise ConfigError(f"trace dims {trace.dims} do not match mixture dims {setup.mixture.dims}")
    out = _outdir(args)
    cloud = replay_predictor(trace, setup.latency.cloud_cost(setup.cloud))
    edge = replay_predictor(trace, setup.latency.edge_cost(setup.edge))
    # Approximated noises are recomputed rather than read back; rounding
    # them like the recorder did keeps the replay bit-identical.
    report = run(setup.pipeline_config(), cloud, edge, setup.schedule,
                 recorder=traceio.NoiseQuantizer())
    write_json_atomic(out / "report.json", report_payload(report, setup.schedule))
    write_meta(out / "meta.json", {"command": "trace-replay"})
    print(f"replayed {len(trace.records)}-step trace: mode={report.mode}")
    return 0


_COMMANDS = {
    "run": cmd_run,
    "search": cmd_search,
    "report-curves": cmd_report_curves,
    "trace-record": cmd_trace_record,
    "trace-replay": cmd_trace_replay,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, TraceFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
