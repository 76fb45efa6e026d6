"""Report serialization and plot-ready curve extraction.

Report JSON payloads are deterministic for a given config and seed: keys
are sorted, floats use repr round-tripping, and wall-clock metadata lives
in a separate meta file so reruns are byte-identical.
"""

import csv
import hashlib
import io
import json
import os
import tempfile
from datetime import datetime, timezone

import numpy as np

from .pipeline import RunReport
from .schedule import SamplerSchedule
from .traceio import SOURCE_NAMES, StepRecord

NOISE_DIFF_HEADER = ["step", "mean_abs_diff", "variance"]
LATENT_ERROR_HEADER = ["step", "l2_error", "source_flag"]


def _atomic_write_bytes(path, data: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o644)  # mkstemp defaults to 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json_atomic(path, payload: dict) -> None:
    data = json.dumps(payload, indent=2, sort_keys=True).encode() + b"\n"
    _atomic_write_bytes(path, data)


def write_csv_atomic(path, header: list[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    _atomic_write_bytes(path, buf.getvalue().encode())


def write_meta(path, extra: dict | None = None) -> None:
    """Wall-clock and environment metadata, kept out of the report payload."""
    meta = {"created_at": datetime.now(timezone.utc).isoformat()}
    if extra:
        meta.update(extra)
    _atomic_write_bytes(path, (json.dumps(meta, indent=2, sort_keys=True) + "\n").encode())


def latent_summary(data: np.ndarray, timestep: int) -> dict:
    digest = hashlib.sha256(np.ascontiguousarray(data, dtype="<f8").tobytes()).hexdigest()
    return {
        "shape": list(data.shape),
        "timestep": timestep,
        "l2_norm": float(np.linalg.norm(data)),
        "sha256": digest,
    }


def report_payload(report: RunReport, schedule: SamplerSchedule,
                   include_log: bool = True) -> dict:
    payload = {
        "mode": report.mode,
        "seed": report.seed,
        "schedule": {
            "total_steps": schedule.total_steps,
            "beta_start": schedule.beta_start,
            "beta_end": schedule.beta_end,
        },
        "calls": {"cloud": report.cloud_calls, "edge": report.edge_calls},
        "steps": {
            "cloud_phase": report.cloud_phase_steps,
            "edge_phase": report.edge_phase_steps,
            "approximated": report.approximated_steps,
            "corrections": report.corrections,
        },
        "latency_seconds": {
            "cloud_compute": report.latency.cloud_compute,
            "transfer": report.latency.transfer,
            "edge_compute": report.latency.edge_compute,
            "total": report.latency.total,
        },
        "speedup_vs_cloud_only": report.speedup_vs_cloud_only,
        "metrics_vs_reference": report.metrics,
        "final_latent": latent_summary(report.final_latent.data, report.final_latent.timestep),
        "source_log": None,
    }
    if include_log and report.log:
        payload["source_log"] = [
            {"step": rec.step, "source": SOURCE_NAMES[rec.source]} for rec in report.log
        ]
    return payload


def noise_difference_rows(records: list[StepRecord]):
    """Per-step statistics of the difference between consecutive predictions.

    Row `step` is the later (smaller-timestep) record of each pair;
    mean_abs_diff and variance summarize the elementwise difference.
    """
    rows = []
    for prev, cur in zip(records, records[1:]):
        diff = cur.noise - prev.noise
        rows.append((cur.step, float(np.mean(np.abs(diff))), float(np.var(diff))))
    return rows


def latent_error_rows(records: list[StepRecord], reference: list[StepRecord]):
    """L2 distance of the run's latent from the reference run's, by step."""
    ref_by_step = {rec.step: rec for rec in reference}
    rows = []
    for rec in records:
        if rec.latent is None:
            raise ValueError("trace does not carry latent payloads")
        ref = ref_by_step.get(rec.step)
        if ref is None or ref.latent is None:
            raise ValueError(f"reference trace lacks a latent at step {rec.step}")
        err = float(np.linalg.norm(rec.latent - ref.latent))
        rows.append((rec.step, err, SOURCE_NAMES[rec.source]))
    return rows


def csv_rows_repr(rows):
    """Stringify floats via repr so emitted CSV bytes are reproducible."""
    out = []
    for row in rows:
        out.append([repr(v) if isinstance(v, float) else v for v in row])
    return out
