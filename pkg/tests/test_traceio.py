import numpy as np
import pytest

from ecdiff import (
    LatentState,
    StepRecord,
    TraceFile,
    TraceFormatError,
    TraceMissingStepError,
    read_trace,
    record_trace,
    replay_predictor,
    run_plain_phase,
    write_trace,
)


def make_trace(with_latents=True, n=5, dims=(3, 2)):
    rng = np.random.default_rng(1)
    records = [
        StepRecord(
            step=n - i,
            source=i % 3,
            noise=rng.standard_normal(dims).astype(np.float32).astype(np.float64),
            latent=rng.standard_normal(dims).astype(np.float32).astype(np.float64)
            if with_latents else None,
        )
        for i in range(n)
    ]
    return TraceFile(n, dims, with_latents, records)


@pytest.mark.parametrize("with_latents", [True, False])
def test_write_read_round_trip(tmp_path, with_latents):
    trace = make_trace(with_latents)
    path = tmp_path / "t.bin"
    write_trace(path, trace)
    loaded = read_trace(path)
    assert loaded.total_steps == trace.total_steps
    assert loaded.dims == trace.dims
    assert loaded.has_latents == with_latents
    assert len(loaded.records) == len(trace.records)
    for a, b in zip(loaded.records, trace.records):
        assert (a.step, a.source) == (b.step, b.source)
        assert np.array_equal(a.noise, b.noise)  # values were storage-rounded above
        if with_latents:
            assert np.array_equal(a.latent, b.latent)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(TraceFormatError):
        read_trace(path)


def test_truncated_file_rejected(tmp_path):
    path = tmp_path / "t.bin"
    write_trace(path, make_trace())
    data = path.read_bytes()
    path.write_bytes(data[:-7])
    with pytest.raises(TraceFormatError):
        read_trace(path)


def test_bad_version_rejected(tmp_path):
    path = tmp_path / "t.bin"
    write_trace(path, make_trace())
    data = bytearray(path.read_bytes())
    data[4] = 99
    path.write_bytes(bytes(data))
    with pytest.raises(TraceFormatError):
        read_trace(path)


def test_non_decreasing_steps_rejected(tmp_path):
    trace = make_trace()
    trace.records[2].step = trace.records[1].step + 1
    # the writer itself does not order-check records, the reader must
    path = tmp_path / "t.bin"
    write_trace(path, trace)
    with pytest.raises(TraceFormatError):
        read_trace(path)


def test_record_then_replay_reproduces_trajectory(tmp_path, schedule, cloud):
    x_T = LatentState(np.random.default_rng(8).standard_normal(cloud.dims),
                      schedule.total_steps)
    path = tmp_path / "run.bin"
    trace = record_trace(cloud, schedule, x_T.copy(), None, path)
    assert len(trace.records) == schedule.total_steps

    replay = replay_predictor(read_trace(path))
    state, calls = run_plain_phase(replay, schedule, x_T.copy(), None)
    assert calls == schedule.total_steps
    # The recording run consumed the storage-rounded noises it wrote, so the
    # replayed trajectory is bit-identical.
    assert np.array_equal(
        state.data.astype(np.float32),
        trace.records[-1].latent.astype(np.float32),
    )


def test_replay_missing_step_errors(tmp_path, schedule, cloud):
    x_T = LatentState(np.zeros(cloud.dims), schedule.total_steps)
    path = tmp_path / "run.bin"
    trace = record_trace(cloud, schedule, x_T, None, path)
    trace.records = [r for r in trace.records if r.step != 20]
    replay = replay_predictor(trace)
    with pytest.raises(TraceMissingStepError):
        replay.evaluate(np.zeros(cloud.dims), 20, None)


def test_replay_dim_mismatch_errors(tmp_path, schedule, cloud):
    x_T = LatentState(np.zeros(cloud.dims), schedule.total_steps)
    path = tmp_path / "run.bin"
    record_trace(cloud, schedule, x_T, None, path)
    replay = replay_predictor(read_trace(path))
    with pytest.raises(ValueError):
        replay.evaluate(np.zeros((2, 2)), 30, None)
