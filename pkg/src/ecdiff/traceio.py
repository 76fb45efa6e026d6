"""Binary step-trace format: record and reload per-step noise tensors.

Layout (all integers little-endian):

    magic   4 bytes  b"ECDT"
    version u16      1
    T       u32      schedule length the trace was produced under
    ndim    u8
    dims    u32 x ndim
    flags   u8       bit0: latent payloads present

    per record:
    step    i32      timestep the noise was consumed at (strictly decreasing)
    source  u8       0 model / 1 approximated / 2 corrected
    noise   f32 LE row-major, prod(dims) elements
    latent  same layout, only when flags bit0 is set

The recorder rounds every noise to the 32-bit storage precision *before*
the run consumes it, so a recorded run and its replay are bit-identical.
"""

import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"ECDT"
VERSION = 1

SOURCE_MODEL = 0
SOURCE_APPROXIMATED = 1
SOURCE_CORRECTED = 2

SOURCE_NAMES = {SOURCE_MODEL: "model", SOURCE_APPROXIMATED: "approximated", SOURCE_CORRECTED: "corrected"}


class TraceFormatError(ValueError):
    """Corrupt or structurally invalid trace file."""


class TraceMissingStepError(LookupError):
    """Replay was queried at a step the trace does not contain."""


@dataclass
class StepRecord:
    step: int
    source: int
    noise: np.ndarray
    latent: np.ndarray | None = None


@dataclass
class TraceFile:
    total_steps: int
    dims: tuple[int, ...]
    has_latents: bool
    records: list[StepRecord] = field(default_factory=list)

    def noise_at(self, step: int) -> np.ndarray:
        for rec in self.records:
            if rec.step == step:
                return rec.noise
        raise TraceMissingStepError(f"no record for step {step}")


def quantize_storage(arr: np.ndarray) -> np.ndarray:
    """Round to the trace's 32-bit storage precision, back as float64."""
    return np.asarray(arr, dtype=np.float32).astype(np.float64)


class NoiseQuantizer:
    """Applies the storage rounding without recording anything.

    A replayed run recomputes approximated noises instead of reading them
    from the trace; rounding them exactly as the recorder did makes the
    replay reproduce the recorded run bit-for-bit.
    """

    def quantize(self, noise: np.ndarray) -> np.ndarray:
        return quantize_storage(noise)

    def append(self, step, source, noise, latent):
        pass


class TraceRecorder:
    """Collects step records during a run; see module docstring for rounding."""

    def __init__(self, total_steps: int, dims: tuple[int, ...], include_latents: bool = True):
        self.total_steps = int(total_steps)
        self.dims = tuple(int(d) for d in dims)
        self.include_latents = include_latents
        self.records: list[StepRecord] = []

    def quantize(self, noise: np.ndarray) -> np.ndarray:
        return quantize_storage(noise)

    def append(self, step: int, source: int, noise: np.ndarray, latent: np.ndarray | None):
        if self.records and step >= self.records[-1].step:
            raise ValueError("trace steps must be strictly decreasing")
        self.records.append(
            StepRecord(
                step=int(step),
                source=int(source),
                noise=np.asarray(noise, dtype=np.float64),
                latent=None if not self.include_latents else np.asarray(latent, dtype=np.float64),
            )
        )

    def to_trace(self) -> TraceFile:
        return TraceFile(self.total_steps, self.dims, self.include_latents, list(self.records))


def write_trace(path, trace: TraceFile) -> None:
    dims = trace.dims
    n_elem = int(np.prod(dims)) if dims else 0
    if n_elem <= 0:
        raise ValueError("trace dims must be nonempty and positive")
    flags = 1 if trace.has_latents else 0
    chunks = [MAGIC, struct.pack("<HIB", VERSION, trace.total_steps, len(dims))]
    for d in dims:
        chunks.append(struct.pack("<I", d))
    chunks.append(struct.pack("<B", flags))
    for rec in trace.records:
        if rec.noise.shape != dims:
            raise ValueError(f"record shape {rec.noise.shape} != trace dims {dims}")
        chunks.append(struct.pack("<iB", rec.step, rec.source))
        chunks.append(np.ascontiguousarray(rec.noise, dtype="<f4").tobytes())
        if trace.has_latents:
            if rec.latent is None:
                raise ValueError("trace declares latents but a record has none")
            chunks.append(np.ascontiguousarray(rec.latent, dtype="<f4").tobytes())
    # write-then-rename so concurrent readers never see a partial file
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-trace-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(b"".join(chunks))
        os.chmod(tmp, 0o644)  # mkstemp defaults to 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_trace(path) -> TraceFile:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 11 or raw[:4] != MAGIC:
        raise TraceFormatError("bad magic: not a trace file")
    version, total_steps, ndim = struct.unpack_from("<HIB", raw, 4)
    if version != VERSION:
        raise TraceFormatError(f"unsupported trace version {version}")
    off = 11
    if len(raw) < off + 4 * ndim + 1:
        raise TraceFormatError("truncated header")
    dims = struct.unpack_from(f"<{ndim}I", raw, off)
    off += 4 * ndim
    (flags,) = struct.unpack_from("<B", raw, off)
    off += 1
    has_latents = bool(flags & 1)
    n_elem = int(np.prod(dims)) if dims else 0
    if n_elem <= 0:
        raise TraceFormatError("trace declares empty tensor dims")
    payloads = 2 if has_latents else 1
    rec_size = 5 + 4 * n_elem * payloads
    body = raw[off:]
    if len(body) % rec_size != 0:
        raise TraceFormatError("truncated or misaligned record section")
    records: list[StepRecord] = []
    prev_step = None
    for i in range(len(body) // rec_size):
        base = i * rec_size
        step, source = struct.unpack_from("<iB", body, base)
        if source not in SOURCE_NAMES:
            raise TraceFormatError(f"unknown source flag {source}")
        if prev_step is not None and step >= prev_step:
            raise TraceFormatError("record steps are not strictly decreasing")
        prev_step = step
        cur = base + 5
        noise = np.frombuffer(body, dtype="<f4", count=n_elem, offset=cur)
        noise = noise.astype(np.float64).reshape(dims)
        cur += 4 * n_elem
        latent = None
        if has_latents:
            latent = np.frombuffer(body, dtype="<f4", count=n_elem, offset=cur)
            latent = latent.astype(np.float64).reshape(dims)
        records.append(StepRecord(step, source, noise, latent))
    return TraceFile(total_steps, tuple(dims), has_latents, records)
