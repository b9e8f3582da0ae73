"""Waveform framing, overlap-add synthesis, and the latency contract.

The enhancer consumes frames of ``l_in`` samples taken every ``hop`` samples
and emits the rightmost ``l_out`` samples of each frame. The input is
left-padded with ``l_in - l_out`` zeros so that frame ``t``'s emitted window
lines up with original samples ``[t*hop, t*hop + l_out)``; the algorithmic
latency of the whole arrangement is therefore ``l_out`` samples (2 ms at the
defaults), independent of compute speed.

``latency_check`` asserts that property bit-exactly: it perturbs single input
samples and verifies that no output sample earlier than the bound changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateInputError, DimensionError

SAMPLE_RATE = 16000


@dataclass(frozen=True)
class FrameSpec:
    """Frame geometry: input length, output length, and hop, in samples."""

    l_in: int = 256
    l_out: int = 32
    hop: int = 16

    def __post_init__(self):
        if not (1 <= self.hop <= self.l_out <= self.l_in):
            raise DimensionError(
                f"need hop <= l_out <= l_in, got ({self.l_in}, {self.l_out}, {self.hop})"
            )
        if self.l_out % self.hop:
            raise DimensionError(f"l_out {self.l_out} not a multiple of hop {self.hop}")

    @property
    def pad_left(self):
        return self.l_in - self.l_out

    def n_frames(self, n_samples: int) -> int:
        return -(-n_samples // self.hop)


def normalize_variance(y):
    """Scale a C×N waveform to pooled variance one; returns (scaled, scale).

    The scale is 1/std over all C·N samples, returned so callers can undo the
    normalization on the enhanced output. Scaling the input by a power of two
    changes the output bit-for-bit not at all; for other factors the result
    agrees to rounding error.
    """
    y = np.asarray(y)
    if y.size == 0 or not np.any(y):
        raise DegenerateInputError("cannot normalize an all-zero waveform")
    var = float(np.var(y.astype(np.float64, copy=False)))
    scale = 1.0 / np.sqrt(var)
    return (y * np.asarray(scale, dtype=y.dtype)).astype(y.dtype), scale


def frame_signal(x, spec: FrameSpec):
    """Slice a C×N waveform into C×T×l_in overlapped frames.

    The signal is left-padded with ``l_in - l_out`` zeros and right-padded
    with zeros to complete the last frame; T = ceil(N / hop). Frame t covers
    padded samples [t*hop, t*hop + l_in), so its rightmost l_out samples
    align with original samples [t*hop, t*hop + l_out).
    """
    x = np.asarray(x)
    if x.ndim == 1:
        x = x[None, :]
    c, n = x.shape
    if n == 0:
        raise DegenerateInputError("cannot frame an empty signal")
    t = spec.n_frames(n)
    padded_len = (t - 1) * spec.hop + spec.l_in
    padded = np.zeros((c, padded_len), dtype=x.dtype)
    padded[:, spec.pad_left:spec.pad_left + n] = x
    frames = sliding_window_view(padded, spec.l_in, axis=1)[:, ::spec.hop, :]
    return np.ascontiguousarray(frames)


def overlap_counts(spec: FrameSpec, n_frames: int):
    """How many emitted windows cover each synthesized sample (1×... buffer)."""
    length = (n_frames - 1) * spec.hop + spec.l_out
    counts = np.zeros(length, dtype=np.float64)
    for t in range(n_frames):
        counts[t * spec.hop:t * spec.hop + spec.l_out] += 1.0
    return counts


def overlap_add(frames, spec: FrameSpec, n_samples: int):
    """Reassemble T×l_out output frames into a 1×N waveform.

    Sample n receives the sum of all frames covering it divided by the
    number of covering frames (2 in steady state at the defaults), then the
    result is truncated to ``n_samples``.
    """
    frames = np.asarray(frames)
    if frames.ndim == 3:
        if frames.shape[0] != 1:
            raise DimensionError(f"expected a single output channel, got {frames.shape[0]}")
        frames = frames[0]
    t, width = frames.shape
    if width != spec.l_out or t != spec.n_frames(n_samples):
        raise DimensionError(
            f"frames {frames.shape} inconsistent with l_out={spec.l_out}, "
            f"N={n_samples} (expect T={spec.n_frames(n_samples)})"
        )
    out = np.zeros((t - 1) * spec.hop + spec.l_out, dtype=frames.dtype)
    for i in range(t):
        out[i * spec.hop:i * spec.hop + spec.l_out] += frames[i]
    out /= overlap_counts(spec, t).astype(frames.dtype)
    return out[None, :n_samples]


@dataclass
class LatencyTrial:
    perturbed: int            # input sample index m that was perturbed
    earliest_changed: int     # first output index that differed, -1 if none
    violation: bool


@dataclass
class LatencyReport:
    bound: int
    passed: bool = True
    trials: list = field(default_factory=list)

    def __str__(self):
        lines = [f"latency bound: {self.bound} samples, {'PASS' if self.passed else 'FAIL'}"]
        for tr in self.trials:
            status = "VIOLATION" if tr.violation else "ok"
            lines.append(
                f"  perturb m={tr.perturbed} -> earliest changed n={tr.earliest_changed} [{status}]"
            )
        return "\n".join(lines)


def latency_check(model_fn, spec: FrameSpec, trials: int = 32, *, n_samples: int = 2048,
                  channels: int = 1, seed: int = 0, magnitude: float = 0.5) -> LatencyReport:
    """Assert bit-exactly that no output sample depends on input l_out ahead.

    ``model_fn`` maps a C×N float array to a 1×N (or N) array. Each trial
    perturbs one input sample at position m and requires every output sample
    n with n <= m - l_out to be bit-identical to the unperturbed run. The
    report lists, per trial, the earliest output index that changed; a trial
    fails when that index falls inside the protected region.
    """
    rng = np.random.default_rng(seed)
    base = rng.standard_normal((channels, n_samples)).astype(np.float32)
    ref = np.asarray(model_fn(base)).reshape(-1)
    report = LatencyReport(bound=spec.l_out)
    for _ in range(trials):
        m = int(rng.integers(spec.l_out + spec.hop, n_samples))
        ch = int(rng.integers(0, channels))
        bumped = base.copy()
        bumped[ch, m] += magnitude
        out = np.asarray(model_fn(bumped)).reshape(-1)
        changed = np.nonzero(out != ref)[0]
        earliest = int(changed[0]) if changed.size else -1
        violation = changed.size > 0 and earliest <= m - spec.l_out
        report.trials.append(LatencyTrial(m, earliest, violation))
        if violation:
            report.passed = False
    return report
