"""Spectral loss and evaluation metric.

The training loss compares summed |real| + |imaginary| STFT magnitudes of the
estimate against the target with an L1 distance, applied twice: once to the
speech estimate and once to the implied interference estimate (mixture minus
speech). Keeping real and imaginary parts separate inside the magnitude makes
the loss sensitive to phase while remaining cheap and differentiable.

The STFT here is built from plain tensor ops (a frame gather and two DFT
matrix products), so gradients flow through it on the tape. Evaluation uses
scale-invariant SDR, computed in double precision outside the tape.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import tensor as T
from .errors import DegenerateInputError, DimensionError
from .tensor import Tensor, from_op

STFT_WINDOW = 512
STFT_HOP = 256
SI_SDR_CAP_DB = 80.0
SI_SDR_EPS = 1e-12


class Spectrogram:
    """Real/imaginary DFT coefficients, T_s frames by F_s onesided bins."""

    __slots__ = ("real", "imag")

    def __init__(self, real: Tensor, imag: Tensor):
        self.real = real
        self.imag = imag

    @property
    def n_frames(self):
        return self.real.shape[0]

    @property
    def n_bins(self):
        return self.real.shape[1]


@lru_cache(maxsize=8)
def _dft_basis(window: int):
    """Hann window and onesided cos/-sin DFT matrices, in double precision."""
    n = np.arange(window)
    win = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / window)
    bins = window // 2 + 1
    phase = 2.0 * np.pi * np.outer(n, np.arange(bins)) / window
    return win, np.cos(phase), -np.sin(phase)


def _as_flat_tensor(x):
    if not isinstance(x, Tensor):
        x = Tensor(np.asarray(x))
    if len(x.shape) == 2 and x.shape[0] == 1:
        x = T.reshape(x, (x.shape[1],))
    if len(x.shape) != 1:
        raise DimensionError(f"expected a single-channel waveform, got shape {x.shape}")
    return x


def _gather_frames(x: Tensor, window: int, hop: int) -> Tensor:
    """T_s×window frame matrix of a 1-d signal, zero-padded at the tail."""
    n = x.shape[0]
    t_s = 1 if n <= window else 1 + -(-(n - window) // hop)
    idx = hop * np.arange(t_s)[:, None] + np.arange(window)[None, :]
    valid = idx < n
    safe = np.where(valid, idx, 0)
    mask = valid.astype(x.data.dtype)
    data = x.data[safe] * mask

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, safe, g * mask)
        return (gx,)

    return from_op(data, (x,), backward)


def stft(x, window: int = STFT_WINDOW, hop: int = STFT_HOP) -> Spectrogram:
    """Hann-windowed onesided DFT of ``x``; differentiable when x is taped.

    ``window`` must be a power of two and ``hop`` at most the window. Signals
    shorter than one window are zero-padded to a single frame.
    """
    if window < 2 or window & (window - 1):
        raise DimensionError(f"stft window must be a power of two, got {window}")
    if not (1 <= hop <= window):
        raise DimensionError(f"stft hop {hop} must lie in [1, window={window}]")
    x = _as_flat_tensor(x)
    dtype = x.data.dtype
    win, cos_m, sin_m = _dft_basis(window)
    frames = _gather_frames(x, window, hop)
    windowed = T.mul(frames, Tensor(win.astype(dtype)))
    real = T.matmul(windowed, Tensor(cos_m.astype(dtype)))
    imag = T.matmul(windowed, Tensor(sin_m.astype(dtype)))
    return Spectrogram(real, imag)


def _summed_magnitude(spec: Spectrogram) -> Tensor:
    return T.add(T.absolute(spec.real), T.absolute(spec.imag))


def _l_sm(ref, est, window, hop):
    """Mean L1 distance between summed |real|+|imag| magnitudes."""
    diff = T.sub(_summed_magnitude(stft(ref, window, hop)),
                 _summed_magnitude(stft(est, window, hop)))
    return T.tmean(T.absolute(diff))


def pcm_loss(x_hat, x, y, window: int = STFT_WINDOW, hop: int = STFT_HOP) -> Tensor:
    """Phase-constrained magnitude loss of an estimate against target + mixture.

    ``x_hat`` is the speech estimate (typically on the tape), ``x`` the
    direct-path target and ``y`` the reference-microphone mixture. The loss is
    the spectral L1 term on (x, x̂) plus the same term on the interference
    estimates (y − x, y − x̂).
    """
    x_hat = _as_flat_tensor(x_hat)
    x = _as_flat_tensor(x)
    y = _as_flat_tensor(y)
    if not (x_hat.shape == x.shape == y.shape):
        raise DimensionError(
            f"pcm_loss lengths differ: estimate {x_hat.shape}, target {x.shape}, mixture {y.shape}"
        )
    speech_term = _l_sm(x, x_hat, window, hop)
    noise_term = _l_sm(T.sub(y, x), T.sub(y, x_hat), window, hop)
    return T.add(speech_term, noise_term)


def si_sdr(s_hat, s) -> float:
    """Scale-invariant SDR in dB of an estimate against a reference.

    The reference is rescaled by its least-squares projection coefficient
    before measuring distortion; the result is floored via a 1e-12 error
    guard and capped at 80 dB so perfect estimates stay finite.
    """
    s_hat = np.asarray(s_hat, dtype=np.float64).reshape(-1)
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    if s_hat.shape != s.shape:
        raise DimensionError(f"si_sdr lengths differ: {s_hat.shape} vs {s.shape}")
    energy = float(np.dot(s, s))
    if energy == 0.0:
        raise DegenerateInputError("si_sdr reference has zero energy")
    alpha = float(np.dot(s_hat, s)) / energy
    target = alpha * s
    err = target - s_hat
    ratio = max(float(np.dot(target, target)), SI_SDR_EPS) / max(float(np.dot(err, err)), SI_SDR_EPS)
    return min(10.0 * np.log10(ratio), SI_SDR_CAP_DB)
