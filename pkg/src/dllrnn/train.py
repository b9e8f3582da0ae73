"""Optimization: AMSGrad-flavored Adam, global gradient clipping, the fit loop.

Determinism is the organizing principle. Every stochastic choice — epoch
shuffling and per-example chunk cropping — is drawn from a generator keyed on
(seed, a fixed stream tag, the epoch or step counter), never from a shared
mutable RNG. Together with checkpoints that carry the optimizer moments and
the step counter, this makes a resumed run reproduce the continuation of the
original run bit for bit in single-threaded mode.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .framing import SAMPLE_RATE
from .losses import pcm_loss
from .model import ModelConfig, ParamStore, model_forward
from .tensor import Tape
from . import tensor as T

_EPOCH_STREAM = 7919
_STEP_STREAM = 104729


@dataclass
class OptState:
    """Adam moments with the AMSGrad running maximum of the second moment."""

    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    v_max: dict = field(default_factory=dict)

    @classmethod
    def for_store(cls, store: ParamStore, lr: float = 2e-4) -> "OptState":
        state = cls(lr=lr)
        for name, tensor in store.items():
            state.m[name] = np.zeros_like(tensor.data)
            state.v[name] = np.zeros_like(tensor.data)
            state.v_max[name] = np.zeros_like(tensor.data)
        return state


def adam_step(store: ParamStore, state: OptState):
    """One bias-corrected update; v_max (not v) feeds the denominator.

    Aborts before touching any parameter if some gradient is non-finite.
    """
    for name, tensor in store.items():
        g = tensor.grad
        if g is not None and not np.all(np.isfinite(g)):
            raise NumericalError(
                f"non-finite gradient in parameter '{name}' at step {state.step + 1}"
            )
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, tensor in store.items():
        g = tensor.grad
        if g is None:
            g = np.zeros_like(tensor.data)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        np.maximum(state.v_max[name], v, out=state.v_max[name])
        denom = np.sqrt(state.v_max[name] / bc2) + state.eps
        tensor.data = tensor.data - (state.lr / bc1) * m / denom


def clip_grad_norm(store: ParamStore, max_norm: float = 0.03) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``.

    Returns the pre-clip norm, computed in double precision.
    """
    total = 0.0
    grads = []
    for tensor in store.tensors():
        if tensor.grad is not None:
            grads.append(tensor.grad)
            total += float(np.sum(tensor.grad.astype(np.float64) ** 2))
    norm = float(np.sqrt(total))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g *= np.asarray(scale, dtype=g.dtype)
    return norm


@dataclass
class TrainExample:
    """One training item: C×N mixture and its C×N direct-path target."""

    mixture: np.ndarray
    s_direct: np.ndarray


@dataclass
class Schedule:
    epochs: int = 1
    batch_size: int = 16
    chunk_seconds: float = 4.0
    seed: int = 0
    lr: float = 2e-4
    clip: float = 0.03


def _crop(rng, n: int, chunk_len: int) -> slice:
    if n <= chunk_len:
        return slice(0, n)
    start = int(rng.integers(0, n - chunk_len + 1))
    return slice(start, start + chunk_len)


def fit(config: ModelConfig, store: ParamStore, dataset, schedule: Schedule, *,
        out_dir=None, state: OptState = None, start_step: int = 0, quiet: bool = True):
    """Train ``store`` in place on a list of examples; returns the step history.

    Each step draws one seeded random chunk per batch example, runs the
    model on the mixture, scores the estimate with the spectral loss against
    the first-microphone direct path, backpropagates, clips the global
    gradient norm, and applies one optimizer step. With ``out_dir`` set, a
    checkpoint is written per epoch plus a best-loss one, and log lines go to
    ``train.log``.
    """
    from .checkpoint import save_checkpoint

    if not dataset:
        raise ConfigError("training dataset is empty")
    if state is None:
        state = OptState.for_store(store, lr=schedule.lr)
    chunk_len = max(1, int(round(schedule.chunk_seconds * SAMPLE_RATE)))
    steps_per_epoch = -(-len(dataset) // schedule.batch_size)
    start_epoch = start_step // steps_per_epoch
    history = []
    best_loss = np.inf
    log_fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log_fh = open(os.path.join(out_dir, "train.log"), "a", encoding="utf-8")
    step = start_step
    try:
        for epoch in range(start_epoch, schedule.epochs):
            order = np.random.default_rng((schedule.seed, _EPOCH_STREAM, epoch)).permutation(
                len(dataset))
            epoch_losses = []
            for k in range(steps_per_epoch):
                batch = order[k * schedule.batch_size:(k + 1) * schedule.batch_size]
                rng = np.random.default_rng((schedule.seed, _STEP_STREAM, step))
                t0 = time.perf_counter()
                store.zero_grad()
                with Tape() as tape:
                    total = None
                    for idx in batch:
                        ex = dataset[idx]
                        window = _crop(rng, ex.mixture.shape[1], chunk_len)
                        mix = ex.mixture[:, window].astype(store.dtype, copy=False)
                        target = ex.s_direct[0, window].astype(store.dtype, copy=False)
                        est = model_forward(mix, config, store)
                        item = pcm_loss(est, target, mix[0])
                        total = item if total is None else T.add(total, item)
                    loss = total / len(batch) if len(batch) > 1 else total
                    loss_value = loss.item()
                    if not np.isfinite(loss_value):
                        raise NumericalError(f"non-finite loss {loss_value} at step {step + 1}")
                    tape.backward(loss)
                grad_norm = clip_grad_norm(store, schedule.clip)
                adam_step(store, state)
                step += 1
                wall = time.perf_counter() - t0
                record = {"step": step, "epoch": epoch, "loss": loss_value,
                          "grad_norm": grad_norm, "wall_s": wall}
                history.append(record)
                epoch_losses.append(loss_value)
                line = (f"step={step} epoch={epoch} loss={loss_value:.6e} "
                        f"grad_norm={grad_norm:.6e} wall_s={wall:.3f}")
                if log_fh is not None:
                    log_fh.write(line + "\n")
                    log_fh.flush()
                if not quiet:
                    print(line)
            if out_dir is not None:
                save_checkpoint(os.path.join(out_dir, f"epoch_{epoch + 1:04d}.ckpt"),
                                config, store, step, opt_state=state)
                mean_loss = float(np.mean(epoch_losses))
                if mean_loss < best_loss:
                    best_loss = mean_loss
                    save_checkpoint(os.path.join(out_dir, "best.ckpt"),
                                    config, store, step, opt_state=state)
    finally:
        if log_fh is not None:
            log_fh.close()
    return history
