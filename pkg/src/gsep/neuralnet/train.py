"""Mini-batch BPTT training with Adam, gradient clipping and early stopping."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from gsep.dsp import NormStats
from gsep.errors import DivergenceError, GsepError
from gsep.neuralnet.adam import AdamState, adam_step
from gsep.neuralnet.network import clip_by_global_norm, forward, loss_and_grads, mse_loss
from gsep.neuralnet.params import ArchConfig, NetworkParams, init_params

log = logging.getLogger(__name__)


@dataclass
class TrainSequence:
    """One training utterance: features, PSM target and optional loss weights, all ``(T, F)``."""

    features: np.ndarray
    target: np.ndarray
    weights: np.ndarray | None = None

    @property
    def n_frames(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 50
    patience: int = 5
    batch_size: int = 1
    clip_norm: float = 5.0
    truncate: int | None = None
    seed: int = 0
    dtype: str = "float32"
    lr_decay: float = 1.0  # lr multiplier after each epoch without validation improvement

    def __post_init__(self):
        if self.lr <= 0 or self.epochs < 0 or self.batch_size < 1 or self.patience < 1:
            raise GsepError("invalid training hyperparameters")
        if not 0.0 < self.lr_decay <= 1.0:
            raise GsepError(f"lr_decay must be in (0, 1], got {self.lr_decay}")


@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    valid_mse: float
    seconds: float = 0.0

    def line(self) -> str:
        return f"epoch={self.epoch} train_mse={self.train_mse:.6f} valid_mse={self.valid_mse:.6f}"


@dataclass
class TrainResult:
    params: NetworkParams
    optimizer: AdamState
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def best_valid(self) -> float:
        return min(r.valid_mse for r in self.history)


def pad_batch(items: Sequence[TrainSequence], dtype=np.float32):
    """Right-pad a list of sequences to a common length; returns x, y, w, valid."""
    T = max(s.n_frames for s in items)
    B = len(items)
    F_in = items[0].features.shape[1]
    F_out = items[0].target.shape[1]
    x = np.zeros((B, T, F_in), dtype)
    y = np.zeros((B, T, F_out), dtype)
    valid = np.zeros((B, T))
    has_w = all(s.weights is not None for s in items)
    w = np.zeros((B, T, F_out)) if has_w else None
    for b, s in enumerate(items):
        n = s.n_frames
        x[b, :n] = s.features
        y[b, :n] = s.target
        valid[b, :n] = 1.0
        if has_w:
            w[b, :n] = s.weights
    return x, y, w, valid


def _batches(n: int, size: int, order: np.ndarray):
    for k in range(0, n, size):
        yield order[k : k + size]


def dataset_loss(params: NetworkParams, data: Sequence[TrainSequence], batch_size: int = 16) -> float:
    """Eval-mode training loss over every valid (frame, bin) of ``data``.

    Uses the same weighting as training (magnitude-weighted when the network
    is configured for it and the sequences carry weights), pooled over the
    whole set rather than averaged per batch.
    """
    if not data:
        return float("nan")
    total, count = 0.0, 0.0
    # sort by length so padding stays small
    order = np.argsort([s.n_frames for s in data], kind="stable")
    for idx in _batches(len(data), batch_size, order):
        x, y, w, valid = pad_batch([data[i] for i in idx], params.dtype)
        out = forward(x, params, "eval", keep_cache=False).output
        if params.arch.loss_weighting == "magnitude" and w is not None:
            n = float(np.sum(w * valid[..., None]))
            total += mse_loss(out, y, "magnitude", w, valid) * n
        else:
            n = valid.sum() * y.shape[-1]
            total += mse_loss(out, y, valid=valid) * n
        count += n
    return total / count


def train(
    train_set: Sequence[TrainSequence],
    valid_set: Sequence[TrainSequence],
    arch: ArchConfig,
    cfg: TrainConfig = TrainConfig(),
    norm_stats: NormStats | None = None,
    params: NetworkParams | None = None,
    optimizer: AdamState | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainResult:
    """Train and return the parameters with the lowest validation loss.

    Epoch 0 in the history is the untrained (or resumed) network. Passing
    ``params`` and ``optimizer`` resumes from a previous run; the optimizer
    step count then keeps increasing from where it was.
    """
    if not train_set:
        raise GsepError("training set is empty")
    dtype = np.dtype(cfg.dtype)
    rng = np.random.default_rng(cfg.seed)
    if params is None:
        params = init_params(arch, int(rng.integers(2**31)), dtype, norm_stats)
    else:
        rng.integers(2**31)
        params = params.astype(dtype)
        if norm_stats is not None:
            params.norm_stats = norm_stats
    if optimizer is None:
        optimizer = AdamState(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    valid_data = valid_set or train_set

    def record(epoch, train_mse, t0):
        rec = EpochRecord(epoch, train_mse, dataset_loss(params, valid_data), time.perf_counter() - t0)
        if not np.isfinite(rec.valid_mse):
            raise DivergenceError(f"diverged: validation loss is {rec.valid_mse} at epoch {epoch}")
        history.append(rec)
        log.info(rec.line())
        if on_epoch is not None:
            on_epoch(rec)
        return rec

    history: list[EpochRecord] = []
    t0 = time.perf_counter()
    best = record(0, dataset_loss(params, train_set), t0)
    best_params, best_epoch, stale = params.copy(), 0, 0

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(train_set))
        total, count = 0.0, 0.0
        for idx in _batches(len(train_set), cfg.batch_size, order):
            x, y, w, valid = pad_batch([train_set[i] for i in idx], dtype)
            loss, grads, _ = loss_and_grads(
                params, x, y, valid=valid, weights=w, dropout_seed=rng, truncate=cfg.truncate
            )
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"diverged: loss {loss} at epoch {epoch}, optimizer step {optimizer.step_count + 1}"
                )
            clip_by_global_norm(grads, cfg.clip_norm)
            adam_step(params, grads, optimizer)
            n = valid.sum()
            total += loss * n
            count += n
        rec = record(epoch, total / count, t0)
        if rec.valid_mse < best.valid_mse:
            best, best_params, best_epoch, stale = rec, params.copy(), epoch, 0
        else:
            stale += 1
            optimizer.lr *= cfg.lr_decay
            if stale >= cfg.patience:
                log.info("early stop at epoch %d (best %d)", epoch, best_epoch)
                break

    best_params.meta.update(
        {
            "best_epoch": best_epoch,
            "best_valid_mse": best.valid_mse,
            "optimizer_steps": optimizer.step_count,
            "loss": f"mse_on_mask/{arch.loss_weighting}",
        }
    )
    return TrainResult(best_params, optimizer, history, best_epoch)
