"""Mini-batch training with teacher forcing, early stopping, checkpointing."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import TrainConfig
from .corpus import Exercise, Split, StudentSequence, window_sequences
from .model import KTModel, build_pack, masked_nll
from .optim import adam_step, clip_global_norm

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    """Raised when a batch produces a non-finite loss."""


def sequence_loss(predictions, scores) -> Tensor:
    """Negative log likelihood of one observed sequence.

    `predictions` is a (T,) tensor of probabilities in (0,1) (clamped to
    [1e-7, 1-1e-7] before the logs); `scores` the binary outcomes.
    """
    preds = predictions if isinstance(predictions, Tensor) else ad.stack(
        [p if isinstance(p, Tensor) else Tensor(p) for p in predictions])
    r = np.asarray(scores, dtype=np.float64)
    if preds.shape != r.shape:
        raise ValueError(f"{preds.shape} predictions vs {r.shape} scores")
    if not set(np.unique(r)) <= {0.0, 1.0}:
        raise ValueError("scores must be binary")
    loss, _ = masked_nll(ad.reshape(preds, (1, r.size)), r.reshape(1, -1),
                         np.ones((1, r.size)))
    return ad.mul(loss, float(r.size))  # undo the per-step normalization


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    seconds: float
    n_batches: int


@dataclass
class FitResult:
    history: list[dict] = field(default_factory=list)
    best_auc: float = float("-inf")
    best_epoch: int = -1
    epochs_run: int = 0


def _batches(items, size):
    for lo in range(0, len(items), size):
        yield items[lo:lo + size]


def train_epoch(model: KTModel, sequences: list[StudentSequence],
                exercises: dict[str, Exercise], cfg: TrainConfig,
                rng: np.random.Generator, epoch: int = 0) -> EpochStats:
    """One shuffled pass: forward, backward, Adam per batch, dropout active."""
    if not sequences:
        raise ValueError("no training sequences")
    t0 = time.perf_counter()
    windowed = window_sequences(sequences, cfg.window_len, cfg.window_stride)
    order = rng.permutation(len(windowed))
    shuffled = [windowed[i] for i in order]

    total_nll = 0.0
    total_steps = 0
    n_batches = 0
    for group in _batches(shuffled, model.hyper.batch):
        pack = build_pack(group, exercises)
        out = model.forward_pack(pack, training=True, rng=rng)
        loss_val = out.loss.item()
        if not np.isfinite(loss_val):
            raise TrainingDiverged(
                f"non-finite loss in epoch {epoch}, batch {n_batches} "
                f"(students {pack.student_ids[:3]}...)")
        model.store.zero_grad()
        out.loss.backward()
        grads = model.store.grads()
        if cfg.clip_norm is not None:
            grads = clip_global_norm(grads, cfg.clip_norm)
        adam_step(model.store, grads, model.hyper)
        total_nll += loss_val * out.mask.sum()
        total_steps += int(out.mask.sum())
        n_batches += 1
    return EpochStats(epoch=epoch, mean_loss=total_nll / max(1, total_steps),
                      seconds=time.perf_counter() - t0, n_batches=n_batches)


def fit(model: KTModel, split: Split, exercises: dict[str, Exercise],
        cfg: TrainConfig) -> FitResult:
    """Train with per-epoch validation on the split's targets; keep the best.

    Early-stops once validation AUC has not improved for `patience` epochs,
    restores the best parameters, and writes a checkpoint when a path is set.
    """
    from .evaluate import evaluate_split

    rng = np.random.default_rng(model.hyper.seed)
    result = FitResult()
    best_values = None
    best_adam = None
    for epoch in range(1, cfg.epochs + 1):
        stats = train_epoch(model, split.train, exercises, cfg, rng, epoch=epoch)
        report = evaluate_split(model, split, exercises)
        auc = report.auc if report.auc is not None else float("-inf")
        result.history.append({
            "epoch": epoch, "train_loss": stats.mean_loss,
            "val_auc": report.auc, "val_acc": report.acc,
            "val_mae": report.mae, "val_rmse": report.rmse,
            "seconds": round(stats.seconds, 3),
        })
        log.info("epoch %d loss %.4f val_auc %s (%.1fs)", epoch,
                 stats.mean_loss, f"{auc:.4f}", stats.seconds)
        if auc > result.best_auc:
            result.best_auc = auc
            result.best_epoch = epoch
            best_values = model.store.copy_values()
            best_adam = ({k: m.copy() for k, m in model.store.m.items()},
                         {k: v.copy() for k, v in model.store.v.items()},
                         model.store.step)
        result.epochs_run = epoch
        if epoch - result.best_epoch >= cfg.patience:
            log.info("early stop at epoch %d (best %d)", epoch, result.best_epoch)
            break

    if best_values is not None:
        model.store.load_values(best_values)
        model.store.m, model.store.v, model.store.step = (
            best_adam[0], best_adam[1], best_adam[2])
    model.rng_state = rng.bit_generator.state
    if cfg.checkpoint_path:
        from .checkpoint import save_checkpoint
        save_checkpoint(model, cfg.checkpoint_path)
    return result
