"""Mini-batch training loop, evaluation helpers and the training-log format."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .data import ImageSet
from .models import Classifier, ConvAutoencoder
from .optim import ReduceLROnPlateau, make_optimizer
from .tensor import Tape, Tensor, backward, mse_loss, softmax_cross_entropy

__all__ = [
    "TrainConfig",
    "EpochRecord",
    "TrainResult",
    "TrainingDiverged",
    "train",
    "predict",
    "evaluate",
    "write_log_csv",
    "LOG_COLUMNS",
]

LOG_COLUMNS = ("epoch", "split", "loss", "metric", "lr")


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "sgd_momentum"
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 4e-5
    epochs: int = 10
    batch: int = 16
    plateau_factor: float = 0.1
    plateau_patience: int = 5
    plateau_min_delta: float = 1e-4
    monitor: str = "train_loss"  # or "val_loss"
    seed: int = 0
    loss: str = "cross_entropy"  # or "mse"

    def __post_init__(self):
        if self.optimizer not in ("sgd_momentum", "adam"):
            raise ValueError(f"optimizer must be 'sgd_momentum' or 'adam', got {self.optimizer!r}")
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.epochs < 1 or self.batch < 1:
            raise ValueError(f"epochs and batch must be >= 1, got {self.epochs} and {self.batch}")
        if not 0 < self.plateau_factor < 1:
            raise ValueError(f"plateau_factor must be in (0, 1), got {self.plateau_factor}")
        if self.plateau_patience < 1:
            raise ValueError(f"plateau_patience must be >= 1, got {self.plateau_patience}")
        if self.monitor not in ("train_loss", "val_loss"):
            raise ValueError(f"monitor must be 'train_loss' or 'val_loss', got {self.monitor!r}")
        if self.loss not in ("cross_entropy", "mse"):
            raise ValueError(f"loss must be 'cross_entropy' or 'mse', got {self.loss!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    split: str
    loss: float
    metric: float  # accuracy for cross-entropy, plain per-element MSE for mse
    lr: float


@dataclass
class TrainResult:
    records: list[EpochRecord]
    steps: int
    best_epoch: int
    best_params: dict[str, np.ndarray]
    stopped_early: bool = False
    losses: list[float] = field(default_factory=list)  # per step

    def final(self, split: str = "train") -> EpochRecord:
        return [r for r in self.records if r.split == split][-1]


def _loss(model, cfg: TrainConfig, x: np.ndarray, labels: np.ndarray) -> tuple[Tensor, float]:
    out = model(x)
    if cfg.loss == "cross_entropy":
        loss = softmax_cross_entropy(out, labels)
        return loss, float(np.sum(out.data.argmax(axis=1) == labels))
    loss = mse_loss(out, x)
    return loss, float(np.mean((out.data - x) ** 2)) * len(x)


def predict(model, images: np.ndarray, batch: int = 64) -> np.ndarray:
    """Model outputs for raw [0, 1] images, evaluated in batches without a tape."""
    outs = [model(model.normalize(images[i : i + batch])).data for i in range(0, len(images), batch)]
    return np.concatenate(outs)


def evaluate(model, data: ImageSet, loss: str = "cross_entropy", batch: int = 64) -> tuple[float, float]:
    """(loss, metric) of ``model`` on ``data`` with the training loss reductions."""
    total_loss = total_metric = 0.0
    for i in range(0, len(data), batch):
        x = model.normalize(data.images[i : i + batch])
        labels = data.labels[i : i + batch]
        out = model(x).data
        if loss == "cross_entropy":
            total_loss += float(softmax_cross_entropy(out, labels).data) * len(x)
            total_metric += float(np.sum(out.argmax(axis=1) == labels))
        else:
            total_loss += float(mse_loss(out, x).data) * len(x)
            total_metric += float(np.mean((out - x) ** 2)) * len(x)
    return total_loss / len(data), total_metric / len(data)


def train(model: Classifier | ConvAutoencoder, data: ImageSet, cfg: TrainConfig, val: ImageSet | None = None,
          max_steps: int | None = None, stop_below: float | None = None,
          on_epoch: Callable[[EpochRecord], None] | None = None) -> TrainResult:
    """Train ``model`` in place.

    Batches follow a permutation drawn from ``cfg.seed`` each epoch, so a fixed
    seed and model init give identical logs.  ``max_steps`` and ``stop_below``
    (a per-step loss threshold) end training early; the partial epoch is still
    logged.  A non-finite loss raises :class:`TrainingDiverged`.
    """
    if len(data) == 0:
        raise ValueError("training set is empty")
    if cfg.monitor == "val_loss" and val is None:
        raise ValueError("monitor 'val_loss' needs a validation set")
    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    opt = make_optimizer(cfg.optimizer, params, cfg.lr, cfg.momentum, cfg.weight_decay)
    sched = ReduceLROnPlateau(cfg.plateau_factor, cfg.plateau_patience, cfg.plateau_min_delta)

    records: list[EpochRecord] = []
    step_losses: list[float] = []
    best = (math.inf, 0, {p.name: p.data.copy() for p in params})
    steps = 0
    done = False
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(data))
        seen = 0
        loss_sum = metric_sum = 0.0
        for b, start in enumerate(range(0, len(data), cfg.batch)):
            idx = order[start : start + cfg.batch]
            x = model.normalize(data.images[idx])
            opt.zero_grad()
            with Tape():
                loss, metric = _loss(model, cfg, x, data.labels[idx])
                value = float(loss.data)
                if not math.isfinite(value):
                    raise TrainingDiverged(f"non-finite loss {value} at epoch {epoch}, batch {b}")
                backward(loss)
            opt.step()
            steps += 1
            step_losses.append(value)
            seen += len(idx)
            loss_sum += value * len(idx)
            metric_sum += metric
            if (max_steps is not None and steps >= max_steps) or (stop_below is not None and value < stop_below):
                done = True
                break

        rec = EpochRecord(epoch, "train", loss_sum / seen, metric_sum / seen, opt.lr)
        records.append(rec)
        if on_epoch:
            on_epoch(rec)
        monitored = rec.loss
        if val is not None:
            vloss, vmetric = evaluate(model, val, cfg.loss)
            vrec = EpochRecord(epoch, "val", vloss, vmetric, opt.lr)
            records.append(vrec)
            if on_epoch:
                on_epoch(vrec)
            if cfg.monitor == "val_loss":
                monitored = vloss
        if monitored < best[0]:
            best = (monitored, epoch, {p.name: p.data.copy() for p in params})
        opt.lr = sched.step(monitored, opt.lr)
        if done:
            break

    return TrainResult(records, steps, best[1], best[2], stopped_early=done, losses=step_losses)


def write_log_csv(records: list[EpochRecord], path) -> Path:
    """CSV with columns epoch, split, loss, metric, lr (floats written round-trip exact)."""
    path = Path(path)
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in records:
            w.writerow([r.epoch, r.split, repr(r.loss), repr(r.metric), repr(r.lr)])
    return path
