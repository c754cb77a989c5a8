"""Mini-batch training loop shared by all model kinds."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field, asdict, fields
from pathlib import Path

import numpy as np

from . import engine as E
from .engine import NumericError
from .losses import class_balanced_bce, contrastive_term, class_weights, CLAMP_LO, CLAMP_HI, CONTRASTIVE_KINDS
from .models import Model, JointModel, set_gate_mode, KINDS
from .optim import Adam, PlateauScheduler

log = logging.getLogger(__name__)

DEFAULT_LR = 1e-4
FINETUNE_LR = 1e-7


@dataclass
class TrainConfig:
    model: str = "base"
    lr: float | None = None
    head_lr: float = DEFAULT_LR
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 4
    max_epochs: int = 150
    early_stop_patience: int = 15
    plateau_factor: float = 0.1
    plateau_patience: int = 5
    min_lr: float = 1e-12
    seed: int = 1
    contrastive: str = "none"
    contrastive_weight: float = 0.1
    margin: float = 1.0
    gate_mode: str = "soft"

    def __post_init__(self):
        self.model = self.model.lower()
        if self.model not in KINDS:
            raise ValueError(f"unknown model kind {self.model!r}")
        if self.lr is None:
            self.lr = FINETUNE_LR if self.model == "jmwr" else DEFAULT_LR
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.contrastive_weight < 0 or self.lr < 0:
            raise ValueError("learning rate and loss weights must be non-negative")
        if self.contrastive not in CONTRASTIVE_KINDS:
            raise ValueError(f"unknown contrastive loss {self.contrastive!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class TrainHistory:
    rows: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf

    def append(self, epoch, train_loss, val_loss, lr, seconds):
        self.rows.append((epoch, train_loss, val_loss, lr, seconds))

    def column(self, name: str) -> list:
        i = ("epoch", "train_loss", "val_loss", "lr", "seconds").index(name)
        return [r[i] for r in self.rows]

    def write_csv(self, path) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss", "lr", "seconds"])
            for e, tr, va, lr, s in self.rows:
                w.writerow([e, repr(tr), repr(va), repr(lr), f"{s:.3f}"])
        tmp.replace(path)


class TrainingAborted(NumericError):
    def __init__(self, msg: str, history: TrainHistory):
        super().__init__(msg)
        self.history = history


def bce_value(preds: np.ndarray, labels: np.ndarray, class_counts) -> float:
    """Class-balanced BCE of plain arrays (no graph)."""
    w_neg, w_pos = class_weights(*class_counts)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    p = np.clip(np.asarray(preds, dtype=np.float64).reshape(-1), CLAMP_LO, CLAMP_HI)
    w = np.where(y > 0.5, w_pos, w_neg)
    return float((w * -(y * np.log(p) + (1 - y) * np.log(1 - p))).mean())


def batch_loss(model: Model, x: np.ndarray, y: np.ndarray, counts, config: TrainConfig) -> E.Tensor:
    score, emb = model.forward(x)
    loss = class_balanced_bce(score, y, counts)
    if config.contrastive != "none" and config.contrastive_weight > 0:
        extra = contrastive_term(config.contrastive, emb, y, config.margin)
        loss = E.add(loss, E.scale(extra, config.contrastive_weight))
    return loss


def _param_groups(model: Model, config: TrainConfig):
    params = model.params()
    if isinstance(model, JointModel):
        head = set(model.head_param_names())
        sub = [p for n, p in params.items() if n not in head]
        new = [params[n] for n in params if n in head]
        scale = config.head_lr / config.lr if config.lr > 0 else 0.0
        return [(sub, 1.0), (new, scale)]
    return [(list(params.values()), 1.0)]


def train(model: Model, train_x, train_y, val_x, val_y, config: TrainConfig,
          class_counts: tuple[int, int] | None = None) -> tuple[Model, TrainHistory]:
    """Fit ``model`` in place on normalized inputs; restores the best-validation weights.

    The loss is clamped class-balanced BCE plus ``contrastive_weight`` times
    the chosen batch-wise loss on the model's embedding.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y).reshape(-1)
    val_x = np.asarray(val_x, dtype=np.float64)
    val_y = np.asarray(val_y).reshape(-1)
    if len(train_x) == 0 or len(val_x) == 0:
        raise ValueError("training and validation splits must be non-empty")
    if class_counts is None:
        n_pos = int(train_y.sum())
        class_counts = (len(train_y) - n_pos, n_pos)
    set_gate_mode(model, config.gate_mode)

    groups = _param_groups(model, config)
    all_params = [p for ps, _ in groups for p in ps]
    opt = Adam(groups, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps)
    sched = PlateauScheduler(config.lr, config.plateau_factor, config.plateau_patience, config.min_lr)
    history = TrainHistory()
    best = [p.data.copy() for p in all_params]
    n = len(train_x)
    bs = config.batch_size

    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        order = E.make_rng(config.seed, "shuffle", epoch).permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            opt.zero_grad()
            loss = batch_loss(model, train_x[idx], train_y[idx], class_counts, config)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingAborted(f"non-finite training loss at epoch {epoch}", history)
            E.backward(loss)
            try:
                opt.step()
            except NumericError as exc:
                raise TrainingAborted(f"{exc} at epoch {epoch}", history) from None
            total += value * len(idx)
        train_loss = total / n
        val_loss = bce_value(model.predict(val_x), val_y, class_counts)
        if not math.isfinite(val_loss):
            raise TrainingAborted(f"non-finite validation loss at epoch {epoch}", history)
        lr_used = opt.lr
        opt.lr = sched.update(val_loss)
        history.append(epoch, train_loss, val_loss, lr_used, time.perf_counter() - t0)
        if val_loss < history.best_val_loss:
            history.best_val_loss = val_loss
            history.best_epoch = epoch
            best = [p.data.copy() for p in all_params]
        log.debug("epoch %d train %.5f val %.5f lr %.2e", epoch, train_loss, val_loss, lr_used)
        if epoch - history.best_epoch >= config.early_stop_patience:
            break

    for p, b in zip(all_params, best):
        p.data[...] = b
    return model, history
