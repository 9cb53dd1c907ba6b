"""Mini-batch Adam training with validation-accuracy early stopping."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from ..errors import InvalidInputError
from .functional import cross_entropy_with_logits
from .optim import AdamState, adam_step
from .resnet import Resnet1d

log = logging.getLogger(__name__)

# (logits, batch indices into the training set) -> (mean loss, dLoss/dlogits)
BatchLoss = Callable[[np.ndarray, np.ndarray], "tuple[float, np.ndarray]"]


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 100
    batch_size: int = 32
    patience: int = 10
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1:
            raise InvalidInputError("max_epochs must be >= 1")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be >= 1")
        if self.patience < 0:
            raise InvalidInputError("patience must be >= 0")

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)
    step_losses: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_accuracy: float = -1.0
    stopped_early: bool = False

    @property
    def epochs_run(self) -> int:
        return len(self.val_accuracy)

    def to_dict(self):
        return asdict(self)


def as_arrays(ds):
    """Accept a dataset object exposing ``x``/``y`` or an ``(x, y)`` pair."""
    if hasattr(ds, "x") and hasattr(ds, "y"):
        return np.asarray(ds.x), np.asarray(ds.y)
    x, y = ds
    return np.asarray(x), np.asarray(y)


def accuracy(model: Resnet1d, x, y, batch_size=256) -> float:
    if len(y) == 0:
        return 0.0
    pred = np.argmax(model.predict_logits(x, batch_size), axis=1)
    return float(np.mean(pred == np.asarray(y)))


def train(
    model: Resnet1d,
    train_set,
    val_set,
    cfg: TrainConfig = TrainConfig(),
    batch_loss: Optional[BatchLoss] = None,
) -> TrainHistory:
    """Fit ``model`` in place and restore the parameters of the best validation epoch.

    After every epoch the validation accuracy is measured; an epoch counts as an
    improvement only when it beats the best so far strictly. Training stops once
    ``max(patience, 1)`` consecutive epochs fail to improve, so ``patience=0``
    stops at the first non-improving epoch.

    ``batch_loss`` replaces the default cross-entropy; it receives the logits and
    the training-set indices of the batch.
    """
    x, y = as_arrays(train_set)
    xv, yv = as_arrays(val_set)
    if len(x) == 0 or len(xv) == 0:
        raise InvalidInputError("training and validation sets must be non-empty")
    x = x.astype(model.dtype, copy=False)
    if batch_loss is None:
        def batch_loss(logits, idx):
            return cross_entropy_with_logits(logits, y[idx])

    rng = np.random.default_rng(cfg.seed)
    opt = AdamState(learning_rate=cfg.learning_rate)
    hist = TrainHistory()
    best_state = model.state_dict()
    waited = 0

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(x))
        losses = []
        for start in range(0, len(x), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if len(idx) < 2 and len(x) > 1:
                # batch statistics are undefined for a single sample
                continue
            model.zero_grad()
            logits = model.forward(x[idx], training=True)
            loss, grad = batch_loss(logits, idx)
            model.backward(grad.astype(model.dtype, copy=False))
            adam_step(model.parameters(), model.gradients(), opt)
            losses.append(float(loss))
        hist.step_losses.extend(losses)
        hist.train_loss.append(float(np.mean(losses)) if losses else float("nan"))

        val_acc = accuracy(model, xv, yv)
        hist.val_accuracy.append(val_acc)
        log.debug("epoch %d loss %.4f val_acc %.4f", epoch, hist.train_loss[-1], val_acc)
        if val_acc > hist.best_val_accuracy:
            hist.best_val_accuracy = val_acc
            hist.best_epoch = epoch
            best_state = model.state_dict()
            waited = 0
        else:
            waited += 1
            if waited >= max(cfg.patience, 1):
                hist.stopped_early = True
                break

    model.load_state_dict(best_state)
    return hist
