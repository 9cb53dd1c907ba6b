"""Offline knowledge distillation from a frozen soft-voting teacher."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ensemble import EnsembleModel
from .errors import InvalidInputError
from .nn.functional import LOG_CLAMP, log_softmax, t_softmax
from .nn.resnet import STUDENT_CONFIG, Resnet1d, Resnet1dConfig
from .nn.training import TrainConfig, TrainHistory, as_arrays, train


@dataclass(frozen=True)
class DistillConfig:
    alpha: float = 0.5
    temperature: float = 10.0
    # False: soften the teacher's probability vector itself, as the loss is written.
    # True: soften log(p_ve), i.e. treat the teacher output as logits.
    teacher_log_probs: bool = False
    student_config: Resnet1dConfig = STUDENT_CONFIG
    train_config: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise InvalidInputError("alpha must lie in [0, 1]")
        if not self.temperature > 0:
            raise InvalidInputError("temperature must be positive")


def _check_distribution(p):
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0) or not np.allclose(p.sum(axis=-1), 1.0, atol=1e-6):
        raise InvalidInputError("teacher output must be a probability distribution")
    return p


def soften_teacher(p_ve, temperature, teacher_log_probs=False):
    """Teacher side of the KL term: ``softmax(p_ve / T)`` (or of ``log p_ve``)."""
    t = np.log(np.maximum(p_ve, LOG_CLAMP)) if teacher_log_probs else p_ve
    return t_softmax(t, temperature)


def kd_loss_and_grad(z_s, p_ve, y, temperature=10.0, alpha=0.5, teacher_log_probs=False):
    """Per-sample distillation loss and its gradient with respect to the student logits.

    ``loss = alpha * T^2 * KL(softmax(z_s/T) || soften(p_ve)) + (1 - alpha) * CE(y, softmax(z_s))``

    Works on a single sample (1-D ``z_s``) or a batch.
    """
    if not temperature > 0:
        raise InvalidInputError("temperature must be positive")
    if not 0 <= alpha <= 1:
        raise InvalidInputError("alpha must lie in [0, 1]")
    z_s = np.asarray(z_s, dtype=np.float64)
    p_ve = _check_distribution(p_ve)
    if z_s.shape != p_ve.shape:
        raise InvalidInputError(f"student logits {z_s.shape} and teacher output {p_ve.shape} differ")
    y = np.asarray(y, dtype=np.int64)
    k = z_s.shape[-1]
    if np.any(y < 0) or np.any(y >= k):
        raise InvalidInputError(f"label out of range [0, {k})")

    log_ps = log_softmax(z_s, temperature)
    ps = np.exp(log_ps)
    q = soften_teacher(p_ve, temperature, teacher_log_probs)
    f = log_ps - np.log(np.maximum(q, LOG_CLAMP))
    kl = np.sum(ps * f, axis=-1)

    log_p1 = log_softmax(z_s, 1.0)
    onehot = np.zeros_like(z_s)
    np.put_along_axis(onehot, y[..., None], 1.0, axis=-1)
    ce = -np.sum(onehot * log_p1, axis=-1)

    loss = alpha * temperature**2 * kl + (1 - alpha) * ce
    # d KL / dz = p_s (f - KL) / T ; the T^2 prefactor leaves one T
    grad = alpha * temperature * ps * (f - kl[..., None]) + (1 - alpha) * (np.exp(log_p1) - onehot)
    return loss, grad


def kd_loss(z_s, p_ve, y, temperature=10.0, alpha=0.5, teacher_log_probs=False):
    return kd_loss_and_grad(z_s, p_ve, y, temperature, alpha, teacher_log_probs)[0]


def teacher_probabilities(teacher, x, batch_size=256) -> np.ndarray:
    """``p_ve`` for every sample; accepts an ensemble or a single model."""
    if isinstance(teacher, EnsembleModel):
        return teacher.predict_proba(x, batch_size)
    return teacher.predict_proba(x, batch_size).astype(np.float64)


def distill_train(
    teacher,
    cfg: DistillConfig,
    train_set,
    val_set,
    seed: int = 0,
    teacher_probs: np.ndarray | None = None,
) -> tuple[Resnet1d, TrainHistory]:
    """Fit a fresh student on the distillation loss; the teacher is only read.

    Teacher outputs are computed once up front (or passed in as
    ``teacher_probs``), so no gradient ever reaches the teacher. Early stopping
    follows the student's validation accuracy on hard labels.
    """
    x, y = as_arrays(train_set)
    p_ve = teacher_probabilities(teacher, x) if teacher_probs is None else np.asarray(teacher_probs)
    if p_ve.shape != (len(x), cfg.student_config.class_count):
        raise InvalidInputError("teacher probabilities do not match the training set")

    def batch_loss(logits, idx):
        loss, grad = kd_loss_and_grad(logits, p_ve[idx], y[idx], cfg.temperature, cfg.alpha, cfg.teacher_log_probs)
        n = len(idx)
        return float(loss.mean()), grad / n

    student = Resnet1d(cfg.student_config, seed=seed)
    tc = TrainConfig(**{**cfg.train_config.to_dict(), "seed": seed})
    hist = train(student, (x, y), val_set, tc, batch_loss=batch_loss)
    return student, hist
