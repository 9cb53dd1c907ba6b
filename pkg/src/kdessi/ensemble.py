"""Soft-voting ensemble of independently trained ResNet1D estimators."""
from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import FormatError, InvalidInputError
from .nn.resnet import TEACHER_CONFIG, Resnet1d, Resnet1dConfig
from .nn.serialize import load_model, save_model
from .nn.training import TrainConfig, TrainHistory, train

ENSEMBLE_MANIFEST = "ensemble.json"


def worker_count() -> int:
    """Parallel job cap from ``KDE_SSI_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("KDE_SSI_THREADS", "1")))
    except ValueError:
        return 1


class EnsembleModel:
    """Estimators with non-negative voting weights normalised to sum to one."""

    def __init__(self, estimators: Sequence[Resnet1d], weights: Optional[Sequence[float]] = None):
        if len(estimators) < 1:
            raise InvalidInputError("an ensemble needs at least one estimator")
        w = np.ones(len(estimators)) if weights is None else np.asarray(weights, dtype=np.float64)
        if w.shape != (len(estimators),) or np.any(w < 0) or w.sum() <= 0:
            raise InvalidInputError("weights must be non-negative, one per estimator, and not all zero")
        self.estimators = list(estimators)
        self.weights = w / w.sum()

    def __len__(self):
        return len(self.estimators)

    def parameter_count(self) -> int:
        return sum(m.parameter_count() for m in self.estimators)

    def member_probabilities(self, x, batch_size=256) -> np.ndarray:
        """``(N, B, classes)`` softmax outputs of every estimator."""
        return np.stack([m.predict_proba(x, batch_size) for m in self.estimators])

    def predict_proba(self, x, batch_size=256) -> np.ndarray:
        return soft_vote(self.member_probabilities(x, batch_size), self.weights)

    def predict(self, x, batch_size=256):
        return predict(self, x, batch_size)


def soft_vote(probs, weights=None) -> np.ndarray:
    """Weighted average of per-estimator distributions along axis 0."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim < 2:
        raise InvalidInputError("soft_vote expects an (N, ..., classes) stack")
    n = probs.shape[0]
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise InvalidInputError(f"{n} distributions but {w.size} weights")
    if np.any(w < 0) or w.sum() <= 0:
        raise InvalidInputError("weights must be non-negative and not all zero")
    w = w / w.sum()
    return np.tensordot(w, probs, axes=1)


def predict(ensemble: EnsembleModel, x, batch_size=256):
    """``(p_ve, y_hat)``; argmax ties resolve to the lowest class index."""
    p_ve = ensemble.predict_proba(x, batch_size)
    return p_ve, np.argmax(p_ve, axis=-1)


def _train_member(args):
    config, seed, train_set, val_set, cfg = args
    model = Resnet1d(config, seed=seed)
    hist = train(model, train_set, val_set, TrainConfig(**{**cfg.to_dict(), "seed": seed}))
    return model, hist


def train_ensemble(
    n: int,
    train_set,
    val_set,
    cfg: TrainConfig = TrainConfig(),
    base_seed: int = 0,
    model_config: Resnet1dConfig = TEACHER_CONFIG,
    workers: Optional[int] = None,
) -> tuple[EnsembleModel, list[TrainHistory]]:
    """Train ``n`` estimators on the same data with seeds ``base_seed + i``.

    The seed drives both initialisation and batch order of member ``i``.
    Members are independent, so they may train in parallel worker processes.
    """
    if n < 1:
        raise InvalidInputError("ensemble size must be >= 1")
    jobs = [(model_config, base_seed + i, train_set, val_set, cfg) for i in range(n)]
    workers = worker_count() if workers is None else workers
    if workers > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=min(workers, n)) as pool:
            results = list(pool.map(_train_member, jobs))
    else:
        results = [_train_member(j) for j in jobs]
    models = [m for m, _ in results]
    return EnsembleModel(models), [h for _, h in results]


def save_ensemble(ensemble: EnsembleModel, directory, metadata: Optional[dict] = None):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    members = []
    for i, m in enumerate(ensemble.estimators):
        name = f"member_{i:02d}.kdsm"
        save_model(m, d / name, metadata)
        members.append(name)
    manifest = {"n": len(ensemble), "weights": ensemble.weights.tolist(), "members": members,
                "metadata": metadata or {}}
    (d / ENSEMBLE_MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_ensemble(directory) -> tuple[EnsembleModel, dict]:
    d = Path(directory)
    mpath = d / ENSEMBLE_MANIFEST
    if not mpath.is_file():
        raise FileNotFoundError(f"ensemble manifest not found: {mpath}")
    try:
        manifest = json.loads(mpath.read_text())
        members = manifest["members"]
        weights = manifest["weights"]
        if manifest["n"] != len(members):
            raise FormatError(f"{mpath}: n={manifest['n']} but {len(members)} members listed")
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{mpath}: malformed manifest ({exc})") from exc
    models = [load_model(d / name)[0] for name in members]
    return EnsembleModel(models, weights), manifest.get("metadata", {})
