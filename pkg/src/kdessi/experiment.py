"""Experiment orchestration: the (N, T) accuracy grid and latency benchmarks."""
from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .dataset import LabeledDataset, SplitSpec, split, standardize
from .distillation import DistillConfig, distill_train
from .ensemble import EnsembleModel, soft_vote, train_ensemble, worker_count
from .errors import InvalidInputError
from .metrics import compute_metrics
from .nn.resnet import STUDENT_CONFIG, TEACHER_CONFIG, Resnet1dConfig
from .nn.training import TrainConfig

REPORT_VERSION = 1


@dataclass(frozen=True)
class GridConfig:
    n_grid: tuple = (4, 6, 8, 10)
    t_grid: tuple = (5.0, 10.0)
    seeds: tuple = (1, 2, 3)
    alpha: float = 0.5
    teacher_log_probs: bool = False
    # also distill with the other teacher-softening mode and record it beside each cell
    compare_kd_modes: bool = False
    teacher_config: Resnet1dConfig = TEACHER_CONFIG
    student_config: Resnet1dConfig = STUDENT_CONFIG
    train_config: TrainConfig = field(default_factory=TrainConfig)
    student_train_config: Optional[TrainConfig] = None
    split_ratios: tuple = (4, 1, 1)

    def __post_init__(self):
        if not self.n_grid or min(self.n_grid) < 1:
            raise InvalidInputError("n_grid needs positive ensemble sizes")
        if not self.t_grid or min(self.t_grid) <= 0:
            raise InvalidInputError("t_grid needs positive temperatures")
        if not self.seeds:
            raise InvalidInputError("at least one seed is required")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["teacher_config"] = self.teacher_config.to_dict()
        d["student_config"] = self.student_config.to_dict()
        d["train_config"] = self.train_config.to_dict()
        d["student_train_config"] = None if self.student_train_config is None else self.student_train_config.to_dict()
        for k in ("n_grid", "t_grid", "seeds", "split_ratios"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GridConfig":
        d = dict(d)
        for k in ("teacher_config", "student_config"):
            if k in d:
                d[k] = Resnet1dConfig.from_dict(d[k])
        for k in ("train_config", "student_train_config"):
            if d.get(k) is not None:
                d[k] = TrainConfig(**d[k])
        for k in ("n_grid", "t_grid", "seeds", "split_ratios"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


def column_name(t: float) -> str:
    return f"T={t:g}"


def student_seed(seed: int, n: int, t: float, log_probs: bool) -> int:
    return seed * 100_000 + n * 1000 + int(round(t * 10)) * 2 + int(log_probs)


def _macro(y, pred) -> dict:
    m = compute_metrics(y, pred)
    return {"accuracy": m.accuracy, "macro_precision": m.macro_precision,
            "macro_recall": m.macro_recall, "macro_f1": m.macro_f1}


def _distill_job(args):
    seed, n, t, log_probs, p_ve, train_xy, val_xy, test_xy, cfg = args
    dcfg = DistillConfig(cfg.alpha, t, log_probs, cfg.student_config, cfg.student_train_config or cfg.train_config)
    student, hist = distill_train(None, dcfg, train_xy, val_xy, seed=student_seed(seed, n, t, log_probs),
                                  teacher_probs=p_ve)
    pred = np.argmax(student.predict_logits(test_xy[0]), axis=1)
    return {"metrics": _macro(test_xy[1], pred), "epochs": hist.epochs_run, "best_epoch": hist.best_epoch}


def _run_seed(data: LabeledDataset, seed: int, cfg: GridConfig, workers: int) -> dict:
    tr, va, te = split(data, SplitSpec(cfg.split_ratios, seed=seed))
    (tr, va, te), _ = standardize(tr, va, te)
    n_max = max(cfg.n_grid)
    # ensembles of each size share members: the size-N teacher is the first N
    pool, hists = train_ensemble(n_max, tr, va, cfg.train_config, base_seed=seed * 1000,
                                 model_config=cfg.teacher_config, workers=workers)
    train_probs = pool.member_probabilities(tr.x)
    test_probs = pool.member_probabilities(te.x)

    members = [_macro(te.y, np.argmax(p, axis=1)) for p in test_probs]
    out = {
        "seed": seed,
        "single": {"accuracy_mean": float(np.mean([m["accuracy"] for m in members])), "members": members,
                   "epochs": [h.epochs_run for h in hists]},
        "ensembles": {},
    }
    jobs, keys = [], []
    modes = [cfg.teacher_log_probs] + ([not cfg.teacher_log_probs] if cfg.compare_kd_modes else [])
    for n in sorted(cfg.n_grid):
        p_test = soft_vote(test_probs[:n])
        out["ensembles"][str(n)] = {"VE": _macro(te.y, np.argmax(p_test, axis=1))}
        p_train = soft_vote(train_probs[:n])
        for t in cfg.t_grid:
            for lp in modes:
                jobs.append((seed, n, t, lp, p_train, (tr.x, tr.y), (va.x, va.y), (te.x, te.y), cfg))
                keys.append((n, t, lp))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            results = list(ex.map(_distill_job, jobs))
    else:
        results = [_distill_job(j) for j in jobs]
    for (n, t, lp), res in zip(keys, results):
        cell = out["ensembles"][str(n)]
        key = column_name(t) if lp == cfg.teacher_log_probs else column_name(t) + ("/log-probs" if lp else "/literal")
        cell[key] = res["metrics"]
    return out


def _mean_sd(values) -> dict:
    v = np.asarray(values, dtype=np.float64)
    return {"mean": float(v.mean()), "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0, "values": v.tolist()}


def run_experiment_grid(data: LabeledDataset, cfg: GridConfig = GridConfig(), workers: Optional[int] = None) -> dict:
    """Accuracy table with one row per ensemble size and columns VE, T=t...

    Per seed the data is split 4:1:1 with that seed, ``max(N)`` teacher members
    are trained once and each size-N teacher is their first N. Each cell holds
    the test accuracy mean and sample sd across seeds. No wall-clock values are
    included, so fixed seeds give a byte-identical report.
    """
    if len(data) == 0:
        raise InvalidInputError("dataset is empty")
    workers = worker_count() if workers is None else workers
    runs = [_run_seed(data, s, cfg, workers) for s in cfg.seeds]
    columns = ["VE"] + [column_name(t) for t in cfg.t_grid]
    seen = {k for r in runs for e in r["ensembles"].values() for k in e}
    extra = [c + suffix for c in columns[1:] for suffix in ("/literal", "/log-probs") if c + suffix in seen]
    grid = []
    for n in sorted(cfg.n_grid):
        row = {"N": n}
        for col in columns + extra:
            row[col] = _mean_sd([r["ensembles"][str(n)][col]["accuracy"] for r in runs])
        grid.append(row)
    return {
        "version": REPORT_VERSION,
        "config": cfg.to_dict(),
        "seeds": list(cfg.seeds),
        "columns": columns + extra,
        "single": _mean_sd([r["single"]["accuracy_mean"] for r in runs]),
        "grid": grid,
        "runs": runs,
    }


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def report_to_csv(report: dict) -> str:
    """Flat ``N,column,seed,accuracy,macro_f1`` rows for plotting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["N", "column", "seed", "accuracy", "macro_f1"])
    for run in report["runs"]:
        for n, cell in sorted(run["ensembles"].items(), key=lambda kv: int(kv[0])):
            for col in report["columns"]:
                m = cell[col]
                w.writerow([n, col, run["seed"], repr(m["accuracy"]), repr(m["macro_f1"])])
    return buf.getvalue()


def write_report(report: dict, out_dir) -> tuple[Path, Path]:
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    jp, cp = d / "report.json", d / "report.csv"
    jp.write_text(report_to_json(report))
    cp.write_text(report_to_csv(report))
    return jp, cp


# -- latency -------------------------------------------------------------------


@dataclass(frozen=True)
class LatencyResult:
    mean: float  # seconds per sample
    sd: float
    repetitions: int
    batch_size: int

    def to_dict(self):
        return asdict(self)


def measure_latency(model, batch: np.ndarray, repetitions: int = 30, warmup: int = 10) -> LatencyResult:
    """Per-sample inference time of ``model.predict_proba`` on ``batch``, single-threaded.

    Works for a single network or an ensemble. Each repetition times one pass
    over the whole batch; the per-sample figure divides by the batch size.
    """
    if repetitions < 2:
        raise InvalidInputError("need at least two repetitions for an sd")
    batch = np.asarray(batch, dtype=np.float32)
    if batch.ndim == 2:
        batch = batch[None]
    n = len(batch)
    times = np.empty(repetitions)
    with threadpool_limits(limits=1):
        for _ in range(max(warmup, 10)):
            model.predict_proba(batch)
        for i in range(repetitions):
            t0 = time.perf_counter()
            model.predict_proba(batch)
            times[i] = (time.perf_counter() - t0) / n
    return LatencyResult(float(times.mean()), float(times.std(ddof=1)), repetitions, n)


def parameter_report(teacher: EnsembleModel, student) -> dict:
    t, s = teacher.parameter_count(), student.parameter_count()
    return {"teacher_parameters": t, "student_parameters": s, "ratio": t / s}


def benchmark(teacher: EnsembleModel, student, batch: np.ndarray, repetitions: int = 30) -> dict:
    lt = measure_latency(teacher, batch, repetitions)
    ls = measure_latency(student, batch, repetitions)
    return {
        "teacher": lt.to_dict(),
        "student": ls.to_dict(),
        "speedup": lt.mean / ls.mean,
        **parameter_report(teacher, student),
    }


def summarize(report: dict, columns: Sequence[str] | None = None) -> str:
    """Plain-text table of grid means +- sd, in percent."""
    cols = list(columns or report["columns"])
    lines = ["N    " + "".join(f"{c:>22}" for c in cols)]
    for row in report["grid"]:
        cells = "".join(f"{100 * row[c]['mean']:>14.1f} +- {100 * row[c]['sd']:4.1f}" for c in cols)
        lines.append(f"{row['N']:<5}{cells}")
    s = report["single"]
    lines.append(f"single {100 * s['mean']:.1f} +- {100 * s['sd']:.1f}")
    return "\n".join(lines)
