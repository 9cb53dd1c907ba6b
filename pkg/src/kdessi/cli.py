"""``kdessi`` command line.

Exit status: 0 on success, 1 on a usage error, 2 when input data is missing
or malformed.  Every subcommand takes ``--config <json>``; its keys mirror the
long flag names (dashes or underscores) and act as defaults that explicit
flags override.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import dataset as ds_mod
from .dataset import GeneratorConfig, LabeledDataset, ScalerParams, SplitSpec, load_dataset, save_dataset
from .distillation import DistillConfig, distill_train
from .ensemble import EnsembleModel, load_ensemble, save_ensemble, train_ensemble
from .errors import FormatError, InvalidInputError
from .experiment import GridConfig, benchmark, run_experiment_grid, summarize, write_report
from .metrics import compute_metrics
from .nn.resnet import Resnet1d, Resnet1dConfig
from .nn.serialize import load_model, save_model
from .nn.training import TrainConfig, train
from .signal_processing import (
    EnvelopeSpec,
    FilterSpec,
    TimeSeries,
    process_recording,
    read_recording_csv,
    write_recording_csv,
)
from .word_extraction import extract_words

log = logging.getLogger("kdessi")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


# -- shared option groups ------------------------------------------------------


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", type=Path, help="JSON file of option defaults")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_train_opts(p):
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--split-seed", type=int, default=0, help="seed of the 4:1:1 split")


def _add_arch_opts(p, prefix="", width=16, blocks="3,4,4,3"):
    p.add_argument(f"--{prefix}width", type=int, default=width, help="stem and first-stage channels")
    p.add_argument(f"--{prefix}blocks", type=_int_list, default=_int_list(blocks))
    p.add_argument(f"--{prefix}stem-stride", type=int, default=2)


def _arch(args, prefix="") -> Resnet1dConfig:
    g = lambda k: getattr(args, prefix.replace("-", "_") + k)  # noqa: E731
    w = g("width")
    return Resnet1dConfig(stem_channels=w, widths=(w, 2 * w, 4 * w, 8 * w), blocks=tuple(g("blocks")),
                          stem_stride=g("stem_stride"))


def _train_cfg(args) -> TrainConfig:
    return TrainConfig(max_epochs=args.epochs, batch_size=args.batch_size, patience=args.patience,
                       learning_rate=args.lr, seed=args.seed)


def _require_file(path: Path, kind="input"):
    if not Path(path).exists():
        raise FileNotFoundError(f"{kind} not found: {path}")


def _load_split(args):
    """Split the archive with ``--split-seed`` and z-score it on the train part."""
    _require_file(args.data, "dataset")
    data = load_dataset(args.data)
    tr, va, te = ds_mod.split(data, SplitSpec(seed=args.split_seed))
    (tr, va, te), scaler = ds_mod.standardize(tr, va, te)
    return (tr, va, te), scaler


def _model_meta(args, scaler: ScalerParams, **extra) -> dict:
    return {"scaler": scaler.to_dict(), "split_seed": args.split_seed, "seed": args.seed, **extra}


# -- commands ------------------------------------------------------------------


def cmd_synth_data(args):
    cfg = GeneratorConfig(samples_per_class=args.samples_per_class, noise_std=args.noise, seed=args.seed)
    data = ds_mod.generate_synthetic(cfg)
    save_dataset(data, args.out)
    print(f"wrote {len(data)} samples to {args.out}")


def cmd_process(args):
    raw, manifest = read_recording_csv(args.input)
    spec = FilterSpec(zero_phase=args.zero_phase, single_bandpass=args.single_bandpass)
    env = process_recording(raw, spec, EnvelopeSpec(args.window))
    write_recording_csv(args.out, env, manifest={k: v for k, v in manifest.items() if k != "sample_rate_hz"}
                        | {"envelope_window": args.window})
    print(f"wrote {env.length} envelope samples to {args.out}")


def cmd_extract(args):
    env, manifest = read_recording_csv(args.input)
    label = args.label if args.label is not None else manifest.get("word_label")
    if isinstance(label, str):
        label = ds_mod.NATO_ALPHABET.index(label) if label in ds_mod.NATO_ALPHABET else int(label)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        words = extract_words(env, label, args.expected)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    index = []
    for i, w in enumerate(words):
        name = f"word_{i:02d}.csv"
        write_recording_csv(out / name, TimeSeries(w.data, env.sample_rate))
        index.append({"file": name, "center": w.center, "label": w.label})
    (out / "index.json").write_text(json.dumps({"source": str(args.input), "words": index}, indent=2))
    print(f"wrote {len(words)} words to {out}")


def cmd_train(args):
    (tr, va, te), scaler = _load_split(args)
    model = Resnet1d(_arch(args), seed=args.seed)
    hist = train(model, tr, va, _train_cfg(args))
    save_model(model, args.out, _model_meta(args, scaler, best_epoch=hist.best_epoch))
    print(f"best val accuracy {hist.best_val_accuracy:.4f} (epoch {hist.best_epoch}); saved {args.out}")


def cmd_train_ensemble(args):
    (tr, va, te), scaler = _load_split(args)
    ens, hists = train_ensemble(args.n, tr, va, _train_cfg(args), base_seed=args.seed, model_config=_arch(args))
    save_ensemble(ens, args.out, _model_meta(args, scaler))
    print(f"trained {args.n} estimators; saved {args.out}")


def _load_any(path):
    """A single model file or an ensemble directory, plus its metadata."""
    p = Path(path)
    _require_file(p, "model")
    if p.is_dir():
        return load_ensemble(p)
    return load_model(p)


def cmd_distill(args):
    teacher, _ = _load_any(args.teacher)
    (tr, va, te), scaler = _load_split(args)
    cfg = DistillConfig(args.alpha, args.t, args.teacher_log_probs, _arch(args, "student-"), _train_cfg(args))
    student, hist = distill_train(teacher, cfg, tr, va, seed=args.seed)
    save_model(student, args.out, _model_meta(args, scaler, temperature=args.t, alpha=args.alpha,
                                              teacher_log_probs=args.teacher_log_probs))
    print(f"student best val accuracy {hist.best_val_accuracy:.4f}; saved {args.out}")


def cmd_evaluate(args):
    model, meta = _load_any(args.model)
    _require_file(args.data, "dataset")
    data = load_dataset(args.data)
    split_seed = args.split_seed if args.split_seed is not None else meta.get("split_seed", 0)
    if args.split != "all":
        parts = dict(zip(("train", "val", "test"), ds_mod.split(data, SplitSpec(seed=split_seed))))
        data = parts[args.split]
    if "scaler" in meta:
        data = ScalerParams.from_dict(meta["scaler"]).apply(data)
    pred = np.argmax(model.predict_proba(data.x), axis=-1)
    m = compute_metrics(data.y, pred, data.class_count)
    report = {"split": args.split, "split_seed": split_seed, "samples": len(data), **m.to_dict()}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        np.savetxt(out / "confusion.csv", m.confusion, fmt="%d", delimiter=",")
    print(f"accuracy {m.accuracy:.4f}  macro P {m.macro_precision:.4f}  R {m.macro_recall:.4f}  F1 {m.macro_f1:.4f}")


def cmd_grid(args):
    if args.data is not None:
        _require_file(args.data, "dataset")
        data = load_dataset(args.data)
    else:
        data = ds_mod.generate_synthetic(GeneratorConfig(samples_per_class=args.samples_per_class,
                                                         noise_std=args.noise, seed=args.seed))
    cfg = GridConfig(n_grid=args.n_grid, t_grid=args.t_grid, seeds=args.seeds, alpha=args.alpha,
                     teacher_log_probs=args.teacher_log_probs, compare_kd_modes=args.compare_kd_modes,
                     teacher_config=_arch(args), student_config=_arch(args, "student-"),
                     train_config=_train_cfg(args))
    report = run_experiment_grid(data, cfg)
    jp, _ = write_report(report, args.out)
    print(summarize(report))
    print(f"report: {jp}")


def cmd_bench(args):
    teacher, _ = _load_any(args.teacher)
    if not isinstance(teacher, EnsembleModel):
        teacher = EnsembleModel([teacher])
    student, _ = _load_any(args.student)
    rng = np.random.default_rng(args.seed)
    cfg = student.config
    batch = rng.standard_normal((args.batch, cfg.input_length, cfg.input_channels)).astype(np.float32)
    res = benchmark(teacher, student, batch, args.repetitions)
    text = json.dumps(res, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kdessi", description="sEMG silent-speech pipeline with ensemble distillation")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth-data", help="generate a synthetic word dataset")
    _add_common(p)
    p.add_argument("--samples-per-class", type=int, default=150)
    p.add_argument("--noise", type=float, default=GeneratorConfig.noise_std)
    p.add_argument("--out", type=Path, required=True, help="directory, or *.kdss for a packed file")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("process", help="raw recording CSV -> RMS envelope CSV")
    _add_common(p)
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--zero-phase", action="store_true")
    p.add_argument("--single-bandpass", action="store_true")
    p.add_argument("--window", type=int, default=EnvelopeSpec.window_samples)
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("extract", help="envelope CSV -> one CSV per word")
    _add_common(p)
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", "--out-dir", dest="out", type=Path, required=True)
    p.add_argument("--label", help="class index or NATO word; defaults to the manifest's word_label")
    p.add_argument("--expected", type=int, default=10)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train one ResNet1D")
    _add_common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_train_opts(p)
    _add_arch_opts(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-ensemble", help="train a soft-voting ensemble")
    _add_common(p)
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_train_opts(p)
    _add_arch_opts(p)
    p.set_defaults(func=cmd_train_ensemble)

    p = sub.add_parser("distill", help="distill an ensemble into a compact student")
    _add_common(p)
    p.add_argument("--teacher", type=Path, required=True)
    p.add_argument("--t", type=float, default=10.0)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--teacher-log-probs", action="store_true")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_train_opts(p)
    _add_arch_opts(p, "student-", width=8, blocks="1,1,1,1")
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("evaluate", help="metrics of a model or ensemble on a dataset split")
    _add_common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    p.add_argument("--split-seed", type=int, default=None, help="defaults to the seed stored with the model")
    p.add_argument("--out", type=Path, help="directory for metrics.json and confusion.csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("grid", help="ensemble size x temperature accuracy grid")
    _add_common(p)
    p.add_argument("--data", type=Path, help="archive; synthesized from --seed when omitted")
    p.add_argument("--samples-per-class", type=int, default=150)
    p.add_argument("--noise", type=float, default=GeneratorConfig.noise_std)
    p.add_argument("--seeds", type=_int_list, default=(1, 2, 3))
    p.add_argument("--n-grid", type=_int_list, default=(4, 6, 8, 10))
    p.add_argument("--t-grid", type=_float_list, default=(5.0, 10.0))
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--teacher-log-probs", action="store_true")
    p.add_argument("--compare-kd-modes", action="store_true")
    p.add_argument("--out", type=Path, required=True)
    _add_train_opts(p)
    _add_arch_opts(p)
    _add_arch_opts(p, "student-", width=8, blocks="1,1,1,1")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("bench", help="per-sample latency and size of teacher vs student")
    _add_common(p)
    p.add_argument("--teacher", type=Path, required=True)
    p.add_argument("--student", type=Path, required=True)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--repetitions", type=int, default=30)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_bench)
    return parser


def _prescan(argv):
    """``(command, config path)`` from raw argv, before any required-flag checks."""
    command = next((a for a in argv if not a.startswith("-")), None)
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            return command, argv[i + 1]
        if a.startswith("--config="):
            return command, a.split("=", 1)[1]
    return command, None


def _apply_config(parser, argv):
    """Parse ``argv`` with the ``--config`` file's entries as subcommand defaults."""
    argv = list(sys.argv[1:] if argv is None else argv)
    command, path = _prescan(argv)
    choices = parser._subparsers._group_actions[0].choices
    if path is None or command not in choices:
        return parser.parse_args(argv)
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise FileNotFoundError(f"config not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise FormatError(f"{path}: expected a JSON object")
    sub = choices[command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in cfg.items():
        dest = key.lstrip("-").replace("-", "_")
        dest = "input" if dest == "in" else dest
        if dest not in known or dest in ("config", "help"):
            sub.error(f"unknown config key {key!r} in {path}")
        action = known[dest]
        if isinstance(value, list):
            value = tuple(value)
        elif isinstance(value, str) and action.type is not None:
            value = action.type(value)
        defaults[dest] = value
    sub.set_defaults(**defaults)
    for a in sub._actions:
        if a.dest in defaults:
            a.required = False
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except SystemExit as exc:  # argparse: --help -> 0, usage errors -> 1
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except (OSError, FormatError, InvalidInputError) as exc:
        print(f"kdessi: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
