"""Labelled word datasets: synthetic generation, splitting, scaling, archives.

Real recordings are not distributed, so :func:`generate_synthetic` produces
envelope-like word samples with class-specific burst templates, and
:func:`synthesize_trial` produces raw 10-word recordings for the DSP and
segmentation stages.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import FormatError, InvalidInputError
from .signal_processing import CHANNEL_NAMES, TimeSeries
from .word_extraction import WORD_LENGTH, WordSegment

CLASS_COUNT = 26
NATO_ALPHABET = (
    "Alfa", "Bravo", "Charlie", "Delta", "Echo", "Foxtrot", "Golf", "Hotel", "India",
    "Juliett", "Kilo", "Lima", "Mike", "November", "Oscar", "Papa", "Quebec", "Romeo",
    "Sierra", "Tango", "Uniform", "Victor", "Whiskey", "X-ray", "Yankee", "Zulu",
)
ARCHIVE_FORMAT_VERSION = 1
PACKED_MAGIC = b"KDSS"
UNLABELED = 255


@dataclass
class LabeledDataset:
    """Word samples ``x`` shaped ``(n, 1500, channels)`` with integer labels ``y``."""

    x: np.ndarray
    y: np.ndarray
    centers: Optional[np.ndarray] = None
    class_count: int = CLASS_COUNT
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float32)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 3 and not (self.x.size == 0):
            raise InvalidInputError(f"x must be (n, length, channels), got {self.x.shape}")
        if self.x.size == 0:
            self.x = self.x.reshape(0, WORD_LENGTH, len(CHANNEL_NAMES))
        if len(self.x) != len(self.y):
            raise InvalidInputError("x and y differ in length")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.class_count):
            raise InvalidInputError(f"labels must lie in [0, {self.class_count})")
        if self.centers is None:
            self.centers = np.full(len(self.y), -1, dtype=np.int64)
        self.centers = np.asarray(self.centers, dtype=np.int64)

    def __len__(self):
        return len(self.y)

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(self.x[idx], self.y[idx], self.centers[idx], self.class_count, dict(self.metadata))

    def segments(self) -> list[WordSegment]:
        return [WordSegment(self.x[i], int(self.centers[i]), int(self.y[i])) for i in range(len(self))]

    @classmethod
    def from_segments(cls, segments: Sequence[WordSegment], class_count=CLASS_COUNT, metadata=None):
        if not segments:
            return cls(np.zeros((0, WORD_LENGTH, 3)), np.zeros(0), class_count=class_count, metadata=metadata or {})
        if any(s.label is None for s in segments):
            raise InvalidInputError("every segment needs a label")
        return cls(
            np.stack([s.data for s in segments]),
            np.array([s.label for s in segments]),
            np.array([s.center for s in segments]),
            class_count,
            metadata or {},
        )


# -- synthetic generation ------------------------------------------------------


@dataclass(frozen=True)
class ClassTemplate:
    amplitudes: tuple[float, float, float]
    offset: float  # burst centre relative to the window centre, samples
    width: float  # Gaussian sigma, samples


def default_templates(class_count: int = CLASS_COUNT) -> list[ClassTemplate]:
    """Templates on a grid: amplitude triples from three levels, plus width and offset codes.

    Neighbouring classes differ in one amplitude level, so per-sample jitter
    makes them overlap; width and offset add a second, weaker cue.
    """
    levels = (0.4, 0.7, 1.0)
    widths = (110.0, 170.0, 250.0)
    offsets = (-120.0, 0.0, 120.0)
    out = []
    for c in range(class_count):
        a = (levels[c % 3], levels[(c // 3) % 3], levels[(c // 9) % 3])
        out.append(ClassTemplate(a, offsets[(c * 2) % 3], widths[(c + c // 9) % 3]))
    return out


@dataclass(frozen=True)
class GeneratorConfig:
    samples_per_class: int = 150
    class_count: int = CLASS_COUNT
    noise_std: float = 0.25
    amplitude_jitter: float = 0.15  # per-channel relative gain spread
    gain_jitter: float = 0.2  # shared log-normal gain (subject/session scale)
    time_jitter: float = 60.0  # burst centre spread, samples
    seed: int = 0
    length: int = WORD_LENGTH
    templates: Optional[tuple] = None

    def __post_init__(self):
        if self.noise_std < 0 or self.amplitude_jitter < 0 or self.gain_jitter < 0 or self.time_jitter < 0:
            raise InvalidInputError("noise and jitter parameters must be non-negative")
        if self.samples_per_class < 0 or self.class_count < 1:
            raise InvalidInputError("need samples_per_class >= 0 and class_count >= 1")
        if self.templates is None:
            object.__setattr__(self, "templates", tuple(default_templates(self.class_count)))
        if len(self.templates) != self.class_count:
            raise InvalidInputError("one template per class required")
        for t in self.templates:
            if min(t.amplitudes) < 0 or t.width <= 0:
                raise InvalidInputError("template amplitudes must be >= 0 and widths > 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["templates"] = [asdict(t) for t in self.templates]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        d = dict(d)
        if d.get("templates") is not None:
            d["templates"] = tuple(
                ClassTemplate(tuple(t["amplitudes"]), t["offset"], t["width"]) for t in d["templates"]
            )
        return cls(**d)


def template_signal(t: ClassTemplate, length: int = WORD_LENGTH, shift: float = 0.0,
                    gains=(1.0, 1.0, 1.0)) -> np.ndarray:
    n = np.arange(length)
    bump = np.exp(-0.5 * ((n - length / 2 - t.offset - shift) / t.width) ** 2)
    return bump[:, None] * (np.asarray(t.amplitudes) * np.asarray(gains))[None, :]


def generate_synthetic(cfg: GeneratorConfig = GeneratorConfig()) -> LabeledDataset:
    rng = np.random.default_rng(cfg.seed)
    n = cfg.samples_per_class * cfg.class_count
    x = np.empty((n, cfg.length, 3), dtype=np.float32)
    y = np.repeat(np.arange(cfg.class_count), cfg.samples_per_class)
    for i, label in enumerate(y):
        shared = np.exp(cfg.gain_jitter * rng.standard_normal())
        gains = shared * (1.0 + cfg.amplitude_jitter * rng.standard_normal(3))
        shift = cfg.time_jitter * rng.standard_normal()
        clean = template_signal(cfg.templates[label], cfg.length, shift, gains)
        x[i] = clean + cfg.noise_std * rng.standard_normal(clean.shape)
    centers = np.full(n, cfg.length // 2, dtype=np.int64)
    return LabeledDataset(x, y, centers, cfg.class_count, {"generator": cfg.to_dict()})


def synthesize_trial(
    rng: np.random.Generator,
    n_words: int = 10,
    spacing: int = 4000,
    lead: int = 2500,
    burst_sigma: float = 400.0,  # +-2 sigma spans about one 1500-sample word window
    amplitudes=(1.0, 0.8, 0.6),
    noise_floor: float = 0.05,
    drift: float = 0.5,
    sample_rate: float = 1000.0,
    present: Optional[Sequence[bool]] = None,
) -> tuple[TimeSeries, np.ndarray]:
    """Raw 3-channel recording of ``n_words`` bursts; returns the signal and the burst centres.

    Each channel is broadband Gaussian noise modulated by a Gaussian envelope
    around every word centre, plus a DC offset and a slow drift standing in for
    movement artefacts. ``present[i] = False`` leaves word ``i`` silent.
    """
    length = lead * 2 + spacing * (n_words - 1)
    t = np.arange(length)
    centers = lead + spacing * np.arange(n_words) + rng.integers(-200, 201, n_words)
    present = [True] * n_words if present is None else list(present)
    env = np.full((length, 3), noise_floor)
    for c, on in zip(centers, present):
        if not on:
            continue
        bump = np.exp(-0.5 * ((t - c) / burst_sigma) ** 2)
        word_gain = rng.uniform(0.8, 1.2)
        env += bump[:, None] * (np.asarray(amplitudes) * word_gain)[None, :]
    carrier = rng.standard_normal((length, 3))
    phase = rng.uniform(0, 2 * np.pi, 3)
    slow = drift * np.sin(2 * np.pi * 0.3 * t[:, None] / sample_rate + phase[None, :])
    raw = env * carrier + slow + rng.uniform(-1, 1, 3)[None, :]
    return TimeSeries(raw, sample_rate), np.asarray(centers, dtype=np.int64)


# -- splitting and scaling -----------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[int, int, int] = (4, 1, 1)
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if len(self.ratios) != 3 or min(self.ratios) <= 0:
            raise InvalidInputError("ratios must be three positive numbers")


def split_indices(y: np.ndarray, spec: SplitSpec = SplitSpec(), class_count: Optional[int] = None):
    """Train/val/test index arrays; val and test get floor shares, train the rest."""
    y = np.asarray(y)
    rng = np.random.default_rng(spec.seed)
    total = sum(spec.ratios)
    groups = range(class_count if class_count is not None else int(y.max()) + 1) if spec.stratified else [None]
    parts: list[list[np.ndarray]] = [[], [], []]
    for c in groups:
        idx = np.flatnonzero(y == c) if c is not None else np.arange(len(y))
        if idx.size == 0:
            raise InvalidInputError(f"class {c} has no samples")
        idx = rng.permutation(idx)
        n_val = idx.size * spec.ratios[1] // total
        n_test = idx.size * spec.ratios[2] // total
        n_train = idx.size - n_val - n_test
        parts[0].append(idx[:n_train])
        parts[1].append(idx[n_train : n_train + n_val])
        parts[2].append(idx[n_train + n_val :])
    return tuple(np.sort(np.concatenate(p)) for p in parts)


def split(ds: LabeledDataset, spec: SplitSpec = SplitSpec()):
    """Stratified ``(train, val, test)`` partition of ``ds``."""
    if len(ds) == 0:
        raise InvalidInputError("cannot split an empty dataset")
    tr, va, te = split_indices(ds.y, spec, ds.class_count if spec.stratified else None)
    return ds.subset(tr), ds.subset(va), ds.subset(te)


@dataclass(frozen=True)
class ScalerParams:
    mean: tuple
    std: tuple

    @classmethod
    def fit(cls, ds: LabeledDataset, floor: float = 1e-8) -> "ScalerParams":
        if len(ds) == 0:
            raise InvalidInputError("cannot fit a scaler on an empty set")
        flat = ds.x.reshape(-1, ds.x.shape[-1]).astype(np.float64)
        return cls(tuple(flat.mean(axis=0).tolist()), tuple(np.maximum(flat.std(axis=0), floor).tolist()))

    def transform(self, x: np.ndarray) -> np.ndarray:
        return ((np.asarray(x, dtype=np.float64) - np.array(self.mean)) / np.array(self.std)).astype(np.float32)

    def apply(self, ds: LabeledDataset) -> LabeledDataset:
        return LabeledDataset(self.transform(ds.x), ds.y.copy(), ds.centers.copy(), ds.class_count, dict(ds.metadata))

    def to_dict(self):
        return {"mean": list(self.mean), "std": list(self.std)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["mean"]), tuple(d["std"]))


def standardize(train: LabeledDataset, *others: LabeledDataset):
    """Per-channel z-scoring with statistics from ``train`` only.

    Returns ``([train, *others] scaled, params)``.
    """
    params = ScalerParams.fit(train)
    return [params.apply(d) for d in (train, *others)], params


# -- archives ------------------------------------------------------------------


def save_dataset(ds: LabeledDataset, path):
    """``*.kdss`` -> packed binary; anything else -> directory of CSVs plus ``manifest.json``."""
    p = Path(path)
    if p.suffix == ".kdss":
        _save_packed(ds, p)
    else:
        _save_directory(ds, p)


def load_dataset(path) -> LabeledDataset:
    p = Path(path)
    if p.is_dir():
        return _load_directory(p)
    if p.is_file():
        return _load_packed(p)
    raise FileNotFoundError(f"dataset not found: {p}")


def _save_packed(ds: LabeledDataset, p: Path):
    if len(ds) and ds.x.shape[1:] != (WORD_LENGTH, 3):
        raise InvalidInputError("packed archives hold 1500x3 segments only")
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("wb") as fh:
        fh.write(PACKED_MAGIC)
        fh.write(struct.pack("<II", ARCHIVE_FORMAT_VERSION, len(ds)))
        fh.write(np.ascontiguousarray(ds.x, dtype="<f4").tobytes())
        fh.write(ds.y.astype(np.uint8).tobytes())


def _load_packed(p: Path) -> LabeledDataset:
    raw = p.read_bytes()
    if len(raw) < 12 or raw[:4] != PACKED_MAGIC:
        raise FormatError(f"{p}: bad magic, not a packed dataset")
    version, count = struct.unpack("<II", raw[4:12])
    if version != ARCHIVE_FORMAT_VERSION:
        raise FormatError(f"{p}: unsupported version {version}")
    n_vals = count * WORD_LENGTH * 3
    expected = 12 + 4 * n_vals + count
    if len(raw) != expected:
        raise FormatError(f"{p}: expected {expected} bytes for {count} segments, found {len(raw)}")
    x = np.frombuffer(raw, dtype="<f4", count=n_vals, offset=12).reshape(count, WORD_LENGTH, 3)
    y = np.frombuffer(raw, dtype=np.uint8, count=count, offset=12 + 4 * n_vals).astype(np.int64)
    if count and y.max() == UNLABELED:
        raise FormatError(f"{p}: unlabeled segments cannot form a labelled dataset")
    return LabeledDataset(x.astype(np.float32), y)


def _save_directory(ds: LabeledDataset, p: Path):
    p.mkdir(parents=True, exist_ok=True)
    files = []
    header = "sample," + ",".join(CHANNEL_NAMES[: ds.x.shape[2]] if ds.x.shape[2] <= 3 else
                                  [f"ch{i}" for i in range(ds.x.shape[2])])
    for i in range(len(ds)):
        name = f"segment_{i:05d}.csv"
        body = np.column_stack([np.arange(ds.x.shape[1]), ds.x[i]])
        # float32 -> shortest repr that round-trips
        lines = [header] + [f"{int(r[0])}," + ",".join(repr(float(np.float32(v))) for v in r[1:]) for r in body]
        (p / name).write_text("\n".join(lines) + "\n")
        files.append(name)
    manifest = {
        "format_version": ARCHIVE_FORMAT_VERSION,
        "class_count": ds.class_count,
        "segments": [
            {"file": f, "label": int(ds.y[i]), "center": int(ds.centers[i])} for i, f in enumerate(files)
        ],
        "metadata": ds.metadata,
    }
    (p / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def _load_directory(p: Path) -> LabeledDataset:
    mpath = p / "manifest.json"
    if not mpath.is_file():
        raise FormatError(f"{p}: missing manifest.json")
    try:
        manifest = json.loads(mpath.read_text())
        if manifest["format_version"] != ARCHIVE_FORMAT_VERSION:
            raise FormatError(f"{p}: unsupported archive version {manifest['format_version']}")
        entries = manifest["segments"]
        class_count = int(manifest["class_count"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{p}: malformed manifest ({exc})") from exc
    xs = []
    for e in entries:
        f = p / e["file"]
        try:
            lines = f.read_text().strip().splitlines()
            if not lines[0].startswith("sample,"):
                raise FormatError(f"{f}: bad header")
            xs.append(np.array([[float(v) for v in ln.split(",")[1:]] for ln in lines[1:]], dtype=np.float32))
        except (OSError, ValueError, IndexError) as exc:
            raise FormatError(f"{f}: unreadable segment ({exc})") from exc
    if xs and len({a.shape for a in xs}) != 1:
        raise FormatError(f"{p}: segments differ in shape")
    x = np.stack(xs) if xs else np.zeros((0, WORD_LENGTH, 3), dtype=np.float32)
    return LabeledDataset(
        x,
        np.array([e["label"] for e in entries], dtype=np.int64),
        np.array([e.get("center", -1) for e in entries], dtype=np.int64),
        class_count,
        manifest.get("metadata", {}),
    )
