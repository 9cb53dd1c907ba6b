"""Silent-speech word classification from three-channel facial sEMG.

Signal chain, word segmentation, a numpy ResNet1D, soft-voting ensembles and
temperature distillation into a compact student.
"""
from .dataset import GeneratorConfig, LabeledDataset, generate_synthetic, load_dataset, save_dataset
from .distillation import DistillConfig, distill_train, kd_loss
from .ensemble import EnsembleModel, load_ensemble, predict, save_ensemble, soft_vote, train_ensemble
from .errors import FormatError, InvalidInputError
from .metrics import compute_metrics
from .signal_processing import TimeSeries, process_recording
from .word_extraction import WordSegment, extract_words

__version__ = "0.1.0"

__all__ = [
    "DistillConfig",
    "EnsembleModel",
    "FormatError",
    "GeneratorConfig",
    "InvalidInputError",
    "LabeledDataset",
    "TimeSeries",
    "WordSegment",
    "compute_metrics",
    "distill_train",
    "extract_words",
    "generate_synthetic",
    "kd_loss",
    "load_dataset",
    "load_ensemble",
    "predict",
    "process_recording",
    "save_dataset",
    "save_ensemble",
    "soft_vote",
    "train_ensemble",
]
