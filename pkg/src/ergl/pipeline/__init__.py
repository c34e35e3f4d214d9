"""Data ingestion, training, evaluation, checkpoints and synthetic data."""

from .checkpoint import Checkpoint, checkpoint_io, load_checkpoint, save_checkpoint
from .config import TrainConfig, load_config
from .data import DatasetManifest, ManifestEntry, load_dataset, read_manifest, split_train_val
from .synth import synth_data
from .train import Dataset, EvalResult, Prediction, evaluate, predict, sweep, train

__all__ = [
    "Checkpoint",
    "Dataset",
    "DatasetManifest",
    "EvalResult",
    "ManifestEntry",
    "Prediction",
    "TrainConfig",
    "checkpoint_io",
    "evaluate",
    "load_checkpoint",
    "load_config",
    "load_dataset",
    "predict",
    "read_manifest",
    "save_checkpoint",
    "split_train_val",
    "sweep",
    "synth_data",
    "train",
]
