"""Training loop, evaluation, prediction and parameter sweeps."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..encoder import PseudoLabelTable, rank_top_n
from ..errors import ConfigurationError, InputError, NonFiniteError
from ..features import load_input
from ..model import ERGL, ModelConfig
from ..numerics import functional as F
from ..numerics.optim import AdamW
from ..numerics.tensor import GradTape, Tensor
from .checkpoint import Checkpoint, save_checkpoint
from .config import TrainConfig
from .data import DatasetManifest, FeatureStore, load_dataset, split_train_val

log = logging.getLogger(__name__)

METRICS_HEADER = ["epoch", "train_loss", "event_loss", "scene_loss", "val_acc_macro", "val_acc_overall"]


@dataclass
class Dataset:
    manifest: DatasetManifest
    table: Optional[PseudoLabelTable] = None  # only training needs pseudo-labels
    features: Optional[FeatureStore] = None

    def __post_init__(self):
        if self.features is None:
            self.features = FeatureStore(self.manifest)

    @classmethod
    def load(cls, manifest_path, labels_path) -> "Dataset":
        manifest, table = load_dataset(manifest_path, labels_path)
        return cls(manifest, table)

    def scene_index(self, clip_ids: Sequence[str], vocab: Sequence[str]) -> np.ndarray:
        lookup = {s: i for i, s in enumerate(vocab)}
        scenes = [self.manifest.entry(c).scene for c in clip_ids]
        unseen = sorted({s for s in scenes if s not in lookup})
        if unseen:
            raise InputError(f"scene label(s) not known to the model: {', '.join(unseen)}")
        return np.array([lookup[s] for s in scenes], dtype=np.int64)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    event_loss: float
    scene_loss: float
    val_acc_macro: float
    val_acc_overall: float

    def __post_init__(self):
        for k in METRICS_HEADER[1:]:
            setattr(self, k, float(getattr(self, k)))

    def row(self) -> List[str]:
        return [str(self.epoch)] + [repr(getattr(self, k)) for k in METRICS_HEADER[1:]]


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    metrics: List[EpochMetrics]
    model: ERGL
    train_ids: List[str]
    val_ids: List[str]


@dataclass
class EvalResult:
    per_class: Dict[str, float]
    macro: float
    overall: float
    predictions: Dict[str, str] = field(default_factory=dict)
    confusion: Optional[np.ndarray] = None


def make_batches(order: np.ndarray, batch_size: int) -> List[np.ndarray]:
    """Split ``order`` into batches, keeping the last partial batch.

    A trailing batch of a single clip is folded into the previous one
    because training-mode batch norm needs at least two samples.
    """
    batches = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        last = batches.pop()
        batches[-1] = np.concatenate([batches[-1], last])
    return batches


def build_model(config: TrainConfig, event_ids: Sequence[int], n_scenes: int, rng: np.random.Generator) -> ERGL:
    return ERGL(config.model_config(n_scenes), event_ids, rng)


def predict_logits(model: ERGL, spec: np.ndarray, batch_size: int = 64) -> Tuple[np.ndarray, np.ndarray]:
    """Eval-mode logits and event probabilities for a stack of spectrograms."""
    was_training = model.training
    model.eval()
    logits, probs = [], []
    for i in range(0, len(spec), batch_size):
        out = model(Tensor(spec[i : i + batch_size]))
        logits.append(out.logits.data)
        probs.append(out.nodes.probabilities.data)
    model.train(was_training)
    return np.concatenate(logits), np.concatenate(probs)


def class_accuracies(y_true: np.ndarray, y_pred: np.ndarray, vocab: Sequence[str]) -> EvalResult:
    """Per-class accuracy, class-average (macro) and overall accuracy.

    Classes absent from ``y_true`` are left out of the macro average.
    """
    k = len(vocab)
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (y_true, y_pred), 1)
    per_class = {}
    for i, name in enumerate(vocab):
        total = confusion[i].sum()
        if total:
            per_class[name] = float(confusion[i, i] / total)
    macro = float(np.mean(list(per_class.values()))) if per_class else 0.0
    overall = float(np.trace(confusion) / max(len(y_true), 1))
    return EvalResult(per_class, macro, overall, confusion=confusion)


def evaluate_model(model: ERGL, dataset: Dataset, clip_ids: Sequence[str], scene_vocab: Sequence[str]) -> EvalResult:
    clip_ids = list(clip_ids)
    y_true = dataset.scene_index(clip_ids, scene_vocab)
    logits, _ = predict_logits(model, dataset.features.batch(clip_ids))
    y_pred = logits.argmax(axis=1)
    result = class_accuracies(y_true, y_pred, scene_vocab)
    result.predictions = {c: scene_vocab[p] for c, p in zip(clip_ids, y_pred)}
    return result


def _snapshot(model: ERGL, opt: AdamW) -> Tuple[Dict[str, np.ndarray], Dict[str, np.ndarray], int]:
    params = {k: v.copy() for k, v in model.state_dict().items()}
    names = [name for name, _ in model.named_parameters()]
    moments = {}
    for name, m, v in zip(names, opt.state.m, opt.state.v):
        moments[f"m.{name}"] = m.copy()
        moments[f"v.{name}"] = v.copy()
    return params, moments, opt.state.t


def write_metrics(path: Union[str, Path], metrics: Sequence[EpochMetrics]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for m in metrics:
            writer.writerow(m.row())


def training_split(config: TrainConfig, manifest: DatasetManifest) -> Tuple[List[str], List[str]]:
    """The (train, val) ids a run with ``config`` used. The split is the first draw from the run's generator."""
    return split_train_val(manifest, config.val_fraction, np.random.default_rng(config.seed))


def train(config: TrainConfig, dataset: Dataset, out_dir: Union[str, Path, None] = None) -> TrainResult:
    """Train one model with AdamW and keep the parameters of the best validation epoch.

    All randomness (split, initialisation, shuffling, dropout) comes from one
    generator seeded with ``config.seed``. If ``out_dir`` is given,
    ``metrics.csv`` and ``model.ckpt`` are written there.
    """
    config.validate()
    if dataset.table is None:
        raise ConfigurationError("training needs a pseudo-label table")
    rng = np.random.default_rng(config.seed)
    vocab = list(dataset.manifest.scene_vocab)
    train_ids, val_ids = split_train_val(dataset.manifest, config.val_fraction, rng)
    if len(train_ids) < 2:
        raise ConfigurationError(f"training split has {len(train_ids)} clip(s); need at least 2")
    # events are ranked on the training split only
    event_ids = rank_top_n(dataset.table, train_ids, config.n_events)
    log.info("selected events %s", [dataset.table.event_names[i] for i in event_ids])

    model = build_model(config, event_ids, len(vocab), rng)
    opt = AdamW(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)

    x_train = dataset.features.batch(train_ids)
    y_train = dataset.scene_index(train_ids, vocab)
    ev_train = dataset.table.select(train_ids, event_ids).astype(np.float32)

    metrics: List[EpochMetrics] = []
    best = None
    best_key, best_acc, best_epoch = None, -1.0, 0
    for epoch in range(1, config.epochs + 1):
        model.train()
        order = rng.permutation(len(train_ids))
        sums = np.zeros(3)
        for b_idx, batch in enumerate(make_batches(order, config.batch_size)):
            try:
                with GradTape() as tape:
                    total, scene, event, _ = model.loss(Tensor(x_train[batch]), y_train[batch], ev_train[batch])
            except NonFiniteError as exc:
                raise NonFiniteError(f"epoch {epoch}, batch {b_idx}: {exc}") from None
            tape.backward(total)
            opt.step()
            opt.zero_grad()
            sums += len(batch) * np.array([total.item(), event.item(), scene.item()])
        sums /= len(train_ids)
        val = evaluate_model(model, dataset, val_ids, vocab)
        metrics.append(EpochMetrics(epoch, sums[0], sums[1], sums[2], val.macro, val.overall))
        log.info("epoch %d loss %.4f val macro %.4f", epoch, sums[0], val.macro)
        # ties in validation accuracy go to the lower training loss
        key = (val.macro, -sums[0])
        if best_key is None or key > best_key:
            best_key, best_acc, best_epoch = key, val.macro, epoch
            best = _snapshot(model, opt)

    params, moments, step = best
    model.load_state_dict(params)
    model.eval()
    ckpt = Checkpoint(
        config=config.to_dict(),
        event_ids=list(event_ids),
        event_names=[dataset.table.event_names[i] for i in event_ids],
        scene_vocab=vocab,
        params=params,
        optimizer={
            "t": step,
            "lr": opt.state.lr,
            "beta1": opt.state.beta1,
            "beta2": opt.state.beta2,
            "eps": opt.state.eps,
            "weight_decay": opt.state.weight_decay,
        },
        optimizer_moments=moments,
        best_val_acc=best_acc,
        best_epoch=best_epoch,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_metrics(out / "metrics.csv", metrics)
        save_checkpoint(out / "model.ckpt", ckpt)
    return TrainResult(ckpt, metrics, model, train_ids, val_ids)


def model_from_checkpoint(ckpt: Checkpoint) -> ERGL:
    config = TrainConfig.from_dict(ckpt.config)
    model = build_model(config, ckpt.event_ids, len(ckpt.scene_vocab), np.random.default_rng(0))
    model.load_state_dict(ckpt.params)
    return model.eval()


def evaluate(ckpt: Checkpoint, dataset: Dataset, clip_ids: Optional[Sequence[str]] = None) -> EvalResult:
    """Per-class, class-average and overall accuracy of a checkpoint on manifest clips."""
    model = model_from_checkpoint(ckpt)
    ids = dataset.manifest.clip_ids if clip_ids is None else list(clip_ids)
    return evaluate_model(model, dataset, ids, ckpt.scene_vocab)


@dataclass
class Prediction:
    scene: str
    logits: np.ndarray
    scene_scores: Dict[str, float]
    event_probabilities: Dict[str, float]


def predict(ckpt: Checkpoint, path: Union[str, Path], model: Optional[ERGL] = None) -> Prediction:
    """Eval-mode inference on one WAV or cached feature file."""
    model = model if model is not None else model_from_checkpoint(ckpt)
    spec = load_input(path).values[None].astype(np.float32)
    logits, probs = predict_logits(model, spec)
    scores = F.softmax(Tensor(logits[0].astype(np.float64))).data
    return Prediction(
        scene=ckpt.scene_vocab[int(logits[0].argmax())],
        logits=logits[0],
        scene_scores={s: float(p) for s, p in zip(ckpt.scene_vocab, scores)},
        event_probabilities={n: float(p) for n, p in zip(ckpt.event_names, probs[0])},
    )


def sweep(
    base: TrainConfig,
    dataset: Dataset,
    out_dir: Union[str, Path],
    n_values: Sequence[int] = (),
    u_values: Sequence[int] = (),
) -> Dict[Tuple[int, int], TrainResult]:
    """Train one model per (n_events, u_layers) setting, each in its own sub-directory."""
    n_values = list(n_values) or [base.n_events]
    u_values = list(u_values) or [base.u_layers]
    results = {}
    for n in n_values:
        for u in u_values:
            cfg = base.replace(n_events=n, u_layers=u)
            results[(n, u)] = train(cfg, dataset, Path(out_dir) / f"n{n}_u{u}")
    return results
