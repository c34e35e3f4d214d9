"""Audio-event node features: CNN backbone, per-event heads, event loss and top-n ranking."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, DimensionError, InputError
from .numerics import functional as F
from .numerics.nn import BatchNorm, Conv2d, Dropout, Linear, Module, parameter, xavier_uniform
from .numerics.tensor import Tensor, as_tensor, matmul

AUDIOSET_CLASSES = 527
EMBED_DIM = 64
JOINT_DIM = 2048

# conv block widths per backbone profile
BACKBONE_PROFILES: Dict[str, Tuple[int, ...]] = {
    "full": (64, 128, 256, 512),
    "test": (8,),
    "pool-only": (),
}


class ConvBlock(Module):
    """Two 3x3 conv + batch-norm + ReLU stages, then 2x2 average pooling and dropout."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, dropout: float = 0.2):
        super().__init__()
        self.conv1 = Conv2d(c_in, c_out, rng)
        self.bn1 = BatchNorm(c_out)
        self.conv2 = Conv2d(c_out, c_out, rng)
        self.bn2 = BatchNorm(c_out)
        self.drop = Dropout(dropout, rng)

    def forward(self, x):
        x = F.relu(self.bn1(self.conv1(x)))
        x = F.relu(self.bn2(self.conv2(x)))
        return self.drop(F.avg_pool2d(x, 2))


class Backbone(Module):
    """Spectrogram batch [b, frames, mel] -> joint representation [b, 2048]."""

    def __init__(
        self,
        widths: Sequence[int],
        rng: np.random.Generator,
        joint_dim: int = JOINT_DIM,
        dropout: float = 0.2,
    ):
        super().__init__()
        self.widths = tuple(widths)
        chans = (1,) + self.widths
        self.blocks = [ConvBlock(chans[i], chans[i + 1], rng, dropout) for i in range(len(self.widths))]
        self.fc = Linear(chans[-1], joint_dim, rng)

    def forward(self, spec):
        spec = as_tensor(spec)
        if spec.ndim != 3:
            raise DimensionError(f"backbone expects [batch, frames, mel] input, got {spec.shape}")
        min_extent = 2 ** len(self.blocks)
        if spec.shape[1] < min_extent or spec.shape[2] < min_extent:
            raise InputError(
                f"spectrogram {spec.shape[1]}x{spec.shape[2]} too small for {len(self.blocks)} "
                f"pooling block(s); need at least {min_extent} frames and bins"
            )
        x = spec.reshape(spec.shape[0], 1, spec.shape[1], spec.shape[2])
        for block in self.blocks:
            x = block(x)
        pooled = x.mean(axis=(2, 3))
        return F.relu(self.fc(pooled))


@dataclass
class EventNodeSet:
    embeddings: Tensor  # [b, n, 64]
    probabilities: Tensor  # [b, n]
    event_ids: List[int]

    def __post_init__(self):
        n = self.embeddings.shape[1]
        if len(self.event_ids) != n:
            raise DimensionError(f"{len(self.event_ids)} event ids for {n} embeddings")
        if any(b <= a for a, b in zip(self.event_ids, self.event_ids[1:])):
            raise InputError(f"event ids must be strictly increasing, got {self.event_ids}")

    @property
    def n(self) -> int:
        return self.embeddings.shape[1]


class EventHeads(Module):
    """n independent 2048->64 embedding heads, each followed by its own 64->1 sigmoid classifier."""

    def __init__(self, n: int, rng: np.random.Generator, joint_dim: int = JOINT_DIM, embed_dim: int = EMBED_DIM):
        super().__init__()
        if n < 2:
            raise ConfigurationError(f"need at least 2 events, got n={n}")
        self.n = n
        self.weight = parameter(xavier_uniform(rng, (n, joint_dim, embed_dim), joint_dim, embed_dim))
        self.bias = parameter(np.zeros((n, embed_dim)))
        self.cls_weight = parameter(xavier_uniform(rng, (n, embed_dim), embed_dim, 1))
        self.cls_bias = parameter(np.zeros(n))

    def forward(self, joint, event_ids: Sequence[int]) -> EventNodeSet:
        joint = as_tensor(joint)
        b = joint.shape[0]
        per_head = matmul(joint.reshape(1, b, joint.shape[1]), self.weight)  # [n, b, 64]
        per_head = per_head + self.bias.reshape(self.n, 1, -1)
        emb = F.relu(per_head.transpose(1, 0, 2))
        logits = (emb * self.cls_weight).sum(axis=-1) + self.cls_bias
        return EventNodeSet(emb, F.sigmoid(logits), list(event_ids))


def event_loss(nodes: EventNodeSet, labels) -> Tensor:
    """MSE between predicted event probabilities and the selected pseudo-label columns."""
    labels = as_tensor(labels)
    if labels.shape != nodes.probabilities.shape:
        raise DimensionError(
            f"event labels shape {labels.shape} != probabilities shape {nodes.probabilities.shape}"
        )
    return F.loss_mse(nodes.probabilities, labels)


# ---------------------------------------------------------------------------
# pseudo-labels


class PseudoLabelTable:
    """Soft event-occurrence labels, one row per clip.

    Real tables have 527 columns (the AudioSet vocabulary); synthetic tables
    may use a smaller vocabulary.
    """

    def __init__(self, clip_ids: Sequence[str], event_names: Sequence[str], values):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape != (len(clip_ids), len(event_names)):
            raise InputError(
                f"pseudo-label values shape {values.shape} != ({len(clip_ids)}, {len(event_names)})"
            )
        if values.size and (values.min() < 0 or values.max() > 1 or not np.all(np.isfinite(values))):
            raise InputError("pseudo-label values must lie in [0, 1]")
        self.clip_ids = list(clip_ids)
        self.event_names = list(event_names)
        self.values = values
        self._row: Dict[str, int] = {}
        for i, cid in enumerate(self.clip_ids):
            if cid in self._row:
                raise InputError(f"clip id {cid!r} appears more than once in the pseudo-label table")
            self._row[cid] = i

    @property
    def n_events(self) -> int:
        return len(self.event_names)

    def __len__(self) -> int:
        return len(self.clip_ids)

    def __contains__(self, clip_id: str) -> bool:
        return clip_id in self._row

    def rows(self, clip_ids: Iterable[str]) -> np.ndarray:
        clip_ids = list(clip_ids)
        unknown = [c for c in clip_ids if c not in self._row]
        if unknown:
            raise InputError(f"clip id(s) not in pseudo-label table: {', '.join(unknown)}")
        return self.values[[self._row[c] for c in clip_ids]]

    def select(self, clip_ids: Iterable[str], event_ids: Sequence[int]) -> np.ndarray:
        return self.rows(clip_ids)[:, list(event_ids)]

    @classmethod
    def read_csv(cls, path: Union[str, Path]) -> "PseudoLabelTable":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"pseudo-label file not found: {path}")
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise InputError(f"{path}: empty pseudo-label file") from None
            if not header or header[0] != "clip_id" or len(header) < 2:
                raise InputError(f"{path}: header must start with 'clip_id' followed by event names")
            ids, rows = [], []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise InputError(f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}")
                try:
                    rows.append([float(v) for v in row[1:]])
                except ValueError as exc:
                    raise InputError(f"{path}:{lineno}: {exc}") from None
                ids.append(row[0])
        values = np.array(rows, dtype=np.float64).reshape(len(ids), len(header) - 1)
        return cls(ids, header[1:], values)

    def write_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["clip_id", *self.event_names])
            for cid, row in zip(self.clip_ids, self.values):
                writer.writerow([cid, *(f"{v:.8g}" for v in row)])


def rank_top_n(table: PseudoLabelTable, training_ids: Sequence[str], n: int) -> List[int]:
    """Indices of the n events with the largest summed probability over ``training_ids``.

    Ties go to the smaller event index; the result is returned in increasing order.
    """
    training_ids = list(training_ids)
    if not training_ids:
        raise InputError("rank_top_n needs at least one training clip")
    if not 1 <= n <= table.n_events:
        raise ConfigurationError(f"n={n} outside [1, {table.n_events}]")
    totals = table.rows(training_ids).sum(axis=0)
    order = np.lexsort((np.arange(totals.size), -totals))
    return sorted(int(i) for i in order[:n])
