"""Manifest and pseudo-label ingestion plus the stratified train/validation split."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from ..encoder import PseudoLabelTable
from ..errors import ConfigurationError, EmptyDatasetError, InputError, JoinError, MalformedFileError
from ..features import load_input

MANIFEST_HEADER = ["clip_id", "path", "scene"]


@dataclass
class ManifestEntry:
    clip_id: str
    path: str
    scene: str


@dataclass
class DatasetManifest:
    entries: List[ManifestEntry]
    scene_vocab: List[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.scene_vocab:
            self.scene_vocab = sorted({e.scene for e in self.entries})
        seen = set()
        for e in self.entries:
            if e.clip_id in seen:
                raise InputError(f"duplicate clip id {e.clip_id!r} in manifest")
            seen.add(e.clip_id)
            if e.scene not in self.scene_vocab:
                raise InputError(f"clip {e.clip_id!r}: scene {e.scene!r} not in vocabulary {self.scene_vocab}")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def clip_ids(self) -> List[str]:
        return [e.clip_id for e in self.entries]

    def entry(self, clip_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.clip_id == clip_id:
                return e
        raise InputError(f"clip id {clip_id!r} not in manifest")

    def subset(self, clip_ids: Sequence[str]) -> "DatasetManifest":
        wanted = set(clip_ids)
        return DatasetManifest([e for e in self.entries if e.clip_id in wanted], list(self.scene_vocab))


def read_manifest(path: Union[str, Path]) -> DatasetManifest:
    """Read ``clip_id,path,scene`` rows; relative paths resolve against the manifest's directory."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    entries = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyDatasetError(f"{path}: empty dataset")
        if [h.strip() for h in header] != MANIFEST_HEADER:
            raise MalformedFileError(f"{path}: manifest header must be 'clip_id,path,scene', got {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3 or not all(v.strip() for v in row):
                raise MalformedFileError(f"{path}:{lineno}: expected 3 non-empty fields, got {row}")
            clip_id, clip_path, scene = (v.strip() for v in row)
            if not Path(clip_path).is_absolute():
                clip_path = str(path.parent / clip_path)
            entries.append(ManifestEntry(clip_id, clip_path, scene))
    if not entries:
        raise EmptyDatasetError(f"{path}: empty dataset")
    return DatasetManifest(entries)


def write_manifest(path: Union[str, Path], manifest: DatasetManifest, relative_to: Union[str, Path, None] = None) -> None:
    """Write the manifest; with ``relative_to``, paths under that directory are stored relative to it."""
    base = Path(relative_to).resolve() if relative_to is not None else None
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for e in manifest.entries:
            p = Path(e.path)
            if base is not None:
                try:
                    p = p.resolve().relative_to(base)
                except ValueError:
                    p = p.resolve()
            writer.writerow([e.clip_id, str(p), e.scene])


def load_dataset(manifest_path, labels_path) -> Tuple[DatasetManifest, PseudoLabelTable]:
    """Read the manifest and pseudo-label table and check every clip has labels."""
    manifest = read_manifest(manifest_path)
    try:
        table = PseudoLabelTable.read_csv(labels_path)
    except InputError as exc:
        raise MalformedFileError(str(exc)) from None
    missing = [cid for cid in manifest.clip_ids if cid not in table]
    if missing:
        raise JoinError(f"clips without pseudo-labels: {', '.join(missing)}")
    return manifest, table


def _as_rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def split_train_val(manifest: DatasetManifest, val_fraction: float = 0.30, seed=0) -> Tuple[List[str], List[str]]:
    """Stratified split: about ``val_fraction`` of each scene's clips go to validation.

    Every scene keeps at least one clip on each side. Both lists follow
    manifest order.
    """
    if not 0 < val_fraction < 1:
        raise ConfigurationError(f"val_fraction must be in (0, 1), got {val_fraction}")
    rng = _as_rng(seed)
    by_scene: Dict[str, List[int]] = {s: [] for s in manifest.scene_vocab}
    for i, e in enumerate(manifest.entries):
        by_scene[e.scene].append(i)
    val_idx = []
    for scene in manifest.scene_vocab:
        idx = by_scene[scene]
        if not idx:
            continue
        if len(idx) < 2:
            raise ConfigurationError(f"scene {scene!r} has {len(idx)} clip(s); a split needs at least 2")
        k = min(max(int(round(val_fraction * len(idx))), 1), len(idx) - 1)
        chosen = rng.permutation(len(idx))[:k]
        val_idx.extend(idx[c] for c in chosen)
    val_set = set(val_idx)
    ids = manifest.clip_ids
    train = [ids[i] for i in range(len(ids)) if i not in val_set]
    val = [ids[i] for i in range(len(ids)) if i in val_set]
    return train, val


class FeatureStore:
    """Loads and caches log-mel features for manifest entries."""

    def __init__(self, manifest: DatasetManifest):
        self.manifest = manifest
        self._cache: Dict[str, np.ndarray] = {}
        self._paths = {e.clip_id: e.path for e in manifest.entries}

    def get(self, clip_id: str) -> np.ndarray:
        if clip_id not in self._cache:
            if clip_id not in self._paths:
                raise InputError(f"clip id {clip_id!r} not in manifest")
            self._cache[clip_id] = load_input(self._paths[clip_id]).values
        return self._cache[clip_id]

    def batch(self, clip_ids: Sequence[str]) -> np.ndarray:
        arrays = [self.get(c) for c in clip_ids]
        shapes = {a.shape for a in arrays}
        if len(shapes) > 1:
            raise InputError(f"spectrograms in a batch must share one shape, found {sorted(shapes)}")
        return np.stack(arrays).astype(np.float32)
