"""Synthetic scenes built from tone "events", for desk-scale training runs.

Each scene owns a template of event probabilities. A clip draws its
pseudo-label row as template + Gaussian noise (clipped to [0, 1]) and its
audio as a sum of event tones whose amplitudes follow that row, plus a
little white noise. Event k is a pure tone at the centre frequency of one
mel filter, so the events are visible in the log-mel input.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from ..encoder import PseudoLabelTable
from ..errors import ConfigurationError
from ..features import SAMPLE_RATE, AudioClip, log_mel, mel_band_edges, save_features
from .data import DatasetManifest, ManifestEntry, write_manifest

LOW = (0.0, 0.2)
HIGH = (0.8, 1.0)


@dataclass
class SynthDataset:
    manifest_path: Path
    labels_path: Path
    templates: np.ndarray  # [n_scenes, vocab]
    event_names: List[str]
    scene_names: List[str]


def scene_templates(n_scenes: int, n_events: int, rng: np.random.Generator) -> np.ndarray:
    """Random templates whose "high" event sets are pairwise distinct."""
    n_high = max(1, n_events // 3)
    patterns = set()
    templates = np.empty((n_scenes, n_events))
    for s in range(n_scenes):
        for _ in range(1000):
            high = tuple(sorted(rng.choice(n_events, size=n_high, replace=False).tolist()))
            if high not in patterns:
                break
        else:
            raise ConfigurationError(f"cannot build {n_scenes} distinct templates over {n_events} events")
        patterns.add(high)
        row = rng.uniform(*LOW, size=n_events)
        row[list(high)] = rng.uniform(*HIGH, size=n_high)
        templates[s] = row
    return templates


def event_frequencies(n_events: int) -> np.ndarray:
    """Tone frequency per event: centres of mel filters spread between 200 Hz and 6 kHz."""
    centres = mel_band_edges()[1:-1]
    usable = np.flatnonzero((centres > 200) & (centres < 6000))
    pick = usable[np.linspace(0, usable.size - 1, n_events).round().astype(int)]
    return centres[pick]


def synth_clip(row: np.ndarray, freqs: np.ndarray, duration: float, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(int(round(duration * SAMPLE_RATE))) / SAMPLE_RATE
    phases = rng.uniform(0, 2 * np.pi, size=freqs.size)
    tones = np.sin(2 * np.pi * freqs[:, None] * t[None, :] + phases[:, None])
    audio = (row[:, None] * tones).sum(axis=0) * (0.5 / freqs.size)
    audio += rng.normal(scale=0.005, size=t.size)
    return np.clip(audio, -1.0, 1.0)


def synth_data(
    out_dir: Union[str, Path],
    n_scenes: int = 2,
    clips_per_scene: int = 32,
    n_events: int = 6,
    seed: int = 0,
    duration: float = 1.0,
    noise: float = 0.05,
    vocab_size: Optional[int] = None,
) -> SynthDataset:
    """Write ``manifest.csv``, ``pseudo_labels.csv`` and ``features/*.mel`` under ``out_dir``.

    With ``vocab_size`` larger than ``n_events`` the extra vocabulary
    entries are quiet background events (probabilities below 0.05) that
    the top-n ranking should discard.
    """
    if n_scenes < 2:
        raise ConfigurationError(f"need at least 2 scenes, got {n_scenes}")
    if clips_per_scene < 2:
        raise ConfigurationError(f"need at least 2 clips per scene, got {clips_per_scene}")
    vocab = vocab_size or n_events
    if vocab < n_events:
        raise ConfigurationError(f"vocab_size {vocab} < n_events {n_events}")
    rng = np.random.default_rng(seed)
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)

    templates = np.zeros((n_scenes, vocab))
    templates[:, :n_events] = scene_templates(n_scenes, n_events, rng)
    freqs = event_frequencies(n_events)
    scene_names = [f"scene_{s:02d}" for s in range(n_scenes)]
    event_names = [f"event_{k:03d}" for k in range(vocab)]

    entries, ids, rows = [], [], []
    for s in range(n_scenes):
        for c in range(clips_per_scene):
            clip_id = f"{scene_names[s]}_clip{c:03d}"
            row = templates[s].copy()
            row[:n_events] += rng.normal(scale=noise, size=n_events)
            row[n_events:] = rng.uniform(0, 0.05, size=vocab - n_events)
            row = np.clip(row, 0.0, 1.0)
            audio = synth_clip(row[:n_events], freqs, duration, rng)
            feature_path = out / "features" / f"{clip_id}.mel"
            save_features(feature_path, log_mel(AudioClip(audio, SAMPLE_RATE, clip_id)))
            entries.append(ManifestEntry(clip_id, str(feature_path), scene_names[s]))
            ids.append(clip_id)
            rows.append(row)

    manifest_path = out / "manifest.csv"
    labels_path = out / "pseudo_labels.csv"
    write_manifest(manifest_path, DatasetManifest(entries, scene_names), relative_to=out)
    PseudoLabelTable(ids, event_names, np.array(rows)).write_csv(labels_path)
    return SynthDataset(manifest_path, labels_path, templates, event_names, scene_names)
