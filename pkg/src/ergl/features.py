"""Log-mel spectrogram front end (16 kHz mono, 64 mel bins).

Framing is reflect-centred with a 1024-sample periodic Hamming window and a
hop of 320 samples, so a clip of ``L`` samples yields ``L // 320 + 1`` frames.
Power spectra are projected onto 64 area-normalised triangular mel filters
and converted to decibels with a floor of -100 dB.
"""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import InputError

SAMPLE_RATE = 16000
N_FFT = 1024
HOP = 320
N_MELS = 64
POWER_FLOOR = 1e-10
MEL_MAGIC = b"ERGLMEL1"


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE
    clip_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate != SAMPLE_RATE:
            raise InputError(
                f"clip {self.clip_id!r}: sample rate {self.sample_rate} Hz, expected {SAMPLE_RATE} Hz "
                "(resample before feature extraction)"
            )
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise InputError(f"clip {self.clip_id!r}: expected non-empty mono samples, got shape {self.samples.shape}")


@dataclass
class MelSpectrogram:
    values: np.ndarray  # [frames, 64], dB
    frame_hop_samples: int = HOP
    window_samples: int = N_FFT

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def bins(self) -> int:
        return self.values.shape[1]


def n_frames(n_samples: int) -> int:
    return (n_samples + 2 * (N_FFT // 2) - N_FFT) // HOP + 1


def hamming_periodic(n: int = N_FFT) -> np.ndarray:
    return 0.54 - 0.46 * np.cos(2 * np.pi * np.arange(n) / n)


def _reflect_pad(x: np.ndarray, pad: int) -> np.ndarray:
    if x.size == 1:
        return np.full(x.size + 2 * pad, x[0])
    return np.pad(x, pad, mode="reflect")


def stft_power(clip: AudioClip) -> np.ndarray:
    """Squared-magnitude STFT, shape [frames, 513]."""
    half = N_FFT // 2
    padded = _reflect_pad(clip.samples, half)
    frames = n_frames(clip.samples.size)
    idx = np.arange(N_FFT)[None, :] + HOP * np.arange(frames)[:, None]
    spec = np.fft.rfft(padded[idx] * hamming_periodic(), axis=1)
    return spec.real**2 + spec.imag**2


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(n_mels: int = N_MELS, f_min: float = 0.0, f_max: float = SAMPLE_RATE / 2) -> np.ndarray:
    """Lower edge, centre and upper edge frequencies of all filters (n_mels + 2 points)."""
    return mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))


def mel_filterbank(n_mels: int = N_MELS, f_min: float = 0.0, f_max: float = SAMPLE_RATE / 2) -> np.ndarray:
    """Triangular, area-normalised mel filters as a [513, n_mels] matrix."""
    edges = mel_band_edges(n_mels, f_min, f_max)
    freqs = np.arange(N_FFT // 2 + 1) * SAMPLE_RATE / N_FFT
    lo, centre, hi = edges[:-2], edges[1:-1], edges[2:]
    rising = (freqs[:, None] - lo) / (centre - lo)
    falling = (hi - freqs[:, None]) / (hi - centre)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    return weights * (2.0 / (hi - lo))


_FILTERBANK = mel_filterbank()


def log_mel(clip: AudioClip) -> MelSpectrogram:
    power = stft_power(clip)
    mel = power @ _FILTERBANK
    values = 10.0 * np.log10(np.maximum(mel, POWER_FLOOR))
    return MelSpectrogram(values.astype(np.float32))


# ---------------------------------------------------------------------------
# file formats


def read_wav(path: Union[str, Path], clip_id: str = "") -> AudioClip:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"audio file not found: {path}")
    with wave.open(str(path), "rb") as fh:
        channels, width, rate = fh.getnchannels(), fh.getsampwidth(), fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    if channels != 1 or width != 2:
        raise InputError(f"{path}: expected mono 16-bit PCM, got {channels} channel(s) of {8 * width}-bit")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioClip(samples, rate, clip_id or path.stem)


def write_wav(path: Union[str, Path], clip: AudioClip) -> None:
    pcm = np.clip(np.round(clip.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(clip.sample_rate)
        fh.writeframes(pcm.tobytes())


def save_features(path: Union[str, Path], spec: MelSpectrogram) -> None:
    values = np.ascontiguousarray(spec.values, dtype="<f4")
    frames, bins = values.shape
    with open(path, "wb") as fh:
        fh.write(MEL_MAGIC)
        fh.write(struct.pack("<II", frames, bins))
        fh.write(values.tobytes())


def load_features(path: Union[str, Path]) -> MelSpectrogram:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"feature file not found: {path}")
    blob = path.read_bytes()
    if blob[:8] != MEL_MAGIC:
        raise InputError(f"{path}: not an ERGLMEL1 feature file")
    if len(blob) < 16:
        raise InputError(f"{path}: truncated feature header")
    frames, bins = struct.unpack("<II", blob[8:16])
    expected = 16 + 4 * frames * bins
    if len(blob) != expected:
        raise InputError(f"{path}: expected {expected} bytes for {frames}x{bins} features, found {len(blob)}")
    values = np.frombuffer(blob, dtype="<f4", offset=16).reshape(frames, bins).astype(np.float32)
    return MelSpectrogram(values)


def load_input(path: Union[str, Path]) -> MelSpectrogram:
    """Load cached features (``.mel``) or extract them from a WAV file."""
    path = Path(path)
    if path.suffix.lower() == ".wav":
        return log_mel(read_wav(path))
    return load_features(path)
