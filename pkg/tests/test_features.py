import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergl.errors import InputError
from ergl.features import (
    HOP,
    N_FFT,
    SAMPLE_RATE,
    AudioClip,
    MelSpectrogram,
    hamming_periodic,
    load_features,
    load_input,
    log_mel,
    mel_band_edges,
    mel_filterbank,
    n_frames,
    read_wav,
    save_features,
    stft_power,
    write_wav,
)


def tone(freq, n, phase=0.0, amp=0.5):
    return amp * np.sin(2 * np.pi * freq * np.arange(n) / SAMPLE_RATE + phase)


def test_silence_power_and_frames():
    p = stft_power(AudioClip(np.zeros(SAMPLE_RATE)))
    assert p.shape == (51, 513)
    assert np.all(p == 0.0)


def test_silence_hits_floor_exactly():
    spec = log_mel(AudioClip(np.zeros(SAMPLE_RATE)))
    assert np.all(spec.values == -100.0)


def test_ten_second_shape():
    spec = log_mel(AudioClip(tone(440, 10 * SAMPLE_RATE)))
    assert spec.values.shape == (501, 64)
    assert np.all(np.isfinite(spec.values))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 10 * SAMPLE_RATE))
def test_shape_law(n):
    # frames == floor((len + 2*512 - 1024)/320) + 1
    assert n_frames(n) == (n + 2 * 512 - 1024) // 320 + 1
    if n <= 40_000:
        assert stft_power(AudioClip(np.full(n, 0.1))).shape == (n_frames(n), 513)


def test_short_clips():
    assert log_mel(AudioClip([0.3])).values.shape == (1, 64)
    assert log_mel(AudioClip(np.zeros(320))).values.shape == (2, 64)


def test_1khz_argmax_bin():
    expected = round(1000 * 1024 / 16000)
    assert expected == 64
    # a cosine whose period divides the clip is even about both ends, so
    # reflect padding continues it seamlessly and every frame is clean
    n = SAMPLE_RATE + 1
    cos = 0.5 * np.cos(2 * np.pi * 1000 * np.arange(n) / SAMPLE_RATE)
    assert np.all(stft_power(AudioClip(cos)).argmax(axis=1) == expected)
    # a sine is odd about sample 0, so the two reflected edge frames are
    # distorted; all interior frames are clean
    p = stft_power(AudioClip(tone(1000, SAMPLE_RATE)))
    assert np.all(p[1:-1].argmax(axis=1) == expected)


def test_periodic_hamming():
    w = hamming_periodic(8)
    np.testing.assert_allclose(w, 0.54 - 0.46 * np.cos(2 * np.pi * np.arange(8) / 8))
    assert w[0] == pytest.approx(0.08) and w[4] == pytest.approx(1.0)


def test_stft_matches_direct_dft():
    x = np.random.default_rng(0).uniform(-0.5, 0.5, 2000)
    p = stft_power(AudioClip(x))
    padded = np.pad(x, 512, mode="reflect")
    k = np.arange(513)[:, None]
    n = np.arange(N_FFT)[None, :]
    basis = np.exp(-2j * np.pi * k * n / N_FFT)
    for f in (0, 3, p.shape[0] - 1):
        frame = padded[f * HOP : f * HOP + N_FFT] * hamming_periodic()
        np.testing.assert_allclose(p[f], np.abs(basis @ frame) ** 2, rtol=1e-9, atol=1e-9)


def _filterbank_oracle():
    # independent loop construction: triangles between consecutive mel points,
    # each scaled so its area in Hz is 1 (height 2 / width)
    def mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def hz(m):
        return 700.0 * (10 ** (m / 2595.0) - 1.0)

    pts = [hz(mel(0.0) + i * (mel(8000.0) - mel(0.0)) / 65) for i in range(66)]
    fb = np.zeros((513, 64))
    for j in range(64):
        lo, c, hi = pts[j], pts[j + 1], pts[j + 2]
        for b in range(513):
            f = b * 16000 / 1024
            if lo < f <= c:
                fb[b, j] = (f - lo) / (c - lo)
            elif c < f < hi:
                fb[b, j] = (hi - f) / (hi - c)
            fb[b, j] *= 2.0 / (hi - lo)
    return fb


def test_filterbank_geometry():
    fb = mel_filterbank()
    assert fb.shape == (513, 64)
    assert np.all(fb >= 0)
    centres = mel_band_edges()[1:-1]
    assert np.all(np.diff(centres) > 0)
    assert np.all((fb > 0).sum(axis=1) <= 2)
    assert np.all(fb.sum(axis=0) > 0)


def test_filterbank_matches_oracle():
    fb, oracle = mel_filterbank(), _filterbank_oracle()
    np.testing.assert_allclose(fb.sum(axis=0), oracle.sum(axis=0), atol=1e-6)
    np.testing.assert_allclose(fb, oracle, atol=1e-9)


@pytest.mark.parametrize("k", [0, 5, 17, 31, 48, 63])
def test_tone_at_filter_centre_peaks_in_that_filter(k):
    centre = mel_band_edges()[1:-1][k]
    spec = log_mel(AudioClip(tone(centre, SAMPLE_RATE)))
    assert np.all(spec.values[1:-1].argmax(axis=1) == k)


def test_deterministic():
    x = np.random.default_rng(1).uniform(-1, 1, 5000)
    assert log_mel(AudioClip(x)).values.tobytes() == log_mel(AudioClip(x.copy())).values.tobytes()


@settings(max_examples=25, deadline=None)
@given(st.floats(1.01, 20.0), st.integers(0, 2**31 - 1))
def test_monotone_loudness(g, seed):
    x = np.random.default_rng(seed).uniform(-0.04, 0.04, 3000)
    quiet = log_mel(AudioClip(x)).values
    loud = log_mel(AudioClip(g * x)).values
    assert np.all(loud >= quiet)


def test_rejects_wrong_rate_and_empty():
    with pytest.raises(InputError, match="44100"):
        AudioClip(np.zeros(100), 44100)
    with pytest.raises(InputError):
        AudioClip(np.zeros(0))
    with pytest.raises(InputError):
        AudioClip(np.zeros((2, 100)))


def test_feature_cache_roundtrip(tmp_path):
    spec = log_mel(AudioClip(tone(700, 4000)))
    path = tmp_path / "a.mel"
    save_features(path, spec)
    blob = path.read_bytes()
    assert blob[:8] == b"ERGLMEL1"
    assert int.from_bytes(blob[8:12], "little") == spec.frames
    assert int.from_bytes(blob[12:16], "little") == 64
    back = load_features(path)
    assert back.values.tobytes() == spec.values.tobytes()
    assert load_input(path).values.tobytes() == spec.values.tobytes()


def test_feature_cache_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_features(tmp_path / "missing.mel")
    bad = tmp_path / "bad.mel"
    bad.write_bytes(b"NOTAMEL!" + bytes(8))
    with pytest.raises(InputError):
        load_features(bad)
    spec = MelSpectrogram(np.zeros((3, 64), np.float32))
    save_features(bad, spec)
    bad.write_bytes(bad.read_bytes()[:-4])
    with pytest.raises(InputError, match="expected"):
        load_features(bad)


def test_wav_roundtrip_and_extraction(tmp_path):
    x = tone(1000, 3200)
    path = tmp_path / "t.wav"
    write_wav(path, AudioClip(x))
    clip = read_wav(path)
    assert clip.clip_id == "t" and clip.samples.size == 3200
    np.testing.assert_allclose(clip.samples, x, atol=1 / 32767)
    assert load_input(path).values.shape == (11, 64)
