# Log-mel features
#
# Clips are 16 kHz mono. Frames are 1024 samples (64 ms) with a 320 sample
# hop, centred by reflect padding, windowed by a periodic Hamming window.
# The 513-bin power spectrum is pooled into 64 mel bands and taken to dB.

import numpy as np

from ergl.features import (
    HOP,
    N_FFT,
    SAMPLE_RATE,
    AudioClip,
    load_features,
    log_mel,
    mel_band_edges,
    mel_filterbank,
    n_frames,
    save_features,
    stft_power,
)

t = np.arange(10 * SAMPLE_RATE) / SAMPLE_RATE

# A 10 second clip gives floor(160000 / 320) + 1 = 501 frames.

spec = log_mel(AudioClip(0.5 * np.sin(2 * np.pi * 440 * t)))
print("10 s clip ->", spec.values.shape, "frames by formula:", n_frames(t.size))

# ## Where does a pure tone land?
#
# FFT bin k sits at k * 16000 / 1024 = 15.625k Hz, so 1 kHz is bin 64.

power = stft_power(AudioClip(np.sin(2 * np.pi * 1000 * t[:SAMPLE_RATE])))
print("1 kHz argmax bin:", np.bincount(power.argmax(axis=1)).argmax(), "expected", 1000 * N_FFT // SAMPLE_RATE)

# The first and last frames are built partly from reflected samples. A
# sine is odd about sample 0 so those two frames come out smeared.
print("argmax per frame (first, interior, last):", power[0].argmax(), power[25].argmax(), power[-1].argmax())

# ## The filterbank
#
# Band edges are evenly spaced on the HTK mel scale. Each triangle is area
# normalised, so wide high bands are not louder than narrow low ones.

fb = mel_filterbank()
edges = mel_band_edges()
print("filterbank", fb.shape, "first centres (Hz):", np.round(edges[1:5], 1), "last:", round(edges[-2], 1))
print("peak weight low vs high band: %.4f vs %.4f" % (fb[:, 0].max(), fb[:, -1].max()))

centre = edges[1:-1][20]
tone = log_mel(AudioClip(0.3 * np.sin(2 * np.pi * centre * t[:SAMPLE_RATE])))
print(f"tone at centre of band 20 ({centre:.0f} Hz) peaks in band", np.bincount(tone.values[1:-1].argmax(axis=1)).argmax())

# Silence hits the -100 dB floor instead of producing -inf.
print("silence:", log_mel(AudioClip(np.zeros(SAMPLE_RATE))).values.min(), "dB")

# ## Caching
#
# Features are cached as a small binary file: magic, shape, float32 data.

save_features("/tmp/demo.mel", spec)
back = load_features("/tmp/demo.mel")
print("cache roundtrip max error:", np.abs(back.values - spec.values).max(), "hop", HOP)
