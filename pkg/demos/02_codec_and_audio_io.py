"""
Audio preparation, the frame codec and WAV files
================================================

The latent space here is an orthonormal per-frame DCT: 64 samples in, 64
coefficients out, exactly invertible.
"""

# %%
import tempfile
from pathlib import Path

import numpy as np

from boomaudio.codec import decode, encode, prepare
from boomaudio.synth import synth_clip
from boomaudio.wavio import wav_read, wav_write

clip = synth_clip(tempo_bpm=128, class_id="saw-pluck", duration_s=3.0, seed=1)
print("beats:", np.round(clip.beat_times_s, 3))

# %%
# Resample a 16 kHz rendition down to 8 kHz, peak-normalize and fit the length.
hi = synth_clip(128, "saw-pluck", 3.0, 16000, seed=1).signal
prepared = prepare(hi, 8000, 24000)
print("prepared:", prepared.sample_rate_hz, "Hz,", prepared.samples.size, "samples, peak", np.abs(prepared.samples).max())

# %%
latent = encode(prepared)
print("latent shape (frames, coefficients):", latent.values.shape)
print("energy ratio:", np.sum(latent.values**2) / np.sum(prepared.samples**2))
print("round-trip error:", np.abs(decode(latent).samples - prepared.samples).max())

# %%
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "clip.wav"
    wav_write(path, clip.signal)
    back = wav_read(path)
    print("16-bit WAV round trip, max error:", np.abs(back.samples - clip.signal.samples).max())
