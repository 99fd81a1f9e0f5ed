"""
Onsets, tempo, beats and tolerance matching
===========================================

The evaluation side: spectral-flux onsets, an autocorrelation tempo estimate,
a dynamic-programming beat tracker and maximum matching within 80 ms.
"""

# %%
import numpy as np

from boomaudio.rhythmeval import (
    detect_onsets,
    estimate_tempo,
    match_events,
    onset_envelope,
    preservation_report,
    track_beats,
)
from boomaudio.synth import clip_set, synth_clip

clip = synth_clip(100, "noise-burst", 6.0, seed=3)
env = onset_envelope(clip.signal)
bpm = estimate_tempo(env)
beats = track_beats(env, bpm)
print(f"tempo estimate {bpm:.1f} BPM (true 100)")
print("onset F1 vs truth:", match_events(clip.beat_times_s, detect_onsets(env)).f1)
print("beat  F1 vs truth:", match_events(clip.beat_times_s, beats).f1)

# %%
# Tracker sanity over a batch of clips of all four timbres.
scores = [match_events(c.beat_times_s, track_beats(e, estimate_tempo(e))).f1
          for c in clip_set(20, seed=7) for e in [onset_envelope(c.signal)]]
print(f"mean beat F1 over 20 clips: {np.mean(scores):.3f}")

# %%
# Preservation compares a transformed clip against the original, which acts as
# the reference. A 200 ms delay pushes every beat outside the window.
shifted = np.concatenate([np.zeros(1600), clip.signal.samples[:-1600]])
report = preservation_report(clip.signal, type(clip.signal)(shifted, 8000))
print("delayed copy: onset F1 %.2f, beat F1 %.2f" % (report["onset"].f1, report["beat"].f1))
