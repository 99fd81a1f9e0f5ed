"""Synthetic percussive clips with exact beat annotations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codec import Signal

CLASSES = ("click", "sine-pluck", "saw-pluck", "noise-burst")
EVENT_MS = {"click": 5.0, "sine-pluck": 60.0, "saw-pluck": 60.0, "noise-burst": 30.0}
BASE_AMPLITUDE = 0.8
JITTER = 0.1


@dataclass
class RhythmClip:
    signal: Signal
    tempo_bpm: float
    beat_times_s: np.ndarray
    class_id: int
    seed: int
    pitch_hz: float = field(default=0.0)

    @property
    def class_name(self) -> str:
        return CLASSES[self.class_id]


def class_index(name_or_id) -> int:
    if isinstance(name_or_id, str):
        if name_or_id.isdigit():
            name_or_id = int(name_or_id)
        elif name_or_id in CLASSES:
            return CLASSES.index(name_or_id)
        else:
            raise ValueError(f"unknown class {name_or_id!r}; expected one of {CLASSES}")
    if not 0 <= int(name_or_id) < len(CLASSES):
        raise ValueError(f"class id {name_or_id} outside 0..{len(CLASSES) - 1}")
    return int(name_or_id)


def event_waveform(class_id: int, sample_rate_hz: int, pitch_hz: float, rng) -> np.ndarray:
    """One percussive event; peak magnitude at most 1."""
    name = CLASSES[class_id]
    n = int(round(EVENT_MS[name] * 1e-3 * sample_rate_hz))
    t = np.arange(n) / sample_rate_hz
    if name == "click":
        return np.exp(-t / 1e-3) * np.cos(2 * np.pi * 2000.0 * t)
    if name == "sine-pluck":
        return np.exp(-t / 0.015) * np.sin(2 * np.pi * pitch_hz * t + np.pi / 2)
    if name == "saw-pluck":
        phase = (pitch_hz * t) % 1.0
        return np.exp(-t / 0.015) * (2.0 * phase - 1.0) * -1.0
    return np.exp(-t / 0.008) * rng.uniform(-1.0, 1.0, n)


def synth_clip(
    tempo_bpm: float,
    class_id,
    duration_s: float = 6.0,
    sample_rate_hz: int = 8000,
    seed: int = 0,
) -> RhythmClip:
    """Render an isochronous train of one event type starting at t = 0.

    Pitched classes draw their pitch from the seed; every event gets an
    independent +-10 % amplitude jitter.
    """
    class_id = class_index(class_id)
    if not 60.0 <= tempo_bpm <= 180.0:
        raise ValueError(f"tempo must lie in [60, 180] BPM, got {tempo_bpm}")
    if duration_s < 2.0:
        raise ValueError(f"duration must be at least 2 s, got {duration_s}")
    rng = np.random.default_rng(seed)
    name = CLASSES[class_id]
    pitch = {"sine-pluck": rng.uniform(220.0, 660.0), "saw-pluck": rng.uniform(110.0, 330.0)}.get(name, 0.0)

    n = int(round(duration_s * sample_rate_hz))
    period = 60.0 / tempo_bpm
    beats = np.arange(int(np.ceil(duration_s / period - 1e-12))) * period
    beats = beats[beats < duration_s]
    x = np.zeros(n)
    for b in beats:
        ev = event_waveform(class_id, sample_rate_hz, pitch, rng)
        amp = BASE_AMPLITUDE * (1.0 + rng.uniform(-JITTER, JITTER))
        start = int(round(b * sample_rate_hz))
        seg = ev[: max(0, n - start)]
        x[start:start + seg.size] += amp * seg
    return RhythmClip(Signal(x, sample_rate_hz), float(tempo_bpm), beats, class_id, int(seed), float(pitch))


def clip_set(count: int, seed: int, duration_s=6.0, sample_rate_hz=8000) -> list[RhythmClip]:
    """``count`` clips with tempo, class and render seed drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    clips = []
    for i in range(count):
        tempo = float(np.round(rng.uniform(60.0, 180.0), 2))
        cls = i % len(CLASSES)
        clips.append(synth_clip(tempo, cls, duration_s, sample_rate_hz, int(rng.integers(2**31))))
    return clips
