"""Signal preparation and the invertible frame transform used as the latent codec.

``encode`` cuts a mono signal into non-overlapping frames and applies an
orthonormal type-II DCT to each frame; ``decode`` inverts it exactly. The
transform is orthonormal, so it preserves energy and never loses information.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np
from scipy.fft import dct, idct
from scipy.signal import resample_poly

PEAK = 0.9
DEFAULT_FRAME_LEN = 64


@dataclass
class Signal:
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"signal must be mono (1-D), got shape {self.samples.shape}")
        if self.samples.size == 0:
            raise ValueError("signal is empty")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("signal contains non-finite samples")
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass
class Latent:
    values: np.ndarray  # (frames, dim)
    sample_rate_hz: int
    frame_len: int

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray) -> "Latent":
        return Latent(values, self.sample_rate_hz, self.frame_len)


def resample(samples: np.ndarray, rate_in: int, rate_out: int) -> np.ndarray:
    """Polyphase resampling with a Kaiser-windowed sinc lowpass."""
    if rate_in == rate_out:
        return np.asarray(samples, dtype=np.float64)
    g = gcd(int(rate_in), int(rate_out))
    return resample_poly(samples, rate_out // g, rate_in // g)


def prepare(signal: Signal, target_rate_hz: int, target_len_samples: int) -> Signal:
    """Resample, fit to ``target_len_samples`` and peak-normalize to 0.9.

    Length fitting happens before normalization so that repeating the call is a
    bitwise no-op. Silent input is returned unscaled.
    """
    if target_len_samples <= 0:
        raise ValueError(f"target length must be positive, got {target_len_samples}")
    x = resample(signal.samples, signal.sample_rate_hz, target_rate_hz)
    if x.size >= target_len_samples:
        x = x[:target_len_samples].copy()
    else:
        x = np.concatenate([x, np.zeros(target_len_samples - x.size)])
    peak = np.max(np.abs(x))
    if peak > 0 and abs(peak - PEAK) > 1e-12:
        x = x * (PEAK / peak)
    return Signal(x, int(target_rate_hz))


def encode(signal: Signal, frame_len: int = DEFAULT_FRAME_LEN) -> Latent:
    n = signal.samples.size
    if n % frame_len:
        raise ValueError(f"signal length {n} is not a multiple of frame length {frame_len}")
    frames = signal.samples.reshape(-1, frame_len)
    return Latent(dct(frames, type=2, norm="ortho", axis=-1), signal.sample_rate_hz, frame_len)


def decode(latent: Latent) -> Signal:
    values = np.asarray(latent.values)
    if values.ndim != 2 or values.shape[1] != latent.frame_len:
        raise ValueError(
            f"latent of shape {values.shape} does not match frame length {latent.frame_len}"
        )
    frames = idct(values, type=2, norm="ortho", axis=-1)
    return Signal(frames.reshape(-1), latent.sample_rate_hz)


def fit_length(n_samples: int, frame_len: int = DEFAULT_FRAME_LEN) -> int:
    """Smallest multiple of ``frame_len`` holding ``n_samples``."""
    return -(-n_samples // frame_len) * frame_len
