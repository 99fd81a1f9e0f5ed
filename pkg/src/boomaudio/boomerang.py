"""Boomerang local sampling: partial forward noising then partial reverse diffusion.

Long latents are processed in overlapping windows. Each window after the first
starts with its overlap region replaced by the already generated output, and
that region is re-imposed after every reverse step so it stays frozen.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .codec import DEFAULT_FRAME_LEN, Latent, Signal, decode, encode, fit_length, prepare
from .diffusion import SAMPLERS, Condition, forward_diffuse
from .schedule import NoiseSchedule, noise_level_to_timestep

log = logging.getLogger(__name__)

#: One window covers a default 6 s clip at 8 kHz with 64-sample frames.
DEFAULT_WINDOW_FRAMES = 750


@dataclass(frozen=True)
class BoomerangConfig:
    n_boom: float = 0.4
    condition: Condition = field(default_factory=Condition)
    seed: int = 0
    sampler: str = "dpm2m"
    window_frames: int = DEFAULT_WINDOW_FRAMES
    overlap_fraction: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.n_boom < 1.0:
            raise ValueError(f"noise level must lie in (0, 1), got {self.n_boom}")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}; expected one of {sorted(SAMPLERS)}")
        if self.window_frames < 4:
            raise ValueError(f"window must span at least 4 frames, got {self.window_frames}")
        if not 0.0 <= self.overlap_fraction <= 0.5:
            raise ValueError(f"overlap fraction must lie in [0, 0.5], got {self.overlap_fraction}")

    @property
    def overlap_frames(self) -> int:
        return int(round(self.overlap_fraction * self.window_frames))


def _values(z):
    return np.asarray(z.values if isinstance(z, Latent) else z, dtype=np.float64)


def _check_denoiser(denoiser):
    if getattr(denoiser, "trained", True) is False:
        raise ValueError("denoiser has not been trained")


def boomerang_window(s: NoiseSchedule, denoiser, z0, cfg: BoomerangConfig, frozen=None, seed=None):
    """Noise ``z0`` to the step matching ``cfg.n_boom`` and denoise back to t = 0.

    ``frozen`` is an optional ``(index, values)`` pair: those latent entries
    are set to ``values`` right after noising and after every reverse step.
    Returns an array shaped like ``z0``.
    """
    _check_denoiser(denoiser)
    z0 = _values(z0)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    t_boom = noise_level_to_timestep(s, cfg.n_boom)
    z_t = forward_diffuse(s, z0, t_boom, rng.standard_normal(z0.shape))
    sampler = SAMPLERS[cfg.sampler]
    return sampler(s, denoiser, z_t, t_boom, cfg.condition, seed=int(rng.integers(2**63)), frozen=frozen)


def window_offsets(frames: int, window: int, overlap: int) -> list[int]:
    """Window start frames; the last window is right-aligned to the end."""
    if window > frames:
        raise ValueError(f"window of {window} frames exceeds latent of {frames} frames")
    hop = window - overlap
    if hop <= 0:
        raise ValueError(f"overlap {overlap} leaves no hop in a window of {window}")
    return list(range(0, frames - window, hop)) + [frames - window]


def window_seed(seed: int, index: int) -> int:
    if index == 0:
        return seed
    return int(np.random.SeedSequence([seed, index]).generate_state(2, dtype=np.uint32).view(np.uint64)[0])


def boomerang_long(s: NoiseSchedule, denoiser, z0_full, cfg: BoomerangConfig) -> np.ndarray:
    """Windowed Boomerang over a latent longer than one window.

    A latent exactly one window long yields the single-window result.
    """
    z = _values(z0_full)
    frames, W = z.shape[0], cfg.window_frames
    if frames < W:
        raise ValueError(f"latent has {frames} frames, fewer than the window ({W}); use boomerang_window")
    O = cfg.overlap_frames
    if O == 0:
        log.warning("overlap is 0 frames; window boundaries are generated independently")
    out = np.empty_like(z)
    done = 0
    for i, off in enumerate(window_offsets(frames, W, O)):
        frozen = None
        if i > 0:
            shared = done - off
            frozen = (slice(0, shared), out[off:done].copy())
        result = boomerang_window(s, denoiser, z[off:off + W], cfg, frozen=frozen, seed=window_seed(cfg.seed, i))
        keep = done - off if i > 0 else 0
        out[off + keep:off + W] = result[keep:]
        done = off + W
    return out


def boomerang(s: NoiseSchedule, denoiser, z0, cfg: BoomerangConfig) -> np.ndarray:
    """Single window when the latent fits, windowed generation otherwise."""
    z = _values(z0)
    if z.shape[0] <= cfg.window_frames:
        return boomerang_window(s, denoiser, z, cfg)
    return boomerang_long(s, denoiser, z, cfg)


def boomerang_signal(
    signal: Signal,
    s: NoiseSchedule,
    denoiser,
    cfg: BoomerangConfig,
    sample_rate_hz: int = 8000,
    frame_len: int = DEFAULT_FRAME_LEN,
) -> Signal:
    """Encode, Boomerang and decode an audio signal.

    The input is resampled to ``sample_rate_hz`` and peak-normalized; it is padded
    to a whole number of frames for encoding and the output is cut back to the
    prepared length.
    """
    n = int(round(signal.samples.size * sample_rate_hz / signal.sample_rate_hz))
    prepared = prepare(signal, sample_rate_hz, fit_length(n, frame_len))
    latent = encode(prepared, frame_len)
    out = boomerang(s, denoiser, latent, cfg)
    return Signal(decode(latent.with_values(out)).samples[:n], sample_rate_hz)
