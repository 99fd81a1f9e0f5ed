"""Discrete variance-preserving noise schedules.

A schedule tabulates, for every step ``t`` in ``0..T``, the accumulated signal
fraction ``alpha_bar[t]`` together with the derived quantities used by the
samplers: ``alpha = sqrt(alpha_bar)``, ``sigma = sqrt(1 - alpha_bar)`` and the
log signal-to-noise ratio ``lam = log(alpha / sigma)``. Index 0 is clean data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("linear-alphabar", "cosine")

#: alpha_bar at t = T; keeps the log-SNR finite at the noisy end.
ALPHA_BAR_FLOOR = 1e-4

#: Offset of the squared-cosine profile (Nichol & Dhariwal style).
COSINE_OFFSET = 0.008


@dataclass(frozen=True)
class NoiseSchedule:
    kind: str
    T: int
    alpha_bar: np.ndarray
    alpha: np.ndarray
    sigma: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        for arr in (self.alpha_bar, self.alpha, self.sigma, self.lam):
            arr.setflags(write=False)

    @property
    def sigma_fraction(self) -> np.ndarray:
        """Noise magnitude normalized so that ``sigma_fraction[T] == 1``."""
        return self.sigma / self.sigma[self.T]


def build_schedule(kind: str = "cosine", T: int = 100) -> NoiseSchedule:
    """Build a schedule of ``T`` steps.

    ``linear-alphabar`` interpolates ``alpha_bar`` linearly from 1 down to
    ``ALPHA_BAR_FLOOR``. ``cosine`` uses the squared-cosine profile with the
    usual 0.008 offset, mapped affinely onto ``[ALPHA_BAR_FLOOR, 1]``.
    """
    if int(T) != T or T < 2:
        raise ValueError(f"schedule needs T >= 2, got {T!r}")
    T = int(T)
    u = np.arange(T + 1, dtype=np.float64) / T
    if kind == "linear-alphabar":
        alpha_bar = 1.0 - (1.0 - ALPHA_BAR_FLOOR) * u
    elif kind == "cosine":
        f = np.cos((u + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * np.pi / 2) ** 2
        f = (f - f[-1]) / (f[0] - f[-1])
        alpha_bar = ALPHA_BAR_FLOOR + (1.0 - ALPHA_BAR_FLOOR) * f
    else:
        raise ValueError(f"unknown schedule kind {kind!r}; expected one of {KINDS}")
    alpha_bar[0] = 1.0
    alpha_bar[-1] = ALPHA_BAR_FLOOR

    alpha = np.sqrt(alpha_bar)
    sigma = np.sqrt(1.0 - alpha_bar)
    lam = np.empty_like(alpha_bar)
    lam[0] = np.inf
    lam[1:] = np.log(alpha[1:]) - np.log(sigma[1:])
    return NoiseSchedule(kind, T, alpha_bar, alpha, sigma, lam)


def noise_level_to_timestep(schedule: NoiseSchedule, n_boom: float) -> int:
    """Return the step whose normalized noise magnitude is closest to ``n_boom``.

    Distance is measured on ``sigma[t] / sigma[T]`` over ``t = 1..T``; ties go
    to the smaller step.
    """
    if not 0.0 < n_boom < 1.0:
        raise ValueError(f"noise level must lie in (0, 1), got {n_boom!r}")
    dist = np.abs(schedule.sigma_fraction[1:] - n_boom)
    # float rounding must not break exact ties; first hit is the smaller t
    return int(np.flatnonzero(dist <= dist.min() + 1e-12)[0]) + 1


def cost_fraction(schedule: NoiseSchedule, t_boom: int) -> float:
    """Fraction of global-sampling denoiser rounds spent by a run from ``t_boom``."""
    if not 1 <= t_boom <= schedule.T:
        raise ValueError(f"t_boom must lie in [1, {schedule.T}], got {t_boom}")
    return t_boom / schedule.T
