"""Forward noising, v-parameterization algebra and reverse samplers.

All functions work on plain ``(frames, dim)`` arrays. A *denoiser* is any
callable ``denoiser(x_t, t, class_id) -> v_hat`` where ``class_id`` is ``None``
for the unconditional branch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .schedule import NoiseSchedule

Denoiser = Callable[[np.ndarray, int, Optional[int]], np.ndarray]


class NumericalError(RuntimeError):
    """A sampler produced a non-finite state."""


@dataclass(frozen=True)
class Condition:
    class_id: Optional[int] = None
    guidance_scale: float = 1.0

    def __post_init__(self):
        if self.guidance_scale < 0:
            raise ValueError(f"guidance scale must be >= 0, got {self.guidance_scale}")


class CallCounter:
    """Wrap a denoiser and count its evaluations."""

    def __init__(self, denoiser: Denoiser):
        self.denoiser = denoiser
        self.calls = 0

    def __call__(self, x_t, t, class_id=None):
        self.calls += 1
        return self.denoiser(x_t, t, class_id)

    def __getattr__(self, name):
        return getattr(self.denoiser, name)


def _check_shapes(a, b, what):
    if np.shape(a) != np.shape(b):
        raise ValueError(f"{what}: shape mismatch {np.shape(a)} vs {np.shape(b)}")


def forward_diffuse(s: NoiseSchedule, z0, t: int, eps):
    """Sample ``q(x_t | z0)`` as ``alpha[t] * z0 + sigma[t] * eps``."""
    _check_shapes(z0, eps, "forward_diffuse")
    if not 0 <= t <= s.T:
        raise ValueError(f"timestep {t} outside [0, {s.T}]")
    if t == 0:
        return np.array(z0, copy=True)
    return s.alpha[t] * z0 + s.sigma[t] * eps


def v_target(s: NoiseSchedule, z0, eps, t: int):
    _check_shapes(z0, eps, "v_target")
    return s.alpha[t] * eps - s.sigma[t] * z0


def x0_from_v(s: NoiseSchedule, x_t, v, t: int):
    _check_shapes(x_t, v, "x0_from_v")
    return s.alpha[t] * x_t - s.sigma[t] * v


def guided_v(denoiser: Denoiser, x_t, t: int, cond: Condition):
    """Classifier-free guidance ``v_u + g * (v_c - v_u)``.

    Only one evaluation is made when no class is set or when ``g == 1``.
    """
    n_classes = getattr(denoiser, "n_classes", None)
    if cond.class_id is not None and n_classes is not None and not 0 <= cond.class_id < n_classes:
        raise ValueError(f"unknown class id {cond.class_id} (model has {n_classes} classes)")
    if cond.class_id is None:
        return denoiser(x_t, t, None)
    if cond.guidance_scale == 1.0:
        return denoiser(x_t, t, cond.class_id)
    v_c = denoiser(x_t, t, cond.class_id)
    v_u = denoiser(x_t, t, None)
    return v_u + cond.guidance_scale * (v_c - v_u)


def rounds_per_step(cond: Condition) -> int:
    return 2 if cond.class_id is not None and cond.guidance_scale != 1.0 else 1


def ancestral_step(s: NoiseSchedule, x_t, t: int, v_hat, noise_draw):
    """One step of the DDPM posterior ``p(x_{t-1} | x_t, x0_hat)``."""
    if not 1 <= t <= s.T:
        raise ValueError(f"ancestral step needs 1 <= t <= {s.T}, got {t}")
    x0_hat = x0_from_v(s, x_t, v_hat, t)
    a_t, a_s = s.alpha[t], s.alpha[t - 1]
    var_t, var_s = s.sigma[t] ** 2, s.sigma[t - 1] ** 2
    a_ts = a_t / a_s
    var_ts = var_t - a_ts**2 * var_s
    mean = (a_ts * var_s / var_t) * x_t + (a_s * var_ts / var_t) * x0_hat
    if t == 1:
        return mean
    return mean + np.sqrt(var_ts * var_s / var_t) * noise_draw


def _freeze(x, frozen):
    if frozen is not None:
        region, values = frozen
        x[region] = values
    return x


def _guard(x, t):
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"non-finite sampler state after the step from t={t}")


def dpm_solver_pp_2m(
    s: NoiseSchedule,
    denoiser: Denoiser,
    x_start,
    t_start: int,
    cond: Condition = Condition(),
    seed=None,
    frozen=None,
):
    """Deterministic second-order multistep solver in data-prediction form.

    Steps ``t_start -> t_start-1 -> ... -> 0``. The first step is first order;
    later steps extrapolate from the two most recent ``x0`` predictions with
    weight ``1/(2r)``, ``r = h_prev / h``. The last step lands on ``sigma = 0``
    where the log-SNR step is infinite, so it is taken at first order and
    returns the final ``x0`` prediction.

    ``frozen`` is an optional ``(index, values)`` pair written into the state and
    into every stored ``x0`` prediction after each step. ``seed`` is unused and
    accepted for signature parity with :func:`ancestral_sample`.
    """
    if not 1 <= t_start <= s.T:
        raise ValueError(f"t_start must lie in [1, {s.T}], got {t_start}")
    x = _freeze(np.array(x_start, dtype=np.float64, copy=True), frozen)
    x0_prev = None
    h_prev = None
    for t in range(t_start, 0, -1):
        x0 = _freeze(x0_from_v(s, x, guided_v(denoiser, x, t, cond), t), frozen)
        if t == 1:
            x = x0.copy()
        else:
            h = s.lam[t - 1] - s.lam[t]
            if x0_prev is None:
                d = x0
            else:
                r = h_prev / h
                d = (1.0 + 0.5 / r) * x0 - (0.5 / r) * x0_prev
            x = (s.sigma[t - 1] / s.sigma[t]) * x - s.alpha[t - 1] * np.expm1(-h) * d
            h_prev = h
        x0_prev = x0
        x = _freeze(x, frozen)
        _guard(x, t)
    return x


def ancestral_sample(
    s: NoiseSchedule,
    denoiser: Denoiser,
    x_start,
    t_start: int,
    cond: Condition = Condition(),
    seed=None,
    frozen=None,
):
    """Stochastic reverse chain built from :func:`ancestral_step`."""
    if not 1 <= t_start <= s.T:
        raise ValueError(f"t_start must lie in [1, {s.T}], got {t_start}")
    rng = np.random.default_rng(seed)
    x = _freeze(np.array(x_start, dtype=np.float64, copy=True), frozen)
    for t in range(t_start, 0, -1):
        v = guided_v(denoiser, x, t, cond)
        x = _freeze(ancestral_step(s, x, t, v, rng.standard_normal(x.shape)), frozen)
        _guard(x, t)
    return x


SAMPLERS = {"dpm2m": dpm_solver_pp_2m, "ancestral": ancestral_sample}


def global_sample(
    s: NoiseSchedule,
    denoiser: Denoiser,
    cond: Condition,
    shape,
    seed,
    sampler: str = "dpm2m",
):
    """Generate from pure noise at ``t = T``."""
    rng = np.random.default_rng(seed)
    x_T = rng.standard_normal(shape)
    return SAMPLERS[sampler](s, denoiser, x_T, s.T, cond, seed=rng.integers(2**63))
