"""
Noise schedules, forward noising and the v-objective
====================================================

Walks through the pieces every sampler in the package is built on: a
variance-preserving schedule, the closed-form forward process and the
velocity parameterization the denoiser is trained to predict.
"""

# %%
import numpy as np

from boomaudio.diffusion import forward_diffuse, v_target, x0_from_v
from boomaudio.schedule import build_schedule, cost_fraction, noise_level_to_timestep

# Two schedule shapes with T = 100 steps. Index 0 is clean data.
cos = build_schedule("cosine", 100)
lin = build_schedule("linear-alphabar", 100)
for t in (0, 10, 50, 90, 100):
    print(f"t={t:3d}  cosine sigma={cos.sigma[t]:.3f}  linear sigma={lin.sigma[t]:.3f}")

# %%
# A user-facing noise level in (0, 1) is mapped onto the schedule by matching
# the normalized noise magnitude sigma[t] / sigma[T].
for n in (0.2, 0.4, 0.6, 0.8):
    t = noise_level_to_timestep(cos, n)
    print(f"noise {n:.1f} -> t_boom={t:3d}, reverse cost {cost_fraction(cos, t):.2f} of global sampling")

# %%
# Forward noising in one shot, then recovering the clean input from the exact
# velocity. The round trip is exact because alpha^2 + sigma^2 = 1.
rng = np.random.default_rng(0)
z0 = rng.standard_normal((6, 4))
eps = rng.standard_normal(z0.shape)
x_t = forward_diffuse(cos, z0, 40, eps)
v = v_target(cos, z0, eps, 40)
print("max round-trip error:", np.abs(x0_from_v(cos, x_t, v, 40) - z0).max())
