"""
Long inputs with frozen overlaps
================================

A latent longer than one window is processed in windows overlapping by 25 %.
Each window's overlap is overwritten with the previous output and held fixed
through every reverse step, so the stitched output is continuous by design.
"""

# %%
import numpy as np

from boomaudio.boomerang import BoomerangConfig, boomerang_long, window_offsets
from boomaudio.schedule import build_schedule


class ToyDenoiser:
    """Stand-in that shrinks toward zero; swap in a trained model for audio."""

    def __call__(self, x_t, t, class_id=None):
        return 0.5 * x_t


schedule = build_schedule("cosine", 100)
z0 = np.random.default_rng(0).standard_normal((1000, 64))
cfg = BoomerangConfig(n_boom=0.4, window_frames=400, overlap_fraction=0.25, seed=1)
print("window starts:", window_offsets(1000, cfg.window_frames, cfg.overlap_frames))

out = boomerang_long(schedule, ToyDenoiser(), z0, cfg)
print("output frames:", out.shape[0])
print("distance to input per window:",
      [round(float(np.linalg.norm(out[o:o + 400] - z0[o:o + 400])), 2) for o in (0, 300, 600)])
