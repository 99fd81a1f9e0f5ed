"""
Training the toy denoiser and Boomerang sampling
================================================

Trains the residual-MLP v-predictor on synthetic rhythm clips, then pushes
held-out clips through Boomerang sampling at increasing noise levels and
measures how much rhythm survives.

Pass a step count to trade quality for time (default 3000 steps, ~2 minutes
on one core; the acceptance suite uses 20000).
"""

# %%
import sys
import time

import numpy as np

from boomaudio.boomerang import BoomerangConfig, boomerang_window
from boomaudio.codec import decode, encode
from boomaudio.model import Arch, Denoiser, TrainConfig, train
from boomaudio.rhythmeval import preservation_report
from boomaudio.schedule import build_schedule
from boomaudio.synth import clip_set

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 3000
schedule = build_schedule("cosine", 100)
train_clips = clip_set(200, seed=1)
latents = np.stack([encode(c.signal).values for c in train_clips])
labels = np.array([c.class_id for c in train_clips])

start = time.perf_counter()
model, losses = train(Denoiser(Arch()), latents, labels, schedule, TrainConfig(steps=steps), seed=0)
print(f"{steps} steps in {time.perf_counter() - start:.0f} s; loss {losses[:100].mean():.3f} -> {losses[-100:].mean():.3f}")

# %%
eval_clips = clip_set(10, seed=99)
for n in (0.2, 0.4, 0.6, 0.8):
    f1, dist = [], []
    for i, clip in enumerate(eval_clips):
        z = encode(clip.signal)
        out = boomerang_window(schedule, model, z, BoomerangConfig(n, seed=i))
        dist.append(np.linalg.norm(out - z.values))
        beat = preservation_report(clip.signal, decode(z.with_values(out)))["beat"]
        f1.append(np.nan if beat is None else beat.f1)
    print(f"noise {n:.1f}: beat F1 {np.nanmean(f1):.3f}, latent distance {np.mean(dist):.2f}")
