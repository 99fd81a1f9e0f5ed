"""Acceptance criteria, one test per criterion, each at its stated tolerance.

Criteria 6, 9 and 12 need the trained toy denoiser. It is trained once with
the default configuration (20 000 Adam steps on 200 clips) and cached under
``tests/.cache`` keyed by the configuration and the source of the modules that
shape it; set ``BOOMAUDIO_RETRAIN=1`` to force retraining. The training wall
time is stored with the cache and checked against the 20 minute budget.
"""

import hashlib
import itertools
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

import boomaudio
from boomaudio.boomerang import BoomerangConfig, boomerang_long, boomerang_window
from boomaudio.cli import main as cli_main
from boomaudio.codec import Signal, decode, encode
from boomaudio.diffusion import CallCounter, Condition, dpm_solver_pp_2m, forward_diffuse, v_target, x0_from_v
from boomaudio.model import Arch, Denoiser, TrainConfig, init_params, loss_and_grad, train
from boomaudio.rhythmeval import analyze, match_events, preservation_report, spectral_centroid
from boomaudio.schedule import build_schedule, noise_level_to_timestep
from boomaudio.synth import CLASSES, clip_set, synth_clip

from conftest import ACCEPTANCE_LINES, ConstantX0

DATA_SEED, TRAIN_SEED, EVAL_SEED, CORPUS_SEED = 1, 0, 99, 2024
LEVELS = (0.2, 0.4, 0.6, 0.8)
CACHE = Path(os.environ.get("BOOMAUDIO_CACHE", Path(__file__).parent / ".cache"))


def record(n, title, ok, detail, elapsed=None, budget=None):
    timing = "" if elapsed is None else f" [{elapsed:.1f} s / {budget:g} s]"
    ok = bool(ok) and (budget is None or elapsed < budget)
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} criterion {n}. {title}: {detail}{timing}")
    print(ACCEPTANCE_LINES[-1])
    assert ok, ACCEPTANCE_LINES[-1]


@pytest.fixture(scope="module")
def schedule():
    return build_schedule("cosine", 100)


def _cache_key() -> str:
    src = Path(boomaudio.__file__).parent
    h = hashlib.sha256()
    for name in ("model.py", "synth.py", "codec.py", "schedule.py"):
        h.update((src / name).read_bytes())
    h.update(repr((Arch(), TrainConfig(), DATA_SEED, TRAIN_SEED)).encode())
    return h.hexdigest()[:16]


@pytest.fixture(scope="module")
def toy_model(schedule):
    key = _cache_key()
    path, meta_path = CACHE / f"toy_{key}.bin", CACHE / f"toy_{key}.json"
    if path.exists() and meta_path.exists() and not os.environ.get("BOOMAUDIO_RETRAIN"):
        return Denoiser.load(path), json.loads(meta_path.read_text())
    clips = clip_set(200, DATA_SEED)
    latents = np.stack([encode(c.signal).values for c in clips])
    labels = np.array([c.class_id for c in clips])
    started = time.perf_counter()
    model, losses = train(Denoiser(Arch(), seed=TRAIN_SEED), latents, labels, schedule, TrainConfig(), seed=TRAIN_SEED)
    meta = {
        "train_seconds": time.perf_counter() - started,
        "loss_first_100": float(losses[:100].mean()),
        "loss_last_100": float(losses[-100:].mean()),
    }
    CACHE.mkdir(parents=True, exist_ok=True)
    model.save(path)
    meta_path.write_text(json.dumps(meta, indent=2))
    return Denoiser.load(path), meta


@pytest.fixture(scope="module")
def eval_clips():
    return clip_set(50, EVAL_SEED)


def test_c01_v_objective_identity(schedule):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        t = int(rng.integers(1, schedule.T + 1))
        z0, eps = rng.standard_normal(64), rng.standard_normal(64)
        x_t = forward_diffuse(schedule, z0, t, eps)
        worst = max(worst, np.abs(x0_from_v(schedule, x_t, v_target(schedule, z0, eps, t), t) - z0).max())
    record(1, "v-objective identity", worst <= 1e-6, f"max error {worst:.2e} <= 1e-6",
           time.perf_counter() - start, 1)


def test_c02_forward_moments(schedule):
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    details, ok = [], True
    n = 100_000
    for t in (10, 50, 90):
        z0 = 0.7
        x = forward_diffuse(schedule, np.full(n, z0), t, rng.standard_normal(n))
        var_expected = 1 - schedule.alpha_bar[t]
        se = np.sqrt(var_expected / n)
        mean_ok = abs(x.mean() - schedule.alpha[t] * z0) <= 3 * se
        var_ok = abs(x.var() / var_expected - 1) <= 0.01
        ok &= mean_ok and var_ok
        details.append(f"t={t}: mean dev {abs(x.mean() - schedule.alpha[t] * z0) / se:.2f} SE, "
                       f"var dev {abs(x.var() / var_expected - 1):.2%}")
    record(2, "forward-process moments", ok, "; ".join(details), time.perf_counter() - start, 10)


def test_c03_codec_exactness():
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    worst_rt, worst_energy = 0.0, 0.0
    for _ in range(100):
        x = rng.standard_normal(64 * int(rng.integers(1, 200)))
        lat = encode(Signal(x, 8000), 64)
        worst_rt = max(worst_rt, np.abs(decode(lat).samples - x).max())
        worst_energy = max(worst_energy, abs(np.sum(lat.values**2) / np.sum(x**2) - 1))
    record(3, "codec exactness", worst_rt <= 1e-6 and worst_energy <= 1e-6,
           f"round trip {worst_rt:.1e}, Parseval {worst_energy:.1e}", time.perf_counter() - start, 5)


def test_c04_oracle_solver(schedule):
    rng = np.random.default_rng(4)
    start = time.perf_counter()
    errs = {}
    for t_start in (1, 10, schedule.T):
        c = rng.standard_normal((50, 64))
        out = dpm_solver_pp_2m(schedule, ConstantX0(schedule, c), rng.standard_normal(c.shape), t_start)
        errs[t_start] = float(np.abs(out - c).max())
    record(4, "oracle-solver convergence", max(errs.values()) <= 1e-4,
           ", ".join(f"t_start={k}: {v:.1e}" for k, v in errs.items()), time.perf_counter() - start, 1)


def test_c05_cost_law(schedule):
    start = time.perf_counter()
    n = float(schedule.sigma_fraction[20])
    t_boom = noise_level_to_timestep(schedule, n)
    z = np.random.default_rng(5).standard_normal((16, 64))

    def zero(x, t, class_id=None):
        return np.zeros_like(x)

    counts = {}
    for g in (1.0, 2.5):
        d = CallCounter(zero)
        d.n_classes = len(CLASSES)
        boomerang_window(schedule, d, z, BoomerangConfig(n, Condition(1, g), window_frames=16))
        counts[g] = d.calls
    ok = t_boom == 20 and counts[1.0] == 20 and counts[2.5] == 40
    record(5, "cost law", ok, f"t_boom={t_boom}, calls g=1: {counts[1.0]}, g=2.5: {counts[2.5]}",
           time.perf_counter() - start, 1)


def test_c06_frozen_overlap(schedule, toy_model):
    model, _ = toy_model
    clip = synth_clip(110, "saw-pluck", 8.0, 8000, seed=6)
    z = encode(clip.signal).values
    assert z.shape[0] == 1000
    start = time.perf_counter()
    cfg = BoomerangConfig(0.4, window_frames=400, overlap_fraction=0.25, seed=6)
    inputs = []

    class Spy:
        n_classes = model.n_classes
        trained = True

        def __call__(self, x, t, class_id=None):
            inputs.append(x[:100].copy())
            return model(x, t, class_id)

    out = boomerang_long(schedule, Spy(), z, cfg)
    elapsed = time.perf_counter() - start
    t_boom = noise_level_to_timestep(schedule, 0.4)
    held = all(np.array_equal(x, out[300:400]) for x in inputs[t_boom:2 * t_boom]) and all(
        np.array_equal(x, out[600:700]) for x in inputs[2 * t_boom:])
    record(6, "frozen-overlap identity", held and len(inputs) == 3 * t_boom and out.shape == z.shape,
           f"3 windows x {t_boom} steps, overlap regions bit-identical to predecessor tails", elapsed, 60)


def _oracle_matches(ref, est, tol):
    a, b = (ref, est) if len(ref) <= len(est) else (est, ref)
    best = 0
    for perm in itertools.permutations(range(len(b)), len(a)):
        best = max(best, sum(abs(a[i] - b[j]) <= tol for i, j in enumerate(perm)))
        if best == len(a):
            break
    return best


def test_c07_matching_oracle():
    rng = np.random.default_rng(7)
    cases = [(np.sort(rng.uniform(0, 1.5, rng.integers(0, 9))), np.sort(rng.uniform(0, 1.5, rng.integers(0, 9))))
             for _ in range(500)]
    expected = [_oracle_matches(ref, est, 0.08) for ref, est in cases]
    # the budget covers the matcher; the brute-force oracle is excluded
    start = time.perf_counter()
    got = [match_events(ref, est, 0.08).n_matched for ref, est in cases]
    elapsed = time.perf_counter() - start
    mismatches = sum(g != e for g, e in zip(got, expected))
    record(7, "matching oracle", mismatches == 0, f"{mismatches} mismatches in 500 instances", elapsed, 5)


def test_c08_beat_tracker_sanity():
    start = time.perf_counter()
    scores = []
    for clip in clip_set(50, 8):
        beats = analyze(clip.signal).beats
        scores.append(0.0 if beats is None else match_events(clip.beat_times_s, beats, 0.08).f1)
    mean = float(np.mean(scores))
    record(8, "beat-tracker sanity", mean >= 0.95, f"mean F1 {mean:.3f} >= 0.95 over 50 clips",
           time.perf_counter() - start, 30)


def _boomerang_eval(schedule, model, clips, n_boom, cond=lambda clip: Condition()):
    beat, onset, dist = [], [], []
    for i, clip in enumerate(clips):
        z = encode(clip.signal)
        out = boomerang_window(schedule, model, z, BoomerangConfig(n_boom, cond(clip), seed=i))
        dist.append(float(np.linalg.norm(out - z.values)))
        report = preservation_report(clip.signal, decode(z.with_values(out)))
        onset.append(report["onset"].f1)
        beat.append(None if report["beat"] is None else report["beat"].f1)
    defined = [b for b in beat if b is not None]
    return {
        "beat_f1": float(np.mean(defined)) if defined else float("nan"),
        "beat_f1_std": float(np.std(defined)) if defined else float("nan"),
        "beat_undefined": len(beat) - len(defined),
        "onset_f1": float(np.mean(onset)),
        "latent_l2": float(np.mean(dist)),
    }


def test_c09_noise_trend(schedule, toy_model, eval_clips):
    model, meta = toy_model
    smallest = 0.5 * float(schedule.sigma_fraction[1])
    rows = {n: _boomerang_eval(schedule, model, eval_clips, n) for n in (smallest, *LEVELS)}
    f1 = [rows[n]["beat_f1"] for n in LEVELS]
    l2 = [rows[n]["latent_l2"] for n in LEVELS]
    ok = (
        all(a > b for a, b in zip(f1, f1[1:]))
        and all(a < b for a, b in zip(l2, l2[1:]))
        and rows[smallest]["beat_f1"] >= 0.95
        and meta["train_seconds"] <= 20 * 60
    )
    (CACHE / "trend_values.json").write_text(json.dumps({str(k): v for k, v in rows.items()}, indent=2))
    detail = (f"train {meta['train_seconds'] / 60:.1f} min; near-zero F1 {rows[smallest]['beat_f1']:.3f}; beat F1 "
              + " > ".join(f"{v:.3f}" for v in f1) + "; L2 " + " < ".join(f"{v:.1f}" for v in l2))
    record(9, "noise-level trend", ok, detail)


def test_c10_gradient_check():
    start = time.perf_counter()
    arch = Arch(latent_dim=4, hidden_dim=8, n_blocks=2, n_classes=4, time_features=4)
    rng = np.random.default_rng(10)
    flat = init_params(arch, seed=10, dtype=np.float64) + 0.3 * rng.standard_normal(arch.n_params)
    x = rng.standard_normal((4, 7, 4))
    target = rng.standard_normal(x.shape)
    t = rng.integers(1, 101, 4)
    cls = rng.integers(0, 5, 4)
    _, grad = loss_and_grad(arch, flat, x, t, cls, target, margin=2)
    worst = 0.0
    for i in rng.choice(arch.n_params, 100, replace=False):
        e = np.zeros_like(flat)
        e[i] = 1e-5
        fd = (loss_and_grad(arch, flat + e, x, t, cls, target, margin=2)[0]
              - loss_and_grad(arch, flat - e, x, t, cls, target, margin=2)[0]) / 2e-5
        worst = max(worst, abs(fd - grad[i]) / max(abs(fd), abs(grad[i]), 1e-6))
    record(10, "gradient correctness", worst <= 1e-3, f"max relative error {worst:.1e} over 100 coordinates",
           time.perf_counter() - start, 10)


def _tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_c11_cli_determinism(tmp_path):
    start = time.perf_counter()

    def run_all(root: Path):
        root.mkdir()
        data = root / "data"
        cli_main(["synth-data", "--out", str(data), "--count", "200", "--eval-count", "50", "--seed", "1"])
        cli_main(["train", "--data", str(data), "--out", str(root / "model.bin"), "--steps", "40", "--seed", "1"])
        model = str(root / "model.bin")
        src = data / "eval" / "clip_0001.wav"
        cli_main(["generate", "--model", model, "--cond", "saw-pluck", "--out", str(root / "gen.wav"), "--seed", "2"])
        cli_main(["boomerang", "--model", model, "--in", str(src), "--out", str(root / "boom.wav"),
                  "--noise", "0.4", "--seed", "3", "--window-frames", "300"])
        few = root / "few"
        few.mkdir()
        for p in sorted((data / "eval").glob("*.wav"))[:2]:
            (few / p.name).write_bytes(p.read_bytes())
        cli_main(["augment", "--model", model, "--in-dir", str(few), "--out-dir", str(root / "aug"),
                  "--variations", "2", "--manifest", str(root / "manifest.jsonl"), "--seed", "4"])
        cli_main(["eval-preserve", "--orig-dir", str(few), "--new-dir", str(few), "--report", str(root / "report.json")])
        # manifests name their own output folder; compare them relative to it
        manifest = (root / "manifest.jsonl").read_text().replace(str(root), "<root>")
        return _tree(root), manifest

    a, ma = run_all(tmp_path / "a")
    b, mb = run_all(tmp_path / "b")
    a.pop("manifest.jsonl"), b.pop("manifest.jsonl")
    differing = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    record(11, "CLI determinism", not differing and ma == mb,
           f"{len(a)} artifacts byte-identical across reruns" if not differing else f"differ: {differing[:5]}",
           time.perf_counter() - start, 120)


def test_c12_timbre_transfer(schedule, toy_model):
    model, _ = toy_model
    start = time.perf_counter()
    saw = CLASSES.index("saw-pluck")
    corpus = [c for c in clip_set(40, CORPUS_SEED) if c.class_id == saw]
    saw_centroid = float(np.mean([spectral_centroid(c.signal) for c in corpus]))
    clip = synth_clip(100, "sine-pluck", 6.0, 8000, seed=12)
    z = encode(clip.signal)
    out = boomerang_window(schedule, model, z, BoomerangConfig(0.8, Condition(saw, 3.0), seed=12))
    sig = decode(z.with_values(out))
    before, after = spectral_centroid(clip.signal), spectral_centroid(sig)
    beat = preservation_report(clip.signal, sig)["beat"]
    f1 = 0.0 if beat is None else beat.f1
    ok = abs(after - saw_centroid) < abs(before - saw_centroid) and f1 >= 0.5
    record(12, "content manipulation", ok,
           f"centroid {before:.0f} -> {after:.0f} Hz (saw corpus {saw_centroid:.0f} Hz), beat F1 {f1:.2f} >= 0.5",
           time.perf_counter() - start, 60)
