"""Command-line entry point: ``boomaudio <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure. On
failure one JSON line ``{"error": ..., "message": ...}`` goes to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .boomerang import DEFAULT_WINDOW_FRAMES, BoomerangConfig, boomerang_signal
from .codec import Latent, decode, encode, fit_length, prepare
from .diffusion import SAMPLERS, Condition, NumericalError, global_sample
from .manifest import AugmentationRecord, derive_seed, write_manifest
from .model import Arch, Denoiser, TrainConfig, train
from .rhythmeval import TOLERANCE_S, preservation_report, summarize
from .schedule import KINDS, build_schedule
from .synth import CLASSES, class_index, clip_set
from .wavio import WavError, wav_read, wav_write

log = logging.getLogger("boomaudio")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 1, 2, 3


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _fail("usage", message, EXIT_USAGE)


def _fail(kind: str, message: str, code: int):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    raise SystemExit(code)


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _condition(args) -> Condition:
    class_id = None if args.cond is None else class_index(args.cond)
    return Condition(class_id, args.guidance)


def _load_model(path) -> Denoiser:
    try:
        return Denoiser.load(path)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot load model {path}: {exc}") from exc


def cmd_synth_data(args) -> int:
    out = Path(args.out)
    for split, count, tag in (("train", args.count, "train"), ("eval", args.eval_count, "eval")):
        folder = out / split
        folder.mkdir(parents=True, exist_ok=True)
        for i, clip in enumerate(clip_set(count, derive_seed(args.seed, tag), args.duration, args.sr)):
            stem = folder / f"clip_{i:04d}"
            wav_write(stem.with_suffix(".wav"), clip.signal)
            _write_json(stem.with_suffix(".json"), {
                "tempo_bpm": clip.tempo_bpm,
                "beat_times_s": clip.beat_times_s.tolist(),
                "class": clip.class_name,
                "class_id": clip.class_id,
                "pitch_hz": clip.pitch_hz,
                "seed": clip.seed,
            })
    return 0


def _load_training_set(data_dir: Path, arch: Arch):
    wavs = sorted((data_dir / "train").glob("*.wav")) or sorted(data_dir.glob("*.wav"))
    if not wavs:
        raise DataError(f"no WAV files under {data_dir}")
    latents, labels = [], []
    length = None
    for wav in wavs:
        meta_path = wav.with_suffix(".json")
        if not meta_path.exists():
            raise DataError(f"missing annotation {meta_path}")
        meta = json.loads(meta_path.read_text())
        sig = wav_read(wav)
        if length is None:
            n = int(round(sig.samples.size * arch.sample_rate_hz / sig.sample_rate_hz))
            length = fit_length(n, arch.latent_dim)
        latents.append(encode(prepare(sig, arch.sample_rate_hz, length), arch.latent_dim).values)
        labels.append(class_index(meta.get("class_id", meta.get("class"))))
    return np.stack(latents), np.asarray(labels)


def cmd_train(args) -> int:
    arch = Arch(T=args.T, schedule=args.schedule, sample_rate_hz=args.sr,
                hidden_dim=args.hidden, n_blocks=args.blocks)
    latents, labels = _load_training_set(Path(args.data), arch)
    s = build_schedule(arch.schedule, arch.T)
    cfg = TrainConfig(steps=args.steps, batch=args.batch, lr=args.lr)
    init = Denoiser(arch, seed=derive_seed(args.seed, "init"))
    started = time.perf_counter()
    model, losses = train(init, latents, labels, s, cfg, seed=derive_seed(args.seed, "train"))
    model.save(args.out)
    if args.loss_trace:
        np.savetxt(args.loss_trace, losses, fmt="%.8e")
    log.info("trained %d steps in %.1f s, final loss %.4g", args.steps, time.perf_counter() - started,
             losses[-1] if losses.size else float("nan"))
    return 0


def cmd_generate(args) -> int:
    model = _load_model(args.model)
    arch = model.arch
    s = build_schedule(arch.schedule, arch.T)
    frames = fit_length(int(round(args.seconds * arch.sample_rate_hz)), arch.latent_dim) // arch.latent_dim
    z = global_sample(s, model, _condition(args), (frames, arch.latent_dim),
                      derive_seed(args.seed, "generate"), sampler=args.sampler)
    sig = decode(Latent(z, arch.sample_rate_hz, arch.latent_dim))
    wav_write(args.out, sig)
    return 0


def _boomerang_config(args, seed: int) -> BoomerangConfig:
    return BoomerangConfig(
        n_boom=args.noise,
        condition=_condition(args),
        seed=seed,
        sampler=args.sampler,
        window_frames=args.window_frames,
        overlap_fraction=args.overlap,
    )


def cmd_boomerang(args) -> int:
    model = _load_model(args.model)
    s = build_schedule(model.arch.schedule, model.arch.T)
    cfg = _boomerang_config(args, derive_seed(args.seed, "boomerang"))
    out = boomerang_signal(wav_read(args.inp), s, model, cfg, model.arch.sample_rate_hz, model.arch.latent_dim)
    wav_write(args.out, out)
    return 0


def cmd_augment(args) -> int:
    model = _load_model(args.model)
    arch = model.arch
    s = build_schedule(arch.schedule, arch.T)
    sources = sorted(Path(args.in_dir).glob("*.wav"))
    if not sources:
        raise DataError(f"no WAV files in {args.in_dir}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def work(item):
        i, src = item
        signal = wav_read(src)
        seeds = [derive_seed(args.seed, "augment", i, k) for k in range(args.variations)]
        paths, f1s = [], []
        for k, seed in enumerate(seeds):
            out = boomerang_signal(signal, s, model, _boomerang_config(args, seed),
                                   arch.sample_rate_hz, arch.latent_dim)
            path = out_dir / f"{src.stem}_v{k:02d}.wav"
            wav_write(path, out)
            paths.append(str(path))
            if args.report_f1:
                ref = prepare(signal, arch.sample_rate_hz, out.samples.size)
                beat = preservation_report(ref, out)["beat"]
                f1s.append(None if beat is None else beat.f1)
        return AugmentationRecord(
            source_path=str(src),
            variation_paths=paths,
            n_boom=args.noise,
            seed_per_variation=seeds,
            condition={"class_id": cfg_cond.class_id, "guidance_scale": cfg_cond.guidance_scale},
            sampler=args.sampler,
            schedule={"kind": arch.schedule, "T": arch.T},
            tool_version=__version__,
            beat_f1=f1s if args.report_f1 else None,
        )

    cfg_cond = _condition(args)
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        records = list(pool.map(work, enumerate(sources)))
    write_manifest(args.manifest, records)
    return 0


def _match_dict(report):
    return None if report is None else report.to_dict()


def cmd_eval_preserve(args) -> int:
    orig_dir, new_dir = Path(args.orig_dir), Path(args.new_dir)
    originals = sorted(orig_dir.glob("*.wav"))
    if not originals:
        raise DataError(f"no WAV files in {orig_dir}")
    files, errors = [], 0
    for path in originals:
        entry = {"name": path.name}
        other = new_dir / path.name
        try:
            if not other.exists():
                raise DataError(f"missing counterpart {other}")
            a, b = wav_read(path), wav_read(other)
            if b.sample_rate_hz != a.sample_rate_hz:
                b = prepare(b, a.sample_rate_hz, a.samples.size)
            report = preservation_report(a, b, args.tolerance)
            entry["onset"] = _match_dict(report["onset"])
            entry["beat"] = _match_dict(report["beat"])
        except (DataError, WavError, ValueError) as exc:
            entry["error"] = str(exc)
            errors += 1
        files.append(entry)

    def column(kind, key):
        return [f[kind][key] if f.get(kind) else None for f in files if "error" not in f]

    aggregate = {
        f"{kind}_{key}": summarize(column(kind, key))
        for kind in ("onset", "beat") for key in ("f1", "precision", "recall")
    }
    _write_json(args.report, {
        "tolerance_s": args.tolerance,
        "files": files,
        "aggregate": aggregate,
        "errors": errors,
    })
    if errors:
        _fail("data", f"{errors} file(s) could not be evaluated; see {args.report}", EXIT_DATA)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="boomaudio", description=__doc__.splitlines()[0])
    p.add_argument("--verbose", "-v", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("synth-data", help="render synthetic rhythm clips with annotations")
    q.add_argument("--out", required=True)
    q.add_argument("--count", type=int, default=200)
    q.add_argument("--eval-count", type=int, default=50)
    q.add_argument("--sr", type=int, default=8000)
    q.add_argument("--duration", type=float, default=6.0)
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=cmd_synth_data)

    q = sub.add_parser("train", help="train the toy denoiser")
    q.add_argument("--data", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--steps", type=int, default=TrainConfig.steps)
    q.add_argument("--batch", type=int, default=TrainConfig.batch)
    q.add_argument("--lr", type=float, default=TrainConfig.lr)
    q.add_argument("--hidden", type=int, default=Arch.hidden_dim)
    q.add_argument("--blocks", type=int, default=Arch.n_blocks)
    q.add_argument("--schedule", choices=KINDS, default="cosine")
    q.add_argument("--T", type=int, default=100)
    q.add_argument("--sr", type=int, default=8000)
    q.add_argument("--loss-trace")
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=cmd_train)

    def sampling_flags(q, cond_default=None):
        q.add_argument("--model", required=True)
        q.add_argument("--cond", default=cond_default, help=f"class name or id: {', '.join(CLASSES)}")
        q.add_argument("--guidance", type=float, default=1.0)
        q.add_argument("--sampler", choices=sorted(SAMPLERS), default="dpm2m")
        q.add_argument("--seed", type=int, default=0)

    q = sub.add_parser("generate", help="global sampling from pure noise")
    sampling_flags(q)
    q.add_argument("--seconds", type=float, default=6.0)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_generate)

    def boomerang_flags(q):
        q.add_argument("--noise", type=float, default=0.4)
        q.add_argument("--window-frames", type=int, default=DEFAULT_WINDOW_FRAMES)
        q.add_argument("--overlap", type=float, default=0.25)

    q = sub.add_parser("boomerang", help="Boomerang-sample one file")
    sampling_flags(q)
    boomerang_flags(q)
    q.add_argument("--in", dest="inp", required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_boomerang)

    q = sub.add_parser("augment", help="precompute Boomerang variations and a manifest")
    sampling_flags(q)
    boomerang_flags(q)
    q.add_argument("--in-dir", required=True)
    q.add_argument("--out-dir", required=True)
    q.add_argument("--variations", type=int, default=6)
    q.add_argument("--manifest", required=True)
    q.add_argument("--jobs", type=int, default=1)
    q.add_argument("--report-f1", action="store_true", help="record beat F1 of each variation")
    q.set_defaults(func=cmd_augment)

    q = sub.add_parser("eval-preserve", help="onset/beat preservation between two folders")
    q.add_argument("--orig-dir", required=True)
    q.add_argument("--new-dir", required=True)
    q.add_argument("--tolerance", type=float, default=TOLERANCE_S)
    q.add_argument("--report", required=True)
    q.set_defaults(func=cmd_eval_preserve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalError as exc:
        _fail("numerical", str(exc), EXIT_NUMERICAL)
    except (DataError, WavError, OSError) as exc:
        _fail("data", str(exc), EXIT_DATA)
    except ValueError as exc:
        _fail("usage", str(exc), EXIT_USAGE)


if __name__ == "__main__":
    sys.exit(main())
