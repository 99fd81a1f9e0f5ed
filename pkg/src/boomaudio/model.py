"""Toy v-prediction denoiser with hand-written backpropagation.

The network is a residual MLP applied to every latent frame. Its input is the
frame plus ``context`` neighbours on each side (zero padded at the edges),
a fixed sinusoidal embedding of ``t / T`` and a learned class embedding whose
last row is the unconditional slot.

Flat parameter layout, in this order (row-major)::

    w_in   (2*context+1)*latent_dim x hidden
    w_time time_features x hidden
    b_in   hidden
    emb    (n_classes+1) x hidden
    per block k = 0..n_blocks-1:
        w1_k hidden x hidden, b1_k hidden, w2_k hidden x hidden, b2_k hidden
    w_out  hidden x latent_dim
    b_out  latent_dim

Model files hold a 56-byte header (8-byte magic, then little-endian uint32
format version, latent_dim, hidden_dim, n_blocks, n_classes, context,
time_features, T, schedule code, sample rate, trained flag, parameter count)
followed by the flat parameters as little-endian float32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diffusion import NumericalError
from .schedule import NoiseSchedule

MAGIC = b"BOOMDNZ\x00"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIIIIIIIIIIII")
_SCHEDULE_CODES = ("linear-alphabar", "cosine")


@dataclass(frozen=True)
class Arch:
    latent_dim: int = 64
    hidden_dim: int = 128
    n_blocks: int = 4
    n_classes: int = 4
    context: int = 2
    time_features: int = 16
    T: int = 100
    schedule: str = "cosine"
    sample_rate_hz: int = 8000

    @property
    def in_dim(self) -> int:
        return (2 * self.context + 1) * self.latent_dim

    def shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        H = self.hidden_dim
        out = [
            ("w_in", (self.in_dim, H)),
            ("w_time", (self.time_features, H)),
            ("b_in", (H,)),
            ("emb", (self.n_classes + 1, H)),
        ]
        for k in range(self.n_blocks):
            out += [(f"w1_{k}", (H, H)), (f"b1_{k}", (H,)), (f"w2_{k}", (H, H)), (f"b2_{k}", (H,))]
        out += [("w_out", (H, self.latent_dim)), ("b_out", (self.latent_dim,))]
        return out

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.shapes())


def unflatten(arch: Arch, flat: np.ndarray) -> dict[str, np.ndarray]:
    """Views into ``flat`` keyed by parameter name."""
    if flat.size != arch.n_params:
        raise ValueError(f"expected {arch.n_params} parameters, got {flat.size}")
    params, pos = {}, 0
    for name, shape in arch.shapes():
        n = int(np.prod(shape))
        params[name] = flat[pos:pos + n].reshape(shape)
        pos += n
    return params


def init_params(arch: Arch, seed=0, dtype=np.float32) -> np.ndarray:
    rng = np.random.default_rng(seed)
    flat = np.zeros(arch.n_params, dtype=dtype)
    p = unflatten(arch, flat)
    H = arch.hidden_dim
    p["w_in"][:] = rng.standard_normal(p["w_in"].shape) / np.sqrt(arch.in_dim)
    p["w_time"][:] = rng.standard_normal(p["w_time"].shape) / np.sqrt(arch.time_features)
    p["emb"][:] = 0.1 * rng.standard_normal(p["emb"].shape)
    for k in range(arch.n_blocks):
        p[f"w1_{k}"][:] = rng.standard_normal((H, H)) * np.sqrt(2.0 / H)
        # small residual branches keep the initial network close to identity
        p[f"w2_{k}"][:] = rng.standard_normal((H, H)) * (0.1 / np.sqrt(H))
    p["w_out"][:] = rng.standard_normal(p["w_out"].shape) * (0.1 / np.sqrt(H))
    return flat


def time_embedding(t, T: int, n_features: int) -> np.ndarray:
    """Sin/cos features of ``t / T`` at octave-spaced frequencies, shape (B, n_features)."""
    u = np.atleast_1d(np.asarray(t, dtype=np.float64)) / T
    freqs = np.pi * 2.0 ** np.arange(n_features // 2)
    ang = u[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def _context_stack(x: np.ndarray, context: int) -> np.ndarray:
    B, F, D = x.shape
    padded = np.zeros((B, F + 2 * context, D), dtype=x.dtype)
    padded[:, context:context + F] = x
    return np.concatenate([padded[:, k:k + F] for k in range(2 * context + 1)], axis=2)


def _silu(a):
    return a / (1.0 + np.exp(-a))


def forward(arch: Arch, params: dict, x, t, class_ids, keep_cache=False):
    """Batched forward pass.

    ``x`` is (B, F, D); ``t`` and ``class_ids`` have length B, with
    ``class_ids == n_classes`` selecting the unconditional row.
    """
    dtype = params["w_in"].dtype
    x = np.asarray(x, dtype=dtype)
    B, F, D = x.shape
    H = arch.hidden_dim
    ctx = _context_stack(x, arch.context).reshape(B * F, arch.in_dim)
    temb = time_embedding(t, arch.T, arch.time_features).astype(dtype)
    cond = temb @ params["w_time"] + params["b_in"] + params["emb"][class_ids]
    h = (ctx @ params["w_in"]).reshape(B, F, H) + cond[:, None, :]
    h = h.reshape(B * F, H)
    cache = {"ctx": ctx, "temb": temb, "class_ids": class_ids, "shape": (B, F), "blocks": []}
    for k in range(arch.n_blocks):
        a = h @ params[f"w1_{k}"] + params[f"b1_{k}"]
        s = 1.0 / (1.0 + np.exp(-a))
        u = a * s
        if keep_cache:
            cache["blocks"].append((h, a, s, u))
        h = h + u @ params[f"w2_{k}"] + params[f"b2_{k}"]
    cache["h_last"] = h
    out = (h @ params["w_out"] + params["b_out"]).reshape(B, F, D)
    return (out, cache) if keep_cache else out


def backward(arch: Arch, params: dict, cache: dict, d_out: np.ndarray, grads: dict) -> None:
    """Accumulate parameter gradients for upstream gradient ``d_out`` into ``grads``."""
    B, F = cache["shape"]
    H = arch.hidden_dim
    d_out = d_out.reshape(B * F, -1)
    grads["w_out"][:] = cache["h_last"].T @ d_out
    grads["b_out"][:] = d_out.sum(axis=0)
    dh = d_out @ params["w_out"].T
    for k in reversed(range(arch.n_blocks)):
        h_in, a, s, u = cache["blocks"][k]
        grads[f"w2_{k}"][:] = u.T @ dh
        grads[f"b2_{k}"][:] = dh.sum(axis=0)
        du = dh @ params[f"w2_{k}"].T
        da = du * (s * (1.0 + a * (1.0 - s)))
        grads[f"w1_{k}"][:] = h_in.T @ da
        grads[f"b1_{k}"][:] = da.sum(axis=0)
        dh = dh + da @ params[f"w1_{k}"].T
    grads["w_in"][:] = cache["ctx"].T @ dh
    dcond = dh.reshape(B, F, H).sum(axis=1)
    grads["w_time"][:] = cache["temb"].T @ dcond
    grads["b_in"][:] = dcond.sum(axis=0)
    grads["emb"][:] = 0.0
    np.add.at(grads["emb"], cache["class_ids"], dcond)


def loss_and_grad(arch: Arch, flat: np.ndarray, x_t, t, class_ids, target, margin: int = 0):
    """Mean squared error against ``target`` and its gradient w.r.t. ``flat``.

    The first and last ``margin`` frames of every example are excluded from the
    loss; they only serve as context.
    """
    params = unflatten(arch, flat)
    out, cache = forward(arch, params, x_t, t, class_ids, keep_cache=True)
    diff = out - target
    if margin:
        diff[:, :margin] = 0.0
        diff[:, diff.shape[1] - margin:] = 0.0
    count = diff.shape[0] * (diff.shape[1] - 2 * margin) * diff.shape[2]
    loss = float(np.sum(diff.astype(np.float64) ** 2) / count)
    grad_flat = np.zeros_like(flat)
    backward(arch, params, cache, (2.0 / count) * diff, unflatten(arch, grad_flat))
    return loss, grad_flat


class Denoiser:
    """Callable v-predictor ``denoiser(x_t, t, class_id)`` over (frames, dim) latents."""

    def __init__(self, arch: Arch, flat: np.ndarray | None = None, trained: bool = False, seed=0):
        self.arch = arch
        self.flat = init_params(arch, seed) if flat is None else np.asarray(flat)
        if self.flat.size != arch.n_params:
            raise ValueError(f"expected {arch.n_params} parameters, got {self.flat.size}")
        if not np.all(np.isfinite(self.flat)):
            raise ValueError("denoiser parameters contain non-finite values")
        self.trained = trained

    @property
    def n_classes(self) -> int:
        return self.arch.n_classes

    @property
    def params(self) -> dict:
        return unflatten(self.arch, self.flat)

    def __call__(self, x_t, t, class_id=None):
        x = np.asarray(x_t)
        if x.shape[-1] != self.arch.latent_dim:
            raise ValueError(f"latent dim {x.shape[-1]} != model dim {self.arch.latent_dim}")
        if class_id is None:
            class_id = self.arch.n_classes
        elif not 0 <= class_id < self.arch.n_classes:
            raise ValueError(f"unknown class id {class_id}")
        squeeze = x.ndim == 2
        xb = x[None] if squeeze else x
        B = xb.shape[0]
        out = forward(self.arch, self.params, xb, np.full(B, t), np.full(B, class_id))
        out = out.astype(np.float64)
        return out[0] if squeeze else out

    def save(self, path) -> None:
        a = self.arch
        header = _HEADER.pack(
            MAGIC, FORMAT_VERSION, a.latent_dim, a.hidden_dim, a.n_blocks, a.n_classes,
            a.context, a.time_features, a.T, _SCHEDULE_CODES.index(a.schedule), a.sample_rate_hz,
            int(self.trained), a.n_params,
        )
        Path(path).write_bytes(header + self.flat.astype("<f4").tobytes())

    @classmethod
    def load(cls, path) -> "Denoiser":
        data = Path(path).read_bytes()
        if len(data) < _HEADER.size:
            raise ValueError(f"model file {path} too short for header ({len(data)} bytes)")
        magic, version, *fields, code, rate, trained, n_params = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise ValueError(f"model file {path} has bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise ValueError(f"model file {path} has unsupported version {version}")
        if code >= len(_SCHEDULE_CODES):
            raise ValueError(f"model file {path} has unknown schedule code {code}")
        arch = Arch(*fields, schedule=_SCHEDULE_CODES[code], sample_rate_hz=rate)
        if n_params != arch.n_params:
            raise ValueError(f"header declares {n_params} params, architecture needs {arch.n_params}")
        body = data[_HEADER.size:]
        if len(body) != 4 * n_params:
            raise ValueError(f"parameter block is {len(body)} bytes, expected {4 * n_params}")
        flat = np.frombuffer(body, dtype="<f4").astype(np.float32)
        return cls(arch, flat, trained=bool(trained))


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 20_000
    batch: int = 16
    lr: float = 1e-3
    crop_frames: int = 64
    uncond_prob: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8


def train(
    denoiser: Denoiser,
    latents: np.ndarray,
    labels: np.ndarray,
    s: NoiseSchedule,
    config: TrainConfig = TrainConfig(),
    seed=0,
    progress=None,
):
    """Fit the denoiser to the v-objective with Adam.

    ``latents`` is (N, frames, dim), ``labels`` holds class ids. Each step draws
    random clips and crops, a uniform ``t`` in ``1..T`` per example, and replaces
    the label with the unconditional slot with probability ``uncond_prob``.
    Returns a new trained :class:`Denoiser` and the per-step loss trace.
    """
    arch = denoiser.arch
    latents = np.asarray(latents, dtype=np.float32)
    labels = np.asarray(labels)
    if latents.ndim != 3 or latents.shape[0] == 0:
        raise ValueError(f"need a nonempty (N, frames, dim) latent array, got {latents.shape}")
    if labels.shape != (latents.shape[0],) or labels.min() < 0 or labels.max() >= arch.n_classes:
        raise ValueError("labels must be one valid class id per clip")
    if s.T != arch.T:
        raise ValueError(f"schedule has T={s.T}, model was built for T={arch.T}")

    cfg = config
    flat = denoiser.flat.astype(np.float32, copy=True)
    m = np.zeros_like(flat)
    v = np.zeros_like(flat)
    rng = np.random.default_rng(seed)
    N, frames, _ = latents.shape
    margin = arch.context
    width = min(frames, cfg.crop_frames + 2 * margin)
    alpha = s.alpha.astype(np.float32)
    sigma = s.sigma.astype(np.float32)
    losses = np.empty(cfg.steps)

    for step in range(cfg.steps):
        idx = rng.integers(N, size=cfg.batch)
        start = rng.integers(frames - width + 1, size=cfg.batch)
        z0 = np.stack([latents[i, o:o + width] for i, o in zip(idx, start)])
        t = rng.integers(1, s.T + 1, size=cfg.batch)
        eps = rng.standard_normal(z0.shape, dtype=np.float32)
        cls = np.where(rng.random(cfg.batch) < cfg.uncond_prob, arch.n_classes, labels[idx])
        a, sg = alpha[t][:, None, None], sigma[t][:, None, None]
        x_t = a * z0 + sg * eps
        target = a * eps - sg * z0
        loss, g = loss_and_grad(arch, flat, x_t, t, cls, target, margin=margin if width > 2 * margin else 0)
        if not np.isfinite(loss) or not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite training loss or gradient at step {step}")
        losses[step] = loss
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        mhat = m / (1 - cfg.beta1 ** (step + 1))
        vhat = v / (1 - cfg.beta2 ** (step + 1))
        flat -= (cfg.lr * mhat / (np.sqrt(vhat) + cfg.adam_eps)).astype(np.float32)
        if progress is not None:
            progress(step, loss)

    if cfg.steps == 0:
        return Denoiser(arch, denoiser.flat.copy(), trained=denoiser.trained), losses
    return Denoiser(arch, flat, trained=True), losses
