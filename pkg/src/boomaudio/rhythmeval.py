"""Onset detection, tempo estimation, DP beat tracking and tolerance matching."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter1d, uniform_filter1d
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .codec import Signal

WIN = 256
HOP = 64
TOLERANCE_S = 0.08
ACF_SMOOTH_FRAMES = 2.0


class NoRhythmError(ValueError):
    """The envelope carries no periodic structure to track."""


@dataclass
class MatchReport:
    n_ref: int
    n_est: int
    n_matched: int
    precision: float
    recall: float
    f1: float
    tolerance_s: float

    def to_dict(self) -> dict:
        return asdict(self)


def onset_envelope(signal: Signal, win: int = WIN, hop: int = HOP) -> np.ndarray:
    """Log-compressed spectral flux, one value per hop.

    Frame ``i`` is centred on sample ``i * hop``. The signal is zero padded by
    ``win // 2`` at the start and the frame before the first one is treated as
    silence, so an event at t = 0 still produces flux. Frames stop where the
    window would run past the end; an abrupt cut there would read as an onset.
    """
    if win <= 0 or win & (win - 1):
        raise ValueError(f"window length must be a power of two, got {win}")
    if not 0 < hop <= win:
        raise ValueError(f"hop must lie in (0, win], got {hop}")
    x = signal.samples
    if x.size < win:
        raise ValueError(f"signal of {x.size} samples is shorter than the window ({win})")
    padded = np.pad(x, (win // 2, 0))
    n_frames = 1 + (x.size - win // 2) // hop
    frames = np.lib.stride_tricks.sliding_window_view(padded, win)[::hop][:n_frames]
    spec = np.abs(np.fft.rfft(frames * np.hanning(win + 1)[:-1], axis=1))
    logspec = np.log1p(10.0 * spec)
    diff = np.diff(logspec, axis=0, prepend=np.zeros((1, logspec.shape[1])))
    flux = np.maximum(diff, 0.0).sum(axis=1)
    local = uniform_filter1d(flux, size=2 * 10 + 1, mode="constant")
    return np.maximum(flux - local, 0.0)


def detect_onsets(envelope: np.ndarray, hop: int = HOP, sample_rate: int = 8000) -> np.ndarray:
    """Peak-pick onset times (seconds) from an envelope.

    A frame qualifies when it is the strict maximum of its +-3 frame
    neighbourhood, exceeds the +-10 frame local mean by 0.3 global standard
    deviations, and lies at least 50 ms after the previously accepted onset.
    """
    env = np.asarray(envelope, dtype=np.float64)
    if env.size == 0 or not np.any(env > 0):
        return np.empty(0)
    delta = 0.3 * env.std()
    local_mean = uniform_filter1d(env, size=21, mode="nearest")
    padded = np.pad(env, 3, constant_values=-np.inf)
    windows = np.lib.stride_tricks.sliding_window_view(padded, 7)
    others = np.concatenate([windows[:, :3], windows[:, 4:]], axis=1)
    is_peak = env > others.max(axis=1)
    candidates = np.flatnonzero(is_peak & (env > local_mean + delta))
    frame_s = hop / sample_rate
    min_gap = int(np.ceil(0.05 / frame_s - 1e-9))
    onsets, last = [], None
    for i in candidates:
        if last is None or i - last >= min_gap:
            onsets.append(i)
            last = i
    return np.asarray(onsets, dtype=np.float64) * frame_s


def _tempo_prior(bpm: np.ndarray, center=120.0, octaves=2.0) -> np.ndarray:
    return np.exp(-0.5 * (np.log2(bpm / center) / octaves) ** 2)


def estimate_tempo(
    envelope: np.ndarray,
    hop: int = HOP,
    sample_rate: int = 8000,
    min_bpm: float = 40.0,
    max_bpm: float = 240.0,
) -> float:
    """Autocorrelation tempo estimate weighted by a log-normal prior around 120 BPM.

    The best integer lag is refined by parabolic interpolation of the weighted
    score. Raises :class:`NoRhythmError` for constant envelopes.
    """
    env = np.asarray(envelope, dtype=np.float64)
    fps = sample_rate / hop
    if env.size < 2 * fps:
        raise ValueError(f"envelope of {env.size} frames is shorter than 2 s")
    env = env - env.mean()
    if not np.any(np.abs(env) > 1e-12):
        raise NoRhythmError("constant onset envelope; no rhythm to estimate")
    n = env.size
    spec = np.fft.rfft(env, 2 * n)
    acf = np.fft.irfft(spec * np.conj(spec))[:n]
    # beat periods fall between frames; smoothing stops an exact multiple of
    # the period from out-scoring the jittered true period
    acf = gaussian_filter1d(acf, ACF_SMOOTH_FRAMES)
    lo = int(np.floor(60.0 * fps / max_bpm))
    hi = min(n - 2, int(np.ceil(60.0 * fps / min_bpm)))
    lags = np.arange(max(lo, 1), hi + 1)
    score = np.maximum(acf[lags], 0.0) * _tempo_prior(60.0 * fps / lags)
    if not np.any(score > 0):
        raise NoRhythmError("no positive autocorrelation in the tempo range")
    k = int(np.argmax(score))
    lag = float(lags[k])
    if 0 < k < lags.size - 1:
        a, b, c = score[k - 1], score[k], score[k + 1]
        denom = a - 2 * b + c
        if denom < 0:
            lag += 0.5 * (a - c) / denom
    return float(np.clip(60.0 * fps / lag, min_bpm, max_bpm))


def track_beats(
    envelope: np.ndarray,
    bpm: float,
    hop: int = HOP,
    sample_rate: int = 8000,
    tightness: float = 100.0,
) -> np.ndarray:
    """Dynamic-programming beat tracker; returns beat times in seconds.

    ``score[i] = env[i] + max_j(score[j] - tightness * log((i - j) / p) ** 2)``
    over predecessors ``j`` in ``[i - 2p, i - p/2]``. The path is traced back
    from the best-scoring frame in the final beat period.
    """
    env = np.asarray(envelope, dtype=np.float64)
    if bpm is None or not np.isfinite(bpm) or bpm <= 0:
        raise NoRhythmError(f"invalid tempo {bpm!r}")
    std = env.std()
    if std <= 0:
        raise NoRhythmError("constant onset envelope; no beats to track")
    env = env / std
    p = 60.0 * sample_rate / (hop * bpm)
    n = env.size
    lo_off = max(1, int(np.round(p / 2)))
    hi_off = int(np.round(2 * p))
    offsets = np.arange(lo_off, hi_off + 1)
    penalty = tightness * np.log(offsets / p) ** 2

    score = np.empty(n)
    backlink = np.full(n, -1)
    for i in range(n):
        j = i - offsets
        ok = j >= 0
        if not np.any(ok):
            score[i] = env[i]
            continue
        cand = score[j[ok]] - penalty[ok]
        best = int(np.argmax(cand))
        if cand[best] > 0:
            score[i] = env[i] + cand[best]
            backlink[i] = j[ok][best]
        else:
            score[i] = env[i]

    tail = max(0, n - int(np.ceil(p)))
    i = tail + int(np.argmax(score[tail:]))
    beats = [i]
    while backlink[i] >= 0:
        i = backlink[i]
        beats.append(i)
    beats = np.asarray(beats[::-1], dtype=int)
    # beats extrapolated into quiet lead-in or tail frames are dropped
    strength = env[beats]
    strong = np.flatnonzero(strength >= 0.5 * np.sqrt(np.mean(strength**2)))
    if strong.size:
        beats = beats[strong[0]:strong[-1] + 1]
    return beats * hop / sample_rate


def _max_matching(ref: np.ndarray, est: np.ndarray, tolerance_s: float) -> int:
    if ref.size == 0 or est.size == 0:
        return 0
    # small epsilon so that distances equal to the tolerance survive rounding
    adj = np.abs(ref[:, None] - est[None, :]) <= tolerance_s + 1e-12
    if not adj.any():
        return 0
    match = maximum_bipartite_matching(csr_matrix(adj.astype(np.int8)), perm_type="column")
    return int(np.count_nonzero(match >= 0))


def match_events(ref, est, tolerance_s: float = TOLERANCE_S) -> MatchReport:
    """Precision, recall and F1 under a maximum one-to-one matching within ``tolerance_s``."""
    if tolerance_s <= 0:
        raise ValueError(f"tolerance must be positive, got {tolerance_s}")
    ref = np.asarray(ref, dtype=np.float64).ravel()
    est = np.asarray(est, dtype=np.float64).ravel()
    matched = _max_matching(ref, est, tolerance_s)
    precision = matched / est.size if est.size else 0.0
    recall = matched / ref.size if ref.size else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return MatchReport(ref.size, est.size, matched, precision, recall, f1, tolerance_s)


@dataclass
class RhythmAnalysis:
    onsets: np.ndarray
    tempo_bpm: Optional[float]
    beats: Optional[np.ndarray]


def analyze(signal: Signal, win: int = WIN, hop: int = HOP) -> RhythmAnalysis:
    """Run onset detection and, when a tempo is found, beat tracking."""
    env = onset_envelope(signal, win, hop)
    onsets = detect_onsets(env, hop, signal.sample_rate_hz)
    try:
        bpm = estimate_tempo(env, hop, signal.sample_rate_hz)
        beats = track_beats(env, bpm, hop, signal.sample_rate_hz)
    except NoRhythmError:
        bpm, beats = None, None
    return RhythmAnalysis(onsets, bpm, beats)


def preservation_report(orig: Signal, transformed: Signal, tolerance_s: float = TOLERANCE_S) -> dict:
    """Onset and beat agreement of ``transformed`` against ``orig`` as reference.

    A report is ``None`` (undefined) when either side has no trackable rhythm.
    """
    if orig.samples.size != transformed.samples.size:
        raise ValueError(
            f"durations differ: {orig.samples.size} vs {transformed.samples.size} samples"
        )
    a, b = analyze(orig), analyze(transformed)
    onset = match_events(a.onsets, b.onsets, tolerance_s)
    beat = None
    if a.beats is not None and b.beats is not None:
        beat = match_events(a.beats, b.beats, tolerance_s)
    return {"onset": onset, "beat": beat}


def summarize(values) -> dict:
    """Mean and standard deviation over defined values; undefined ones are counted."""
    defined = [v for v in values if v is not None]
    arr = np.asarray(defined, dtype=np.float64)
    return {
        "mean": float(arr.mean()) if arr.size else None,
        "std": float(arr.std()) if arr.size else None,
        "count": int(arr.size),
        "skipped": len(values) - len(defined),
    }


def spectral_centroid(signal: Signal, win: int = WIN, hop: int = HOP, floor_db: float = -40.0) -> float:
    """Magnitude-weighted mean frequency in Hz, averaged over non-quiet frames.

    Frames more than ``floor_db`` below the loudest frame are ignored so that
    silence between events does not dilute the average.
    """
    x = signal.samples
    frames = np.lib.stride_tricks.sliding_window_view(np.pad(x, (0, max(0, win - x.size))), win)[::hop]
    mag = np.abs(np.fft.rfft(frames * np.hanning(win + 1)[:-1], axis=1))
    energy = np.sum(mag**2, axis=1)
    if not np.any(energy > 0):
        return 0.0
    keep = energy >= energy.max() * 10 ** (floor_db / 10)
    freqs = np.fft.rfftfreq(win, 1.0 / signal.sample_rate_hz)
    centroids = mag[keep] @ freqs / mag[keep].sum(axis=1)
    return float(centroids.mean())
