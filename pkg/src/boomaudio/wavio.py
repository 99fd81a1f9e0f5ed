"""Minimal RIFF/WAVE reader and PCM16 writer.

Reads 16-bit PCM and 32-bit IEEE float, mono or stereo; stereo is averaged to
mono. Errors carry the byte offset at which parsing failed.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .codec import Signal

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class WavError(ValueError):
    """Malformed or unsupported WAV data."""


def _chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body = pos + 8
        if body + size > len(data):
            raise WavError(f"chunk {cid!r} at byte {pos} claims {size} bytes, file truncated")
        yield cid, body, size
        pos = body + size + (size & 1)


def wav_read(path) -> Signal:
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise WavError(f"file too short for RIFF header ({len(data)} bytes) at byte 0")
    if data[0:4] != b"RIFF":
        raise WavError(f"missing RIFF tag at byte 0 (found {data[0:4]!r})")
    if data[8:12] != b"WAVE":
        raise WavError(f"missing WAVE tag at byte 8 (found {data[8:12]!r})")

    fmt = None
    pcm = None
    for cid, body, size in _chunks(data):
        if cid == b"fmt ":
            if size < 16:
                raise WavError(f"fmt chunk at byte {body - 8} is {size} bytes, need 16")
            tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", data, body)
            if tag == WAVE_FORMAT_EXTENSIBLE and size >= 40:
                tag = struct.unpack_from("<H", data, body + 24)[0]
            fmt = (tag, channels, rate, block_align, bits, body)
        elif cid == b"data":
            if fmt is None:
                raise WavError(f"data chunk at byte {body - 8} precedes fmt chunk")
            pcm = data[body:body + size]
            break
    if fmt is None:
        raise WavError("no fmt chunk found after byte 12")
    if pcm is None:
        raise WavError("no data chunk found after byte 12")

    tag, channels, rate, block_align, bits, fmt_at = fmt
    if channels not in (1, 2):
        raise WavError(f"unsupported channel count {channels} in fmt chunk at byte {fmt_at + 2}")
    if tag == WAVE_FORMAT_PCM and bits == 16:
        x = np.frombuffer(pcm[: len(pcm) // 2 * 2], dtype="<i2").astype(np.float64) / 32768.0
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        x = np.frombuffer(pcm[: len(pcm) // 4 * 4], dtype="<f4").astype(np.float64)
    else:
        raise WavError(
            f"unsupported codec tag 0x{tag:04x} with {bits} bits at byte {fmt_at}; "
            "only PCM16 and float32 are read"
        )
    if channels == 2:
        x = x[: x.size // 2 * 2].reshape(-1, 2).mean(axis=1)
    return Signal(x, rate)


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    """Scale by 32768, round and saturate to the int16 range."""
    q = np.rint(np.asarray(samples, dtype=np.float64) * 32768.0)
    return np.clip(q, -32768, 32767).astype("<i2")


def wav_write(path, signal: Signal, bit_depth: int = 16) -> None:
    if bit_depth != 16:
        raise ValueError(f"only 16-bit PCM output is supported, got {bit_depth}")
    pcm = to_pcm16(signal.samples).tobytes()
    rate = int(signal.sample_rate_hz)
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(pcm), b"WAVE",
        b"fmt ", 16, WAVE_FORMAT_PCM, 1, rate, rate * 2, 2, 16,
        b"data", len(pcm),
    )
    Path(path).write_bytes(header + pcm)
