"""Augmentation manifests (JSON lines) and the per-epoch version sampler."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np


def derive_seed(root: int, tag: str, *index: int) -> int:
    """Stable 63-bit seed from a root seed, a purpose tag and integer indices."""
    tag_key = int.from_bytes(hashlib.sha256(tag.encode()).digest()[:4], "little")
    ss = np.random.SeedSequence([int(root), tag_key, *map(int, index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass
class AugmentationRecord:
    source_path: str
    variation_paths: list[str]
    n_boom: float
    seed_per_variation: list[int]
    condition: dict
    sampler: str
    schedule: dict
    tool_version: str
    beat_f1: Optional[list[Optional[float]]] = field(default=None)

    def to_json(self) -> str:
        d = asdict(self)
        if d["beat_f1"] is None:
            del d["beat_f1"]
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "AugmentationRecord":
        return cls(**json.loads(line))


def write_manifest(path, records) -> None:
    with open(path, "w") as f:
        for rec in records:
            f.write(rec.to_json())
            f.write("\n")


def read_manifest(path) -> list[AugmentationRecord]:
    with open(path) as f:
        return [AugmentationRecord.from_json(line) for line in f if line.strip()]


def epoch_sampler(record: AugmentationRecord, epoch_seed: int) -> str:
    """Pick the original or one of its variations uniformly for one epoch."""
    versions = [record.source_path, *record.variation_paths]
    path_key = int.from_bytes(hashlib.sha256(record.source_path.encode()).digest()[:8], "little")
    rng = np.random.default_rng([int(epoch_seed), path_key])
    return versions[int(rng.integers(len(versions)))]
