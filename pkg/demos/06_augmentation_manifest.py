"""
Augmentation variations and per-epoch sampling
==============================================

End-to-end through the command line: synthesize data, train a small model,
precompute Boomerang variations with a manifest, then draw one version of each
file per epoch the way a training loop would.
"""

# %%
import tempfile
from collections import Counter
from pathlib import Path

from boomaudio.cli import main
from boomaudio.manifest import epoch_sampler, read_manifest

tmp = Path(tempfile.mkdtemp())
main(["synth-data", "--out", str(tmp / "data"), "--count", "20", "--eval-count", "3", "--seed", "1"])
main(["train", "--data", str(tmp / "data"), "--out", str(tmp / "model.bin"), "--steps", "300", "--seed", "1"])
main(["augment", "--model", str(tmp / "model.bin"), "--in-dir", str(tmp / "data" / "eval"),
      "--out-dir", str(tmp / "aug"), "--variations", "2", "--noise", "0.4",
      "--manifest", str(tmp / "manifest.jsonl"), "--seed", "5", "--report-f1"])

# %%
records = read_manifest(tmp / "manifest.jsonl")
for rec in records:
    print(Path(rec.source_path).name, "->", [Path(p).name for p in rec.variation_paths], "beat F1", rec.beat_f1)

# %%
picks = Counter(Path(epoch_sampler(records[0], epoch)).name for epoch in range(3000))
print("versions drawn over 3000 epochs:", dict(picks))
