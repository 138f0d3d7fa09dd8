"""Shared toy corpora for trainer tests."""

import csv
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent))

from fundus_trainer.io import write_tensor

MANIFEST_HEADER = ["image_id", "path", "dataset", "split", "patient_id",
                   "laterality", "dr_grade", "referable", "quality",
                   "quality_scheme"]


def write_manifest(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_HEADER,
                                lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in MANIFEST_HEADER})


def toy_tensor(rng, label, size=64):
    """Linearly separable pattern: positives carry a bright center block."""
    values = rng.uniform(-0.25, 0.25, size=(3, size, size)).astype(np.float32)
    if label == 1:
        lo, hi = size // 4, 3 * size // 4
        values[:, lo:hi, lo:hi] = np.clip(values[:, lo:hi, lo:hi] + 0.7, -1, 1)
    return np.clip(values, -1.0, 1.0)


def make_corpus(root, n_train=16, n_val=8, size=64, seed=0):
    """Tensor directory plus manifest covering train and val splits."""
    root = Path(root)
    tensor_dir = root / "tensor"
    tensor_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    rows = []
    for split, count in (("train", n_train), ("val", n_val)):
        for i in range(count):
            label = i % 2
            image_id = f"{split}{i:03d}"
            write_tensor(tensor_dir / f"{image_id}.t32",
                         toy_tensor(rng, label, size))
            rows.append(dict(image_id=image_id, path=f"{image_id}.png",
                             dataset="toy", split=split,
                             referable=str(label)))
    manifest = root / "manifest.csv"
    write_manifest(manifest, rows)
    return manifest, tensor_dir, rows
