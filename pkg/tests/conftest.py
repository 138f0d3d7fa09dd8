"""Shared synthetic-scene and cohort builders for the test suite."""

from __future__ import annotations

import csv
import math
import os

import numpy as np
import pytest

from fpe.cohort import ManifestRecord
from fpe.imaging import RasterImage, save_image
from fpe.stats import PredictionRecord


def disc_scene(h, w, cy, cx, r, inside=(200, 150, 100), outside=(0, 0, 0)):
    """A filled disc of one color on a flat background; returns (pixels, mask)."""
    yy, xx = np.mgrid[0:h, 0:w]
    mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    img = np.empty((h, w, 3), np.uint8)
    img[:] = outside
    img[mask] = inside
    return img, mask


def save_disc(path, h, w, cy, cx, r, inside=(200, 150, 100), outside=(0, 0, 0)):
    img, mask = disc_scene(h, w, cy, cx, r, inside, outside)
    save_image(RasterImage.from_array(img), path)
    return img, mask


def write_manifest_csv(path, rows):
    """rows: dicts keyed by manifest column names; missing keys become empty."""
    header = ["image_id", "path", "dataset", "split", "patient_id", "laterality",
              "dr_grade", "referable", "quality", "quality_scheme"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in header})


def write_predictions_csv(path, rows):
    """rows: (image_id, prob_nonref, prob_ref) triples."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "prob_nonref", "prob_ref"])
        for image_id, p0, p1 in rows:
            writer.writerow([image_id, repr(p0), repr(p1)])


def manifest_record(image_id, **kwargs):
    defaults = dict(path=f"{image_id}.png", dataset="synth", split="test")
    defaults.update(kwargs)
    return ManifestRecord(image_id=image_id, **defaults)


def prediction(image_id, prob_ref):
    return PredictionRecord(image_id=image_id,
                            prob_nonref=1.0 - prob_ref, prob_ref=prob_ref)


def screening_cohort():
    """Four-images-per-patient cohort where aggregation must raise Se and drop Sp.

    100 patients x 4 images. Patients q000..q049 carry disease (two
    referable images each); q050..q099 are healthy. The prediction plan:

    - q000..q038 (39): both referable images detected
    - q039..q048 (10): exactly one referable image detected
    - q049 (1): nothing detected anywhere
    - q000..q013 (14): one false positive on a non-referable image
    - q050..q059 (10): one false positive each; other healthy patients clean

    Expected confusion by direct enumeration:
      image level: TP=88 FN=12 -> Se 88/100; FP=24 TN=276 -> Sp 276/300
      patient level (max prob, OR label): Se 49/50, Sp 40/50
    """
    manifest = []
    predictions = []

    def add(pid, k, label, prob):
        image_id = f"{pid}_i{k}"
        manifest.append(dict(image_id=image_id, path=f"{image_id}.png",
                             dataset="synth", split="test",
                             patient_id=pid, referable=str(label)))
        predictions.append((image_id, 1.0 - prob, prob))

    for i in range(50):
        pid = f"q{i:03d}"
        if i <= 38:
            pos_probs = (0.80, 0.70)
        elif i <= 48:
            pos_probs = (0.75, 0.30)
        else:
            pos_probs = (0.20, 0.10)
        add(pid, 0, 1, pos_probs[0])
        add(pid, 1, 1, pos_probs[1])
        neg_probs = (0.65, 0.20) if i <= 13 else (0.25, 0.15)
        add(pid, 2, 0, neg_probs[0])
        add(pid, 3, 0, neg_probs[1])

    for i in range(50, 100):
        pid = f"q{i:03d}"
        probs = (0.70, 0.30, 0.20, 0.10) if i <= 59 else (0.40, 0.30, 0.20, 0.10)
        for k, prob in enumerate(probs):
            add(pid, k, 0, prob)

    return manifest, predictions


def graded_corpus():
    """150 records over grades 0..4 with a three-label quality scheme.

    Thirty records per grade; quality cycles good/usable/reject for the
    first four of every five records, the fifth stays unlabeled. Scores
    rise with grade but overlap, so no stratum is degenerate.
    """
    manifest = []
    predictions = []
    idx = 0
    for grade in range(5):
        for j in range(30):
            image_id = f"g{grade}_{j:02d}"
            jitter = 0.35 * math.sin(3.1 * idx) if j % 3 else 0.55 * math.sin(1.7 * idx)
            prob = min(max(0.12 + 0.17 * grade + jitter, 0.01), 0.99)
            row = dict(image_id=image_id, path=f"{image_id}.png",
                       dataset="synth", split="test", dr_grade=str(grade))
            if j % 5 != 4:
                row["quality"] = ("good", "usable", "reject")[j % 3]
                row["quality_scheme"] = "triage"
            manifest.append(row)
            predictions.append((image_id, 1.0 - prob, prob))
            idx += 1
    return manifest, predictions


def rows_to_records(manifest_rows, prediction_rows):
    """Build package objects from the plain-dict cohort builders."""
    manifest = [
        ManifestRecord(
            image_id=r["image_id"], path=r["path"], dataset=r["dataset"],
            split=r["split"], patient_id=r.get("patient_id"),
            laterality=r.get("laterality"),
            dr_grade=int(r["dr_grade"]) if r.get("dr_grade") not in (None, "") else None,
            referable=int(r["referable"]) if r.get("referable") not in (None, "") else None,
            quality=r.get("quality"), quality_scheme=r.get("quality_scheme"),
        )
        for r in manifest_rows
    ]
    predictions = [
        PredictionRecord(image_id=i, prob_nonref=p0, prob_ref=p1)
        for i, p0, p1 in prediction_rows
    ]
    return manifest, predictions


@pytest.fixture(scope="session")
def throughput_corpus(tmp_path_factory):
    """1,000 distinct 1024x1024 disc photographs on disk with a manifest."""
    root = tmp_path_factory.mktemp("throughput")
    rng = np.random.default_rng(20240817)
    rows = []
    for i in range(1000):
        cy = 512 + int(rng.integers(-40, 41))
        cx = 512 + int(rng.integers(-40, 41))
        r = 400 + int(rng.integers(-60, 61))
        inside = tuple(int(v) for v in rng.integers(60, 230, size=3))
        path = str(root / f"img{i:04d}.png")
        save_disc(path, 1024, 1024, cy, cx, r, inside=inside)
        rows.append(dict(image_id=f"img{i:04d}", path=path,
                         dataset="synth", split="test"))
    manifest_path = str(root / "manifest.csv")
    write_manifest_csv(manifest_path, rows)
    return root, manifest_path, rows
