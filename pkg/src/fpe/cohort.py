"""Label semantics, manifests, and cohort-level evaluation sets.

Ground truth arrives either as a 0..4 severity grade or as a binary
referable flag; when both are present they must agree. Helpers here
load the CSV interchange files, join predictions to labels, aggregate
image-level outputs to patients, and carve stratified subsets.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

from .errors import (
    ContractError,
    DegenerateLabelsError,
    ManifestError,
    ReconciliationError,
)
from .stats import PredictionRecord

VALID_SPLITS = ("train", "val", "test")
VALID_LATERALITIES = ("left", "right")
REFERABLE_GRADES = (2, 3, 4)

MANIFEST_HEADER = [
    "image_id", "path", "dataset", "split", "patient_id", "laterality",
    "dr_grade", "referable", "quality", "quality_scheme",
]
PREDICTION_HEADER = ["image_id", "prob_nonref", "prob_ref"]


def grade_to_binary(grade: int) -> int:
    """Map a 0..4 severity grade to the binary referable class.

    Grades 0 and 1 are non-referable; grades 2, 3 and 4 are referable.
    """
    if grade not in (0, 1, 2, 3, 4):
        raise ContractError(f"grade must be in 0..4, got {grade!r}")
    return 0 if grade <= 1 else 1


@dataclass(frozen=True)
class LesionRule:
    """Configurable criterion mapping lesion findings to the binary label.

    The default is a conservative placeholder: any hemorrhage, exudate
    or neovascularization refers, as does a microaneurysm count strictly
    above the threshold.
    """

    microaneurysm_threshold: int = 5

    def __post_init__(self):
        if self.microaneurysm_threshold < 0:
            raise ContractError(
                f"microaneurysm_threshold must be >= 0, got {self.microaneurysm_threshold}"
            )


@dataclass(frozen=True)
class LesionFindings:
    """Per-image lesion counts and flags from a grader."""

    microaneurysm_count: int = 0
    hemorrhage_count: int = 0
    exudates_present: bool = False
    neovascularization_present: bool = False

    def __post_init__(self):
        if self.microaneurysm_count < 0 or self.hemorrhage_count < 0:
            raise ContractError("lesion counts must be non-negative")


def lesion_to_binary(findings: LesionFindings, rule: LesionRule | None = None) -> int:
    """Apply a lesion criterion; returns 1 (referable) or 0."""
    if rule is None:
        rule = LesionRule()
    if findings.hemorrhage_count > 0:
        return 1
    if findings.exudates_present or findings.neovascularization_present:
        return 1
    if findings.microaneurysm_count > rule.microaneurysm_threshold:
        return 1
    return 0


@dataclass(frozen=True)
class ManifestRecord:
    """One image row of a dataset manifest."""

    image_id: str
    path: str
    dataset: str
    split: str
    patient_id: str | None = None
    laterality: str | None = None
    dr_grade: int | None = None
    referable: int | None = None
    quality: str | None = None
    quality_scheme: str | None = None

    def __post_init__(self):
        if not self.image_id:
            raise ContractError("image_id must be nonempty")
        if self.split not in VALID_SPLITS:
            raise ContractError(
                f"split must be one of {VALID_SPLITS}, got {self.split!r}"
            )
        if self.laterality is not None and self.laterality not in VALID_LATERALITIES:
            raise ContractError(
                f"laterality must be one of {VALID_LATERALITIES}, got {self.laterality!r}"
            )
        if self.dr_grade is not None and self.dr_grade not in (0, 1, 2, 3, 4):
            raise ContractError(f"dr_grade must be in 0..4, got {self.dr_grade!r}")
        if self.referable is not None and self.referable not in (0, 1):
            raise ContractError(f"referable must be 0 or 1, got {self.referable!r}")
        if (
            self.dr_grade is not None
            and self.referable is not None
            and self.referable != grade_to_binary(self.dr_grade)
        ):
            raise ContractError(
                f"record {self.image_id}: referable={self.referable} contradicts "
                f"dr_grade={self.dr_grade}"
            )

    @property
    def label(self) -> int | None:
        """Binary ground truth, derived from the grade when needed."""
        if self.referable is not None:
            return self.referable
        if self.dr_grade is not None:
            return grade_to_binary(self.dr_grade)
        return None


@dataclass(frozen=True)
class PatientRecord:
    """Patient-level aggregate: max probability, OR of labels."""

    patient_id: str
    image_ids: tuple[str, ...]
    prob_ref: float
    referable: int

    def __post_init__(self):
        if not self.image_ids:
            raise ContractError("a patient must own at least one image")
        if not 0 <= self.prob_ref <= 1:
            raise ContractError(f"prob_ref must be in [0, 1], got {self.prob_ref}")
        if self.referable not in (0, 1):
            raise ContractError(f"referable must be 0 or 1, got {self.referable}")


@dataclass(frozen=True)
class EvalSubset:
    """Aligned ids, referable probabilities and labels ready for metrics."""

    image_ids: tuple[str, ...]
    scores: tuple[float, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        if not (len(self.image_ids) == len(self.scores) == len(self.labels)):
            raise ContractError("ids, scores and labels must have equal length")

    @property
    def n_pos(self) -> int:
        return sum(1 for y in self.labels if y == 1)

    @property
    def n_neg(self) -> int:
        return sum(1 for y in self.labels if y == 0)


@dataclass(frozen=True)
class QualityStrata:
    """Per-quality-label evaluation subsets plus the unlabeled count."""

    scheme: str
    subsets: dict[str, EvalSubset] = field(default_factory=dict)
    unlabeled: int = 0


def _parse_row(row: dict, line_no: int) -> ManifestRecord:
    def opt(key):
        value = (row.get(key) or "").strip()
        return value or None

    def opt_int(key):
        value = opt(key)
        if value is None:
            return None
        try:
            return int(value)
        except ValueError:
            raise ManifestError(f"line {line_no}: {key} must be an integer, got {value!r}")

    try:
        return ManifestRecord(
            image_id=(row.get("image_id") or "").strip(),
            path=(row.get("path") or "").strip(),
            dataset=(row.get("dataset") or "").strip(),
            split=(row.get("split") or "").strip(),
            patient_id=opt("patient_id"),
            laterality=opt("laterality"),
            dr_grade=opt_int("dr_grade"),
            referable=opt_int("referable"),
            quality=opt("quality"),
            quality_scheme=opt("quality_scheme"),
        )
    except ContractError as exc:
        raise ManifestError(f"line {line_no}: {exc}") from exc


def load_manifest(path: str | os.PathLike) -> list[ManifestRecord]:
    """Read a manifest CSV; empty fields mean absent.

    Rows whose referable flag contradicts their grade are collected and
    reported together as a reconciliation failure.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise ManifestError(f"{path}: empty manifest")
            missing = [c for c in MANIFEST_HEADER if c not in reader.fieldnames]
            if missing:
                raise ManifestError(f"{path}: missing columns {missing}")
            rows = list(reader)
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc

    records = []
    conflicts = []
    seen = {}
    for i, row in enumerate(rows, start=2):
        image_id = (row.get("image_id") or "").strip()
        grade_raw = (row.get("dr_grade") or "").strip()
        ref_raw = (row.get("referable") or "").strip()
        if grade_raw and ref_raw:
            try:
                grade, ref = int(grade_raw), int(ref_raw)
            except ValueError:
                grade = ref = None
            if (
                grade is not None
                and grade in (0, 1, 2, 3, 4)
                and ref != grade_to_binary(grade)
            ):
                conflicts.append(image_id or f"line {i}")
                continue
        record = _parse_row(row, i)
        if record.image_id in seen:
            raise ManifestError(
                f"line {i}: duplicate image_id {record.image_id!r} "
                f"(first seen on line {seen[record.image_id]})"
            )
        seen[record.image_id] = i
        records.append(record)
    if conflicts:
        raise ReconciliationError("referable flag contradicts dr_grade", conflicts)
    return records


def load_predictions(path: str | os.PathLike) -> list[PredictionRecord]:
    """Read a prediction CSV with columns image_id, prob_nonref, prob_ref."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise ManifestError(f"{path}: empty prediction file")
            missing = [c for c in PREDICTION_HEADER if c not in reader.fieldnames]
            if missing:
                raise ManifestError(f"{path}: missing columns {missing}")
            rows = list(reader)
    except OSError as exc:
        raise ManifestError(f"cannot read predictions {path}: {exc}") from exc

    records = []
    seen = set()
    for i, row in enumerate(rows, start=2):
        try:
            record = PredictionRecord(
                image_id=(row.get("image_id") or "").strip(),
                prob_nonref=float(row.get("prob_nonref") or "nan"),
                prob_ref=float(row.get("prob_ref") or "nan"),
            )
        except (ValueError, ContractError) as exc:
            raise ManifestError(f"line {i}: {exc}") from exc
        if record.image_id in seen:
            raise ManifestError(f"line {i}: duplicate prediction for {record.image_id!r}")
        seen.add(record.image_id)
        records.append(record)
    return records


def _prediction_index(predictions: list[PredictionRecord]) -> dict[str, PredictionRecord]:
    index = {}
    for p in predictions:
        if p.image_id in index:
            raise ContractError(f"duplicate prediction for {p.image_id!r}")
        index[p.image_id] = p
    return index


def evaluation_set(
    manifest: list[ManifestRecord], predictions: list[PredictionRecord]
) -> EvalSubset:
    """Join labeled manifest records with their predictions, image level."""
    index = _prediction_index(predictions)
    labeled = [r for r in manifest if r.label is not None]
    missing = [r.image_id for r in labeled if r.image_id not in index]
    if missing:
        raise ReconciliationError("labeled images lack predictions", missing)
    return EvalSubset(
        image_ids=tuple(r.image_id for r in labeled),
        scores=tuple(index[r.image_id].prob_ref for r in labeled),
        labels=tuple(r.label for r in labeled),
    )


def aggregate_patients(
    manifest: list[ManifestRecord], predictions: list[PredictionRecord]
) -> list[PatientRecord]:
    """Collapse image-level outputs to one record per patient.

    The patient probability is the max over member images and the label
    the OR of member labels. Output is sorted by patient_id. Labeled
    images missing a patient_id or a prediction fail reconciliation.
    """
    index = _prediction_index(predictions)
    labeled = [r for r in manifest if r.label is not None]
    no_patient = [r.image_id for r in labeled if r.patient_id is None]
    if no_patient:
        raise ReconciliationError("labeled images lack patient_id", no_patient)
    missing = [r.image_id for r in labeled if r.image_id not in index]
    if missing:
        raise ReconciliationError("labeled images lack predictions", missing)

    groups: dict[str, list[ManifestRecord]] = {}
    for record in labeled:
        groups.setdefault(record.patient_id, []).append(record)

    patients = []
    for patient_id in sorted(groups):
        members = groups[patient_id]
        patients.append(
            PatientRecord(
                patient_id=patient_id,
                image_ids=tuple(r.image_id for r in members),
                prob_ref=max(index[r.image_id].prob_ref for r in members),
                referable=max(r.label for r in members),
            )
        )
    return patients


def patients_to_subset(patients: list[PatientRecord]) -> EvalSubset:
    """View patient records as an evaluation subset."""
    return EvalSubset(
        image_ids=tuple(p.patient_id for p in patients),
        scores=tuple(p.prob_ref for p in patients),
        labels=tuple(p.referable for p in patients),
    )


def stratify_by_grade(
    manifest: list[ManifestRecord],
    predictions: list[PredictionRecord],
    referable_grade: int,
) -> EvalSubset:
    """Fixed negatives (grades 0 and 1) plus positives of one grade.

    Every labeled record must carry a grade; the negative stratum is
    shared across referable_grade choices so the curves are comparable.
    """
    if referable_grade not in REFERABLE_GRADES:
        raise ContractError(
            f"referable_grade must be one of {REFERABLE_GRADES}, got {referable_grade}"
        )
    index = _prediction_index(predictions)
    labeled = [r for r in manifest if r.label is not None]
    ungraded = [r.image_id for r in labeled if r.dr_grade is None]
    if ungraded:
        raise ReconciliationError("records lack dr_grade for stratification", ungraded)
    missing = [r.image_id for r in labeled if r.image_id not in index]
    if missing:
        raise ReconciliationError("labeled images lack predictions", missing)

    chosen = [
        r for r in labeled
        if r.dr_grade in (0, 1) or r.dr_grade == referable_grade
    ]
    if not any(r.dr_grade == referable_grade for r in chosen):
        raise DegenerateLabelsError(f"no records with dr_grade={referable_grade}")
    return EvalSubset(
        image_ids=tuple(r.image_id for r in chosen),
        scores=tuple(index[r.image_id].prob_ref for r in chosen),
        labels=tuple(r.label for r in chosen),
    )


def stratify_by_quality(
    manifest: list[ManifestRecord],
    predictions: list[PredictionRecord],
    scheme: str,
) -> QualityStrata:
    """One evaluation subset per quality label under the named scheme.

    Labeled records without a quality under the scheme are excluded from
    every subset and tallied in the unlabeled count.
    """
    if not any(r.quality_scheme == scheme for r in manifest):
        raise ContractError(f"no manifest records carry quality scheme {scheme!r}")
    index = _prediction_index(predictions)
    labeled = [r for r in manifest if r.label is not None]
    missing = [r.image_id for r in labeled if r.image_id not in index]
    if missing:
        raise ReconciliationError("labeled images lack predictions", missing)

    by_quality: dict[str, list[ManifestRecord]] = {}
    unlabeled = 0
    for record in labeled:
        if record.quality_scheme == scheme and record.quality is not None:
            by_quality.setdefault(record.quality, []).append(record)
        else:
            unlabeled += 1

    subsets = {}
    for quality in sorted(by_quality):
        members = by_quality[quality]
        subsets[quality] = EvalSubset(
            image_ids=tuple(r.image_id for r in members),
            scores=tuple(index[r.image_id].prob_ref for r in members),
            labels=tuple(r.label for r in members),
        )
    return QualityStrata(scheme=scheme, subsets=subsets, unlabeled=unlabeled)


def pool_datasets(
    sets: list[tuple[list[ManifestRecord], list[PredictionRecord]]],
) -> tuple[list[ManifestRecord], list[PredictionRecord]]:
    """Concatenate evaluation sets with dataset-qualified image ids.

    Each image_id is prefixed with its record's dataset name so ids stay
    unique across sets; predictions are re-keyed the same way.
    """
    pooled_manifest: list[ManifestRecord] = []
    pooled_predictions: list[PredictionRecord] = []
    seen: set[str] = set()
    for manifest, predictions in sets:
        by_id = {r.image_id: r for r in manifest}
        orphans = [p.image_id for p in predictions if p.image_id not in by_id]
        if orphans:
            raise ReconciliationError("predictions lack manifest records", orphans)
        for record in manifest:
            qualified = f"{record.dataset}/{record.image_id}"
            if qualified in seen:
                raise ContractError(f"duplicate pooled image id {qualified!r}")
            seen.add(qualified)
            pooled_manifest.append(
                ManifestRecord(
                    image_id=qualified,
                    path=record.path,
                    dataset=record.dataset,
                    split=record.split,
                    patient_id=record.patient_id,
                    laterality=record.laterality,
                    dr_grade=record.dr_grade,
                    referable=record.referable,
                    quality=record.quality,
                    quality_scheme=record.quality_scheme,
                )
            )
        for p in predictions:
            dataset = by_id[p.image_id].dataset
            pooled_predictions.append(
                PredictionRecord(
                    image_id=f"{dataset}/{p.image_id}",
                    prob_nonref=p.prob_nonref,
                    prob_ref=p.prob_ref,
                )
            )
    return pooled_manifest, pooled_predictions
