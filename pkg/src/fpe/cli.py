"""Command-line surface: preprocess, evaluate, aggregate-patients, pool.

Every run is seeded (flag, then FPE_SEED, then 0) and every report is
byte-stable under re-execution: JSON is emitted with sorted keys and no
timestamps.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile

from . import __version__
from .cohort import (
    EvalSubset,
    aggregate_patients,
    evaluation_set,
    load_manifest,
    load_predictions,
    patients_to_subset,
    pool_datasets,
    stratify_by_grade,
    stratify_by_quality,
    REFERABLE_GRADES,
)
from .enhance import EnhanceParams
from .errors import DegenerateLabelsError, FpeError, ReconciliationError
from .pipeline import PreprocessConfig, run_batch
from .stats import (
    BootstrapConfig,
    PredictionRecord,
    bootstrap_auc_ci,
    prediction_entropy,
    roc_curve,
    sens_spec_argmax,
)


def _default_seed() -> int:
    raw = os.environ.get("FPE_SEED")
    if raw is None:
        return 0
    try:
        seed = int(raw)
    except ValueError:
        raise SystemExit(f"FPE_SEED must be an integer, got {raw!r}")
    if seed < 0:
        raise SystemExit(f"FPE_SEED must be non-negative, got {seed}")
    return seed


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _size(text: str) -> int:
    value = int(text)
    if value < 32:
        raise argparse.ArgumentTypeError(f"size must be >= 32, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fpe",
        description="Fundus photograph preprocessing and screening evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"fpe {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    pre = sub.add_parser("preprocess", help="run the image pipeline over a manifest")
    pre.add_argument("--manifest", required=True)
    pre.add_argument("--out", required=True)
    pre.add_argument("--size", type=_size, default=512)
    pre.add_argument("--workers", type=_positive_int, default=1)
    pre.add_argument("--stage", choices=("after_resize", "before_resize"),
                     default="after_resize")
    pre.add_argument("--no-square-pad", action="store_true")
    pre.add_argument("--no-png", action="store_true")
    pre.add_argument("--no-tensor", action="store_true")
    pre.add_argument("--alpha", type=float, default=4.0)
    pre.add_argument("--beta", type=float, default=4.0)
    pre.add_argument("--gamma", type=float, default=128.0)
    pre.add_argument("--sigma-divisor", type=float, default=90.0)

    ev = sub.add_parser("evaluate", help="compute AUC, Se/Sp and entropy reports")
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--predictions", required=True)
    ev.add_argument("--out", required=True, help="output directory for report and ROC CSVs")
    ev.add_argument("--per-patient", action="store_true")
    ev.add_argument("--stratify-grade", action="store_true")
    ev.add_argument("--stratify-quality", metavar="SCHEME")
    ev.add_argument("--seed", type=int, default=None)
    ev.add_argument("--bootstrap-n", type=_positive_int, default=1000)

    agg = sub.add_parser("aggregate-patients", help="collapse image rows to patients")
    agg.add_argument("--manifest", required=True)
    agg.add_argument("--predictions", required=True)
    agg.add_argument("--out", required=True, help="output CSV path")

    pool = sub.add_parser("pool", help="merge evaluation sets with qualified ids")
    pool.add_argument("--set", dest="sets", action="append", required=True,
                      metavar="MANIFEST:PREDICTIONS",
                      help="manifest and prediction CSV pair, colon-separated")
    pool.add_argument("--out-manifest", required=True)
    pool.add_argument("--out-predictions", required=True)

    return parser


def _atomic_text(path: str, text: str) -> None:
    parent = os.path.dirname(path) or "."
    os.makedirs(parent, exist_ok=True)
    fd, tmp = tempfile.mkstemp(suffix=".tmp", dir=parent)
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_roc_csv(path: str, subset: EvalSubset) -> None:
    curve = roc_curve(subset.scores, subset.labels)
    lines = ["threshold,fpr,tpr"]
    for threshold, (fpr, tpr) in zip(curve.thresholds, curve.points):
        lines.append(f"{threshold!r},{fpr!r},{tpr!r}")
    _atomic_text(path, "\n".join(lines) + "\n")


def _section(subset: EvalSubset, pred_by_id: dict[str, PredictionRecord],
             config: BootstrapConfig) -> dict:
    auc_report = bootstrap_auc_ci(subset.scores, subset.labels, config)
    members = [pred_by_id[i] for i in subset.image_ids]
    se, sp = sens_spec_argmax(members, subset.labels)
    mean_entropy = sum(prediction_entropy(p) for p in members) / len(members)
    return {
        "auc": auc_report.as_dict(),
        "sensitivity": se.as_dict(),
        "specificity": sp.as_dict(),
        "mean_entropy": mean_entropy,
        "n_pos": subset.n_pos,
        "n_neg": subset.n_neg,
    }


def cmd_preprocess(args) -> int:
    manifest = load_manifest(args.manifest)
    config = PreprocessConfig(
        target_size=args.size,
        enhance=EnhanceParams(alpha=args.alpha, beta=args.beta, gamma=args.gamma,
                              sigma_divisor=args.sigma_divisor),
        enhance_stage=args.stage,
        square_pad=not args.no_square_pad,
        emit_png=not args.no_png,
        emit_tensor=not args.no_tensor,
        workers=args.workers,
    )
    report = run_batch(manifest, config, args.out)
    print(f"processed {report.processed} of {report.processed + len(report.failed)} "
          f"images in {report.wall_time:.2f}s")
    for image_id, kind in report.failed:
        print(f"failed {image_id}: {kind}", file=sys.stderr)
    return 0


def cmd_evaluate(args) -> int:
    manifest = load_manifest(args.manifest)
    predictions = load_predictions(args.predictions)
    seed = args.seed if args.seed is not None else _default_seed()
    config = BootstrapConfig(n_resamples=args.bootstrap_n, seed=seed)
    pred_by_id = {p.image_id: p for p in predictions}

    report = {
        "tool": {"name": "fpe", "version": __version__},
        "config": {
            "seed": seed,
            "bootstrap_n": args.bootstrap_n,
            "per_patient": bool(args.per_patient),
            "stratify_grade": bool(args.stratify_grade),
            "stratify_quality": args.stratify_quality,
            "manifest": os.path.basename(args.manifest),
            "predictions": os.path.basename(args.predictions),
        },
        "sections": {},
    }

    image_set = evaluation_set(manifest, predictions)
    report["sections"]["image"] = _section(image_set, pred_by_id, config)
    _write_roc_csv(os.path.join(args.out, "roc_image.csv"), image_set)

    if args.per_patient:
        patients = aggregate_patients(manifest, predictions)
        patient_set = patients_to_subset(patients)
        patient_preds = {
            p.patient_id: PredictionRecord(
                image_id=p.patient_id, prob_nonref=1.0 - p.prob_ref, prob_ref=p.prob_ref)
            for p in patients
        }
        report["sections"]["patient"] = _section(patient_set, patient_preds, config)
        _write_roc_csv(os.path.join(args.out, "roc_patient.csv"), patient_set)

    if args.stratify_grade:
        strata = {}
        for grade in REFERABLE_GRADES:
            try:
                subset = stratify_by_grade(manifest, predictions, grade)
            except DegenerateLabelsError:
                strata[f"grade_{grade}"] = {"not_applicable": True}
                continue
            strata[f"grade_{grade}"] = _section(subset, pred_by_id, config)
            _write_roc_csv(os.path.join(args.out, f"roc_grade_{grade}.csv"), subset)
        report["sections"]["grade_strata"] = strata

    if args.stratify_quality:
        quality = stratify_by_quality(manifest, predictions, args.stratify_quality)
        strata = {"unlabeled": quality.unlabeled}
        for label, subset in quality.subsets.items():
            try:
                strata[label] = _section(subset, pred_by_id, config)
                _write_roc_csv(os.path.join(args.out, f"roc_quality_{label}.csv"), subset)
            except DegenerateLabelsError as exc:
                strata[label] = {"not_applicable": True, "reason": type(exc).__name__}
        report["sections"]["quality_strata"] = strata

    _atomic_text(os.path.join(args.out, "report.json"),
                 json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"report written to {os.path.join(args.out, 'report.json')}")
    return 0


def _csv_text(header: list[str], rows: list[list[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def cmd_aggregate_patients(args) -> int:
    manifest = load_manifest(args.manifest)
    predictions = load_predictions(args.predictions)
    patients = aggregate_patients(manifest, predictions)
    rows = [[p.patient_id, str(len(p.image_ids)), repr(p.prob_ref), str(p.referable)]
            for p in patients]
    _atomic_text(args.out, _csv_text(
        ["patient_id", "image_count", "prob_ref", "referable"], rows))
    print(f"wrote {len(patients)} patients to {args.out}")
    return 0


def cmd_pool(args) -> int:
    sets = []
    for spec_text in args.sets:
        manifest_path, sep, pred_path = spec_text.partition(":")
        if not sep or not manifest_path or not pred_path:
            raise SystemExit(f"--set expects MANIFEST:PREDICTIONS, got {spec_text!r}")
        sets.append((load_manifest(manifest_path), load_predictions(pred_path)))
    manifest, predictions = pool_datasets(sets)

    man_rows = [[
        r.image_id, r.path, r.dataset, r.split,
        r.patient_id or "", r.laterality or "",
        "" if r.dr_grade is None else str(r.dr_grade),
        "" if r.referable is None else str(r.referable),
        r.quality or "", r.quality_scheme or "",
    ] for r in manifest]
    _atomic_text(args.out_manifest, _csv_text(
        ["image_id", "path", "dataset", "split", "patient_id", "laterality",
         "dr_grade", "referable", "quality", "quality_scheme"], man_rows))

    pred_rows = [[p.image_id, repr(p.prob_nonref), repr(p.prob_ref)]
                 for p in predictions]
    _atomic_text(args.out_predictions, _csv_text(
        ["image_id", "prob_nonref", "prob_ref"], pred_rows))
    print(f"pooled {len(manifest)} records from {len(sets)} sets")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "preprocess": cmd_preprocess,
        "evaluate": cmd_evaluate,
        "aggregate-patients": cmd_aggregate_patients,
        "pool": cmd_pool,
    }
    try:
        return handlers[args.command](args)
    except ReconciliationError as exc:
        print(f"reconciliation failure: {exc}", file=sys.stderr)
        return 1
    except FpeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
