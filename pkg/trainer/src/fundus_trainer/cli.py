"""Command-line entry points: train, predict, cam."""

import argparse
import csv
import os
import sys

import torch

from .augment import AugmentConfig
from .cam import write_overlay, xgradcam_fused
from .errors import TrainerError
from .io import read_manifest, read_tensor, write_predictions
from .model import load_checkpoint, save_checkpoint
from .predict import predict
from .train import TrainConfig, train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fundus-trainer",
        description="train a referable-DR classifier on preprocessed tensors "
                    "and render its activation maps")
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="fine-tune on the manifest's train split")
    tr.add_argument("--manifest", required=True)
    tr.add_argument("--tensors", required=True, help="directory of .t32 files")
    tr.add_argument("--out", required=True, help="output directory")
    tr.add_argument("--lr", type=float, default=1e-4)
    tr.add_argument("--batch-size", type=int, default=128)
    tr.add_argument("--max-epochs", type=int, default=150)
    tr.add_argument("--lr-patience", type=int, default=20)
    tr.add_argument("--stop-patience", type=int, default=40)
    tr.add_argument("--weight-decay", type=float, default=1e-3)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--from-scratch", action="store_true",
                    help="skip the pretrained starting weights")
    tr.add_argument("--no-augment", action="store_true")

    pr = sub.add_parser("predict", help="write a prediction CSV for a manifest")
    pr.add_argument("--manifest", required=True)
    pr.add_argument("--tensors", required=True)
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--out", required=True, help="prediction CSV path")
    pr.add_argument("--batch-size", type=int, default=128)

    cm = sub.add_parser("cam", help="render fused activation-map overlays")
    cm.add_argument("--manifest", required=True)
    cm.add_argument("--tensors", required=True)
    cm.add_argument("--checkpoint", required=True)
    cm.add_argument("--out", required=True, help="output directory for PNGs")
    cm.add_argument("--image-id", action="append", dest="image_ids",
                    help="restrict to specific ids (repeatable)")
    cm.add_argument("--target-class", type=int, choices=(0, 1), default=None)
    return parser


def cmd_train(args) -> int:
    rows = read_manifest(args.manifest)
    config = TrainConfig(
        initial_lr=args.lr,
        lr_halving_patience=args.lr_patience,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        early_stop_patience=args.stop_patience,
        weight_decay=args.weight_decay,
        augmentation=AugmentConfig(enabled=not args.no_augment),
        pretrained=not args.from_scratch,
    )
    result = train(rows, args.tensors, config, seed=args.seed)

    os.makedirs(args.out, exist_ok=True)
    checkpoint = os.path.join(args.out, "checkpoint.pt")
    torch.save(result.state_dict, checkpoint)
    log_path = os.path.join(args.out, "training_log.csv")
    with open(log_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "train_accuracy",
                         "val_auc", "lr", "steps"])
        for s in result.log:
            writer.writerow([s.epoch, repr(s.train_loss), repr(s.train_accuracy),
                             repr(s.val_auc), repr(s.lr), s.steps])
    print(f"best epoch {result.best_epoch} with validation AUC "
          f"{result.best_val_auc:.4f}; checkpoint at {checkpoint}")
    return 0


def cmd_predict(args) -> int:
    rows = read_manifest(args.manifest)
    model = load_checkpoint(args.checkpoint)
    outcome = predict(model, rows, args.tensors, batch_size=args.batch_size)
    write_predictions(args.out, outcome.rows)
    print(f"wrote {len(outcome.rows)} predictions to {args.out}")
    for image_id, reason in outcome.failures:
        print(f"failed {image_id}: {reason}", file=sys.stderr)
    return 0 if not outcome.failures else 1


def cmd_cam(args) -> int:
    rows = read_manifest(args.manifest)
    if args.image_ids:
        wanted = set(args.image_ids)
        rows = [r for r in rows if r.image_id in wanted]
        missing = wanted - {r.image_id for r in rows}
        if missing:
            raise SystemExit(f"ids not in manifest: {sorted(missing)}")
    model = load_checkpoint(args.checkpoint)
    os.makedirs(args.out, exist_ok=True)
    for row in rows:
        values = read_tensor(os.path.join(args.tensors, f"{row.image_id}.t32"))
        result = xgradcam_fused(model, values, args.target_class,
                                image_id=row.image_id)
        write_overlay(os.path.join(args.out, f"{row.image_id}_cam.png"),
                      values, result.heatmap)
    print(f"wrote {len(rows)} overlays to {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"train": cmd_train, "predict": cmd_predict, "cam": cmd_cam}
    try:
        return handlers[args.command](args)
    except TrainerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
