"""Batch inference producing evaluation-ready prediction rows."""

import os
from dataclasses import dataclass

import torch

from .errors import DataError
from .io import ImageRow, read_tensor


@dataclass
class PredictOutcome:
    rows: list[tuple[str, float, float]]
    failures: list[tuple[str, str]]


@torch.no_grad()
def predict(model: torch.nn.Module, rows: list[ImageRow], tensor_dir,
            batch_size: int = 128) -> PredictOutcome:
    """Softmax probabilities per image; unreadable tensors fail per record."""
    model.eval()
    tensor_dir = os.fspath(tensor_dir)
    seen = set()
    outputs = []
    failures = []
    batch, batch_ids = [], []

    def flush():
        if not batch:
            return
        probs = torch.softmax(model(torch.stack(batch)), dim=1)
        for image_id, (p0, p1) in zip(batch_ids, probs.tolist()):
            outputs.append((image_id, float(p0), float(p1)))
        batch.clear()
        batch_ids.clear()

    for row in rows:
        if row.image_id in seen:
            raise DataError(f"duplicate image row {row.image_id!r}")
        seen.add(row.image_id)
        try:
            values = read_tensor(os.path.join(tensor_dir, f"{row.image_id}.t32"))
        except DataError as exc:
            failures.append((row.image_id, str(exc)))
            continue
        batch.append(torch.from_numpy(values.copy()))
        batch_ids.append(row.image_id)
        if len(batch) == batch_size:
            flush()
    flush()
    return PredictOutcome(rows=outputs, failures=failures)
