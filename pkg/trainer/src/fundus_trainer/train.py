"""Fine-tuning loop: Adam, plateau-halved LR, early stop on validation AUC."""

import copy
import os
import zlib
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader, Dataset

from .augment import AugmentConfig, augment
from .errors import ConfigError, DataError
from .io import ImageRow, read_tensor
from .model import build_model


@dataclass(frozen=True)
class TrainConfig:
    initial_lr: float = 1e-4
    lr_halving_patience: int = 20
    batch_size: int = 128
    max_epochs: int = 150
    early_stop_patience: int = 40
    weight_decay: float = 1e-3
    augmentation: AugmentConfig = field(default_factory=AugmentConfig)
    pretrained: bool = True
    loader_workers: int = 0

    def __post_init__(self):
        if self.initial_lr <= 0 or self.weight_decay <= 0:
            raise ConfigError("initial_lr and weight_decay must be positive")
        if min(self.lr_halving_patience, self.batch_size, self.max_epochs,
               self.early_stop_patience) <= 0:
            raise ConfigError("patience, batch size and epoch counts must be positive")
        if self.lr_halving_patience >= self.max_epochs:
            raise ConfigError("lr_halving_patience must be < max_epochs")
        if self.early_stop_patience >= self.max_epochs:
            raise ConfigError("early_stop_patience must be < max_epochs")
        if self.loader_workers < 0:
            raise ConfigError("loader_workers must be >= 0")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_auc: float
    lr: float
    steps: int


@dataclass
class TrainResult:
    state_dict: dict
    best_epoch: int
    best_val_auc: float
    log: list[EpochStats]
    total_steps: int


class PlateauHalving:
    """Halve the learning rate after `patience` epochs without improvement."""

    def __init__(self, initial_lr: float, patience: int):
        self.lr = initial_lr
        self.patience = patience
        self.best = -float("inf")
        self.stale = 0

    def step(self, metric: float) -> float:
        if metric > self.best:
            self.best = metric
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.patience:
                self.lr /= 2.0
                self.stale = 0
        return self.lr


class TensorFolder(Dataset):
    """Serves (tensor, label) pairs from a directory of tensor files."""

    def __init__(self, rows: list[ImageRow], tensor_dir, training: bool,
                 config: TrainConfig, seed: int):
        self.rows = rows
        self.tensor_dir = os.fspath(tensor_dir)
        self.training = training
        self.config = config
        self.seed = seed
        self.epoch = 0

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, idx):
        row = self.rows[idx]
        values = read_tensor(os.path.join(self.tensor_dir, f"{row.image_id}.t32"))
        x = torch.from_numpy(values.copy())
        if self.training:
            # crc32 is stable across worker processes, unlike str hashing;
            # folding in the epoch gives fresh draws every pass
            digest = zlib.crc32(f"{self.seed}:{self.epoch}:{row.image_id}".encode())
            gen = torch.Generator().manual_seed(digest)
            x = augment(x, self.config.augmentation, gen)
        return x, row.label


def rank_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC with midranks for ties."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    n_pos = int((labels == 1).sum())
    n_neg = len(labels) - n_pos
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2)
                 / (n_pos * n_neg))


def split_rows(rows: list[ImageRow], split: str) -> list[ImageRow]:
    members = [r for r in rows if r.split == split]
    if not members:
        raise ConfigError(f"no rows in split {split!r}")
    unlabeled = [r.image_id for r in members if r.label is None]
    if unlabeled:
        raise DataError(f"split {split!r} has unlabeled rows: {unlabeled[:5]}")
    return members


@torch.no_grad()
def _validation_auc(model: nn.Module, loader: DataLoader) -> float:
    model.eval()
    scores, labels = [], []
    for x, y in loader:
        probs = torch.softmax(model(x), dim=1)[:, 1]
        scores.append(probs.numpy())
        labels.append(np.asarray(y))
    return rank_auc(np.concatenate(scores), np.concatenate(labels))


def train(rows: list[ImageRow], tensor_dir, config: TrainConfig | None = None,
          seed: int = 0, model: nn.Module | None = None) -> TrainResult:
    """Fine-tune on the train split, selecting the best epoch by val AUC."""
    if config is None:
        config = TrainConfig()
    train_rows = split_rows(rows, "train")
    val_rows = split_rows(rows, "val")
    val_labels = {r.label for r in val_rows}
    if val_labels != {0, 1}:
        raise DataError("validation split must contain both classes")

    torch.manual_seed(seed)
    if model is None:
        model = build_model(pretrained=config.pretrained)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.initial_lr,
                                 weight_decay=config.weight_decay)
    # unweighted cross-entropy: class imbalance is deliberately ignored
    criterion = nn.CrossEntropyLoss()
    scheduler = PlateauHalving(config.initial_lr, config.lr_halving_patience)

    loader_gen = torch.Generator().manual_seed(seed)
    train_dataset = TensorFolder(train_rows, tensor_dir, True, config, seed)
    train_loader = DataLoader(
        train_dataset, batch_size=config.batch_size, shuffle=True,
        generator=loader_gen, num_workers=config.loader_workers)
    val_loader = DataLoader(
        TensorFolder(val_rows, tensor_dir, False, config, seed),
        batch_size=config.batch_size, shuffle=False,
        num_workers=config.loader_workers)

    best_auc = -float("inf")
    best_epoch = -1
    best_state = None
    stale = 0
    log = []
    steps = 0

    for epoch in range(config.max_epochs):
        model.train()
        train_dataset.epoch = epoch
        lr = scheduler.lr
        for group in optimizer.param_groups:
            group["lr"] = lr
        total_loss = 0.0
        hits = 0
        count = 0
        for x, y in train_loader:
            optimizer.zero_grad()
            logits = model(x)
            loss = criterion(logits, y)
            loss.backward()
            optimizer.step()
            steps += 1
            total_loss += loss.item() * len(y)
            hits += int((logits.argmax(dim=1) == y).sum())
            count += len(y)

        val_auc = _validation_auc(model, val_loader)
        log.append(EpochStats(epoch=epoch, train_loss=total_loss / count,
                              train_accuracy=hits / count, val_auc=val_auc,
                              lr=lr, steps=steps))

        if val_auc > best_auc:
            best_auc = val_auc
            best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
            stale = 0
        else:
            stale += 1
            if stale >= config.early_stop_patience:
                break
        scheduler.step(val_auc)

    model.load_state_dict(best_state)
    return TrainResult(state_dict=best_state, best_epoch=best_epoch,
                       best_val_auc=best_auc, log=log, total_steps=steps)
