"""Two-phase training at toy scale.

Phase 1 trains only the designated final layer with SGD (lr 0.001,
Nesterov momentum 0.9) for up to 10 epochs; every other parameter stays
bitwise untouched.  Phase 2 fine-tunes all parameters with Adam
(lr 0.0001, betas 0.9/0.999) and stops once validation loss has not
strictly improved for 7 consecutive epochs, restoring the best
checkpoint.  The model must expose the final classification layer as a
``final_layer`` attribute.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from typing import Optional

import torch
from torch import nn


@dataclass(frozen=True)
class Phase1Config:
    lr: float = 0.001
    momentum: float = 0.9
    nesterov: bool = True
    max_epochs: int = 10


@dataclass(frozen=True)
class Phase2Config:
    lr: float = 0.0001
    beta1: float = 0.9
    beta2: float = 0.999
    patience: int = 7
    max_epochs: int = 100


@dataclass(frozen=True)
class TrainConfig:
    num_classes: int = 15
    seed: int = 0
    batch_size: int = 32
    phase1: Phase1Config = field(default_factory=Phase1Config)
    phase2: Phase2Config = field(default_factory=Phase2Config)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        obj = json.loads(text)
        return cls(
            num_classes=obj.get("num_classes", 15),
            seed=obj.get("seed", 0),
            batch_size=obj.get("batch_size", 32),
            phase1=Phase1Config(**obj.get("phase1", {})),
            phase2=Phase2Config(**obj.get("phase2", {})),
        )


class EarlyStopper:
    """Stop when validation loss has not strictly improved for `patience`
    epochs after the best one."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_epoch: Optional[int] = None
        self.best_loss = float("inf")

    def update(self, epoch: int, val_loss: float) -> bool:
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = epoch
            return False
        return epoch - (self.best_epoch or 0) >= self.patience


@dataclass
class EpochRow:
    epoch: int
    phase: str
    train_loss: float
    val_loss: float


@dataclass
class TrainLog:
    rows: list[EpochRow] = field(default_factory=list)
    best_epoch: Optional[int] = None
    stopped_epoch: Optional[int] = None

    def write_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("epoch,phase,train_loss,val_loss\n")
            for row in self.rows:
                fh.write(f"{row.epoch},{row.phase},{row.train_loss:.6f},{row.val_loss:.6f}\n")


@dataclass
class SplitData:
    train_x: torch.Tensor
    train_y: torch.Tensor
    val_x: torch.Tensor
    val_y: torch.Tensor


def _epoch(model, x, y, batch_size, loss_fn, optimizer, generator):
    model.train()
    order = torch.randperm(len(x), generator=generator)
    total = 0.0
    for start in range(0, len(x), batch_size):
        idx = order[start:start + batch_size]
        optimizer.zero_grad()
        loss = loss_fn(model(x[idx]), y[idx])
        loss.backward()
        optimizer.step()
        total += loss.detach().item() * len(idx)
    return total / len(x)


def _val_loss(model, x, y, loss_fn):
    model.eval()
    with torch.no_grad():
        return float(loss_fn(model(x), y))


def train(model: nn.Module, data: SplitData, config: TrainConfig) -> TrainLog:
    final = getattr(model, "final_layer", None)
    if not isinstance(final, nn.Module):
        raise ValueError("model must designate its classification head as .final_layer")

    torch.manual_seed(config.seed)
    generator = torch.Generator().manual_seed(config.seed)
    loss_fn = nn.CrossEntropyLoss()
    log = TrainLog()

    # phase 1: the head only, everything else inert
    final_param_ids = {id(p) for p in final.parameters()}
    for p in model.parameters():
        if id(p) not in final_param_ids:
            p.requires_grad_(False)
    optimizer = torch.optim.SGD(
        final.parameters(),
        lr=config.phase1.lr,
        momentum=config.phase1.momentum,
        nesterov=config.phase1.nesterov,
    )
    for epoch in range(1, config.phase1.max_epochs + 1):
        train_loss = _epoch(
            model, data.train_x, data.train_y, config.batch_size,
            loss_fn, optimizer, generator,
        )
        log.rows.append(EpochRow(
            epoch, "phase1", train_loss,
            _val_loss(model, data.val_x, data.val_y, loss_fn),
        ))

    # phase 2: everything, patience on validation loss
    for p in model.parameters():
        p.requires_grad_(True)
    optimizer = torch.optim.Adam(
        model.parameters(),
        lr=config.phase2.lr,
        betas=(config.phase2.beta1, config.phase2.beta2),
    )
    stopper = EarlyStopper(config.phase2.patience)
    best_state = None
    for epoch in range(1, config.phase2.max_epochs + 1):
        train_loss = _epoch(
            model, data.train_x, data.train_y, config.batch_size,
            loss_fn, optimizer, generator,
        )
        val_loss = _val_loss(model, data.val_x, data.val_y, loss_fn)
        log.rows.append(EpochRow(epoch, "phase2", train_loss, val_loss))
        stop = stopper.update(epoch, val_loss)
        if stopper.best_epoch == epoch:
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        if stop:
            log.stopped_epoch = epoch
            break
    log.best_epoch = stopper.best_epoch
    if best_state is not None:
        model.load_state_dict(best_state)
    return log


class ToyNet(nn.Module):
    """Small plain CNN; no normalization layers, so a frozen parameter
    really is frozen and train/eval forwards agree."""

    def __init__(self, num_classes: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(1, 8, 3, padding=1),
            nn.ReLU(),
            nn.MaxPool2d(2),
            nn.Conv2d(8, 16, 3, padding=1),
            nn.ReLU(),
            nn.AdaptiveAvgPool2d(1),
            nn.Flatten(),
        )
        self.final_layer = nn.Linear(16, num_classes)

    def forward(self, x):
        return self.final_layer(self.body(x))


def make_toy_model(num_classes: int = 2, seed: int = 0) -> ToyNet:
    torch.manual_seed(seed)
    return ToyNet(num_classes)


def make_toy_data(
    n_per_class: int = 200, image_size: int = 16, noise: float = 0.25, seed: int = 0
) -> SplitData:
    """Two separable classes of blob images: bright patch in opposite
    corners plus Gaussian pixel noise.  80/20 train/validation split."""
    generator = torch.Generator().manual_seed(seed)
    half = image_size // 2
    images, labels = [], []
    for cls in (0, 1):
        base = torch.zeros(n_per_class, 1, image_size, image_size)
        if cls == 0:
            base[:, :, :half, :half] = 1.0
        else:
            base[:, :, half:, half:] = 1.0
        base += noise * torch.randn(base.shape, generator=generator)
        images.append(base)
        labels.append(torch.full((n_per_class,), cls, dtype=torch.long))
    x = torch.cat(images)
    y = torch.cat(labels)
    order = torch.randperm(len(x), generator=generator)
    x, y = x[order], y[order]
    cut = int(0.8 * len(x))
    return SplitData(x[:cut], y[:cut], x[cut:], y[cut:])


def accuracy(model: nn.Module, x: torch.Tensor, y: torch.Tensor) -> float:
    model.eval()
    with torch.no_grad():
        return float((model(x).argmax(dim=1) == y).float().mean())
