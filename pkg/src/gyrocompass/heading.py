"""Heading regression from gyroscope sequences.

Two variants of a bi-directional LSTM regressor: the plain one (constant
learning rate, batch 100, no dropout) and the enhanced one (dropout plus
exponential learning-rate decay, batch 32).  The head emits (sin, cos)
so the wrapped angle comes out of atan2 without clamping, which keeps the
cyclic loss smooth.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from . import seeding
from .errors import ConfigError, DivergenceError, EmptyBatch, ShapeError
from .geo import EARTH_RATE, wrap_heading

VARIANTS = ("baseline", "enhanced")


@dataclass(frozen=True)
class HeadingTrainConfig:
    eta_max: float = 0.005
    eta_min: float = 0.0005
    epochs: int = 300
    batch_size: int | None = None  # default: 32 enhanced, 100 baseline
    variant: str = "enhanced"
    base_seed: int = 0
    patience: int = 30
    baseline_learning_rate: float = 0.001
    dropout: float | None = None  # default: 0.05 enhanced, 0.0 baseline

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not (0.0 < self.eta_min <= self.eta_max):
            raise ConfigError(f"need 0 < eta_min <= eta_max, got ({self.eta_min}, {self.eta_max})")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")

    @property
    def resolved_batch_size(self) -> int:
        if self.batch_size is not None:
            return self.batch_size
        return 32 if self.variant == "enhanced" else 100

    @property
    def resolved_dropout(self) -> float:
        if self.dropout is not None:
            return self.dropout
        return 0.05 if self.variant == "enhanced" else 0.0


def lr_at_epoch(t: int, cfg: HeadingTrainConfig) -> float:
    """Exponential decay eta_max * gamma^t with gamma = (eta_min/eta_max)^(1/N).

    Hits eta_min exactly at t = N = cfg.epochs.
    """
    if t < 0 or t > cfg.epochs:
        raise ConfigError(f"epoch {t} outside [0, {cfg.epochs}]")
    ratio = cfg.eta_min / cfg.eta_max
    if cfg.epochs == 0:
        if ratio != 1.0:
            raise ConfigError("zero-epoch decay with eta_min != eta_max")
        return cfg.eta_max
    return cfg.eta_max * math.exp((t / cfg.epochs) * math.log(ratio))


def crmse(preds, gts, degrees: bool = False) -> float:
    """Cyclic RMSE: root-mean-square of the shortest angular differences."""
    preds = np.asarray(preds, dtype=np.float64)
    gts = np.asarray(gts, dtype=np.float64)
    if preds.shape != gts.shape:
        raise ShapeError(f"preds {preds.shape} and gts {gts.shape} differ")
    if preds.size == 0:
        raise EmptyBatch("crmse over an empty batch")
    delta = gts - preds
    shortest = np.arctan2(np.sin(delta), np.cos(delta))
    value = float(np.sqrt(np.mean(shortest**2)))
    return float(np.rad2deg(value)) if degrees else value


@dataclass(frozen=True)
class HeadingPrediction:
    heading: float  # rad in [0, 2*pi)
    seq_id: int | None = None


class HeadingNetwork(nn.Module):
    """Two stacked bi-directional LSTM layers, 24 hidden per direction.

    Inputs are scaled by 1/EARTH_RATE so physical rad/s sequences enter at
    unit magnitude.  Dropout sits between the recurrent layers and before
    the fully connected head (active in training mode only).  The pooled
    feature is the concatenation of the last layer's final forward and
    backward hidden states.
    """

    def __init__(self, variant: str = "enhanced", hidden_size: int = 24,
                 dropout: float | None = None, seed: int | None = None):
        super().__init__()
        if variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {variant!r}")
        if seed is not None:
            torch.manual_seed(seed)
        self.variant = variant
        self.hidden_size = hidden_size
        p = (0.05 if variant == "enhanced" else 0.0) if dropout is None else dropout
        self.dropout_rate = p
        self.input_scale = 1.0 / EARTH_RATE
        self.lstm1 = nn.LSTM(3, hidden_size, batch_first=True, bidirectional=True)
        self.mid_dropout = nn.Dropout(p)
        self.lstm2 = nn.LSTM(2 * hidden_size, hidden_size, batch_first=True, bidirectional=True)
        self.head_dropout = nn.Dropout(p)
        self.head = nn.Linear(2 * hidden_size, 2)
        self.double()

    @property
    def descriptor(self) -> dict:
        return {
            "kind": "heading",
            "variant": self.variant,
            "hidden_size": self.hidden_size,
            "dropout": self.dropout_rate,
            "input_scale": self.input_scale,
        }

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: [batch, n_time, 3] physical rad/s; returns raw (sin, cos) pairs
        h, _ = self.lstm1(x * self.input_scale)
        h = self.mid_dropout(h)
        _, (h_n, _) = self.lstm2(h)
        pooled = torch.cat((h_n[0], h_n[1]), dim=1)
        return self.head(self.head_dropout(pooled))

    def headings(self, x: torch.Tensor) -> torch.Tensor:
        out = self.forward(x)
        psi = torch.atan2(out[:, 0], out[:, 1])
        return torch.remainder(psi, 2 * math.pi)


def _sequence_array(seq) -> tuple[np.ndarray, int | None]:
    seq_id = getattr(seq, "seq_id", None)
    arr = seq.samples if hasattr(seq, "samples") else np.asarray(seq, dtype=np.float64)
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 1:
        if arr.size % 3:
            raise ShapeError(f"flat length {arr.size} is not a multiple of 3")
        arr = arr.reshape(-1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ShapeError(f"expected [n_time, 3], got {arr.shape}")
    return arr, seq_id


def predict_heading(net: HeadingNetwork, seq) -> HeadingPrediction:
    """Deterministic inference; output wrapped into [0, 2*pi)."""
    arr, seq_id = _sequence_array(seq)
    net.eval()
    with torch.inference_mode():
        psi = net.headings(torch.from_numpy(np.ascontiguousarray(arr))[None])[0].item()
    return HeadingPrediction(wrap_heading(psi), seq_id)


def predict_headings(net: HeadingNetwork, arrays: np.ndarray) -> np.ndarray:
    """Batched inference over a [n_seq, n_time, 3] stack; returns radians."""
    net.eval()
    with torch.inference_mode():
        psi = net.headings(torch.from_numpy(np.ascontiguousarray(arrays))).numpy()
    return wrap_heading(psi)


def cyclic_batch_loss(outputs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean squared shortest angular difference (the squared cyclic RMSE)."""
    psi_hat = torch.atan2(outputs[:, 0], outputs[:, 1])
    delta = labels - psi_hat
    shortest = torch.atan2(torch.sin(delta), torch.cos(delta))
    return torch.mean(shortest**2)


@dataclass
class HeadingHistory:
    """Per-epoch CRMSE curves in radians."""

    train_crmse: list[float] = field(default_factory=list)
    val_crmse: list[float] = field(default_factory=list)
    best_epoch: int = -1

    def rows(self):
        for i, (tr, va) in enumerate(zip(self.train_crmse, self.val_crmse)):
            yield i, tr, va


def train_heading(train_seqs, val_seqs, cfg: HeadingTrainConfig, preprocessor=None):
    """Mini-batch training with the cyclic loss; returns (best net, history).

    ``preprocessor`` (optional) maps a [n_time, 3] array to the cleaned
    array the network should consume; it is applied once up front, so any
    denoiser inside it stays frozen during heading training.  The enhanced
    variant decays the learning rate per epoch; the baseline variant keeps
    it constant.
    """
    def prepare(seqs):
        arrs, labels = [], []
        for s in seqs:
            arr, _ = _sequence_array(s)
            if preprocessor is not None:
                arr = preprocessor(arr)
            arrs.append(arr)
            labels.append(s.heading_label)
        return np.stack(arrs), np.asarray(labels, dtype=np.float64)

    train_x_np, train_y_np = prepare(train_seqs)
    val_x_np, val_y_np = prepare(val_seqs)
    train_x = torch.from_numpy(train_x_np)
    train_y = torch.from_numpy(train_y_np)
    val_x = torch.from_numpy(val_x_np)

    net = HeadingNetwork(
        cfg.variant,
        dropout=cfg.resolved_dropout,
        seed=seeding.derive_int(cfg.base_seed, seeding.HEADING_INIT),
    )
    lr0 = lr_at_epoch(0, cfg) if cfg.variant == "enhanced" else cfg.baseline_learning_rate
    opt = torch.optim.Adam(net.parameters(), lr=lr0)
    shuffle_rng = seeding.derive_rng(cfg.base_seed, seeding.HEADING_SHUFFLE)
    batch_size = cfg.resolved_batch_size
    n = train_x.shape[0]

    history = HeadingHistory()
    best_state, best_val = None, math.inf
    since_best = 0
    for epoch in range(cfg.epochs):
        if cfg.variant == "enhanced":
            lr = lr_at_epoch(epoch, cfg)
            for group in opt.param_groups:
                group["lr"] = lr
        net.train()
        perm = shuffle_rng.permutation(n)
        sq_sum, count = 0.0, 0
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            opt.zero_grad()
            loss = cyclic_batch_loss(net(train_x[idx]), train_y[idx])
            if not torch.isfinite(loss):
                raise DivergenceError(f"heading loss became {loss.item()} at epoch {epoch}")
            loss.backward()
            opt.step()
            sq_sum += loss.item() * len(idx)
            count += len(idx)
        val = crmse(predict_headings(net, val_x_np), val_y_np)
        history.train_crmse.append(math.sqrt(sq_sum / count))
        history.val_crmse.append(val)
        if val < best_val:
            best_val, since_best = val, 0
            best_state = copy.deepcopy(net.state_dict())
            history.best_epoch = epoch
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    net.load_state_dict(best_state)
    net.eval()
    return net, history
