"""Denoising diffusion for gyroscope time sequences.

Forward process: Gaussian noise is blended into a clean sequence over T
steps under a linear variance schedule.  A step-conditioned bi-directional
LSTM learns to predict the injected noise, trained with an SVD-filtered
MSE loss.  The reverse process iteratively removes predicted noise from a
measured sequence, from step T down to a configurable stopping step.

Everything runs in float64 on CPU so checkpoints and re-runs are
bit-reproducible on one machine.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from . import seeding
from .errors import ConfigError, DivergenceError, ShapeError

_EMBED_BASE = 10000.0


@dataclass(frozen=True)
class NoiseSchedule:
    """Precomputed beta/alpha/alpha-cumprod arrays for T diffusion steps.

    Arrays are 1-indexed by step: element [t-1] belongs to step t.
    beta is strictly increasing in (0, 1); alpha_cumprod strictly decreasing.
    """

    T: int
    beta_min: float
    beta_max: float
    beta: np.ndarray
    alpha: np.ndarray
    alpha_cumprod: np.ndarray


def build_schedule(T: int = 1000, beta_min: float = 1e-4, beta_max: float = 5e-4) -> NoiseSchedule:
    """Linear schedule beta_t = beta_min + t*(beta_max - beta_min)/T, t = 1..T."""
    if not isinstance(T, (int, np.integer)) or T < 1:
        raise ConfigError(f"T must be a positive integer, got {T}")
    if not (0.0 < beta_min < beta_max < 1.0):
        raise ConfigError(f"need 0 < beta_min < beta_max < 1, got ({beta_min}, {beta_max})")
    t = np.arange(1, T + 1, dtype=np.float64)
    beta = beta_min + t * (beta_max - beta_min) / T
    alpha = 1.0 - beta
    alpha_cumprod = np.cumprod(alpha)
    for arr in (beta, alpha, alpha_cumprod):
        arr.flags.writeable = False
    return NoiseSchedule(int(T), float(beta_min), float(beta_max), beta, alpha, alpha_cumprod)


DEFAULT_SCHEDULE_PARAMS = dict(T=1000, beta_min=1e-4, beta_max=5e-4)


def _check_step(t, sched: NoiseSchedule, upper: int | None = None):
    upper = sched.T if upper is None else upper
    t_arr = np.asarray(t)
    if np.any(t_arr < 1) or np.any(t_arr > upper):
        raise ConfigError(f"step {t} outside [1, {upper}]")


def forward_noise(x0, t: int, eps, sched: NoiseSchedule):
    """Closed-form noising: x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    _check_step(t, sched)
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ShapeError(f"x0 {x0.shape} and eps {eps.shape} differ")
    abar = sched.alpha_cumprod[t - 1]
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps


def forward_noise_markov(x0, t: int, rng: np.random.Generator, sched: NoiseSchedule):
    """Apply the single-step kernel t times (testing oracle for the marginal)."""
    _check_step(t, sched)
    x = np.asarray(x0, dtype=np.float64).copy()
    for s in range(1, t + 1):
        beta = sched.beta[s - 1]
        x = np.sqrt(1.0 - beta) * x + np.sqrt(beta) * rng.standard_normal(x.shape)
    return x


def embed_tstep(t, dim: int = 20) -> np.ndarray:
    """Sinusoidal encoding of a diffusion step at dim/2 frequency pairs.

    Deterministic, bounded in [-1, 1], and injective over the step range
    used here (the slowest pair has period well above the step count).
    Accepts a scalar or an array of steps.
    """
    if dim < 2 or dim % 2:
        raise ConfigError(f"embedding dim must be a positive even number, got {dim}")
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 1):
        raise ConfigError(f"step {t} must be >= 1")
    freqs = _EMBED_BASE ** (-2.0 * np.arange(dim // 2) / dim)
    angles = t_arr[..., None] * freqs
    out = np.empty(t_arr.shape + (dim,), dtype=np.float64)
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out if np.ndim(t) else out.reshape(dim)


class DenoiserNetwork(nn.Module):
    """Step-conditioned noise predictor: stacked bi-directional LSTM layers.

    The step embedding is mapped by a learned linear layer to each LSTM
    layer's input width and added at every time step; a final linear head
    projects the last layer's features back to the 3 gyro channels.
    """

    def __init__(self, n_channels: int = 3, hidden_size: int = 64, num_layers: int = 5,
                 embed_dim: int = 20, seed: int | None = None):
        super().__init__()
        if seed is not None:
            torch.manual_seed(seed)
        self.n_channels = n_channels
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        self.embed_dim = embed_dim
        widths = [n_channels] + [2 * hidden_size] * (num_layers - 1)
        self.embed_proj = nn.ModuleList(nn.Linear(embed_dim, w) for w in widths)
        self.lstms = nn.ModuleList(
            nn.LSTM(w, hidden_size, batch_first=True, bidirectional=True) for w in widths
        )
        self.head = nn.Linear(2 * hidden_size, n_channels)
        self.double()

    @property
    def descriptor(self) -> dict:
        return {
            "kind": "denoiser",
            "n_channels": self.n_channels,
            "hidden_size": self.hidden_size,
            "num_layers": self.num_layers,
            "embed_dim": self.embed_dim,
        }

    def forward(self, x: torch.Tensor, t) -> torch.Tensor:
        # x: [batch, n_time, channels]; t: scalar step or one step per batch row
        t_arr = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
        emb = torch.from_numpy(np.ascontiguousarray(embed_tstep(t_arr, self.embed_dim)))
        h = x
        for proj, lstm in zip(self.embed_proj, self.lstms):
            h = h + proj(emb).unsqueeze(1)
            h, _ = lstm(h)
        return self.head(h)


def _as_batch(x) -> tuple[np.ndarray, bool, bool]:
    """Coerce [n*3] / [n,3] / [batch,n,3] input to a [batch,n,3] array."""
    arr = np.asarray(x, dtype=np.float64)
    flat = arr.ndim == 1
    if flat:
        if arr.size % 3:
            raise ShapeError(f"flat length {arr.size} is not a multiple of 3")
        arr = arr.reshape(-1, 3)
    if arr.ndim == 2:
        if arr.shape[1] != 3:
            raise ShapeError(f"expected 3 channels, got shape {arr.shape}")
        return arr[None], True, flat
    if arr.ndim == 3 and arr.shape[2] == 3:
        return arr, False, False
    raise ShapeError(f"expected [n*3], [n,3] or [batch,n,3], got {arr.shape}")


def predict_noise(net: DenoiserNetwork, x_t, t):
    """Run the noise predictor; output mirrors the input shape."""
    batch, single, flat = _as_batch(x_t)
    if np.any(np.asarray(t) < 1):
        raise ConfigError(f"step {t} must be >= 1")
    net.eval()
    with torch.inference_mode():
        out = net(torch.from_numpy(np.ascontiguousarray(batch)), t).numpy()
    if single:
        out = out[0]
        return out.reshape(-1) if flat else out
    return out


def svd_filter(mat, threshold: float) -> np.ndarray:
    """Zero every singular value <= threshold * s_max and reconstruct."""
    if not (0.0 <= threshold < 1.0):
        raise ConfigError(f"threshold must be in [0, 1), got {threshold}")
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got {mat.shape}")
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    s_max = s[0] if s.size else 0.0
    kept = np.where(s > threshold * s_max, s, 0.0)
    return (u * kept) @ vt


def _svd_filter_torch(batch: torch.Tensor, threshold: float) -> torch.Tensor:
    u, s, vh = torch.linalg.svd(batch, full_matrices=False)
    s_max = s[..., :1]
    kept = torch.where(s > threshold * s_max, s, torch.zeros((), dtype=s.dtype))
    return (u * kept.unsqueeze(-2)) @ vh


def svd_mse_loss(pred, target, threshold: float):
    """Mean-square difference between per-sequence SVD-filtered matrices.

    The inner reduction is a mean over all elements of each sequence, then
    a mean over the batch, so the magnitude is independent of sequence
    length and batch size.  Differentiable when called with torch tensors;
    returns a float for numpy input.
    """
    if not (0.0 <= threshold < 1.0):
        raise ConfigError(f"threshold must be in [0, 1), got {threshold}")
    if isinstance(pred, torch.Tensor) or isinstance(target, torch.Tensor):
        if pred.shape != target.shape:
            raise ShapeError(f"pred {tuple(pred.shape)} and target {tuple(target.shape)} differ")
        p = pred if pred.ndim == 3 else pred.unsqueeze(0)
        g = target if target.ndim == 3 else target.unsqueeze(0)
        return torch.mean((_svd_filter_torch(p, threshold) - _svd_filter_torch(g, threshold)) ** 2)
    p, _, _ = _as_batch(pred)
    g, _, _ = _as_batch(target)
    if p.shape != g.shape:
        raise ShapeError(f"pred {p.shape} and target {g.shape} differ")
    total = 0.0
    for i in range(p.shape[0]):
        diff = svd_filter(p[i], threshold) - svd_filter(g[i], threshold)
        total += float(np.mean(diff**2))
    return total / p.shape[0]


@dataclass(frozen=True)
class DiffusionTrainConfig:
    batch_size: int = 50
    learning_rate: float = 1e-3
    max_epochs: int = 100
    svd_threshold: float = 0.1
    patience: int = 20
    base_seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not (0.0 <= self.svd_threshold < 1.0):
            raise ConfigError("svd_threshold must be in [0, 1)")


@dataclass
class TrainingHistory:
    """Per-epoch loss curve; rows() yields (epoch, train, val) for CSV dumps."""

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1

    def rows(self):
        for i, (tr, va) in enumerate(zip(self.train_loss, self.val_loss)):
            yield i, tr, va


def _stack_samples(seqs) -> np.ndarray:
    return np.stack([s.samples for s in seqs])


def train_denoiser(dataset, cfg: DiffusionTrainConfig, sched: NoiseSchedule):
    """Noise-prediction training loop.

    Per step: draw a batch of clean sequences, a uniform step t in [1, T]
    and unit Gaussian noise per sequence, form x_t in closed form, then
    take an ADAM step on the SVD-filtered MSE between predicted and true
    noise.  Stops on a validation plateau (patience) or max_epochs and
    returns (best network, history).  ``dataset`` must already be
    normalized per the pipeline module's conventions.
    """
    train_x = torch.from_numpy(_stack_samples(dataset.train))
    val_x = torch.from_numpy(_stack_samples(dataset.val)) if dataset.val else train_x
    n_train = train_x.shape[0]

    net = DenoiserNetwork(seed=seeding.derive_int(cfg.base_seed, seeding.DENOISER_INIT))
    opt = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)
    shuffle_rng = seeding.derive_rng(cfg.base_seed, seeding.DENOISER_SHUFFLE)
    draw_rng = seeding.derive_rng(cfg.base_seed, seeding.DIFFUSION_DRAWS)
    val_rng = seeding.derive_rng(cfg.base_seed, seeding.DIFFUSION_DRAWS, 1)

    # Fixed validation draws so the metric is comparable across epochs.
    t_val = val_rng.integers(1, sched.T + 1, size=val_x.shape[0])
    eps_val = torch.from_numpy(val_rng.standard_normal(tuple(val_x.shape)))
    abar = torch.from_numpy(sched.alpha_cumprod.copy())

    def noised(x0, t_steps, eps):
        a = abar[torch.from_numpy(np.asarray(t_steps)) - 1].reshape(-1, 1, 1)
        return torch.sqrt(a) * x0 + torch.sqrt(1.0 - a) * eps

    x_val = noised(val_x, t_val, eps_val)
    history = TrainingHistory()
    best_state, best_val = None, math.inf
    since_best = 0
    for epoch in range(cfg.max_epochs):
        net.train()
        perm = shuffle_rng.permutation(n_train)
        batch_losses = []
        for start in range(0, n_train, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            x0 = train_x[idx]
            t_steps = draw_rng.integers(1, sched.T + 1, size=len(idx))
            eps = torch.from_numpy(draw_rng.standard_normal(tuple(x0.shape)))
            opt.zero_grad()
            loss = svd_mse_loss(net(noised(x0, t_steps, eps), t_steps), eps, cfg.svd_threshold)
            if not torch.isfinite(loss):
                raise DivergenceError(f"training loss became {loss.item()} at epoch {epoch}")
            loss.backward()
            opt.step()
            batch_losses.append(loss.item())
        net.eval()
        with torch.no_grad():
            val = svd_mse_loss(net(x_val, t_val), eps_val, cfg.svd_threshold).item()
        if not math.isfinite(val):
            raise DivergenceError(f"validation loss became {val} at epoch {epoch}")
        history.train_loss.append(float(np.mean(batch_losses)))
        history.val_loss.append(val)
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


def denoise(predictor, x_noisy, t_back: int, sched: NoiseSchedule,
            rng: np.random.Generator | None = None):
    """Iterative noise removal from step T down to t_back (T - t_back steps).

    The input is treated as x_T.  Each step applies
    x_{t-1} = (x_t - (1-alpha_t)/sqrt(1-abar_t) * eps_hat) / sqrt(alpha_t)
    plus sqrt(beta_t) * z with z ~ N(0, I) when ``rng`` is given; the
    stochastic term is always suppressed on the final step.  ``predictor``
    is a DenoiserNetwork or any callable ([batch, n, 3], t) -> [batch, n, 3].
    """
    if not (0 <= t_back <= sched.T):
        raise ConfigError(f"t_back {t_back} outside [0, {sched.T}]")
    batch, single, flat = _as_batch(x_noisy)
    x = batch.copy()

    if isinstance(predictor, DenoiserNetwork):
        net = predictor
        net.eval()

        def predict(arr, t):
            with torch.inference_mode():
                return net(torch.from_numpy(arr), t).numpy()
    else:
        predict = predictor

    for t in range(sched.T, t_back, -1):
        eps_hat = np.asarray(predict(x, t), dtype=np.float64)
        if eps_hat.shape != x.shape:
            raise ShapeError(f"predictor returned {eps_hat.shape}, expected {x.shape}")
        alpha = sched.alpha[t - 1]
        abar = sched.alpha_cumprod[t - 1]
        x = (x - (1.0 - alpha) / np.sqrt(1.0 - abar) * eps_hat) / np.sqrt(alpha)
        if rng is not None and t > t_back + 1:
            x = x + np.sqrt(sched.beta[t - 1]) * rng.standard_normal(x.shape)
    if single:
        x = x[0]
        return x.reshape(-1) if flat else x
    return x
