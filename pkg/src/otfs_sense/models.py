"""GAN denoiser, discriminator and delay/Doppler regressor, with training loops."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .nn import (
    Adam,
    BatchNorm2d,
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    LeakyReLU,
    MaxPool2d,
    ReLU,
    Sequential,
    Sigmoid,
    Tanh,
    bce_loss,
    mse_loss,
)

log = logging.getLogger(__name__)

GENERATOR_TRACE = [(1, 28, 28), (64, 28, 28), (128, 28, 28), (1, 28, 28)]
DISCRIMINATOR_TRACE = [(1, 28, 28), (64, 14, 14), (128, 7, 7), (256, 4, 4), (1,)]
PREDICTOR_TRACE = [(1, 28, 28), (32, 14, 14), (64, 7, 7), (128, 3, 3), (512,), (256,)]


def _conv_outputs(net: Sequential, kinds=("conv2d", "maxpool2d")) -> list[tuple[int, ...]]:
    trace = net.shape_trace()
    return [trace[0]] + [trace[i + 1] for i, layer in enumerate(net.layers) if layer.kind in kinds]


def build_generator(seed: int = 0, widths=(64, 128), size: int = 28) -> Sequential:
    rng = _rng.stream(seed, _rng.INIT, 1)
    w1, w2 = widths
    net = Sequential(
        [
            Conv2d(1, w1, 3, 1, 1, rng), BatchNorm2d(w1), ReLU(),
            Conv2d(w1, w2, 3, 1, 1, rng), BatchNorm2d(w2), ReLU(),
            Conv2d(w2, 1, 3, 1, 1, rng), Tanh(),
        ],
        input_shape=(1, size, size),
    )
    if widths == (64, 128) and size == 28:
        assert _conv_outputs(net, ("conv2d",)) == GENERATOR_TRACE
    return net


def build_discriminator(seed: int = 0, widths=(64, 128, 256), size: int = 28) -> Sequential:
    rng = _rng.stream(seed, _rng.INIT, 2)
    w1, w2, w3 = widths
    net = Sequential(
        [
            Conv2d(1, w1, 4, 2, 1, rng), LeakyReLU(0.2),
            Conv2d(w1, w2, 4, 2, 1, rng), BatchNorm2d(w2), LeakyReLU(0.2),
            Conv2d(w2, w3, 3, 2, 1, rng), BatchNorm2d(w3), LeakyReLU(0.2),
            Flatten(),
        ],
        input_shape=(1, size, size),
    )
    flat = net.shape_trace()[-1][0]
    net.layers += [Dense(flat, 1, rng), Sigmoid()]
    net.shape_trace()
    if widths == (64, 128, 256) and size == 28:
        assert _conv_outputs(net, ("conv2d", "dense")) == DISCRIMINATOR_TRACE
    return net


def build_predictor(
    n_targets: int, seed: int = 0, widths=(32, 64, 128), hidden=(512, 256), dropout=0.3, size: int = 28
) -> Sequential:
    """CNN regressor with ``2 * n_targets`` linear outputs (scaled indices)."""
    if n_targets < 1:
        raise ValueError(f"n_targets must be >= 1, got {n_targets}")
    rng = _rng.stream(seed, _rng.INIT, 3)
    drop_rng = _rng.stream(seed, _rng.DROPOUT)
    layers = []
    in_ch = 1
    for w in widths:
        layers += [Conv2d(in_ch, w, 3, 1, 1, rng), BatchNorm2d(w), ReLU(), MaxPool2d(2), Dropout(dropout, drop_rng)]
        in_ch = w
    layers.append(Flatten())
    net = Sequential(layers, input_shape=(1, size, size))
    flat = net.shape_trace()[-1][0]
    h1, h2 = hidden
    net.layers += [Dense(flat, h1, rng), ReLU(), Dense(h1, h2, rng), ReLU(), Dense(h2, 2 * n_targets, rng)]
    net.shape_trace()
    if widths == (32, 64, 128) and hidden == (512, 256) and size == 28:
        assert _conv_outputs(net, ("maxpool2d", "dense"))[:-1] == PREDICTOR_TRACE
    return net


def _as_batch(maps) -> np.ndarray:
    x = np.asarray(maps, dtype=np.float32)
    if x.ndim == 2:
        x = x[None, None]
    elif x.ndim == 3:
        x = x[:, None]
    if x.ndim != 4 or x.shape[1] != 1:
        raise ValueError(f"expected maps shaped (H, W), (S, H, W) or (S, 1, H, W), got {np.shape(maps)}")
    return x


def _batches(n: int, batch_size: int, rng: np.random.Generator | None):
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _infer(net: Sequential, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    net.eval()
    out = [net.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
    return np.concatenate(out)


@dataclass
class GanTrainConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 2e-4
    recon_weight: float = 100.0
    adversarial: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.recon_weight < 0:
            raise ValueError(f"reconstruction weight must be >= 0, got {self.recon_weight}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


@dataclass
class GanState:
    """Everything needed to continue GAN training exactly where it stopped."""

    generator: Sequential
    discriminator: Sequential
    opt_g: Adam
    opt_d: Adam
    epoch: int = 0
    history: list[dict] = field(default_factory=list)

    @classmethod
    def fresh(cls, cfg: GanTrainConfig, size: int = 28) -> "GanState":
        g = build_generator(cfg.seed, size=size)
        d = build_discriminator(cfg.seed, size=size)
        return cls(g, d, Adam(g.parameters(), cfg.lr, beta1=0.9), Adam(d.parameters(), cfg.lr, beta1=0.9))


def discriminator_step(state: GanState, clean: np.ndarray, fake: np.ndarray) -> float:
    """One discriminator update on (clean -> 1, generated -> 0); returns the BCE loss."""
    d = state.discriminator
    d.train()
    d.zero_grad()
    loss_real, grad = bce_loss(d.forward(clean), 1.0)
    d.backward(grad)
    loss_fake, grad = bce_loss(d.forward(fake), 0.0)
    d.backward(grad)
    state.opt_d.step()
    return 0.5 * (loss_real + loss_fake)


def train_gan(corrupted, clean, cfg: GanTrainConfig, state: GanState | None = None, on_epoch=None):
    """Train the denoising GAN on paired corrupted/clean maps.

    Each batch runs a discriminator step on clean (label 1) versus generated
    (label 0) maps, then a generator step minimizing
    ``BCE(D(G(x)), 1) + recon_weight * MSE(G(x), clean)``. With
    ``cfg.adversarial = False`` the generator step uses the reconstruction
    term only and the discriminator is left untouched.

    Pass a previous ``state`` to resume; ``on_epoch(state)`` is called after
    every epoch (checkpointing hook). Returns the final :class:`GanState`,
    whose ``history`` holds per-epoch ``d_loss``, ``g_adv_loss``, ``g_rec_loss``.
    """
    x_all = _as_batch(corrupted)
    y_all = _as_batch(clean)
    if len(x_all) != len(y_all):
        raise ValueError(f"unpaired streams: {len(x_all)} corrupted vs {len(y_all)} clean maps")
    state = state or GanState.fresh(cfg, size=x_all.shape[-1])
    g, d = state.generator, state.discriminator
    for epoch in range(state.epoch, cfg.epochs):
        rng = _rng.stream(cfg.seed, _rng.SHUFFLE, epoch)
        d_losses, adv_losses, rec_losses, weights = [], [], [], []
        for idx in _batches(len(x_all), cfg.batch_size, rng):
            x, y = x_all[idx], y_all[idx]
            g.train()
            g.zero_grad()
            fake = g.forward(x)
            if cfg.adversarial:
                d_losses.append(discriminator_step(state, y, fake))
                d.train()
                d_out = d.forward(fake)
                adv, grad_d = bce_loss(d_out, 1.0)
                grad_fake = d.backward(grad_d)
                d.zero_grad()
            else:
                adv, grad_fake = 0.0, np.zeros_like(fake)
                d_losses.append(0.0)
            rec, grad_rec = mse_loss(fake, y)
            g.backward(grad_fake + np.float32(cfg.recon_weight) * grad_rec)
            state.opt_g.step()
            adv_losses.append(adv)
            rec_losses.append(rec)
            weights.append(len(idx))
        state.epoch = epoch + 1
        row = {
            "epoch": state.epoch,
            "d_loss": float(np.average(d_losses, weights=weights)),
            "g_adv_loss": float(np.average(adv_losses, weights=weights)),
            "g_rec_loss": float(np.average(rec_losses, weights=weights)),
        }
        state.history.append(row)
        log.info("gan epoch %d: %s", state.epoch, row)
        if on_epoch is not None:
            on_epoch(state)
    return state


def denoise(generator: Sequential, maps) -> np.ndarray:
    """Inference-mode generator pass; output has the input's shape, values in [-1, 1]."""
    x = _as_batch(maps)
    trace = generator.shape_trace(x.shape[1:])
    if trace[-1] != x.shape[1:]:
        raise ValueError(f"generator maps {x.shape[1:]} to {trace[-1]}")
    out = _infer(generator, x)
    return out.reshape(np.shape(maps)) if np.ndim(maps) in (2, 3) else out


def label_scale(p_shape: tuple[int, int], n_targets: int) -> np.ndarray:
    """Divisors mapping ``(delay, doppler, ...)`` labels onto [0, 1]."""
    n, m = p_shape
    return np.tile([max(m - 1, 1), max(n - 1, 1)], n_targets).astype(np.float32)


@dataclass
class PredictorTrainConfig:
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-3
    val_fraction: float = 0.1
    dropout: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if not 0 <= self.val_fraction < 1:
            raise ValueError(f"val_fraction must be in [0, 1), got {self.val_fraction}")


@dataclass
class PredictorState:
    net: Sequential
    opt: Adam
    n_targets: int
    epoch: int = 0
    history: list[dict] = field(default_factory=list)

    @classmethod
    def fresh(cls, n_targets: int, cfg: PredictorTrainConfig, size: int = 28) -> "PredictorState":
        net = build_predictor(n_targets, cfg.seed, dropout=cfg.dropout, size=size)
        return cls(net, Adam(net.parameters(), cfg.lr), n_targets)


def split_indices(n: int, val_fraction: float, seed: int):
    order = _rng.stream(seed, _rng.SHUFFLE, 10**6).permutation(n)
    n_val = int(round(n * val_fraction))
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def train_predictor(maps, labels, cfg: PredictorTrainConfig, state: PredictorState | None = None, on_epoch=None):
    """Fit the CNN regressor to canonical ``(delay, doppler)`` index labels.

    Labels are raw grid indices shaped (S, 2P); they are scaled to [0, 1]
    internally. The history records ``train_loss``, ``val_loss`` (scaled MSE)
    and ``val_index_rmse`` (grid cells) per epoch.
    """
    x_all = _as_batch(maps)
    labels = np.asarray(labels, dtype=np.float32)
    if labels.ndim != 2 or labels.shape[1] % 2 or len(labels) != len(x_all):
        raise ValueError(f"labels must be shaped (S, 2P) with S = {len(x_all)}, got {labels.shape}")
    n_targets = labels.shape[1] // 2
    state = state or PredictorState.fresh(n_targets, cfg, size=x_all.shape[-1])
    if state.n_targets != n_targets:
        raise ValueError(f"predictor outputs {state.n_targets} targets but labels have {n_targets}")
    scale = label_scale(x_all.shape[-2:], n_targets)
    y_all = labels / scale
    train_idx, val_idx = split_indices(len(x_all), cfg.val_fraction, cfg.seed)
    net = state.net
    for epoch in range(state.epoch, cfg.epochs):
        rng = _rng.stream(cfg.seed, _rng.SHUFFLE, epoch)
        for layer in net.layers:
            if isinstance(layer, Dropout):
                layer.rng = _rng.stream(cfg.seed, _rng.DROPOUT, epoch)
        losses, weights = [], []
        for batch in _batches(len(train_idx), cfg.batch_size, rng):
            idx = train_idx[batch]
            net.train()
            net.zero_grad()
            loss, grad = mse_loss(net.forward(x_all[idx]), y_all[idx])
            net.backward(grad)
            state.opt.step()
            losses.append(loss)
            weights.append(len(idx))
        row = {"epoch": epoch + 1, "train_loss": float(np.average(losses, weights=weights))}
        if len(val_idx):
            pred = _infer(net, x_all[val_idx])
            row["val_loss"] = float(np.mean((pred.astype(np.float64) - y_all[val_idx]) ** 2))
            row["val_index_rmse"] = float(np.sqrt(np.mean(((pred - y_all[val_idx]) * scale) ** 2)))
        else:
            row["val_loss"] = row["val_index_rmse"] = float("nan")
        state.epoch = epoch + 1
        state.history.append(row)
        log.info("predictor epoch %d: %s", state.epoch, row)
        if on_epoch is not None:
            on_epoch(state)
    return state


def predict(net: Sequential, maps, grid_shape: tuple[int, int] | None = None) -> np.ndarray:
    """Fractional index predictions ``(S, 2P)`` clamped to the grid.

    ``grid_shape`` is ``(N, M)``; it defaults to the map shape.
    """
    x = _as_batch(maps)
    trace = net.shape_trace(x.shape[1:])
    n_targets = trace[-1][0] // 2
    n, m = grid_shape or x.shape[-2:]
    scale = label_scale((n, m), n_targets)
    out = _infer(net, x).astype(np.float64) * scale
    upper = np.tile([m - 1, n - 1], n_targets)
    out = np.clip(out, 0, upper)
    return out[0] if np.ndim(maps) == 2 else out
