"""Layers of the numpy neural-network engine.

Activations are ``float32``/``float64`` arrays in NCHW layout (or ``(B, F)``
after :class:`Flatten`). Each layer caches what its backward pass needs during
``forward``; ``backward`` returns the input gradient and *accumulates* into
``self.grads``.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    pass


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.training = True
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        """Per-sample output shape (no batch axis) for a per-sample input shape."""
        return shape

    def config(self) -> tuple[int, ...]:
        """Integer configuration used by the checkpoint format."""
        return ()

    def zero_grad(self) -> None:
        for name, g in self.grads.items():
            g[...] = 0

    def astype(self, dtype) -> "Layer":
        for store in (self.params, self.buffers):
            for name in store:
                store[name] = store[name].astype(dtype)
        self.grads = {name: np.zeros_like(v) for name, v in self.params.items()}
        return self

    def _need_cache(self):
        if self._cache is None:
            raise RuntimeError(f"{self.kind}: backward called before forward")
        return self._cache

    def __repr__(self):
        cfg = ", ".join(str(c) for c in self.config())
        return f"{type(self).__name__}({cfg})"


def _init_weight(rng, shape, std=0.02):
    return (std * rng.standard_normal(shape)).astype(np.float32)


class Conv2d(Layer):
    kind = "conv2d"

    def __init__(self, in_ch, out_ch, kernel, stride=1, pad=0, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        kh, kw = (kernel, kernel) if np.isscalar(kernel) else kernel
        self.in_ch, self.out_ch, self.kh, self.kw = in_ch, out_ch, kh, kw
        self.stride, self.pad = stride, pad
        self.params["weight"] = _init_weight(rng, (out_ch, in_ch, kh, kw))
        self.params["bias"] = np.zeros(out_ch, dtype=np.float32)
        self.astype(np.float32)

    def config(self):
        return (self.in_ch, self.out_ch, self.kh, self.kw, self.stride, self.pad)

    def output_shape(self, shape):
        c, h, w = shape
        if c != self.in_ch:
            raise ShapeError(f"conv2d expects {self.in_ch} input channels, got input shape {shape}")
        oh = (h + 2 * self.pad - self.kh) // self.stride + 1
        ow = (w + 2 * self.pad - self.kw) // self.stride + 1
        if oh < 1 or ow < 1:
            raise ShapeError(f"conv2d kernel {self.kh}x{self.kw} does not fit input shape {shape}")
        return (self.out_ch, oh, ow)

    def _weight_matrix(self):
        # rows ordered (kh, kw, in_ch) to match the NHWC patch layout
        return self.params["weight"].transpose(2, 3, 1, 0).reshape(-1, self.out_ch)

    def forward(self, x):
        if x.ndim != 4:
            raise ShapeError(f"conv2d expects (B, C, H, W), got {x.shape}")
        _, oh, ow = self.output_shape(x.shape[1:])
        b = x.shape[0]
        p, s, kh, kw = self.pad, self.stride, self.kh, self.kw
        xp = np.zeros((b, x.shape[2] + 2 * p, x.shape[3] + 2 * p, self.in_ch), dtype=x.dtype)
        xp[:, p : p + x.shape[2], p : p + x.shape[3], :] = x.transpose(0, 2, 3, 1)
        if s == 1 and self.out_ch < self.in_ch:
            # contract channels first, then shift-add: cheaper when out_ch is small
            z = (xp.reshape(-1, self.in_ch) @ self._weight_matrix().reshape(kh * kw, self.in_ch, self.out_ch)
                 .transpose(1, 0, 2).reshape(self.in_ch, -1)).reshape(b, xp.shape[1], xp.shape[2], kh, kw, self.out_ch)
            out = np.zeros((b, oh, ow, self.out_ch), dtype=x.dtype)
            for i in range(kh):
                for j in range(kw):
                    out += z[:, i : i + oh, j : j + ow, i, j, :]
            out += self.params["bias"]
            self._cache = ("shift", xp, x.shape, oh, ow)
        else:
            cols = np.empty((b, oh, ow, kh, kw, self.in_ch), dtype=x.dtype)
            for i in range(kh):
                for j in range(kw):
                    cols[:, :, :, i, j, :] = xp[:, i : i + s * oh : s, j : j + s * ow : s, :]
            cols = cols.reshape(b * oh * ow, -1)
            out = (cols @ self._weight_matrix() + self.params["bias"]).reshape(b, oh, ow, self.out_ch)
            self._cache = ("im2col", cols, xp.shape, x.shape, oh, ow)
        return out.transpose(0, 3, 1, 2)

    def backward(self, grad):
        cache = self._need_cache()
        kh, kw, s, p = self.kh, self.kw, self.stride, self.pad
        g = grad.transpose(0, 2, 3, 1)  # (B, OH, OW, O)
        self.grads["bias"] += g.sum(axis=(0, 1, 2))
        wmat = self._weight_matrix()
        if cache[0] == "shift":
            _, xp, x_shape, oh, ow = cache
            b, hp, wp, _ = xp.shape
            dz = np.zeros((b, hp, wp, kh, kw, self.out_ch), dtype=grad.dtype)
            for i in range(kh):
                for j in range(kw):
                    dz[:, i : i + oh, j : j + ow, i, j, :] = g
            dz = dz.reshape(b * hp * wp, kh * kw, self.out_ch)
            xflat = xp.reshape(-1, self.in_ch)
            # dW[(i,j), c, o] = sum_pixels x[pixel, c] * dz[pixel, (i,j), o]
            dw = (xflat.T @ dz.reshape(b * hp * wp, -1)).reshape(self.in_ch, kh * kw, self.out_ch)
            self.grads["weight"] += dw.transpose(2, 0, 1).reshape(self.out_ch, self.in_ch, kh, kw)
            w3 = wmat.reshape(kh * kw, self.in_ch, self.out_ch).transpose(0, 2, 1).reshape(-1, self.in_ch)
            dxp = (dz.reshape(b * hp * wp, -1) @ w3).reshape(b, hp, wp, self.in_ch)
        else:
            _, cols, xp_shape, x_shape, oh, ow = cache
            b = x_shape[0]
            g2 = g.reshape(-1, self.out_ch)
            dw = (cols.T @ g2).reshape(kh, kw, self.in_ch, self.out_ch)
            self.grads["weight"] += dw.transpose(3, 2, 0, 1)
            dcols = (g2 @ wmat.T).reshape(b, oh, ow, kh, kw, self.in_ch)
            dxp = np.zeros(xp_shape, dtype=grad.dtype)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, i : i + s * oh : s, j : j + s * ow : s, :] += dcols[:, :, :, i, j, :]
        return dxp[:, p : p + x_shape[2], p : p + x_shape[3], :].transpose(0, 3, 1, 2)


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features, out_features, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_features, self.out_features = in_features, out_features
        self.params["weight"] = _init_weight(rng, (out_features, in_features))
        self.params["bias"] = np.zeros(out_features, dtype=np.float32)
        self.astype(np.float32)

    def config(self):
        return (self.in_features, self.out_features)

    def output_shape(self, shape):
        if shape != (self.in_features,):
            raise ShapeError(f"dense expects ({self.in_features},) per sample, got {shape}")
        return (self.out_features,)

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"dense expects (B, {self.in_features}), got {x.shape}")
        self._cache = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, grad):
        x = self._need_cache()
        self.grads["weight"] += grad.T @ x
        self.grads["bias"] += grad.sum(axis=0)
        return grad @ self.params["weight"]


class BatchNorm2d(Layer):
    """Per-channel batch normalization; running statistics are used in eval mode."""

    kind = "batchnorm2d"

    def __init__(self, channels, eps=1e-5, momentum=0.1):
        super().__init__()
        self.channels, self.eps, self.momentum = channels, eps, momentum
        self.params["gamma"] = np.ones(channels, dtype=np.float32)
        self.params["beta"] = np.zeros(channels, dtype=np.float32)
        self.buffers["running_mean"] = np.zeros(channels, dtype=np.float32)
        self.buffers["running_var"] = np.ones(channels, dtype=np.float32)
        self.astype(np.float32)

    def config(self):
        return (self.channels,)

    def output_shape(self, shape):
        if shape[0] != self.channels:
            raise ShapeError(f"batchnorm2d expects {self.channels} channels, got input shape {shape}")
        return shape

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeError(f"batchnorm2d expects (B, {self.channels}, H, W), got {x.shape}")
        gamma = self.params["gamma"][None, :, None, None]
        beta = self.params["beta"][None, :, None, None]
        if not self.training:
            mean = self.buffers["running_mean"][None, :, None, None]
            var = self.buffers["running_var"][None, :, None, None]
            xhat = (x - mean) / np.sqrt(var + self.eps)
            self._cache = ("eval", np.sqrt(var + self.eps))
            return gamma * xhat + beta
        mean = x.mean(axis=(0, 2, 3), keepdims=True)
        var = x.var(axis=(0, 2, 3), keepdims=True)
        std = np.sqrt(var + self.eps)
        xhat = (x - mean) / std
        n = x.size // self.channels
        unbiased = var.reshape(-1) * (n / max(n - 1, 1))
        mom = self.momentum
        self.buffers["running_mean"] = ((1 - mom) * self.buffers["running_mean"] + mom * mean.reshape(-1)).astype(x.dtype)
        self.buffers["running_var"] = ((1 - mom) * self.buffers["running_var"] + mom * unbiased).astype(x.dtype)
        self._cache = ("train", xhat, std)
        return gamma * xhat + beta

    def backward(self, grad):
        cache = self._need_cache()
        gamma = self.params["gamma"][None, :, None, None]
        if cache[0] == "eval":
            return grad * gamma / cache[1]
        _, xhat, std = cache
        self.grads["gamma"] += (grad * xhat).sum(axis=(0, 2, 3))
        self.grads["beta"] += grad.sum(axis=(0, 2, 3))
        dxhat = grad * gamma
        return (
            dxhat - dxhat.mean(axis=(0, 2, 3), keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
        ) / std


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        self._cache = x > 0
        return np.where(self._cache, x, 0).astype(x.dtype)

    def backward(self, grad):
        return grad * self._need_cache()


class LeakyReLU(Layer):
    kind = "leaky_relu"

    def __init__(self, slope=0.2):
        super().__init__()
        self.slope = slope

    def config(self):
        return (int(round(self.slope * 1e6)),)

    def forward(self, x):
        self._cache = x > 0
        return np.where(self._cache, x, self.slope * x).astype(x.dtype)

    def backward(self, grad):
        return np.where(self._need_cache(), grad, self.slope * grad).astype(grad.dtype)


class Tanh(Layer):
    kind = "tanh"

    def forward(self, x):
        self._cache = np.tanh(x)
        return self._cache

    def backward(self, grad):
        y = self._need_cache()
        return grad * (1 - y * y)


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x):
        self._cache = 0.5 * (1 + np.tanh(0.5 * x))
        return self._cache

    def backward(self, grad):
        y = self._need_cache()
        return grad * y * (1 - y)


class MaxPool2d(Layer):
    """Non-overlapping ``size x size`` max pooling; trailing rows/cols are dropped.

    Gradient goes to the first maximum of each window in row-major order.
    """

    kind = "maxpool2d"

    def __init__(self, size=2):
        super().__init__()
        self.size = size

    def config(self):
        return (self.size,)

    def output_shape(self, shape):
        c, h, w = shape
        if h < self.size or w < self.size:
            raise ShapeError(f"maxpool2d window {self.size} larger than input shape {shape}")
        return (c, h // self.size, w // self.size)

    def forward(self, x):
        if x.ndim != 4:
            raise ShapeError(f"maxpool2d expects (B, C, H, W), got {x.shape}")
        b, c, h, w = x.shape
        k = self.size
        oh, ow = h // k, w // k
        win = x[:, :, : oh * k, : ow * k].reshape(b, c, oh, k, ow, k).transpose(0, 1, 2, 4, 3, 5)
        win = win.reshape(b, c, oh, ow, k * k)
        idx = win.argmax(axis=-1)
        self._cache = (x.shape, idx)
        return np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        shape, idx = self._need_cache()
        b, c, h, w = shape
        k = self.size
        oh, ow = idx.shape[2:]
        win = np.zeros((b, c, oh, ow, k * k), dtype=grad.dtype)
        np.put_along_axis(win, idx[..., None], grad[..., None], axis=-1)
        dx = np.zeros(shape, dtype=grad.dtype)
        dx[:, :, : oh * k, : ow * k] = (
            win.reshape(b, c, oh, ow, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, oh * k, ow * k)
        )
        return dx


class Dropout(Layer):
    """Inverted dropout: kept units are scaled by ``1/(1 - rate)`` in train mode."""

    kind = "dropout"

    def __init__(self, rate=0.5, rng=None):
        super().__init__()
        if not 0 <= rate < 1:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def config(self):
        return (int(round(self.rate * 1e6)),)

    def forward(self, x):
        if not self.training or self.rate == 0:
            self._cache = 1.0
            return x
        keep = self.rng.random(x.shape) >= self.rate
        self._cache = keep / (1 - self.rate)
        return (x * self._cache).astype(x.dtype)

    def backward(self, grad):
        return (grad * self._need_cache()).astype(grad.dtype)


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._need_cache())


KINDS = {
    cls.kind: cls
    for cls in (Conv2d, BatchNorm2d, Dense, ReLU, LeakyReLU, Tanh, Sigmoid, MaxPool2d, Dropout, Flatten)
}
