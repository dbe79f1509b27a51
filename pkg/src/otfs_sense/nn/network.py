"""Sequential container."""

from __future__ import annotations

import numpy as np

from .layers import Layer


class Sequential:
    def __init__(self, layers: list[Layer], input_shape: tuple[int, ...] | None = None):
        self.layers = list(layers)
        self.input_shape = input_shape
        if input_shape is not None:
            self.shape_trace()

    def shape_trace(self, input_shape=None) -> list[tuple[int, ...]]:
        """Per-sample shapes entering and leaving every layer; raises on mismatch."""
        shape = tuple(input_shape or self.input_shape)
        trace = [shape]
        for layer in self.layers:
            shape = layer.output_shape(shape)
            trace.append(shape)
        return trace

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    __call__ = forward

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def train(self, mode: bool = True) -> "Sequential":
        for layer in self.layers:
            layer.training = mode
        return self

    def eval(self) -> "Sequential":
        return self.train(False)

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.zero_grad()

    def parameters(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """``(param, grad)`` pairs in a fixed order."""
        return [(layer.params[n], layer.grads[n]) for layer in self.layers for n in layer.params]

    def num_parameters(self) -> int:
        return sum(p.size for p, _ in self.parameters())

    def astype(self, dtype) -> "Sequential":
        for layer in self.layers:
            layer.astype(dtype)
        return self

    @property
    def dtype(self):
        for p, _ in self.parameters():
            return p.dtype
        return np.float32

    def __repr__(self):
        inner = ",\n  ".join(repr(layer) for layer in self.layers)
        return f"Sequential(\n  {inner}\n)"
