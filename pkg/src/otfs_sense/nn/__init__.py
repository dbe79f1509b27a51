"""Small numpy neural-network engine: layers, losses, Adam, gradient checking."""

from .checkpoint import CheckpointError, load, save
from .gradcheck import grad_check
from .layers import (
    BatchNorm2d,
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    LeakyReLU,
    MaxPool2d,
    ReLU,
    ShapeError,
    Sigmoid,
    Tanh,
)
from .losses import bce_loss, mse_loss
from .network import Sequential
from .optim import Adam

__all__ = [
    "Adam", "BatchNorm2d", "CheckpointError", "Conv2d", "Dense", "Dropout", "Flatten",
    "LeakyReLU", "MaxPool2d", "ReLU", "Sequential", "ShapeError", "Sigmoid", "Tanh",
    "bce_loss", "grad_check", "load", "mse_loss", "save",
]
