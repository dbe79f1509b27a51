"""Finite-difference verification of backpropagation."""

from __future__ import annotations

import numpy as np

from .layers import Dropout
from .network import Sequential


def relative_error(analytic, numeric, floor=1e-6):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def grad_check(net: Sequential, x, loss_fn, label, h=1e-5, check_input=False, floor=1e-6):
    """Largest relative error between backprop and central differences.

    The network is converted to float64 in place. Dropout layers are switched
    off and every other layer runs in train mode, so batch norm uses batch
    statistics on both paths.

    Returns the maximum over every parameter entry (and the input entries when
    ``check_input``). The denominator is floored at ``floor`` so entries whose
    true gradient is exactly zero, such as a conv bias feeding batch norm, are
    judged on absolute rather than relative rounding noise.
    """
    net.astype(np.float64)
    net.train()
    for layer in net.layers:
        if isinstance(layer, Dropout):
            layer.training = False
    x = np.array(x, dtype=np.float64)

    def loss_at(inp):
        return loss_fn(net.forward(inp), label)[0]

    net.zero_grad()
    _, dloss = loss_fn(net.forward(x), label)
    dx = net.backward(dloss)
    analytic = [g.copy() for _, g in net.parameters()]

    worst = 0.0
    for (param, _), grad in zip(net.parameters(), analytic):
        flat = param.reshape(-1)
        numeric = np.empty(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_at(x)
            flat[i] = orig - h
            down = loss_at(x)
            flat[i] = orig
            numeric[i] = (up - down) / (2 * h)
        worst = max(worst, float(relative_error(grad.reshape(-1), numeric, floor).max()))

    if check_input:
        flat = x.reshape(-1)
        numeric = np.empty(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_at(x)
            flat[i] = orig - h
            down = loss_at(x)
            flat[i] = orig
            numeric[i] = (up - down) / (2 * h)
        worst = max(worst, float(relative_error(dx.reshape(-1), numeric, floor).max()))
    return worst
