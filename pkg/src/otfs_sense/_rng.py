"""Seeded random streams.

Every random draw in the package goes through :func:`stream`, which maps an
integer seed plus a stream label onto an independent PCG64 generator via
``numpy.random.SeedSequence``. Gaussian variates use the Box-Muller transform
on the generator's uniform doubles so that the sample path only depends on
PCG64's documented uniform output.
"""

from __future__ import annotations

import numpy as np

# stream labels; fixed integers keep derived seeds stable across releases
PROBE = 1
TARGETS = 2
NOISE = 3
NOISE_CLEAN = 4
SNR_DRAW = 5
INIT = 6
SHUFFLE = 7
DROPOUT = 8


def stream(seed: int, *labels: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *labels])))


def box_muller(rng: np.random.Generator, size) -> np.ndarray:
    """Standard normal variates of the given shape (Box-Muller)."""
    count = int(np.prod(size))
    pairs = (count + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # (0, 1], keeps log finite
    u2 = rng.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([radius * np.cos(2 * np.pi * u2), radius * np.sin(2 * np.pi * u2)])
    return z[:count].reshape(size)


def complex_gaussian(rng: np.random.Generator, size, variance: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian, ``variance`` split evenly over re/im."""
    count = int(np.prod(size))
    z = box_muller(rng, (2 * count,))
    scale = np.sqrt(variance / 2.0)
    return (scale * (z[:count] + 1j * z[count:])).reshape(size)
