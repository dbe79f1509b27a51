"""Point-target delay-Doppler channel and calibrated AWGN."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _rng
from .grid import FrameParams
from .modem import check_frame


@dataclass(frozen=True, order=True)
class Target:
    delay_idx: int
    doppler_idx: int
    gain: complex = 1.0 + 0j

    def check(self, p: FrameParams) -> None:
        if not (0 <= self.delay_idx < p.M and 0 <= self.doppler_idx < p.N):
            raise ValueError(
                f"target (delay={self.delay_idx}, doppler={self.doppler_idx}) outside "
                f"{p.M}x{p.N} delay-Doppler grid"
            )


class TargetSet(tuple):
    """Immutable, canonically ordered collection of targets.

    Ordering is ascending by ``(delay_idx, doppler_idx)``; index pairs must be
    distinct.
    """

    def __new__(cls, targets):
        targets = sorted(targets, key=lambda t: (t.delay_idx, t.doppler_idx))
        if not targets:
            raise ValueError("a TargetSet needs at least one target")
        cells = [(t.delay_idx, t.doppler_idx) for t in targets]
        if len(set(cells)) != len(cells):
            raise ValueError(f"duplicate target cells in {cells}")
        return super().__new__(cls, targets)

    @property
    def delays(self) -> np.ndarray:
        return np.array([t.delay_idx for t in self], dtype=int)

    @property
    def dopplers(self) -> np.ndarray:
        return np.array([t.doppler_idx for t in self], dtype=int)

    @property
    def gains(self) -> np.ndarray:
        return np.array([t.gain for t in self], dtype=complex)

    def label(self) -> np.ndarray:
        """Label vector ``(delay_1, doppler_1, ..., delay_P, doppler_P)``."""
        return np.column_stack([self.delays, self.dopplers]).reshape(-1).astype(float)


@dataclass(frozen=True)
class NoiseSpec:
    """AWGN at ``snr_db`` relative to the measured mean power of the frame.

    ``snr_db = math.inf`` means no noise.
    """

    snr_db: float
    seed: int
    stream: int = _rng.NOISE


def sample_targets(p: FrameParams, count: int, seed: int) -> TargetSet:
    """Draw ``count`` distinct grid cells uniformly with CN(0, 1/count) gains."""
    cells = p.M * p.N
    if not 1 <= count <= cells:
        raise ValueError(f"target count must be in [1, {cells}], got {count}")
    rng = _rng.stream(seed, _rng.TARGETS)
    flat = rng.choice(cells, size=count, replace=False)
    gains = _rng.complex_gaussian(rng, (count,), variance=1.0 / count)
    # flat cell index = delay * N + doppler
    return TargetSet(
        Target(int(c // p.N), int(c % p.N), complex(g)) for c, g in zip(flat, gains)
    )


def apply_channel(x, targets, p: FrameParams) -> np.ndarray:
    """Apply the integer delay-Doppler channel to a time frame.

    ``r[q] = sum_p h_p exp(j2pi k_p (q - l_p) / MN) x[(q - l_p) mod MN]``
    """
    x = check_frame(x, p)
    mn = p.M * p.N
    q = np.arange(mn)
    r = np.zeros(mn, dtype=np.complex128)
    for t in targets:
        t.check(p)
        r += t.gain * np.exp(2j * np.pi * t.doppler_idx * (q - t.delay_idx) / mn) * np.roll(x, t.delay_idx)
    return r


def noise_variance(x, snr_db: float) -> float:
    power = float(np.mean(np.abs(x) ** 2))
    if power == 0.0:
        raise ValueError("SNR is undefined for an all-zero frame")
    return power * 10.0 ** (-snr_db / 10.0)


def add_awgn(x, spec: NoiseSpec) -> np.ndarray:
    """Add complex white Gaussian noise calibrated to the frame's own power."""
    x = np.asarray(x, dtype=np.complex128)
    if math.isinf(spec.snr_db) and spec.snr_db > 0:
        return x.copy()
    var = noise_variance(x, spec.snr_db)
    rng = _rng.stream(spec.seed, spec.stream)
    return x + _rng.complex_gaussian(rng, x.shape, variance=var)
