"""Probe symbols and the rectangular-pulse Heisenberg / Wigner transforms.

The continuous-time transforms are sampled at rate ``B = M delta_f``, giving
M samples per symbol slot and ``M*N`` samples per frame. Sample ``q = n*M + i``
belongs to slot ``n``, intra-slot sample ``i``. With identical rectangular
pulses at both ends each slot becomes an (inverse) DFT across subcarriers.
"""

from __future__ import annotations

import numpy as np

from . import _rng
from .grid import FrameParams, check_grid

QPSK = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0)


def map_probe_symbols(p: FrameParams, seed: int) -> np.ndarray:
    """Unit-power QPSK symbols on the full N x M DD grid, drawn uniformly."""
    rng = _rng.stream(seed, _rng.PROBE)
    return QPSK[rng.integers(0, 4, size=p.shape)]


def check_frame(x, p: FrameParams) -> np.ndarray:
    x = np.asarray(x)
    if x.shape != (p.M * p.N,):
        raise ValueError(f"time frame has shape {x.shape}, expected ({p.M * p.N},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("time frame contains non-finite samples")
    return x.astype(np.complex128, copy=False)


def heisenberg_modulate(tf, p: FrameParams) -> np.ndarray:
    """TF symbols ``[n, m]`` -> time frame of length M*N.

    ``x[n*M + i] = 1/sqrt(M) sum_m A_TF[n, m] exp(j2pi m i / M)``.
    """
    tf = check_grid(tf, p, "TF matrix")
    return np.fft.ifft(tf, axis=1, norm="ortho").reshape(-1)


def wigner_demodulate(r, p: FrameParams) -> np.ndarray:
    """Time frame -> TF matrix ``[n, m]`` (matched rectangular receive pulse)."""
    r = check_frame(r, p)
    return np.fft.fft(r.reshape(p.N, p.M), axis=1, norm="ortho")
