"""OTFS frame geometry and the DD <-> TF symplectic transforms.

Delay-Doppler arrays are indexed ``[k, l]``: axis 0 is the Doppler bin
(length N), axis 1 the delay bin (length M). Time-frequency arrays are
indexed ``[n, m]``: axis 0 the time slot, axis 1 the subcarrier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Speed of light used for every index <-> physical conversion (m/s).
SPEED_OF_LIGHT = 3.0e8


@dataclass(frozen=True)
class FrameParams:
    """Grid size and RF numerology of one OTFS frame.

    Parameters
    ----------
    M : int
        Number of subcarriers (delay bins).
    N : int
        Number of time slots (Doppler bins).
    delta_f : float
        Subcarrier spacing in Hz.
    f_c : float
        Carrier frequency in Hz.
    """

    M: int = 28
    N: int = 28
    delta_f: float = 150e3
    f_c: float = 60e9

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if not self.delta_f > 0:
            raise ValueError(f"delta_f must be positive, got {self.delta_f}")
        if not self.f_c > 0:
            raise ValueError(f"f_c must be positive, got {self.f_c}")

    @property
    def shape(self) -> tuple[int, int]:
        """Shape of a DD/TF array, ``(N, M)``."""
        return (self.N, self.M)

    @property
    def T(self) -> float:
        return 1.0 / self.delta_f

    @property
    def bandwidth(self) -> float:
        return self.M * self.delta_f

    @property
    def frame_duration(self) -> float:
        return self.N * self.T

    @property
    def range_resolution(self) -> float:
        return SPEED_OF_LIGHT / (2.0 * self.bandwidth)

    @property
    def velocity_resolution(self) -> float:
        return self.bandwidth * SPEED_OF_LIGHT / (2.0 * self.M * self.N * self.f_c)

    @property
    def max_range(self) -> float:
        return SPEED_OF_LIGHT * self.T / 2.0

    @property
    def max_velocity(self) -> float:
        return SPEED_OF_LIGHT * self.delta_f / (2.0 * self.f_c)


DEFAULT_PARAMS = FrameParams(M=28, N=28, delta_f=150e3, f_c=60e9)


def check_grid(a, p: FrameParams, what: str = "matrix") -> np.ndarray:
    """Return ``a`` as a complex array after validating it against ``p``."""
    a = np.asarray(a)
    if a.shape != p.shape:
        raise ValueError(f"{what} has shape {a.shape}, expected (N, M) = {p.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{what} contains non-finite entries")
    return a.astype(np.complex128, copy=False)


def isfft(dd, p: FrameParams) -> np.ndarray:
    """Inverse symplectic FFT, DD ``[k, l]`` -> TF ``[n, m]``.

    ``A_TF[n, m] = 1/sqrt(NM) sum_k sum_l A_DD[k, l] exp(j2pi(nk/N - ml/M))``,
    i.e. an inverse DFT over Doppler and a forward DFT over delay.
    """
    dd = check_grid(dd, p, "DD matrix")
    return np.fft.fft(np.fft.ifft(dd, axis=0, norm="ortho"), axis=1, norm="ortho")


def sfft(tf, p: FrameParams) -> np.ndarray:
    """Symplectic FFT, TF ``[n, m]`` -> DD ``[k, l]``; inverse of :func:`isfft`."""
    tf = check_grid(tf, p, "TF matrix")
    return np.fft.ifft(np.fft.fft(tf, axis=0, norm="ortho"), axis=1, norm="ortho")


def index_to_physical(l, k, p: FrameParams):
    """Convert (possibly fractional) delay/Doppler indices to (range m, velocity m/s).

    Uses ``tau = l / (M delta_f)``, ``nu = k / (N T)`` and the two-way relations
    ``tau = 2R/c``, ``nu = 2 f_c V / c``.
    """
    tau = np.asarray(l, dtype=float) / p.bandwidth
    nu = np.asarray(k, dtype=float) / p.frame_duration
    rng = SPEED_OF_LIGHT * tau / 2.0
    vel = SPEED_OF_LIGHT * nu / (2.0 * p.f_c)
    if rng.ndim == 0:
        return float(rng), float(vel)
    return rng, vel
