"""Delay-Doppler 2D correlation, peak picking and heatmap export."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import FrameParams, check_grid

SOURCES = ("clean", "corrupted", "denoised")


@dataclass(frozen=True)
class CorrelationMap:
    """Correlation values ``V[k, l]`` (Doppler rows, delay columns)."""

    values: np.ndarray
    source: str = "clean"

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source tag {self.source!r}, expected one of {SOURCES}")
        if self.values.ndim != 2 or not np.all(np.isfinite(self.values)):
            raise ValueError("correlation map must be a finite 2D array")

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)


def phase_offset(k: int, l: int, p: FrameParams) -> complex:
    """Wrap-around phase correction: 1 for ``l >= 0`` else ``exp(-j2pi k/N)``."""
    if l >= 0:
        return 1.0 + 0j
    return complex(np.exp(-2j * np.pi * k / p.N))


def correlate_direct(b, a, p: FrameParams) -> np.ndarray:
    """Direct vectorized evaluation of the accumulated correlation, O((NM)^2).

    ``V[k,l] = sum_{n,m} conj(B[n,m]) A[(n-k)%N, (m-l)%M] gamma[n-k, m-l]
    exp(j2pi (m-l) k / NM)`` with ``gamma`` taking the pre-modulo differences.
    """
    b = check_grid(b, p, "received DD matrix")
    a = check_grid(a, p, "reference DD matrix")
    N, M = p.shape
    k = np.arange(N)[:, None, None, None]
    l = np.arange(M)[None, :, None, None]
    n = np.arange(N)[None, None, :, None]
    m = np.arange(M)[None, None, None, :]
    dn, dm = n - k, m - l
    gamma = np.where(dm >= 0, 1.0 + 0j, np.exp(-2j * np.pi * dn / N))
    phase = gamma * np.exp(2j * np.pi * dm * k / (N * M))
    terms = np.conj(b)[None, None] * a[dn % N, dm % M] * phase
    return terms.sum(axis=(2, 3))


def correlate_dd(b, a, p: FrameParams, source: str = "clean") -> CorrelationMap:
    """Accumulated DD correlation between received ``b`` and transmitted ``a``.

    Same result as :func:`correlate_direct`, computed as M FFT-based cyclic
    correlations along the Doppler axis, one per delay lag, O(M^2 N log N).
    """
    b = check_grid(b, p, "received DD matrix")
    a = check_grid(a, p, "reference DD matrix")
    N, M = p.shape
    bc = np.conj(b)
    k = np.arange(N)
    l = np.arange(M)
    slot_phase = np.exp(-2j * np.pi * k / N)[:, None]
    v = np.zeros((N, M), dtype=np.complex128)
    for lag in range(M):
        # column (l + lag) % M of conj(B), with the wrap phase where l + lag >= M
        shifted = np.roll(bc, -lag, axis=1)
        wrapped = (l + lag) >= M
        shifted = np.where(wrapped[None, :], shifted * slot_phase, shifted)
        ref = np.fft.fft(np.conj(a[:, lag]))
        corr = np.fft.ifft(np.conj(ref)[:, None] * np.fft.fft(shifted, axis=0), axis=0)
        v += corr * np.exp(2j * np.pi * lag * k / (N * M))[:, None]
    return CorrelationMap(v, source)


def _values(v) -> np.ndarray:
    return v.values if isinstance(v, CorrelationMap) else np.asarray(v)


def pick_peaks(v, count: int) -> list[tuple[int, int]]:
    """Return ``count`` strongest ``(k, l)`` cells of ``|V|``.

    Complex input is ranked by magnitude; real input is taken to be a
    magnitude map already (possibly affinely rescaled) and ranked by value.
    After each pick its cyclic 8-neighbourhood is suppressed. Equal magnitudes
    are taken in lexicographic ``(k, l)`` order. The result is sorted by
    ``(delay, doppler)`` to match canonical target order.
    """
    values = _values(v)
    mag = np.abs(values) if np.iscomplexobj(values) else np.asarray(values, dtype=float)
    N, M = mag.shape
    if not 1 <= count <= N * M:
        raise ValueError(f"peak count must be in [1, {N * M}], got {count}")
    # stable sort on -mag keeps row-major (lexicographic) order among ties
    order = np.argsort(-mag.reshape(-1), kind="stable")
    blocked = np.zeros((N, M), dtype=bool)
    picks: list[tuple[int, int]] = []
    for flat in order:
        kk, ll = divmod(int(flat), M)
        if blocked[kk, ll]:
            continue
        picks.append((kk, ll))
        if len(picks) == count:
            break
        for dk in (-1, 0, 1):
            for dl in (-1, 0, 1):
                blocked[(kk + dk) % N, (ll + dl) % M] = True
    if len(picks) < count:
        # suppression exhausted the grid; fill with the best remaining cells
        taken = set(picks)
        for flat in order:
            cell = divmod(int(flat), M)
            if cell not in taken:
                picks.append(cell)
                taken.add(cell)
            if len(picks) == count:
                break
    return sorted(picks, key=lambda kl: (kl[1], kl[0]))


def write_heatmap_csv(v, path) -> None:
    """Write ``|V|`` as CSV, one row per Doppler index, one column per delay index."""
    np.savetxt(path, np.abs(_values(v)), delimiter=",", fmt="%.9g")


def write_pgm(v, path) -> None:
    """Write ``|V|`` as an 8-bit ASCII PGM (P2) with per-map min-max scaling."""
    mag = np.abs(_values(v)).astype(float)
    lo, hi = mag.min(), mag.max()
    scaled = np.zeros(mag.shape, dtype=int) if hi == lo else np.rint(255 * (mag - lo) / (hi - lo)).astype(int)
    rows, cols = scaled.shape
    lines = ["P2", f"{cols} {rows}", "255"]
    lines += [" ".join(str(x) for x in row) for row in scaled]
    Path(path).write_text("\n".join(lines) + "\n")


def read_pgm(path) -> np.ndarray:
    """Parse an ASCII PGM (P2) file into an integer array."""
    tokens = []
    for line in Path(path).read_text().splitlines():
        tokens += line.split("#", 1)[0].split()
    if not tokens or tokens[0] != "P2":
        raise ValueError(f"{path}: not a P2 PGM file")
    cols, rows, maxval = (int(t) for t in tokens[1:4])
    pixels = np.array([int(t) for t in tokens[4:]], dtype=int)
    if pixels.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} pixels, found {pixels.size}")
    if pixels.min(initial=0) < 0 or pixels.max(initial=0) > maxval:
        raise ValueError(f"{path}: pixel outside [0, {maxval}]")
    return pixels.reshape(rows, cols)
