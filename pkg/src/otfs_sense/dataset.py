"""Paired clean/corrupted correlation-map datasets and the OTFSDD1 container.

Each sample simulates one radar frame: QPSK probe -> ISFFT -> Heisenberg ->
point-target channel -> AWGN -> Wigner -> SFFT -> DD correlation with the
probe. The clean and corrupted legs share the probe and the target scene and
differ only in the noise level and noise realization.
"""

from __future__ import annotations

import csv
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _rng
from .channel import NoiseSpec, TargetSet, add_awgn, apply_channel, sample_targets
from .correlator import correlate_dd
from .grid import FrameParams, isfft, sfft
from .modem import heisenberg_modulate, map_probe_symbols, wigner_demodulate

MAGIC = b"OTFSDD1\x00"
VERSION = 1
_HEADER = struct.Struct("<8sBIIIIfffQ")
HEADER_SIZE = _HEADER.size

#: Corrupted-leg SNR range and clean-leg SNR used for training data (dB).
SNR_RANGE = (-20.0, 0.0)
CLEAN_SNR_DB = 20.0
FULL_TRAIN_COUNT, FULL_TEST_COUNT = 50_000, 10_000
DESK_TRAIN_COUNT, DESK_TEST_COUNT = 2_000, 500


class DegenerateMapWarning(RuntimeWarning):
    """A constant map was normalized to all zeros."""


class DatasetError(ValueError):
    pass


class BadMagicError(DatasetError):
    pass


class VersionMismatchError(DatasetError):
    pass


class TruncatedPayloadError(DatasetError):
    pass


@dataclass
class SampleRecord:
    corrupted: np.ndarray  # (N, M) float32 in [-1, 1]
    clean: np.ndarray  # (N, M) float32 in [-1, 1]
    label: np.ndarray  # (2P,) float32, (delay, doppler) per target, canonical order
    snr_db: np.float32
    seed: int

    @property
    def n_targets(self) -> int:
        return self.label.size // 2

    def __eq__(self, other):
        if not isinstance(other, SampleRecord):
            return NotImplemented
        return (
            np.array_equal(self.corrupted, other.corrupted)
            and np.array_equal(self.clean, other.clean)
            and np.array_equal(self.label, other.label)
            and np.float32(self.snr_db).tobytes() == np.float32(other.snr_db).tobytes()
            and self.seed == other.seed
        )


@dataclass(frozen=True)
class DatasetHeader:
    M: int
    N: int
    P: int
    sample_count: int
    snr_low_db: float
    snr_high_db: float
    clean_snr_db: float
    base_seed: int
    version: int = VERSION

    @property
    def record_size(self) -> int:
        return 4 * (2 * self.P + 2 * self.M * self.N + 1) + 8

    @property
    def file_size(self) -> int:
        return HEADER_SIZE + self.sample_count * self.record_size


def normalize_map(v) -> np.ndarray:
    """Per-map min-max scaling of ``|V|`` onto [-1, 1].

    A constant map has no scale; it maps to zeros and emits
    :class:`DegenerateMapWarning`.
    """
    values = getattr(v, "values", v)
    mag = np.abs(np.asarray(values)).astype(np.float64)
    lo, hi = mag.min(), mag.max()
    if hi == lo:
        warnings.warn("constant correlation map normalized to zeros", DegenerateMapWarning, stacklevel=2)
        return np.zeros(mag.shape)
    return 2.0 * (mag - lo) / (hi - lo) - 1.0


def draw_snr(snr_db, seed: int) -> float:
    """Return ``snr_db`` itself, or a uniform draw if it is a ``(low, high)`` range."""
    if np.ndim(snr_db) == 0:
        return float(snr_db)
    low, high = snr_db
    return float(_rng.stream(seed, _rng.SNR_DRAW).uniform(low, high))


def simulate_correlation(p: FrameParams, targets: TargetSet, probe, snr_db: float, seed: int, stream: int = _rng.NOISE):
    """Complex correlation map for one noisy observation of ``targets``."""
    x = heisenberg_modulate(isfft(probe, p), p)
    r = add_awgn(apply_channel(x, targets, p), NoiseSpec(snr_db, seed, stream))
    b = sfft(wigner_demodulate(r, p), p)
    return correlate_dd(b, probe, p, source="clean" if stream == _rng.NOISE_CLEAN else "corrupted")


def simulate_pair(p: FrameParams, n_targets: int, snr_db: float, clean_snr_db: float, seed: int):
    """``(targets, V_corrupted, V_clean)`` for one seeded scene, complex maps."""
    probe = map_probe_symbols(p, seed)
    targets = sample_targets(p, n_targets, seed)
    x = heisenberg_modulate(isfft(probe, p), p)
    r = apply_channel(x, targets, p)
    maps = []
    for snr, stream in ((snr_db, _rng.NOISE), (clean_snr_db, _rng.NOISE_CLEAN)):
        b = sfft(wigner_demodulate(add_awgn(r, NoiseSpec(snr, seed, stream)), p), p)
        maps.append(correlate_dd(b, probe, p, source="corrupted" if stream == _rng.NOISE else "clean"))
    return targets, maps[0], maps[1]


def generate_sample(p: FrameParams, n_targets: int, snr_db, clean_snr_db: float = CLEAN_SNR_DB, seed: int = 0) -> SampleRecord:
    """Simulate one paired sample.

    ``snr_db`` is the corrupted-leg SNR, either a number or a ``(low, high)``
    range to draw uniformly from.
    """
    snr = np.float32(draw_snr(snr_db, seed))
    targets, v_bad, v_good = simulate_pair(p, n_targets, float(snr), clean_snr_db, seed)
    return SampleRecord(
        corrupted=normalize_map(v_bad).astype(np.float32),
        clean=normalize_map(v_good).astype(np.float32),
        label=targets.label().astype(np.float32),
        snr_db=snr,
        seed=int(seed),
    )


def generate_dataset(p, n_targets, count, snr_db=SNR_RANGE, clean_snr_db=CLEAN_SNR_DB, base_seed=0) -> list[SampleRecord]:
    """``count`` samples with per-sample seeds ``base_seed + i``."""
    return [generate_sample(p, n_targets, snr_db, clean_snr_db, base_seed + i) for i in range(count)]


def generate_snr_sweep(p, n_targets, count, snr_grid, clean_snr_db=CLEAN_SNR_DB, base_seed=0) -> list[SampleRecord]:
    """Test set: the same ``count`` scenes (seeds) observed at every SNR in ``snr_grid``."""
    return [
        generate_sample(p, n_targets, float(snr), clean_snr_db, base_seed + i)
        for snr in snr_grid
        for i in range(count)
    ]


def stack(records: Sequence[SampleRecord]):
    """``(corrupted, clean, labels, snr)`` arrays; maps shaped (S, 1, N, M)."""
    corrupted = np.stack([r.corrupted for r in records])[:, None]
    clean = np.stack([r.clean for r in records])[:, None]
    labels = np.stack([r.label for r in records])
    snr = np.array([r.snr_db for r in records], dtype=np.float32)
    return corrupted, clean, labels, snr


def write_dataset(records: Sequence[SampleRecord], path, header: DatasetHeader | None = None) -> DatasetHeader:
    """Write records in the OTFSDD1 layout (little-endian, float32 payload)."""
    records = list(records)
    if not records:
        raise DatasetError("refusing to write an empty dataset")
    n, m = records[0].corrupted.shape
    P = records[0].n_targets
    for r in records:
        if r.corrupted.shape != (n, m) or r.clean.shape != (n, m) or r.n_targets != P:
            raise DatasetError("records must share grid size and target count")
    if header is None:
        snrs = [float(r.snr_db) for r in records]
        header = DatasetHeader(m, n, P, len(records), min(snrs), max(snrs), CLEAN_SNR_DB, records[0].seed)
    elif (header.M, header.N, header.P, header.sample_count) != (m, n, P, len(records)):
        raise DatasetError(f"header {header} does not describe the records")
    with open(path, "wb") as f:
        f.write(
            _HEADER.pack(
                MAGIC, header.version, header.M, header.N, header.P, header.sample_count,
                header.snr_low_db, header.snr_high_db, header.clean_snr_db, header.base_seed,
            )
        )
        for r in records:
            f.write(np.asarray(r.label, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(r.corrupted, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(r.clean, dtype="<f4").tobytes())
            f.write(struct.pack("<fQ", r.snr_db, r.seed))
    return header


def read_header(path) -> DatasetHeader:
    with open(path, "rb") as f:
        raw = f.read(HEADER_SIZE)
    if raw[:8] != MAGIC[: len(raw[:8])] or len(raw) < 8:
        raise BadMagicError(f"{path}: not an OTFSDD1 dataset")
    if len(raw) < HEADER_SIZE:
        raise TruncatedPayloadError(f"{path}: header truncated")
    magic, version, m, n, P, count, lo, hi, clean, seed = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: not an OTFSDD1 dataset")
    if version != VERSION:
        raise VersionMismatchError(f"{path}: dataset version {version}, expected {VERSION}")
    return DatasetHeader(m, n, P, count, lo, hi, clean, seed, version)


def read_dataset(path) -> tuple[DatasetHeader, list[SampleRecord]]:
    header = read_header(path)
    data = Path(path).read_bytes()
    if len(data) < header.file_size:
        raise TruncatedPayloadError(
            f"{path}: payload truncated ({len(data)} bytes, header implies {header.file_size})"
        )
    if len(data) > header.file_size:
        raise DatasetError(f"{path}: {len(data) - header.file_size} unexpected trailing bytes")
    mn, P = header.M * header.N, header.P
    rec = np.dtype(
        [("label", "<f4", (2 * P,)), ("corrupted", "<f4", (mn,)), ("clean", "<f4", (mn,)), ("snr", "<f4"), ("seed", "<u8")]
    )
    assert rec.itemsize == header.record_size
    table = np.frombuffer(data, dtype=rec, offset=HEADER_SIZE, count=header.sample_count)
    shape = (header.N, header.M)
    records = [
        SampleRecord(
            corrupted=row["corrupted"].astype(np.float32).reshape(shape),
            clean=row["clean"].astype(np.float32).reshape(shape),
            label=row["label"].astype(np.float32),
            snr_db=np.float32(row["snr"]),
            seed=int(row["seed"]),
        )
        for row in table
    ]
    return header, records


def export_labels_csv(records: Iterable[SampleRecord], path) -> None:
    """One row per record: index, seed, snr_db, then delay/doppler per target."""
    records = list(records)
    P = records[0].n_targets if records else 0
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["index", "seed", "snr_db"] + [f"{kind}_{i}" for i in range(P) for kind in ("delay", "doppler")])
        for i, r in enumerate(records):
            w.writerow([i, r.seed, f"{float(r.snr_db):.6g}"] + [int(v) for v in r.label])
