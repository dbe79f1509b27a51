import cmath
import itertools

import numpy as np
import pytest

from otfs_sense.channel import Target, TargetSet, apply_channel
from otfs_sense.correlator import (
    CorrelationMap, correlate_dd, correlate_direct, phase_offset, pick_peaks, read_pgm, write_heatmap_csv, write_pgm,
)
from otfs_sense.grid import FrameParams, isfft, sfft
from otfs_sense.modem import heisenberg_modulate, map_probe_symbols, wigner_demodulate

from conftest import crandn
from oracles import correlation_loops


def received(p, probe, targets):
    x = heisenberg_modulate(isfft(probe, p), p)
    return sfft(wigner_demodulate(apply_channel(x, targets, p), p), p)


def test_phase_offset(frame28):
    assert phase_offset(5, 0, frame28) == 1
    assert phase_offset(0, -3, frame28) == 1
    assert phase_offset(3, -1, frame28) == pytest.approx(cmath.exp(-2j * cmath.pi * 3 / 28), abs=1e-15)


def test_correlation_matches_four_loop_oracle(small, rng):
    b, a = crandn(rng, small.shape), crandn(rng, small.shape)
    ref = correlation_loops(b, a)
    for got in (correlate_dd(b, a, small).values, correlate_direct(b, a, small)):
        assert np.linalg.norm(got - ref) / np.linalg.norm(ref) < 1e-10


def test_fast_path_agrees_with_direct_on_rectangular_grid(rng):
    p = FrameParams(M=7, N=5)
    b, a = crandn(rng, p.shape), crandn(rng, p.shape)
    ref = correlate_direct(b, a, p)
    assert np.max(np.abs(correlate_dd(b, a, p).values - ref)) / np.max(np.abs(ref)) < 1e-9


def test_zero_received_gives_zero_map(small, rng):
    v = correlate_dd(np.zeros(small.shape), crandn(rng, small.shape), small)
    np.testing.assert_array_equal(v.values, 0)


def test_conjugate_linear_in_b_linear_in_a(small, rng):
    b1, b2, a1, a2 = (crandn(rng, small.shape) for _ in range(4))
    s, t = 0.3 - 1.2j, -2 + 0.5j
    corr = lambda b, a: correlate_dd(b, a, small).values
    assert np.max(np.abs(corr(s * b1 + t * b2, a1) - (np.conj(s) * corr(b1, a1) + np.conj(t) * corr(b2, a1)))) < 1e-12 * 100
    assert np.max(np.abs(corr(b1, s * a1 + t * a2) - (s * corr(b1, a1) + t * corr(b1, a2)))) < 1e-12 * 100


def test_single_target_peak_reference_scene(frame28):
    probe = map_probe_symbols(frame28, 0)
    v = correlate_dd(received(frame28, probe, TargetSet([Target(2, 10)])), probe, frame28)
    assert np.unravel_index(np.argmax(v.magnitude), v.values.shape) == (10, 2)
    # coherent sum of MN unit-power symbols
    assert v.magnitude.max() == pytest.approx(frame28.M * frame28.N, rel=1e-12)


def test_full_grid_sweep_8x8(small):
    probe = map_probe_symbols(small, 4)
    hits = 0
    for l, k in itertools.product(range(small.M), range(small.N)):
        v = correlate_dd(received(small, probe, TargetSet([Target(l, k)])), probe, small)
        hits += np.unravel_index(np.argmax(v.magnitude), v.values.shape) == (k, l)
    assert hits == 64


def test_two_target_reference_scene(frame28):
    probe = map_probe_symbols(frame28, 0)
    targets = TargetSet([Target(2, 10, 0.8), Target(7, 17, 0.6j)])
    v = correlate_dd(received(frame28, probe, targets), probe, frame28)
    assert pick_peaks(v, 2) == [(10, 2), (17, 7)]


def test_pick_peaks_single_cell():
    v = np.zeros((28, 28))
    v[10, 2] = 1
    assert pick_peaks(v, 1) == [(10, 2)]


def brute_force_peaks(mag, count):
    """Greedy NMS by exhaustive scan; ties resolved by (k, l) order."""
    N, M = mag.shape
    blocked = set()
    picks = []
    while len(picks) < count:
        best = None
        for k in range(N):
            for l in range(M):
                if (k, l) in blocked:
                    continue
                if best is None or mag[k, l] > mag[best]:
                    best = (k, l)
        picks.append(best)
        blocked |= {((best[0] + a) % N, (best[1] + b) % M) for a in (-1, 0, 1) for b in (-1, 0, 1)}
    return sorted(picks, key=lambda kl: (kl[1], kl[0]))


def test_equal_peaks_exhaustive_6x6():
    cells = list(itertools.product(range(6), range(6)))
    for c1, c2 in itertools.combinations(cells, 2):
        if max(min(abs(c1[i] - c2[i]), 6 - abs(c1[i] - c2[i])) for i in (0, 1)) <= 1:
            continue  # neighbours suppress each other by design
        for first, second in ((c1, c2), (c2, c1)):
            v = np.full((6, 6), 0.1)
            v[first] = 5.0
            v[second] = 5.0
            got = pick_peaks(v + 0j, 2)
            assert got == brute_force_peaks(np.abs(v), 2)
            assert set(got) == {c1, c2}


def test_pick_peaks_random_maps_against_brute_force(rng):
    for _ in range(50):
        mag = rng.random((6, 6)).round(1)  # plenty of ties
        assert pick_peaks(mag, 3) == brute_force_peaks(mag, 3)


def test_pick_peaks_wraps_neighbourhood():
    v = np.zeros((6, 6))
    v[0, 0], v[5, 5], v[3, 3] = 3, 2, 1
    assert set(pick_peaks(v, 2)) == {(0, 0), (3, 3)}


def test_correlation_map_validation():
    with pytest.raises(ValueError):
        CorrelationMap(np.zeros((2, 2)), source="weird")
    with pytest.raises(ValueError):
        CorrelationMap(np.full((2, 2), np.inf))


def test_heatmap_exports(tmp_path, rng):
    v = crandn(rng, (5, 7))
    write_heatmap_csv(v, tmp_path / "v.csv")
    table = np.loadtxt(tmp_path / "v.csv", delimiter=",")
    assert table.shape == (5, 7)
    np.testing.assert_allclose(table, np.abs(v), rtol=1e-8)
    write_pgm(v, tmp_path / "v.pgm")
    img = read_pgm(tmp_path / "v.pgm")
    assert img.shape == (5, 7) and img.min() == 0 and img.max() == 255
    assert np.unravel_index(img.argmax(), img.shape) == np.unravel_index(np.abs(v).argmax(), v.shape)
    header = (tmp_path / "v.pgm").read_text().split()[:4]
    assert header == ["P2", "7", "5", "255"]


def test_pgm_reader_rejects_garbage(tmp_path):
    (tmp_path / "bad.pgm").write_text("P5\n1 1\n255\n0\n")
    with pytest.raises(ValueError):
        read_pgm(tmp_path / "bad.pgm")
