import math

import numpy as np
import pytest

from otfs_sense.channel import NoiseSpec, Target, TargetSet, add_awgn, apply_channel, sample_targets
from otfs_sense.grid import FrameParams

from conftest import crandn


def test_sample_targets_saturated_grid():
    p = FrameParams(M=4, N=3)
    ts = sample_targets(p, 12, seed=1)
    assert sorted((t.delay_idx, t.doppler_idx) for t in ts) == [(l, k) for l in range(4) for k in range(3)]


def test_sample_targets_canonical_and_deterministic(frame28):
    a = sample_targets(frame28, 4, seed=9)
    assert a == sample_targets(frame28, 4, seed=9)
    keys = [(t.delay_idx, t.doppler_idx) for t in a]
    assert keys == sorted(keys) and len(set(keys)) == 4
    for t in a:
        t.check(frame28)


def test_gain_variance_monte_carlo(frame28):
    gains = np.concatenate([sample_targets(frame28, 4, seed=s).gains for s in range(25_000)])
    assert gains.size == 100_000
    assert np.mean(np.abs(gains) ** 2) == pytest.approx(0.25, abs=0.01)
    # circular symmetry: re and im carry half the power each
    assert np.mean(gains.real**2) == pytest.approx(0.125, abs=0.01)


def test_sample_targets_rejects_overfull(small):
    with pytest.raises(ValueError):
        sample_targets(small, 65, seed=0)
    with pytest.raises(ValueError):
        sample_targets(small, 0, seed=0)


def test_target_set_invariants():
    with pytest.raises(ValueError, match="duplicate"):
        TargetSet([Target(1, 2), Target(1, 2, 0.5)])
    with pytest.raises(ValueError):
        TargetSet([])
    ts = TargetSet([Target(7, 17), Target(2, 10)])
    assert [t.delay_idx for t in ts] == [2, 7]
    np.testing.assert_array_equal(ts.label(), [2, 10, 7, 17])


def test_identity_delay_and_doppler_channels(small, rng):
    x = crandn(rng, (64,))
    np.testing.assert_array_equal(apply_channel(x, TargetSet([Target(0, 0)]), small), x)
    np.testing.assert_allclose(apply_channel(x, TargetSet([Target(2, 0)]), small), np.roll(x, 2), atol=1e-15)
    q = np.arange(64)
    np.testing.assert_allclose(
        apply_channel(x, TargetSet([Target(0, 1)]), small), x * np.exp(2j * np.pi * q / 64), atol=1e-14
    )


def test_channel_formula_per_sample(small, rng):
    x = crandn(rng, (64,))
    ts = TargetSet([Target(3, 5, 0.3 - 0.2j)])
    r = apply_channel(x, ts, small)
    for q in range(64):
        expected = (0.3 - 0.2j) * np.exp(2j * np.pi * 5 * (q - 3) / 64) * x[(q - 3) % 64]
        assert abs(r[q] - expected) < 1e-13


def test_linearity_superposition_energy(small, rng):
    x, y = crandn(rng, (64,)), crandn(rng, (64,))
    t1, t2 = Target(1, 3, 0.7j), Target(5, 6, -0.4)
    both = TargetSet([t1, t2])
    a, b = 1.5 - 2j, 0.25j
    lhs = apply_channel(a * x + b * y, both, small)
    rhs = a * apply_channel(x, both, small) + b * apply_channel(y, both, small)
    assert np.max(np.abs(lhs - rhs)) < 1e-12
    sep = apply_channel(x, TargetSet([t1]), small) + apply_channel(x, TargetSet([t2]), small)
    assert np.max(np.abs(apply_channel(x, both, small) - sep)) < 1e-12
    r = apply_channel(x, TargetSet([Target(4, 7)]), small)
    assert np.sum(abs(r) ** 2) == pytest.approx(np.sum(abs(x) ** 2), rel=1e-13)


def test_channel_rejects_out_of_grid(small):
    with pytest.raises(ValueError, match="outside"):
        apply_channel(np.ones(64), TargetSet([Target(8, 0)]), small)


def test_awgn_zero_db_unit_power():
    x = np.ones(1_000_000, complex)
    noise = add_awgn(x, NoiseSpec(0.0, seed=1)) - x
    assert np.mean(abs(noise) ** 2) == pytest.approx(1.0, abs=0.01)
    assert np.mean(noise.real**2) == pytest.approx(0.5, abs=0.01)


def test_awgn_empirical_snr_minus_20db(rng):
    x = crandn(rng, (1_000_000,)) * 0.3
    noise = add_awgn(x, NoiseSpec(-20.0, seed=7)) - x
    snr = 10 * np.log10(np.mean(abs(x) ** 2) / np.mean(abs(noise) ** 2))
    assert snr == pytest.approx(-20.0, abs=0.1)


def test_awgn_noiseless_sentinel_and_errors(rng):
    x = crandn(rng, (64,))
    out = add_awgn(x, NoiseSpec(math.inf, seed=0))
    assert out.tobytes() == x.tobytes()
    with pytest.raises(ValueError, match="all-zero"):
        add_awgn(np.zeros(64), NoiseSpec(10.0, seed=0))


def test_awgn_seeded(rng):
    x = crandn(rng, (64,))
    np.testing.assert_array_equal(add_awgn(x, NoiseSpec(3, 11)), add_awgn(x, NoiseSpec(3, 11)))
    assert np.any(add_awgn(x, NoiseSpec(3, 11)) != add_awgn(x, NoiseSpec(3, 12)))
