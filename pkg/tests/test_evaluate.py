import math

import numpy as np
import pytest

from otfs_sense import evaluate as ev
from otfs_sense.channel import Target, TargetSet, sample_targets
from otfs_sense.dataset import SampleRecord, generate_snr_sweep, normalize_map, simulate_correlation
from otfs_sense.modem import map_probe_symbols
from otfs_sense.grid import FrameParams


def test_resolution_constants(frame28):
    assert frame28.range_resolution == pytest.approx(35.714, abs=5e-4)
    assert frame28.velocity_resolution == pytest.approx(13.393, abs=5e-4)
    assert frame28.max_range == pytest.approx(1000.0, abs=1e-9)
    assert frame28.max_velocity == pytest.approx(375.0, abs=1e-9)


def test_unit_errors_give_resolution(frame28):
    t = np.array([[3, 5], [1, 0]])
    assert ev.range_rmse(t, t + 1, frame28) == pytest.approx(frame28.range_resolution, rel=1e-15)
    assert ev.velocity_rmse(t, t - 1, frame28) == pytest.approx(frame28.velocity_resolution, rel=1e-15)
    assert ev.range_rmse(t, t, frame28) == 0 and ev.velocity_rmse(t, t, frame28) == 0


def test_toy_two_by_two(frame28):
    t = np.zeros((2, 2))
    q = np.array([[0, 0], [1, 2]])
    assert ev.range_rmse(t, q, frame28) == pytest.approx(frame28.range_resolution * math.sqrt(5 / 4), rel=1e-15)


def test_fractional_predictions_used_as_is(frame28):
    t = np.zeros((1, 2))
    assert ev.range_rmse(t, [[0.5, 0.5]], frame28) == pytest.approx(frame28.range_resolution / 2)


def test_shape_mismatch_rejected(frame28):
    with pytest.raises(ValueError, match="shape"):
        ev.range_rmse(np.zeros((2, 2)), np.zeros((2, 3)), frame28)


def test_permutation_consistency(frame28, rng):
    t = rng.integers(0, 28, (10, 3)).astype(float)
    q = t + rng.normal(0, 2, t.shape)
    perm = [2, 0, 1]
    assert ev.range_rmse(t[:, perm], q[:, perm], frame28) == pytest.approx(ev.range_rmse(t, q, frame28), rel=1e-15)


def test_resolution_scaling(rng):
    p1, p2 = FrameParams(), FrameParams(delta_f=300e3)
    t = rng.integers(0, 28, (5, 2))
    q = t + rng.integers(-3, 4, t.shape)
    assert ev.range_rmse(t, q, p2) == pytest.approx(ev.range_rmse(t, q, p1) / 2, rel=1e-14)


def test_accumulation_is_order_independent(frame28, rng):
    t = rng.normal(0, 1e3, (2000, 2))
    q = t + rng.normal(0, 1e-3, t.shape)
    order = rng.permutation(2000)
    a, b = ev.range_rmse(t, q, frame28), ev.range_rmse(t[order], q[order], frame28)
    assert abs(a - b) <= 1e-9 * a


def test_hungarian_undoes_swaps():
    true = np.array([[2, 10, 7, 17]], dtype=float)
    pred = np.array([[7, 17, 2, 10]], dtype=float)
    np.testing.assert_array_equal(ev.hungarian_match(true, pred), true)


def test_report_round_trip(tmp_path):
    reports = [
        ev.RmseReport("two_stage", -20.0, 2, 500, 22.123456, 14.654321),
        ev.RmseReport("peak_baseline", -5.0, 3, 10, 0.0, 1.5),
    ]
    ev.write_report(reports, tmp_path / "r.csv")
    assert ev.read_report(tmp_path / "r.csv") == reports
    text = (tmp_path / "r.csv").read_text()
    assert "22.49" in text and "14.7" in text  # reference columns for (P=2, -20 dB)


@pytest.fixture(scope="module")
def noiseless_sweep():
    return generate_snr_sweep(FrameParams(), 2, 40, [float("inf")], base_seed=100)


def unfaded_record(p, seed):
    """Noiseless record at the dataset's target cells with fading removed."""
    drawn = sample_targets(p, 2, seed)
    targets = TargetSet(Target(t.delay_idx, t.doppler_idx, t.gain / abs(t.gain) / math.sqrt(2)) for t in drawn)
    v = simulate_correlation(p, targets, map_probe_symbols(p, seed), float("inf"), seed)
    m = normalize_map(v).astype(np.float32)
    return SampleRecord(m, m, targets.label().astype(np.float32), np.float32(np.inf), seed)


def cyclic_neighbours(label, p):
    (d1, k1), (d2, k2) = label.reshape(2, 2)
    dd, dk = abs(d1 - d2) % p.M, abs(k1 - k2) % p.N
    return min(dd, p.M - dd) <= 1 and min(dk, p.N - dk) <= 1


def test_peak_baseline_noiseless_is_exact():
    p = FrameParams()
    recs = [unfaded_record(p, s) for s in range(100, 200)]
    # adjacent targets merge under 8-neighbourhood suppression by design
    recs = [r for r in recs if not cyclic_neighbours(r.label, p)]
    assert len(recs) >= 95
    (report,) = ev.run_experiment(recs, ev.ExperimentConfig(p, estimators=("peak_baseline",)))
    assert report.range_rmse_m == 0 and report.velocity_rmse_mps == 0
    assert report.n_targets == 2


def test_peak_baseline_noiseless_with_fading(noiseless_sweep):
    cfg = ev.ExperimentConfig(FrameParams(), estimators=("peak_baseline",))
    (report,) = ev.run_experiment(noiseless_sweep, cfg)
    pred = ev.peak_baseline([r.corrupted for r in noiseless_sweep], 2)
    exact = np.mean([np.array_equal(q, r.label) for q, r in zip(pred, noiseless_sweep)])
    print(f"noiseless Rayleigh-gain scenes recovered exactly: {exact:.1%}")
    # only deep fades (weaker target buried under probe sidelobes) are missed
    assert exact >= 0.9
    assert report.n_samples == 40 and report.n_targets == 2


def test_experiment_validation(noiseless_sweep):
    from otfs_sense.models import build_predictor

    with pytest.raises(ValueError, match="needs"):
        ev.run_experiment(noiseless_sweep, ev.ExperimentConfig(FrameParams(), estimators=("cnn_only",)))
    wrong = build_predictor(3, widths=(2, 2, 2), hidden=(4, 4))
    with pytest.raises(ValueError, match="3 targets"):
        ev.run_experiment(
            noiseless_sweep,
            ev.ExperimentConfig(FrameParams(), estimators=("cnn_only",), predictor_cnn_only=wrong),
        )
    with pytest.raises(ValueError, match="unknown"):
        ev.run_experiment(noiseless_sweep, ev.ExperimentConfig(FrameParams(), estimators=("oracle",)))
    with pytest.raises(ValueError, match="no test records"):
        ev.run_experiment(noiseless_sweep, ev.ExperimentConfig(FrameParams(), ("peak_baseline",), snr_grid=[-5]))
