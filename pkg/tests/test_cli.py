import csv
import math

import numpy as np
import pytest

from otfs_sense import cli
from otfs_sense.correlator import read_pgm
from otfs_sense.dataset import read_dataset
from otfs_sense.evaluate import RmseReport, read_report

TINY = """\
# small but complete run
train_count = 24
test_count = 4
gan_epochs = 1
cnn_epochs = 2
batch_size = 8
snr_grid = -20, -15
seed = 3
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(TINY)
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_defaults_are_reference_frame():
    cfg = cli.RunConfig().validate()
    assert (cfg.M, cfg.N, cfg.delta_f, cfg.f_c) == (28, 28, 150e3, 60e9)
    assert cfg.clean_snr_db == 20 and cfg.train_snr == (-20, 0)
    assert cfg.snr_grid == (-20, -15, -10, -5, 0)
    assert (cfg.train_count, cfg.test_count) == (50000, 10000)


def test_desk_scale_and_overrides(config, tmp_path):
    args = cli.build_parser().parse_args(
        ["generate", "--config", str(config), "--desk-scale", "--seed", "9", "--set", "targets=3"]
    )
    cfg = cli.load_config(args)
    assert (cfg.train_count, cfg.test_count, cfg.seed, cfg.targets) == (2000, 500, 9, 3)


def test_config_round_trip():
    cfg = cli.RunConfig(snr_mode="fixed", snr_db=-7.5, estimators=("cnn_only",), seed=4)
    assert cli.RunConfig(**cli.parse_config_text(cli.format_config(cfg))) == cfg


@pytest.mark.parametrize(
    "text",
    ["M = 28\nN = 16\n", "bogus = 1\n", "seed = x\n", "snr_mode = sometimes\n", "gan_lr = 0\n", "no equals sign\n", "targets = 0\n"],
)
def test_config_errors_exit_1_without_output(tmp_path, text, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text(text)
    work = tmp_path / "work"
    assert run("generate", "--config", path, "--workdir", work) == 1
    assert "config error" in capsys.readouterr().err
    assert not work.exists()


def test_usage_error_exit_1():
    assert run("fly") == 1


def test_missing_artifacts_exit_2(config, tmp_path, capsys):
    work = tmp_path / "empty"
    assert run("train-gan", "--config", config, "--workdir", work) == 2
    assert "train.otfsdd" in capsys.readouterr().err
    assert run("evaluate", "--config", config, "--workdir", work) == 2


def test_generate_is_byte_identical(config, tmp_path):
    files = ("train.otfsdd", "test.otfsdd", "test_labels.csv", "config.txt")
    assert run("generate", "--config", config, "--workdir", tmp_path / "a") == 0
    first = {f: (tmp_path / "a" / f).read_bytes() for f in files}
    assert run("generate", "--config", config, "--workdir", tmp_path / "a") == 0
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == first[f], f
    header, test = read_dataset(tmp_path / "a" / "test.otfsdd")
    assert header.sample_count == 8 and sorted({float(r.snr_db) for r in test}) == [-20, -15]
    _, train = read_dataset(tmp_path / "a" / "train.otfsdd")
    assert not {r.seed for r in train} & {r.seed for r in test}


def test_header_mismatch_rejected_before_training(config, tmp_path):
    work = tmp_path / "w"
    run("generate", "--config", config, "--workdir", work)
    assert run("train-gan", "--config", config, "--workdir", work, "--set", "targets=3") == 1
    assert not (work / "generator.ckpt").exists()


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    work = tmp_path_factory.mktemp("trained")
    config = work / "run.cfg"
    config.write_text(TINY)
    assert run("generate", "--config", config, "--workdir", work) == 0
    assert run("train-cnn", "--config", config, "--workdir", work) == 0  # no generator yet: cnn_only
    assert run("train-gan", "--config", config, "--workdir", work) == 0
    assert run("train-cnn", "--config", config, "--workdir", work) == 0  # generator present: two_stage
    return work, config


def test_training_artifacts_and_logs(trained):
    work, _ = trained
    for name in ("generator.ckpt", "discriminator.ckpt", "predictor_cnn_only.ckpt", "predictor_two_stage.ckpt"):
        assert (work / name).read_bytes()[:8] == b"OTFSNN1\x00"
    for name, epochs in (("gan_log.csv", 1), ("cnn_log_cnn_only.csv", 2), ("cnn_log_two_stage.csv", 2)):
        rows = list(csv.DictReader(open(work / name)))
        assert [int(r["epoch"]) for r in rows] == list(range(1, epochs + 1))
        assert all(math.isfinite(float(v)) for r in rows for v in r.values())


def test_training_is_byte_reproducible(trained, tmp_path):
    work, config = trained
    other = tmp_path / "again"
    run("generate", "--config", config, "--workdir", other)
    run("train-cnn", "--config", config, "--workdir", other)
    run("train-gan", "--config", config, "--workdir", other)
    for f in ("gan_log.csv", "generator.ckpt", "discriminator.ckpt", "cnn_log_cnn_only.csv", "predictor_cnn_only.ckpt"):
        assert (work / f).read_bytes() == (other / f).read_bytes(), f


def test_resume_matches_uninterrupted(trained, tmp_path):
    work, config = trained
    other = tmp_path / "resume"
    run("generate", "--config", config, "--workdir", other)
    run("train-cnn", "--config", config, "--workdir", other, "--mode", "cnn_only", "--set", "cnn_epochs=1")
    assert run("train-cnn", "--config", config, "--workdir", other, "--mode", "cnn_only", "--resume") == 0
    for f in ("predictor_cnn_only.ckpt", "predictor_cnn_only.adam.npz", "cnn_log_cnn_only.csv"):
        assert (work / f).read_bytes() == (other / f).read_bytes(), f


def test_evaluate_writes_report(trained, capsys):
    work, config = trained
    assert run("evaluate", "--config", config, "--workdir", work) == 0
    rows = list(csv.DictReader(open(work / "report.csv")))
    assert {(r["estimator"], r["snr_db"]) for r in rows} == {
        (e, s) for e in ("two_stage", "cnn_only", "peak_baseline") for s in ("-20", "-15")
    }
    assert "ref_range_m" in rows[0]
    assert [r["ref_range_m"] for r in rows if r["snr_db"] == "-20"] == ["22.49"] * 3
    assert "peak_baseline" in capsys.readouterr().out


def test_evaluate_snr_override_and_baseline_only(config, tmp_path):
    work = tmp_path / "b"
    run("generate", "--config", config, "--workdir", work)
    assert run("evaluate", "--config", config, "--workdir", work, "--estimators", "peak_baseline", "--snr-grid", "-15") == 0
    rows = list(csv.DictReader(open(work / "report.csv")))
    assert [(r["estimator"], r["snr_db"]) for r in rows] == [("peak_baseline", "-15")]


def test_assert_mode_exit_code(trained):
    work, config = trained
    code = run("evaluate", "--config", config, "--workdir", work, "--assert")
    failures = cli.check_oracles(read_report(work / "report.csv"))
    assert code == (3 if failures else 0)


def test_check_oracles_flags_regressions():
    reports = [
        RmseReport("two_stage", -20.0, 2, 10, 50.0, 20.0),
        RmseReport("cnn_only", -20.0, 2, 10, 40.0, 20.0),
        RmseReport("two_stage", -15.0, 2, 10, 60.0, 10.0),
    ]
    assert len(cli.check_oracles(reports)) == 2
    assert cli.check_oracles(reports[:1]) == []


def test_heatmap_scene(tmp_path):
    out = tmp_path / "fig" / "scene"
    assert run("heatmap", "--scene", "2:10,7:17", "--out", out, "--set", "clean_snr_db=inf") == 0
    table = np.loadtxt(f"{out}_clean.csv", delimiter=",")
    assert table.shape == (28, 28)
    top = {np.unravel_index(i, table.shape) for i in np.argsort(table, axis=None)[-2:]}
    assert top == {(10, 2), (17, 7)}
    img = read_pgm(f"{out}_corrupted.pgm")
    assert img.shape == (28, 28)


def test_heatmap_from_dataset(config, tmp_path):
    work = tmp_path / "h"
    run("generate", "--config", config, "--workdir", work)
    assert run("heatmap", work / "test.otfsdd", 3, "--out", tmp_path / "s3") == 0
    _, recs = read_dataset(work / "test.otfsdd")
    mag = np.loadtxt(tmp_path / "s3_clean.csv", delimiter=",")
    k, l = np.unravel_index(mag.argmax(), mag.shape)
    assert np.unravel_index(recs[3].clean.argmax(), (28, 28)) == (k, l)
    assert run("heatmap", work / "test.otfsdd", 99, "--out", tmp_path / "x") == 1


def test_grad_check_verb(capsys):
    assert run("grad-check") == 0
    out = capsys.readouterr().out
    for name in ("conv2d", "batchnorm2d", "generator", "discriminator", "predictor"):
        assert name in out
