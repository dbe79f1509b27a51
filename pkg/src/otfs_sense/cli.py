"""Command-line driver: ``otfs-sense <verb> [--config FILE] [flags]``.

Configuration is a flat UTF-8 ``key = value`` file; command-line flags win
over file values. Exit codes: 0 success, 1 usage/config error, 2 runtime
failure, 3 assertion-mode oracle failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import models, nn
from .correlator import write_heatmap_csv, write_pgm
from .evaluate import DEFAULT_SNR_GRID, ESTIMATORS, ExperimentConfig, run_experiment, write_report
from .grid import FrameParams

log = logging.getLogger("otfs_sense")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_ORACLE = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    M: int = 28
    N: int = 28
    delta_f: float = 150e3
    f_c: float = 60e9
    targets: int = 2
    snr_mode: str = "range"
    snr_db: float = -20.0
    snr_low: float = -20.0
    snr_high: float = 0.0
    clean_snr_db: float = 20.0
    train_count: int = ds.FULL_TRAIN_COUNT
    test_count: int = ds.FULL_TEST_COUNT
    gan_epochs: int = 30
    cnn_epochs: int = 50
    batch_size: int = 64
    gan_lr: float = 2e-4
    cnn_lr: float = 1e-3
    recon_weight: float = 100.0
    val_fraction: float = 0.1
    seed: int = 0
    workdir: str = "run"
    snr_grid: tuple = DEFAULT_SNR_GRID
    estimators: tuple = ESTIMATORS
    round_predictions: bool = False
    assert_oracles: bool = False

    @property
    def frame(self) -> FrameParams:
        return FrameParams(self.M, self.N, self.delta_f, self.f_c)

    @property
    def train_snr(self):
        return self.snr_db if self.snr_mode == "fixed" else (self.snr_low, self.snr_high)

    def path(self, name: str) -> Path:
        return Path(self.workdir) / name

    def validate(self) -> "RunConfig":
        try:
            self.frame
            models.GanTrainConfig(self.gan_epochs, self.batch_size, self.gan_lr, self.recon_weight, seed=self.seed)
            models.PredictorTrainConfig(self.cnn_epochs, self.batch_size, self.cnn_lr, self.val_fraction)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not 1 <= self.targets <= self.M * self.N:
            raise ConfigError(f"targets must be in [1, M*N], got {self.targets}")
        if self.M != self.N:
            raise ConfigError("the networks take square maps; M must equal N")
        if self.snr_mode not in ("fixed", "range"):
            raise ConfigError(f"snr_mode must be 'fixed' or 'range', got {self.snr_mode!r}")
        if self.snr_mode == "range" and not self.snr_low <= self.snr_high:
            raise ConfigError("snr_low must not exceed snr_high")
        if self.train_count < 1 or self.test_count < 1:
            raise ConfigError("dataset sizes must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad:
            raise ConfigError(f"unknown estimators: {', '.join(sorted(bad))}")
        if not self.snr_grid:
            raise ConfigError("snr_grid is empty")
        return self


def _parse_value(name: str, raw: str):
    kind = {f.name: f.type for f in fields(RunConfig)}[name]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("1", "true", "yes")
        if kind == "tuple":
            items = [s.strip() for s in raw.split(",") if s.strip()]
            return tuple(float(s) for s in items) if name == "snr_grid" else tuple(items)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def parse_config_text(text: str) -> dict:
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw)
    return values


def format_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(f"{x:g}" if isinstance(x, float) else str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def load_config(args) -> RunConfig:
    values = {}
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from exc
        values.update(parse_config_text(text))
    if getattr(args, "desk_scale", False):
        values["train_count"], values["test_count"] = ds.DESK_TRAIN_COUNT, ds.DESK_TEST_COUNT
    for key in ("seed", "workdir"):
        if getattr(args, key, None) is not None:
            values[key] = getattr(args, key)
    if getattr(args, "snr_grid", None):
        values["snr_grid"] = _parse_value("snr_grid", args.snr_grid)
    if getattr(args, "estimators", None):
        values["estimators"] = _parse_value("estimators", args.estimators)
    for key in getattr(args, "set", None) or []:
        if "=" not in key:
            raise ConfigError(f"--set expects key=value, got {key!r}")
        values.update(parse_config_text(key))
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def _require(*paths: Path) -> None:
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise FileNotFoundError("missing required file(s): " + ", ".join(missing))


def _check_header(header: ds.DatasetHeader, cfg: RunConfig, path) -> None:
    if (header.M, header.N, header.P) != (cfg.M, cfg.N, cfg.targets):
        raise ConfigError(
            f"{path}: dataset is M={header.M} N={header.N} P={header.P}, "
            f"config asks for M={cfg.M} N={cfg.N} P={cfg.targets}"
        )


def _atomic_write(path: Path, writer) -> None:
    tmp = path.with_name(path.name + ".tmp")
    writer(tmp)
    tmp.replace(path)


def _write_log(rows, path: Path) -> None:
    if not rows:
        return
    cols = list(rows[0])
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(cols)
        for r in rows:
            w.writerow([r[c] if c == "epoch" else f"{r[c]:.9g}" for c in cols])


def _read_log(path: Path) -> list[dict]:
    if not path.exists():
        return []
    with open(path, newline="") as f:
        return [{k: int(v) if k == "epoch" else float(v) for k, v in row.items()} for row in csv.DictReader(f)]


def cmd_generate(cfg: RunConfig) -> int:
    work = Path(cfg.workdir)
    work.mkdir(parents=True, exist_ok=True)
    p = cfg.frame
    train = ds.generate_dataset(p, cfg.targets, cfg.train_count, cfg.train_snr, cfg.clean_snr_db, cfg.seed)
    lo, hi = (cfg.snr_db, cfg.snr_db) if cfg.snr_mode == "fixed" else (cfg.snr_low, cfg.snr_high)
    header = ds.DatasetHeader(cfg.M, cfg.N, cfg.targets, len(train), lo, hi, cfg.clean_snr_db, cfg.seed)
    _atomic_write(cfg.path("train.otfsdd"), lambda t: ds.write_dataset(train, t, header))
    # test scenes use a disjoint seed block and are swept over the SNR grid
    test_seed = cfg.seed + cfg.train_count
    test = ds.generate_snr_sweep(p, cfg.targets, cfg.test_count, cfg.snr_grid, cfg.clean_snr_db, test_seed)
    theader = ds.DatasetHeader(
        cfg.M, cfg.N, cfg.targets, len(test), min(cfg.snr_grid), max(cfg.snr_grid), cfg.clean_snr_db, test_seed
    )
    _atomic_write(cfg.path("test.otfsdd"), lambda t: ds.write_dataset(test, t, theader))
    ds.export_labels_csv(test, cfg.path("test_labels.csv"))
    _atomic_write(cfg.path("config.txt"), lambda t: Path(t).write_text(format_config(cfg)))
    mode = f"fixed {cfg.snr_db:g} dB" if cfg.snr_mode == "fixed" else f"range {cfg.snr_low:g}..{cfg.snr_high:g} dB"
    print(f"train: {len(train)} samples, corrupted SNR {mode}, clean {cfg.clean_snr_db:g} dB, seeds {cfg.seed}..{cfg.seed + len(train) - 1}")
    print(f"test:  {cfg.test_count} scenes x {len(cfg.snr_grid)} SNR points = {len(test)} samples, seeds from {test_seed}")
    print(f"grid {cfg.N}x{cfg.M}, P={cfg.targets}, written to {work}")
    return EXIT_OK


def _load_train(cfg: RunConfig):
    path = cfg.path("train.otfsdd")
    _require(path)
    header, records = ds.read_dataset(path)
    _check_header(header, cfg, path)
    return records


def cmd_train_gan(cfg: RunConfig, resume: bool = False) -> int:
    records = _load_train(cfg)
    corrupted, clean, _, _ = ds.stack(records)
    gcfg = models.GanTrainConfig(cfg.gan_epochs, cfg.batch_size, cfg.gan_lr, cfg.recon_weight, seed=cfg.seed)
    g_path, d_path, opt_path = cfg.path("generator.ckpt"), cfg.path("discriminator.ckpt"), cfg.path("gan.adam.npz")
    log_path = cfg.path("gan_log.csv")
    state = None
    if resume and g_path.exists():
        g, epoch = nn.load(g_path, (1, cfg.N, cfg.M))
        d, _ = nn.load(d_path, (1, cfg.N, cfg.M))
        state = models.GanState(g, d, nn.Adam(g.parameters(), cfg.gan_lr), nn.Adam(d.parameters(), cfg.gan_lr), epoch)
        if opt_path.exists():
            saved = np.load(opt_path)
            state.opt_g.load_state_dict({k[2:]: v for k, v in saved.items() if k.startswith("g_")})
            state.opt_d.load_state_dict({k[2:]: v for k, v in saved.items() if k.startswith("d_")})
        state.history = _read_log(log_path)[:epoch]
        print(f"resuming GAN training at epoch {epoch}")

    def checkpoint(st):
        nn.save(st.generator, g_path, st.epoch)
        nn.save(st.discriminator, d_path, st.epoch)
        opt = {f"g_{k}": v for k, v in st.opt_g.state_dict().items()}
        opt.update({f"d_{k}": v for k, v in st.opt_d.state_dict().items()})
        with open(opt_path, "wb") as f:
            np.savez(f, **opt)
        _write_log(st.history, log_path)

    state = models.train_gan(corrupted, clean, gcfg, state, on_epoch=checkpoint)
    if state.history:
        last = state.history[-1]
        print(f"GAN trained to epoch {state.epoch}: d={last['d_loss']:.4f} adv={last['g_adv_loss']:.4f} rec={last['g_rec_loss']:.5f}")
    return EXIT_OK


def cmd_train_cnn(cfg: RunConfig, mode: str = "auto", resume: bool = False) -> int:
    records = _load_train(cfg)
    corrupted, _, labels, _ = ds.stack(records)
    g_path = cfg.path("generator.ckpt")
    if mode == "auto":
        mode = "two_stage" if g_path.exists() else "cnn_only"
    if mode == "two_stage":
        _require(g_path)
        generator, _ = nn.load(g_path, (1, cfg.N, cfg.M))
        inputs = models.denoise(generator, corrupted)
    else:
        inputs = corrupted
    pcfg = models.PredictorTrainConfig(cfg.cnn_epochs, cfg.batch_size, cfg.cnn_lr, cfg.val_fraction, seed=cfg.seed)
    ckpt, opt_path, log_path = cfg.path(f"predictor_{mode}.ckpt"), cfg.path(f"predictor_{mode}.adam.npz"), cfg.path(f"cnn_log_{mode}.csv")
    state = None
    if resume and ckpt.exists():
        net, epoch = nn.load(ckpt, (1, cfg.N, cfg.M))
        state = models.PredictorState(net, nn.Adam(net.parameters(), cfg.cnn_lr), cfg.targets, epoch)
        if opt_path.exists():
            state.opt.load_state_dict(dict(np.load(opt_path)))
        state.history = _read_log(log_path)[:epoch]
        print(f"resuming {mode} predictor at epoch {epoch}")

    def checkpoint(st):
        nn.save(st.net, ckpt, st.epoch)
        with open(opt_path, "wb") as f:
            np.savez(f, **st.opt.state_dict())
        _write_log(st.history, log_path)

    state = models.train_predictor(inputs, labels, pcfg, state, on_epoch=checkpoint)
    if state.history:
        last = state.history[-1]
        print(f"{mode} predictor trained to epoch {state.epoch}: val index RMSE {last['val_index_rmse']:.3f} cells")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig) -> int:
    test_path = cfg.path("test.otfsdd")
    needed = [test_path]
    if "two_stage" in cfg.estimators:
        needed += [cfg.path("generator.ckpt"), cfg.path("predictor_two_stage.ckpt")]
    if "cnn_only" in cfg.estimators:
        needed.append(cfg.path("predictor_cnn_only.ckpt"))
    _require(*needed)
    header, records = ds.read_dataset(test_path)
    _check_header(header, cfg, test_path)
    shape = (1, cfg.N, cfg.M)

    def maybe(name):
        path = cfg.path(name)
        return nn.load(path, shape)[0] if path.exists() else None

    exp = ExperimentConfig(
        cfg.frame, cfg.estimators, cfg.snr_grid,
        generator=maybe("generator.ckpt") if "two_stage" in cfg.estimators else None,
        predictor_two_stage=maybe("predictor_two_stage.ckpt") if "two_stage" in cfg.estimators else None,
        predictor_cnn_only=maybe("predictor_cnn_only.ckpt") if "cnn_only" in cfg.estimators else None,
        round_predictions=cfg.round_predictions,
    )
    reports = run_experiment(records, exp)
    write_report(reports, cfg.path("report.csv"))
    print(f"{'estimator':<14}{'SNR dB':>8}{'range m':>12}{'vel m/s':>12}{'ref m':>10}{'ref m/s':>11}")
    for r in reports:
        ref_r, ref_v = r.published_reference
        print(
            f"{r.estimator:<14}{r.snr_db:>8g}{r.range_rmse_m:>12.3f}{r.velocity_rmse_mps:>12.3f}"
            f"{'' if ref_r is None else f'{ref_r:g}':>10}{'' if ref_v is None else f'{ref_v:g}':>11}"
        )
    if cfg.assert_oracles:
        failures = check_oracles(reports)
        for msg in failures:
            print(f"ORACLE FAIL: {msg}", file=sys.stderr)
        if failures:
            return EXIT_ORACLE
    return EXIT_OK


def check_oracles(reports) -> list[str]:
    """Comparative checks: denoiser helps at -20 dB; two-stage improves with SNR."""
    by = {(r.estimator, r.snr_db): r for r in reports}
    failures = []
    two, cnn = by.get(("two_stage", -20.0)), by.get(("cnn_only", -20.0))
    if two and cnn and two.range_rmse_m > cnn.range_rmse_m:
        failures.append(f"two_stage range RMSE {two.range_rmse_m:.2f} m > cnn_only {cnn.range_rmse_m:.2f} m at -20 dB")
    hi = by.get(("two_stage", -15.0))
    if two and hi:
        if hi.range_rmse_m > two.range_rmse_m:
            failures.append(f"two_stage range RMSE rises from -20 dB ({two.range_rmse_m:.2f}) to -15 dB ({hi.range_rmse_m:.2f})")
        if hi.velocity_rmse_mps > two.velocity_rmse_mps:
            failures.append(f"two_stage velocity RMSE rises from -20 dB ({two.velocity_rmse_mps:.2f}) to -15 dB ({hi.velocity_rmse_mps:.2f})")
    return failures


def cmd_heatmap(cfg: RunConfig, dataset_path: str, index: int, out: str, scene: str | None = None) -> int:
    p = cfg.frame
    if scene:
        from .channel import Target, TargetSet
        from .modem import map_probe_symbols

        cells = [tuple(int(v) for v in item.split(":")) for item in scene.split(",")]
        targets = TargetSet(Target(l, k, 1.0 / np.sqrt(len(cells))) for l, k in cells)
        for t in targets:
            t.check(p)
        probe = map_probe_symbols(p, cfg.seed)
        clean = ds.simulate_correlation(p, targets, probe, cfg.clean_snr_db, cfg.seed, stream=ds._rng.NOISE_CLEAN)
        corrupted = ds.simulate_correlation(p, targets, probe, cfg.snr_db, cfg.seed)
    else:
        _require(Path(dataset_path))
        header, records = ds.read_dataset(dataset_path)
        if not 0 <= index < len(records):
            raise ConfigError(f"sample index {index} outside [0, {len(records) - 1}]")
        rec = records[index]
        p = FrameParams(header.M, header.N, cfg.delta_f, cfg.f_c)
        _, corrupted, clean = ds.simulate_pair(p, header.P, float(rec.snr_db), header.clean_snr_db, rec.seed)
        if not np.allclose(ds.normalize_map(clean), rec.clean, atol=1e-5):
            raise RuntimeError(f"sample {index} does not regenerate from its seed; was it written by another version?")
    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    for name, v in (("clean", clean), ("corrupted", corrupted)):
        write_heatmap_csv(v, f"{out}_{name}.csv")
        write_pgm(v, f"{out}_{name}.pgm")
    print(f"wrote {out}_clean.csv/.pgm and {out}_corrupted.csv/.pgm ({p.N} rows = Doppler, {p.M} cols = delay)")
    return EXIT_OK


def cmd_grad_check(cfg: RunConfig, tolerance: float = 1e-4) -> int:
    rng = np.random.default_rng(cfg.seed)
    checks = {
        "conv2d": (nn.Sequential([nn.Conv2d(2, 3, 3, 1, 1, rng)]), (2, 2, 5, 5)),
        "conv2d_stride2": (nn.Sequential([nn.Conv2d(2, 3, 4, 2, 1, rng)]), (2, 2, 6, 6)),
        "batchnorm2d": (nn.Sequential([nn.BatchNorm2d(2)]), (3, 2, 4, 4)),
        "dense": (nn.Sequential([nn.Flatten(), nn.Dense(8, 3, rng)]), (2, 2, 2, 2)),
        "relu": (nn.Sequential([nn.ReLU()]), (2, 2, 3, 3)),
        "leaky_relu": (nn.Sequential([nn.LeakyReLU(0.2)]), (2, 2, 3, 3)),
        "tanh": (nn.Sequential([nn.Tanh()]), (2, 2, 3, 3)),
        "sigmoid": (nn.Sequential([nn.Sigmoid()]), (2, 2, 3, 3)),
        "maxpool2d": (nn.Sequential([nn.MaxPool2d(2)]), (2, 2, 5, 5)),
        "generator": (models.build_generator(cfg.seed, widths=(3, 4), size=8), (3, 1, 8, 8)),
        "discriminator": (models.build_discriminator(cfg.seed, widths=(3, 4, 5)), (3, 1, 28, 28)),
        "predictor": (models.build_predictor(cfg.targets, cfg.seed, widths=(2, 3, 4), hidden=(8, 6)), (3, 1, 28, 28)),
    }
    worst = 0.0
    for name, (net, shape) in checks.items():
        for layer in net.layers:
            for k in layer.params:
                layer.params[k] = layer.params[k] + rng.normal(scale=0.3, size=layer.params[k].shape)
        x = rng.normal(size=shape)
        net.astype(np.float64)
        y = net.forward(x)
        if name == "discriminator":
            loss, label = nn.bce_loss, (rng.random(y.shape) > 0.5).astype(float)
        else:
            loss, label = nn.mse_loss, rng.normal(size=y.shape)
        err = nn.grad_check(net, x, loss, label)
        worst = max(worst, err)
        print(f"{name:<16} {err:.3e} {'ok' if err < tolerance else 'FAIL'}")
    return EXIT_OK if worst < tolerance else EXIT_ORACLE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otfs-sense", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workdir", help="directory for datasets, checkpoints and reports")
        sp.add_argument("--desk-scale", action="store_true", help="2000 train / 500 test samples")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
        return sp

    common(sub.add_parser("generate", help="write train/test datasets"))
    for verb in ("train-gan", "train-cnn"):
        sp = common(sub.add_parser(verb, help=f"{verb.split('-')[1].upper()} training"))
        sp.add_argument("--resume", action="store_true", help="continue from the last saved epoch")
    sub.choices["train-cnn"].add_argument(
        "--mode", choices=("auto", "two_stage", "cnn_only"), default="auto",
        help="train on denoised maps (two_stage) or raw corrupted maps (cnn_only); auto picks two_stage when a generator checkpoint exists",
    )
    sp = common(sub.add_parser("evaluate", help="RMSE report over the SNR grid"))
    sp.add_argument("--snr-grid", help="comma-separated SNR points in dB")
    sp.add_argument("--estimators", help=f"comma-separated subset of {','.join(ESTIMATORS)}")
    sp.add_argument("--assert", dest="assert_oracles", action="store_true", help="exit 3 if a comparative oracle fails")
    sp = common(sub.add_parser("heatmap", help="export |V| maps as CSV and PGM"))
    sp.add_argument("dataset", nargs="?", help="OTFSDD1 dataset file")
    sp.add_argument("index", nargs="?", type=int, default=0)
    sp.add_argument("--out", required=True, help="output prefix")
    sp.add_argument("--scene", help="explicit targets as delay:doppler pairs, e.g. 2:10,7:17 (ignores dataset)")
    common(sub.add_parser("grad-check", help="finite-difference check of every layer kind and architecture"))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args)
        if getattr(args, "assert_oracles", False):
            cfg = replace(cfg, assert_oracles=True)
        if args.verb == "generate":
            return cmd_generate(cfg)
        if args.verb == "train-gan":
            return cmd_train_gan(cfg, args.resume)
        if args.verb == "train-cnn":
            return cmd_train_cnn(cfg, args.mode, args.resume)
        if args.verb == "evaluate":
            return cmd_evaluate(cfg)
        if args.verb == "heatmap":
            if not args.scene and not args.dataset:
                raise ConfigError("heatmap needs a dataset path or --scene")
            return cmd_heatmap(cfg, args.dataset, args.index, args.out, args.scene)
        return cmd_grad_check(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, ds.DatasetError, nn.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
