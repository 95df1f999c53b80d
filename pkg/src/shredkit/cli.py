"""Command-line front end: generate data, train, reconstruct, forecast,
evaluate, and export discovered latent equations.

Every subcommand takes --config (a JSON file, schema-checked before any
compute), an optional --seed that overrides the config's master seed, and
--out for artifacts. Exit codes: 0 success, 2 config error, 3 data error,
4 numeric failure, 5 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, validate_config
from .data import (FourierCompression, MobileSensor, RandomSensors,
                   SensorMeasurements, ShredDataManager, SvdCompression)
from .datafile import dataset_checksum, read_dataset, write_dataset
from .engine import ShredEngine
from .forecast import (DivergenceError, LatentSequenceForecaster,
                       SindyForecaster, coefficient_rows)
from .model import NumericalError, ShredModel, TrainConfig
from .synthetic import (DoubleGyreParams, double_gyre, double_gyre_ensemble,
                        sample_parameters, traveling_wave)

MODEL_FILE = "model.bin"
MANAGER_FILE = "manager.bin"
REPORT_FILE = "report.jsonl"
EQUATIONS_FILE = "equations.txt"
COEFFICIENTS_FILE = "coefficients.csv"


def _load_config(args) -> dict:
    path = Path(args.config)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    if args.seed is not None:
        raw["seed"] = args.seed
    cfg = validate_config(raw)
    cfg["_dir"] = path.parent
    return cfg


def _out_dir(cfg, args) -> Path:
    out = Path(args.out) if args.out else Path(cfg.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve(cfg, rel: str) -> Path:
    p = Path(rel)
    return p if p.is_absolute() else cfg["_dir"] / p


def _require(cfg, key: str) -> dict:
    if cfg.get(key) is None:
        raise ConfigError(f"config: this command needs a {key!r} section")
    return cfg[key]


def _build_sensors(cfg, spec):
    if spec is None:
        return None
    if spec["kind"] == "random":
        return RandomSensors(spec["count"], seed=spec["seed"])
    if spec["kind"] == "explicit":
        sensors: list = [tuple(c) for c in spec["stationary"]]
        sensors.extend(MobileSensor(tuple(tuple(c) for c in traj))
                       for traj in spec["mobile"])
        return sensors
    _, table = read_dataset(_resolve(cfg, spec["path"]))
    return SensorMeasurements(table)


def _build_compress(spec):
    if spec is None:
        return None
    if spec["kind"] == "svd":
        return SvdCompression(spec["modes"])
    return FourierCompression(spec["max_kx"], spec["max_ky"])


def _build_manager(cfg) -> tuple[ShredDataManager, dict]:
    mspec = _require(cfg, "manager")
    fields = _require(cfg, "fields")
    mgr = ShredDataManager(mspec["lags"], mspec["train_size"],
                           mspec["val_size"], mspec["test_size"],
                           parametric=mspec["parametric"],
                           seed=mspec["seed"])
    truth = {}
    for fld in fields:
        _, data = read_dataset(_resolve(cfg, fld["path"]))
        truth[fld["id"]] = data
        mgr.add_data(data, fld["id"], sensors=_build_sensors(cfg, fld["sensors"]),
                     compress=_build_compress(fld["compress"]))
    if cfg["noise"] is not None:
        mgr.inject_noise(cfg["noise"]["std"], seed=cfg["noise"]["seed"])
    return mgr, truth


def _build_forecaster(spec):
    if spec is None:
        return None
    if spec["kind"] == "sindy":
        return SindyForecaster(poly_order=spec["poly_order"],
                               include_sine=spec["include_sine"],
                               dt=spec["dt"], threshold=spec["threshold"])
    return LatentSequenceForecaster(window=spec["window"],
                                    hidden_size=spec["hidden_size"],
                                    epochs=spec["epochs"], lr=spec["lr"])


def _build_model(cfg, mgr) -> ShredModel:
    mspec = cfg["model"]
    return ShredModel(mgr.sensor_count, mgr.target_width,
                      encoder=mspec["sequence"],
                      hidden_size=mspec["hidden_size"],
                      num_layers=mspec["num_layers"],
                      decoder_hidden=tuple(mspec["decoder_hidden"]),
                      activation=mspec["activation"], seed=mspec["seed"],
                      forecaster=_build_forecaster(mspec["latent_forecaster"]))


def _load_checkpoint(args) -> tuple[ShredDataManager, ShredModel]:
    ckpt = Path(args.checkpoint)
    model = ShredModel.load(ckpt / MODEL_FILE)
    mgr = ShredDataManager.load(ckpt / MANAGER_FILE)
    return mgr, model


def _write_equations(model, out: Path) -> None:
    forecaster = model.forecaster
    (out / EQUATIONS_FILE).write_text(forecaster.equations() + "\n")
    rows = coefficient_rows(forecaster.model)
    with open(out / COEFFICIENTS_FILE, "w") as fh:
        fh.write("term,output,value\n")
        for label, j, value in rows:
            fh.write(f"{label},{j},{value!r}\n")


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    gen = _require(cfg, "generate")
    out = _out_dir(cfg, args)
    written: list[tuple[str, np.ndarray]] = []
    if gen["kind"] == "double_gyre":
        base = DoubleGyreParams(eps=gen["eps"], omega=gen["omega"],
                                nx=gen["nx"], ny=gen["ny"],
                                t_end=gen["t_end"], dt=gen["dt"])
        if gen["trajectories"] > 0:
            seed = gen["seed"] if gen["seed"] is not None else cfg["seed"] + 4
            sample = sample_parameters(gen["trajectories"], gen["eps_range"],
                                       gen["omega_range"], seed=seed)
            u, v = double_gyre_ensemble(sample, base)
            written.append(("mu", sample.pairs))
        else:
            u, v = double_gyre(base)
        written.insert(0, ("V", v))
        written.insert(0, ("U", u))
    else:
        field = traveling_wave((gen["rows"], gen["cols"]), gen["steps"],
                               speed=gen["speed"],
                               wavelength=gen["wavelength"])
        written.append(("X", field))
    for name, data in written:
        path = out / f"{name}.shdf"
        write_dataset(path, name, data)
        print(f"wrote {path} axes={tuple(data.shape)} "
              f"sha256={dataset_checksum(data)}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg, args)
    mgr, _ = _build_manager(cfg)
    prepared = mgr.prepare()
    model = _build_model(cfg, mgr)
    tspec = cfg["train"]
    report = model.fit(prepared.train, prepared.val, TrainConfig(
        epochs=tspec["epochs"], batch_size=tspec["batch_size"],
        lr=tspec["lr"], patience=tspec["patience"], seed=tspec["seed"],
        sindy_regularization=tspec["sindy_regularization"],
        sindy_thres_epoch=tspec["sindy_thres_epoch"],
        sindy_threshold=tspec["sindy_threshold"],
        verbose=tspec["verbose"]))

    model.save(out / MODEL_FILE)
    mgr.save(out / MANAGER_FILE)
    with open(out / REPORT_FILE, "w") as fh:
        for epoch, err in enumerate(report.val_errors, start=1):
            fh.write(json.dumps({"epoch": epoch, "val_mse": err}) + "\n")
        fh.write(json.dumps({"best_epoch": report.best_epoch + 1,
                             "train_mse": report.train_mse,
                             "val_mse": report.val_mse}) + "\n")
    if getattr(model.forecaster, "kind", None) == "sindy" \
            and model.forecaster.model is not None:
        _write_equations(model, out)
    print(f"trained {len(report.val_errors)} epochs; best val mse "
          f"{report.val_mse:.6g} at epoch {report.best_epoch + 1}")
    print(f"wrote {out / MODEL_FILE} and {out / MANAGER_FILE}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    mgr, model = _load_checkpoint(args)
    engine = ShredEngine(mgr, model)
    _, truth = _build_manager_truth_only(cfg)
    split = cfg["evaluate"]["split"]
    report = engine.evaluate(truth, split)
    out = _out_dir(cfg, args)
    (out / f"evaluation_{split}.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(json.dumps(report, sort_keys=True))
    print(f"{'field':<12}{'mse':>14}{'mean_rel_err':>14}"
          f"{'snapshots':>11}{'excluded':>10}")
    for fid, stats in report.items():
        print(f"{fid:<12}{stats['mse']:>14.6g}"
              f"{stats['mean_relative_error']:>14.6g}"
              f"{stats['snapshots']:>11}{stats['excluded_zero_norm']:>10}")
    return 0


def _build_manager_truth_only(cfg) -> tuple[None, dict]:
    fields = _require(cfg, "fields")
    truth = {}
    for fld in fields:
        _, data = read_dataset(_resolve(cfg, fld["path"]))
        truth[fld["id"]] = data
    return None, truth


def cmd_reconstruct(args) -> int:
    cfg = _load_config(args)
    mgr, model = _load_checkpoint(args)
    engine = ShredEngine(mgr, model)
    split = cfg["reconstruct"]["split"]
    recon = engine.reconstruct(split)
    out = _out_dir(cfg, args)
    for fid, data in recon.items():
        path = out / f"{fid}_reconstruction_{split}.shdf"
        write_dataset(path, fid, data)
        print(f"wrote {path} axes={tuple(data.shape)} "
              f"sha256={dataset_checksum(data)}")
    return 0


def cmd_forecast(args) -> int:
    cfg = _load_config(args)
    spec = _require(cfg, "forecast")
    mgr, model = _load_checkpoint(args)
    engine = ShredEngine(mgr, model)
    seed_latents = engine.sensor_to_latent(
        mgr.split_measurements(spec["split"]))
    future = engine.forecast_latent(seed_latents, spec["horizon"])
    out = _out_dir(cfg, args)
    latent_path = out / "latents_forecast.shdf"
    write_dataset(latent_path, "latents", future)
    print(f"wrote {latent_path} axes={tuple(future.shape)}")
    decoded = engine.decode(future) if len(future) else {
        rec.field_id: np.zeros((0, *rec.spatial_shape))
        for rec in mgr.fields}
    for fid, data in decoded.items():
        path = out / f"{fid}_forecast.shdf"
        write_dataset(path, fid, data)
        print(f"wrote {path} axes={tuple(data.shape)}")
    return 0


def cmd_export_equations(args) -> int:
    mgr, model = _load_checkpoint(args)
    if getattr(model.forecaster, "kind", None) != "sindy" \
            or model.forecaster.model is None:
        raise ValueError("checkpoint has no fitted sparse-dynamics "
                         "forecaster to export")
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    _write_equations(model, out)
    print((out / EQUATIONS_FILE).read_text().rstrip())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shredkit",
        description="Sparse-sensor reconstruction and forecasting pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, needs_config=True, needs_checkpoint=False):
        p = sub.add_parser(name)
        if needs_config:
            p.add_argument("--config", required=True,
                           help="path to the JSON run configuration")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config master seed")
        p.add_argument("--out", default=None,
                       help="output directory (default: config 'out' or cwd)")
        if needs_checkpoint:
            p.add_argument("--checkpoint", required=True,
                           help="directory written by 'train'")
        p.set_defaults(func=func)
        return p

    add("generate", cmd_generate)
    add("train", cmd_train)
    add("evaluate", cmd_evaluate, needs_checkpoint=True)
    add("reconstruct", cmd_reconstruct, needs_checkpoint=True)
    add("forecast", cmd_forecast, needs_checkpoint=True)
    add("export-equations", cmd_export_equations, needs_config=False,
        needs_checkpoint=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, DivergenceError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except FileNotFoundError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 5
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 5
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
