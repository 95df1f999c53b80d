"""Acceptance gate: every headline capability runs at its stated tolerance.

Each criterion prints one [PASS]/[FAIL] line (visible with pytest -s). The
two parametric reduced-order benchmarks train for 100 epochs each and run
concurrently in subprocesses; expect the whole module to take tens of
minutes on a small CPU.
"""

import json
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from shredkit.data import (MobileSensor, ShredDataManager,
                           build_lagged_sequences)
from shredkit.engine import ShredEngine
from shredkit.forecast import SindyForecaster, SindyLibrarySpec, sindy_fit, \
    sindy_forecast, sindy_threshold
from shredkit.linalg import FourierTruncation, fourier_reconstruct, \
    fourier_truncate, randomized_svd
from shredkit.model import ShredModel, TrainConfig
from shredkit.synthetic import traveling_wave

from oracles import (finite_difference_gradients, jacobi_svd,
                     max_relative_error, rk4_trajectory)

TESTS_DIR = Path(__file__).parent


def report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def rom_results(tmp_path_factory):
    """POD and Fourier double-gyre benchmarks, run concurrently."""
    out = tmp_path_factory.mktemp("rom")
    env = dict(os.environ, OPENBLAS_NUM_THREADS="1", OMP_NUM_THREADS="1")
    procs = {}
    for mode in ("pod", "fourier"):
        procs[mode] = subprocess.Popen(
            [sys.executable, str(TESTS_DIR / "rom_runner.py"), mode,
             str(out / f"{mode}.json")],
            env=env, stdout=subprocess.PIPE, stderr=subprocess.STDOUT)
    results = {}
    for mode, proc in procs.items():
        stdout, _ = proc.communicate()
        assert proc.returncode == 0, \
            f"{mode} run failed:\n{stdout.decode(errors='replace')[-2000:]}"
        results[mode] = json.loads((out / f"{mode}.json").read_text())
    return results


@pytest.mark.slow
def test_double_gyre_rom_pod(rom_results):
    r = rom_results["pod"]
    ok = r["u_rel"] <= 0.08 and r["v_rel"] <= 0.09
    report("double-gyre ROM, POD compression", ok,
           f"u rel err {r['u_rel']:.4f} (<= 0.08), v rel err "
           f"{r['v_rel']:.4f} (<= 0.09), {r['minutes']:.1f} min")


@pytest.mark.slow
def test_double_gyre_rom_fourier(rom_results):
    r = rom_results["fourier"]
    pod_u = rom_results["pod"]["u_rel"]
    ok = (r["u_rel"] <= 0.09 and r["v_rel"] <= 0.12
          and pod_u <= r["u_rel"])
    report("double-gyre ROM, Fourier compression", ok,
           f"u rel err {r['u_rel']:.4f} (<= 0.09), v rel err "
           f"{r['v_rel']:.4f} (<= 0.12), POD u {pod_u:.4f} <= Fourier u, "
           f"{r['minutes']:.1f} min")


def test_gradient_correctness():
    worst = 0.0
    for encoder in ("gru", "lstm"):
        for seed in range(5):
            rng = np.random.default_rng(1000 + seed)
            model = ShredModel(2, 3, encoder=encoder, hidden_size=4,
                               num_layers=1, decoder_hidden=(6,),
                               activation="tanh", seed=seed)
            x = rng.standard_normal((4, 5, 2)) * 0.8
            y = rng.standard_normal((4, 3))
            _, _, analytic = model.loss_and_gradients(x, y)
            numeric = finite_difference_gradients(
                lambda m=model, a=x, b=y: m.loss(a, b), model.parameters())
            worst = max(worst, max_relative_error(analytic, numeric))
    report("gradient correctness (10 models, GRU+LSTM)", worst <= 1e-4,
           f"max relative error {worst:.2e} (<= 1e-4)")


def test_sindy_recovery_oracle():
    # rotation dz/dt = [[0,1],[-1,0]] z
    a = np.array([[0.0, 1.0], [-1.0, 0.0]])
    z_rot = np.vstack([[1.0, 0.0],
                       rk4_trajectory(lambda s: a @ s, [1.0, 0.0], 0.01, 999)])
    rot = sindy_threshold(
        sindy_fit(z_rot, 0.01, SindyLibrarySpec(dim=2, poly_order=2)), 0.05)
    expected_rot = np.zeros_like(rot.coeffs, dtype=bool)
    expected_rot[1:3] = [[False, True], [True, False]]
    rot_support = np.array_equal(rot.coeffs != 0.0, expected_rot)
    rot_close = np.max(np.abs(rot.coeffs[1:3].T - a)) <= 1e-2

    # scalar decay dz/dt = -z
    z_dec = np.vstack([[1.0],
                       rk4_trajectory(lambda s: -s, [1.0], 0.01, 999)])
    dec = sindy_threshold(
        sindy_fit(z_dec, 0.01, SindyLibrarySpec(dim=1, poly_order=2)), 0.05)
    dec_support = np.array_equal(dec.coeffs.ravel() != 0.0,
                                 [False, True, False])
    dec_close = abs(dec.coeffs[1, 0] + 1.0) <= 1e-2

    ok = rot_support and rot_close and dec_support and dec_close
    report("sparse dynamics recovery", ok,
           f"rotation support {rot_support}, max coeff err "
           f"{np.max(np.abs(rot.coeffs[1:3].T - a)):.1e}; decay support "
           f"{dec_support}, coeff {dec.coeffs[1, 0]:.4f}")


def test_rk4_order():
    errs = []
    for dt in (0.1, 0.05):
        spec = SindyLibrarySpec(dim=1, poly_order=1)
        coeffs = np.array([[0.0], [-1.0]])
        model = sindy_fit(np.exp(-np.arange(200) * dt)[:, None], dt, spec)
        # use exact coefficients so only the integrator error remains
        model = model.__class__(library=spec, coeffs=coeffs, dt=dt,
                                threshold=0.0,
                                mask=np.ones_like(coeffs, dtype=bool))
        out = sindy_forecast(model, [1.0], int(round(1.0 / dt)))
        errs.append(abs(out[-1, 0] - math.exp(-1.0)))
    ratio = errs[0] / errs[1]
    report("RK4 order (halving dt)", 8.0 <= ratio <= 32.0,
           f"error ratio {ratio:.1f} (within [8, 32])")


def test_randomized_svd_and_fourier_round_trip():
    rng = np.random.default_rng(7)
    a = rng.standard_normal((200, 4)) @ rng.standard_normal((4, 100))
    factors = randomized_svd(a, k=4, seed=11)
    rel = np.linalg.norm(factors.reconstruct() - a) / np.linalg.norm(a)
    _, s_true, _ = jacobi_svd(a)
    sv_err = np.max(np.abs(factors.S - s_true[:4]) / s_true[:4])

    m, n = 12, 10
    trunc = FourierTruncation.create((m, n), max_kx=n // 2, max_ky=m // 2)
    snaps = rng.standard_normal((5, m * n))
    back = fourier_reconstruct(*fourier_truncate(snaps, trunc), trunc)
    fourier_err = np.max(np.abs(back - snaps))

    ok = rel <= 1e-8 and sv_err <= 1e-8 and fourier_err <= 1e-10
    report("randomized SVD + Fourier round trip", ok,
           f"rank-4 rel recon err {rel:.2e} (<= 1e-8, oracle sv err "
           f"{sv_err:.2e}), full-mode round trip {fourier_err:.2e} (<= 1e-10)")


@pytest.fixture(scope="module")
def sensing_run():
    field = traveling_wave((64, 64), 500, speed=0.7, wavelength=32.0)
    circle = MobileSensor(tuple(
        (int(32 + 10 * np.sin(0.35 * t)), int(32 + 10 * np.cos(0.35 * t)))
        for t in range(500)))
    mgr = ShredDataManager(52, 0.8, 0.1, 0.1, seed=0)
    mgr.add_data(field, "wave", sensors=[circle, (16, 48), (50, 9)])
    prepared = mgr.prepare()
    model = ShredModel(mgr.sensor_count, mgr.target_width, encoder="lstm",
                       seed=1)
    model.fit(prepared.train, prepared.val,
              TrainConfig(epochs=20, batch_size=16, lr=5e-3, patience=20,
                          seed=2))
    return field, mgr, model


@pytest.mark.slow
def test_end_to_end_sensing_standin(sensing_run):
    field, mgr, model = sensing_run
    engine = ShredEngine(mgr, model)
    stats = engine.evaluate({"wave": field}, "test")["wave"]
    train_stats = engine.evaluate({"wave": field}, "train")["wave"]
    ok = stats["mean_relative_error"] <= 0.10 \
        and train_stats["mean_relative_error"] <= 0.10
    report("end-to-end sensing stand-in", ok,
           f"test-split mean rel err {stats['mean_relative_error']:.4f} "
           f"(<= 0.10, mobile + stationary sensors, lags 52, 20 epochs; "
           f"train split {train_stats['mean_relative_error']:.4f})")


@pytest.mark.slow
def test_pipeline_identity_against_composed_oracle(sensing_run):
    field, mgr, model = sensing_run
    engine = ShredEngine(mgr, model)
    measurements = mgr.split_measurements("test")
    pipeline = engine.decode(engine.sensor_to_latent(measurements))["wave"]

    # composed oracle: each stage invoked separately, one sample at a time
    scaled = mgr.sensor_scaler.apply(measurements)
    windows, _ = build_lagged_sequences(scaled, mgr.lags)
    codec = mgr.fields[0].codec
    rows = []
    for w in windows:
        latent = model.encode(w)
        decoded = model.decode_latent(latent)
        rows.append(codec.decode(decoded[None])[0])
    oracle = np.stack(rows).reshape(pipeline.shape)
    worst = np.max(np.abs(pipeline - oracle))
    report("pipeline identity vs composed oracle", worst <= 1e-9,
           f"max elementwise deviation {worst:.2e} (<= 1e-9)")


@pytest.mark.slow
def test_sindy_shred_training_run():
    field = traveling_wave((32, 32), 800, speed=0.5, wavelength=32.0)
    mgr = ShredDataManager(70, 0.8, 0.1, 0.1, seed=0)
    mgr.add_data(field, "wave", sensors=[(16, 4), (8, 13), (24, 27)])
    prepared = mgr.prepare()
    forecaster = SindyForecaster(poly_order=1, include_sine=False, dt=0.2,
                                 threshold=0.05)
    model = ShredModel(mgr.sensor_count, mgr.target_width, encoder="gru",
                       forecaster=forecaster, seed=1)
    model.fit(prepared.train, prepared.val,
              TrainConfig(epochs=100, batch_size=16, lr=3e-3, patience=100,
                          seed=2, sindy_regularization=1.0,
                          sindy_thres_epoch=20, sindy_threshold=0.05))
    assert model.hidden_size == 3  # sparse-dynamics default latent size

    coeffs = forecaster.model.coeffs
    thresh_ok = bool(np.all((coeffs == 0.0) | (np.abs(coeffs) >= 0.05)))

    engine = ShredEngine(mgr, model)
    train_latents = engine.sensor_to_latent(mgr.split_measurements("train"))
    future = engine.forecast_latent(train_latents, 50)
    decoded = engine.decode(future)["wave"]
    truth = field[len(prepared.train):len(prepared.train) + 50]
    rel = float(np.mean(
        np.linalg.norm((decoded - truth).reshape(50, -1), axis=1)
        / np.linalg.norm(truth.reshape(50, -1), axis=1)))
    ok = thresh_ok and rel <= 0.2
    report("sparse-dynamics training run", ok,
           f"all coefficients 0 or >= 0.05: {thresh_ok}; 50-step decoded "
           f"forecast rel err {rel:.4f} (<= 0.2)")


@pytest.mark.slow
def test_train_determinism_byte_identical(tmp_path):
    config = {
        "seed": 7,
        "generate": {"kind": "traveling_wave", "rows": 16, "cols": 24,
                     "steps": 300, "speed": 0.5, "wavelength": 8.0},
        "manager": {"lags": 12, "train_size": 0.8, "val_size": 0.1,
                    "test_size": 0.1},
        "fields": [{"path": str(tmp_path / "data" / "X.shdf"), "id": "X",
                    "sensors": {"kind": "random", "count": 3, "seed": 2}}],
        "model": {"hidden_size": 16, "num_layers": 2,
                  "decoder_hidden": [64, 64]},
        "train": {"epochs": 8, "batch_size": 32, "lr": 1e-3, "patience": 50},
        "out": str(tmp_path / "data"),
    }
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(config))
    env = dict(os.environ)

    def cli(*args):
        proc = subprocess.run([sys.executable, "-m", "shredkit.cli", *args],
                              env=env, capture_output=True)
        assert proc.returncode == 0, proc.stderr.decode(errors="replace")

    cli("generate", "--config", str(cfg_path))
    cli("train", "--config", str(cfg_path), "--out", str(tmp_path / "a"))
    cli("train", "--config", str(cfg_path), "--out", str(tmp_path / "b"))
    same_model = (tmp_path / "a" / "model.bin").read_bytes() == \
        (tmp_path / "b" / "model.bin").read_bytes()
    same_manager = (tmp_path / "a" / "manager.bin").read_bytes() == \
        (tmp_path / "b" / "manager.bin").read_bytes()
    same_report = (tmp_path / "a" / "report.jsonl").read_bytes() == \
        (tmp_path / "b" / "report.jsonl").read_bytes()
    ok = same_model and same_manager and same_report
    report("training determinism", ok,
           f"model bytes identical: {same_model}, manager: {same_manager}, "
           f"report: {same_report}")
