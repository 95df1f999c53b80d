"""Scripting facade over the shredkit core.

Class names and keyword spellings follow the widely used SHRED workflow
(``DataManager``, ``SHRED``, ``SHREDEngine`` and their parametric variants),
so published example scripts run against this core unchanged. Every method
delegates to exactly one core operation; no numerics live here.

Typical flow::

    from shredapi import DataManager, SHRED, SHREDEngine

    manager = DataManager()
    manager.add_data(data=X, id="X", random=3, compress=False)
    train, val, test = manager.prepare()
    shred = SHRED()
    val_errors = shred.fit(train, val)
    engine = SHREDEngine(manager, shred)
"""

from __future__ import annotations

import numpy as np

from shredkit.data import (MobileSensor, RandomSensors, SensorMeasurements,
                           ShredDataManager, SvdCompression)
from shredkit.engine import ShredEngine as _CoreEngine
from shredkit.forecast import LatentSequenceForecaster, SindyForecaster
from shredkit.model import ShredModel, TrainConfig

__all__ = ["DataManager", "ParametricDataManager", "SHRED", "SHREDEngine",
           "ParametricSHREDEngine", "SINDy_Forecaster"]

_SEQUENCE_MODELS = {"LSTM": "lstm", "GRU": "gru"}


def _normalize_sensors(random, mobile, stationary, measurements, seed):
    given = [v is not None for v in (random, mobile, measurements)]
    if sum(given) > 1:
        raise ValueError("pass at most one of random=, mobile=, measurements=")
    if random is not None:
        return RandomSensors(int(random), seed=seed)
    if measurements is not None:
        return SensorMeasurements(np.asarray(measurements, dtype=np.float64))
    sensors = []
    if stationary is not None:
        sensors.extend(tuple(int(c) for c in coords) for coords in stationary)
    if mobile is not None:
        sensors.extend(
            MobileSensor(tuple(tuple(int(c) for c in step) for step in traj))
            for traj in mobile)
    return sensors or None


def _normalize_compress(compress):
    if compress is False or compress is None:
        return None
    if isinstance(compress, (int, np.integer)):
        return SvdCompression(int(compress))
    return compress  # core compression spec passed through


class DataManager:
    """Non-parametric data manager: data arrays are (time, *space)."""

    parametric = False

    def __init__(self, lags: int = 20, train_size: float = 0.8,
                 val_size: float = 0.1, test_size: float = 0.1,
                 seed: int = 0):
        self._core = ShredDataManager(lags, train_size, val_size, test_size,
                                      parametric=self.parametric, seed=seed)

    def add_data(self, data, id, random=None, mobile=None, stationary=None,
                 measurements=None, compress=False, seed: int = 0):
        """Register one field.

        ``random=n`` draws n stationary sensors; ``mobile=`` takes a list of
        per-sensor coordinate trajectories (lists of (i, j) tuples);
        ``measurements=`` supplies an external measurement table;
        ``compress=k`` keeps k modes from randomized SVD, ``compress=False``
        trains against the raw field.
        """
        sensors = _normalize_sensors(random, mobile, stationary,
                                     measurements, seed)
        self._core.add_data(data, id, sensors=sensors,
                            compress=_normalize_compress(compress))
        return self

    def prepare(self):
        """Build and return the (train, val, test) datasets."""
        prepared = self._core.prepare()
        return prepared.train, prepared.val, prepared.test

    @property
    def sensor_measurements(self):
        """The live sensor-measurement table; mutate before prepare()."""
        return self._core.measurements

    @sensor_measurements.setter
    def sensor_measurements(self, value):
        self._core.measurements = np.asarray(value, dtype=np.float64)

    # noise-injection snippets commonly use this spelling with +=
    sensor_measurements_df = sensor_measurements

    @property
    def train_sensor_measurements(self):
        return self._core.split_measurements("train")

    @property
    def val_sensor_measurements(self):
        return self._core.split_measurements("val")

    @property
    def test_sensor_measurements(self):
        return self._core.split_measurements("test")


class ParametricDataManager(DataManager):
    """Parametric variant: data arrays are (trajectories, time, *space)."""

    parametric = True


class SINDy_Forecaster:
    """Latent forecaster that discovers a sparse ODE during training."""

    def __init__(self, poly_order: int = 1, include_sine: bool = False,
                 dt: float = 1.0, threshold: float = 0.05):
        self._core = SindyForecaster(poly_order=poly_order,
                                     include_sine=include_sine, dt=dt,
                                     threshold=threshold)

    def equations(self, var: str = "x") -> str:
        return self._core.equations(var)


class SHRED:
    """The sensor-to-state network; architecture is fixed at construction,
    weights are built on the first fit() when the dataset shapes are known."""

    def __init__(self, sequence_model: str = "LSTM",
                 decoder_model: str = "MLP", latent_forecaster=None,
                 hidden_size: int | None = None, num_layers: int = 2,
                 decoder_hidden: tuple[int, ...] = (350, 400),
                 seed: int = 1):
        if sequence_model not in _SEQUENCE_MODELS:
            raise ValueError(f"sequence_model must be one of "
                             f"{sorted(_SEQUENCE_MODELS)}")
        if decoder_model != "MLP":
            raise ValueError("decoder_model must be 'MLP'")
        self.sequence_model = sequence_model
        self.latent_forecaster = latent_forecaster
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        self.decoder_hidden = tuple(decoder_hidden)
        self.seed = seed
        self._core: ShredModel | None = None

    def _forecaster_core(self):
        lf = self.latent_forecaster
        if lf is None:
            return None
        if isinstance(lf, SINDy_Forecaster):
            return lf._core
        if isinstance(lf, str):
            if lf != "LSTM_Forecaster":
                raise ValueError(f"unknown latent_forecaster {lf!r}")
            return LatentSequenceForecaster()
        return lf  # core forecaster object passed through

    def fit(self, train_dataset, val_dataset, num_epochs: int = 20,
            batch_size: int = 64, lr: float = 1e-3, patience=None,
            sindy_regularization: float = 0.0, sindy_thres_epoch: int = 20,
            sindy_threshold: float = 0.05, verbose: bool = False,
            seed: int = 2) -> list[float]:
        """Train and return the per-epoch validation errors."""
        if self._core is None:
            self._core = ShredModel(
                train_dataset.sequences.shape[2],
                train_dataset.targets.shape[1],
                encoder=_SEQUENCE_MODELS[self.sequence_model],
                hidden_size=self.hidden_size, num_layers=self.num_layers,
                decoder_hidden=self.decoder_hidden, seed=self.seed,
                forecaster=self._forecaster_core())
        cfg = TrainConfig(
            epochs=num_epochs, batch_size=batch_size, lr=lr,
            patience=patience if patience is not None else num_epochs,
            seed=seed, sindy_regularization=sindy_regularization,
            sindy_thres_epoch=sindy_thres_epoch,
            sindy_threshold=sindy_threshold, verbose=verbose)
        report = self._core.fit(train_dataset, val_dataset, cfg)
        return report.val_errors

    def evaluate(self, dataset) -> float:
        """Mean squared error on a prepared dataset (scaled target space)."""
        self._require_fit()
        return self._core.evaluate(dataset)

    def _require_fit(self):
        if self._core is None:
            raise ValueError("call fit() before using the model")


class SHREDEngine:
    """Downstream interface: sensors to latents, latents to fields,
    physical-space evaluation."""

    def __init__(self, manager: DataManager, shred: SHRED):
        shred._require_fit()
        self._core = _CoreEngine(manager._core, shred._core)

    def sensor_to_latent(self, measurements):
        return self._core.sensor_to_latent(measurements)

    def forecast_latent(self, seed_latents, horizon: int):
        return self._core.forecast_latent(seed_latents, horizon)

    def decode(self, latents):
        return self._core.decode(latents)

    def evaluate(self, ground_truth: dict, split: str = "test"):
        return self._core.evaluate(ground_truth, split)


class ParametricSHREDEngine(SHREDEngine):
    """Parametric variant; latent forecasting is unavailable here."""
