"""Dataset registration and preparation for sparse-sensor training.

A manager accumulates one or more fields (time-major arrays, or
trajectory-major for the parametric regime), extracts sensor measurements at
stationary or mobile coordinates, fits per-field scale/compress codecs on the
training portion only, and produces lagged train/validation/test datasets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datafile import read_container, write_container
from .linalg import (FourierTruncation, MinMaxScaler, SvdFactors,
                     fourier_reconstruct, fourier_truncate, randomized_svd)

Array = np.ndarray

MANAGER_MAGIC = b"SHDM"


@dataclass(frozen=True)
class RandomSensors:
    """Draw ``count`` stationary sensor locations uniformly without replacement."""

    count: int
    seed: int = 0


@dataclass(frozen=True)
class MobileSensor:
    """One sensor moving along a prescribed trajectory, one coordinate per timestep."""

    trajectory: tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class StationarySensor:
    coords: tuple[int, ...]


@dataclass(frozen=True)
class SensorMeasurements:
    """Externally supplied measurement table, (T, s) or (R, T, s)."""

    table: Array


@dataclass(frozen=True)
class SvdCompression:
    modes: int


@dataclass(frozen=True)
class FourierCompression:
    """Keep 2-D DFT modes with |k| at or below the per-axis cutoffs.

    ``max_kx`` applies along the last spatial axis, ``max_ky`` along the
    first; each retained complex mode contributes a real and an imaginary
    target column.
    """

    max_kx: int
    max_ky: int


class FieldCodec:
    """Scale/compress codec for one field: encode to scaled latent columns,
    decode back to physical space."""

    def __init__(self, spatial_shape: tuple[int, ...],
                 scaler: MinMaxScaler | None,
                 compressor: SvdFactors | FourierTruncation | None):
        self.spatial_shape = spatial_shape
        self.scaler = scaler
        self.compressor = compressor

    @property
    def width(self) -> int:
        if self.compressor is None:
            return int(np.prod(self.spatial_shape))
        if isinstance(self.compressor, SvdFactors):
            return self.compressor.rank
        return 2 * self.compressor.n_retained

    def compress(self, snapshots: Array) -> Array:
        """Raw (unscaled) latent columns for flattened snapshots (N, D)."""
        if self.compressor is None:
            return snapshots
        if isinstance(self.compressor, SvdFactors):
            return snapshots @ self.compressor.V
        real, imag = fourier_truncate(snapshots, self.compressor)
        return np.hstack([real, imag])

    def decompress(self, codes: Array) -> Array:
        if self.compressor is None:
            return codes
        if isinstance(self.compressor, SvdFactors):
            return codes @ self.compressor.V.T
        k = self.compressor.n_retained
        return fourier_reconstruct(codes[:, :k], codes[:, k:], self.compressor)

    def encode(self, snapshots: Array) -> Array:
        return self.scaler.apply(self.compress(snapshots))

    def decode(self, scaled_codes: Array) -> Array:
        return self.decompress(self.scaler.invert(scaled_codes))


@dataclass(frozen=True)
class FieldRecord:
    field_id: str
    spatial_shape: tuple[int, ...]
    codec: FieldCodec
    sensors: tuple
    n_measured: int
    codes: Array  # scaled latent columns, (T, width) or (R, T, width)


@dataclass(frozen=True)
class SplitDataset:
    """Lagged sensor sequences and scaled latent targets for one split."""

    sequences: Array  # (N, lags, s)
    targets: Array    # (N, W)
    indices: Array    # (N,) time index, or (N, 2) (trajectory, time)

    def __len__(self) -> int:
        return len(self.sequences)


@dataclass(frozen=True)
class PreparedDatasets:
    train: SplitDataset
    val: SplitDataset
    test: SplitDataset
    lags: int
    sensor_count: int
    target_width: int
    field_ids: tuple[str, ...]
    field_widths: tuple[int, ...]


def extract_measurements(data: Array, sensors) -> Array:
    """Sample a field at sensor coordinates.

    data is (T, *spatial) or (R, T, *spatial); returns (T, s) or (R, T, s).
    Mobile sensors use their t-th coordinate at time t.
    """
    data = np.asarray(data)
    parametric = False
    spatial_ndim = data.ndim - 1
    sensors = list(sensors)
    # The coordinate length tells parametric (R, T, *spatial) apart from
    # non-parametric (T, *spatial): coordinates index the trailing axes.
    if sensors:
        first = sensors[0]
        coord_len = (len(first.coords) if isinstance(first, StationarySensor)
                     else len(first.trajectory[0]))
        parametric = data.ndim == coord_len + 2
        spatial_ndim = coord_len
    spatial_shape = data.shape[-spatial_ndim:] if spatial_ndim else ()
    time_axis = 1 if parametric else 0
    steps = data.shape[time_axis]

    cols = []
    for sensor in sensors:
        if isinstance(sensor, StationarySensor):
            _check_coords(sensor.coords, spatial_shape)
            idx = (slice(None),) * (time_axis + 1) + tuple(sensor.coords)
            cols.append(data[idx])
        elif isinstance(sensor, MobileSensor):
            traj = sensor.trajectory
            if len(traj) != steps:
                raise ValueError(
                    f"mobile trajectory length {len(traj)} != {steps} timesteps")
            for coords in traj:
                _check_coords(coords, spatial_shape)
            t_idx = np.arange(steps)
            gather = (t_idx,) + tuple(np.array([c[d] for c in traj])
                                      for d in range(len(spatial_shape)))
            if parametric:
                col = data[(slice(None),) + gather]
            else:
                col = data[gather]
            cols.append(col)
        else:
            raise TypeError(f"unsupported sensor {sensor!r}")
    if not cols:
        shape = (data.shape[0], steps, 0) if parametric else (steps, 0)
        return np.zeros(shape)
    return np.stack(cols, axis=-1).astype(np.float64)


def _check_coords(coords, spatial_shape) -> None:
    if len(coords) != len(spatial_shape):
        raise ValueError(
            f"coordinate {coords} has {len(coords)} axes, field has "
            f"{len(spatial_shape)}")
    for c, n in zip(coords, spatial_shape):
        if not 0 <= int(c) < n:
            raise ValueError(f"coordinate {coords} out of bounds for shape "
                             f"{spatial_shape}")


def build_lagged_sequences(measurements: Array, lags: int
                           ) -> tuple[Array, Array]:
    """One length-``lags`` window per timestep, earliest rows padded.

    Window t holds measurements at times t-lags+1 .. t; times before zero
    repeat the first measurement, so every timestep (including t < lags)
    gets a sequence. Returns (T, lags, s) windows and the target time
    indices 0..T-1.
    """
    measurements = np.atleast_2d(np.asarray(measurements, dtype=np.float64))
    steps = measurements.shape[0]
    if steps < 1:
        raise ValueError("need at least one measurement row")
    if lags < 1:
        raise ValueError("lags must be at least 1")
    padded = np.vstack([np.repeat(measurements[:1], lags - 1, axis=0),
                        measurements])
    windows = np.stack([padded[t:t + lags] for t in range(steps)])
    return windows, np.arange(steps)


class ShredDataManager:
    """Accumulates fields and produces train/validation/test datasets.

    Non-parametric: data is (T, *spatial), split contiguously in time (train
    earliest) so no target leaks across splits through the lagged windows.
    Parametric: data is (R, T, *spatial) and whole trajectories are assigned
    to splits at random using the manager seed.
    """

    def __init__(self, lags: int, train_size: float, val_size: float,
                 test_size: float, parametric: bool = False, seed: int = 0):
        if lags < 1:
            raise ValueError("lags must be at least 1")
        for name, frac in (("train_size", train_size), ("val_size", val_size),
                           ("test_size", test_size)):
            if frac <= 0:
                raise ValueError(f"{name} must be positive")
        total = train_size + val_size + test_size
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split fractions sum to {total}, expected 1")
        self.lags = lags
        self.train_size = train_size
        self.val_size = val_size
        self.test_size = test_size
        self.parametric = parametric
        self.seed = seed
        self.fields: list[FieldRecord] = []
        self.measurements: Array | None = None
        self._n_steps: int | None = None
        self._n_traj: int | None = None
        self._traj_split: dict[str, Array] | None = None

    # split bookkeeping

    def _split_counts(self, total: int) -> tuple[int, int, int]:
        n_train = int(np.floor(self.train_size * total))
        n_val = int(np.floor(self.val_size * total))
        n_test = total - n_train - n_val
        if min(n_train, n_val, n_test) < 1:
            raise ValueError(
                f"split of {total} into {self.train_size}/{self.val_size}/"
                f"{self.test_size} leaves an empty partition")
        return n_train, n_val, n_test

    def time_split(self) -> dict[str, Array]:
        """Contiguous time ranges per split (non-parametric)."""
        n_train, n_val, n_test = self._split_counts(self._n_steps)
        return {"train": np.arange(n_train),
                "val": np.arange(n_train, n_train + n_val),
                "test": np.arange(n_train + n_val, self._n_steps)}

    def trajectory_split(self) -> dict[str, Array]:
        """Whole-trajectory assignment per split (parametric)."""
        if self._traj_split is None:
            n_train, n_val, _ = self._split_counts(self._n_traj)
            rng = np.random.Generator(np.random.PCG64(self.seed))
            perm = rng.permutation(self._n_traj)
            self._traj_split = {
                "train": np.sort(perm[:n_train]),
                "val": np.sort(perm[n_train:n_train + n_val]),
                "test": np.sort(perm[n_train + n_val:]),
            }
        return self._traj_split

    def _train_rows(self):
        """Row selector for the training portion of a (T, ...) or (R, T, ...) stack."""
        if self.parametric:
            return self.trajectory_split()["train"]
        return self.time_split()["train"]

    # registration

    def add_data(self, data, field_id: str, sensors=None, compress=None
                 ) -> "ShredDataManager":
        """Register one field, fit its codec, and record its sensors.

        sensors may be RandomSensors, a list of coordinate tuples /
        MobileSensor entries, a SensorMeasurements table, or None (the field
        then contributes targets only). compress may be None,
        SvdCompression, or FourierCompression.
        """
        if any(f.field_id == field_id for f in self.fields):
            raise ValueError(f"duplicate field id {field_id!r}")
        data = np.asarray(data, dtype=np.float64)
        min_ndim = 3 if self.parametric else 2
        if data.ndim < min_ndim:
            raise ValueError(
                f"{'parametric ' if self.parametric else ''}data needs at "
                f"least {min_ndim} axes, got {data.ndim}")
        if not np.all(np.isfinite(data)):
            raise ValueError(f"field {field_id!r} contains non-finite values")

        if self.parametric:
            n_traj, n_steps = data.shape[0], data.shape[1]
            spatial_shape = data.shape[2:]
            if self._n_traj is not None and n_traj != self._n_traj:
                raise ValueError(
                    f"trajectory count {n_traj} != {self._n_traj} of earlier fields")
            self._n_traj = n_traj
        else:
            n_steps = data.shape[0]
            spatial_shape = data.shape[1:]
        if self._n_steps is not None and n_steps != self._n_steps:
            raise ValueError(
                f"time length {n_steps} != {self._n_steps} of earlier fields")
        self._n_steps = n_steps

        sensor_list, table = self._resolve_sensors(data, spatial_shape, sensors)
        codec, codes = self._fit_codec(data, spatial_shape, compress, field_id)

        self.fields.append(FieldRecord(
            field_id=field_id, spatial_shape=spatial_shape, codec=codec,
            sensors=tuple(sensor_list), n_measured=table.shape[-1],
            codes=codes))
        if self.measurements is None:
            self.measurements = table
        else:
            self.measurements = np.concatenate([self.measurements, table],
                                               axis=-1)
        return self

    def _resolve_sensors(self, data, spatial_shape, sensors):
        if sensors is None:
            shape = ((self._n_traj, self._n_steps, 0) if self.parametric
                     else (self._n_steps, 0))
            return [], np.zeros(shape)
        if isinstance(sensors, SensorMeasurements):
            table = np.asarray(sensors.table, dtype=np.float64)
            expect_ndim = 3 if self.parametric else 2
            if table.ndim != expect_ndim:
                raise ValueError(
                    f"measurement table needs {expect_ndim} axes, got {table.ndim}")
            lead = table.shape[:-1]
            want = ((self._n_traj, self._n_steps) if self.parametric
                    else (self._n_steps,))
            if lead != want:
                raise ValueError(
                    f"measurement table leading shape {lead} != {want}")
            if not np.all(np.isfinite(table)):
                raise ValueError("measurement table contains non-finite values")
            return [], table
        if isinstance(sensors, RandomSensors):
            grid = int(np.prod(spatial_shape))
            if not 1 <= sensors.count <= grid:
                raise ValueError(
                    f"cannot draw {sensors.count} sensors from {grid} grid points")
            rng = np.random.Generator(np.random.PCG64(sensors.seed))
            flat = rng.choice(grid, size=sensors.count, replace=False)
            coords = np.unravel_index(flat, spatial_shape)
            sensor_list = [StationarySensor(tuple(int(c[i]) for c in coords))
                           for i in range(sensors.count)]
        else:
            sensor_list = []
            for item in sensors:
                if isinstance(item, (StationarySensor, MobileSensor)):
                    sensor_list.append(item)
                elif isinstance(item, tuple) and all(
                        isinstance(c, (int, np.integer)) for c in item):
                    sensor_list.append(StationarySensor(tuple(map(int, item))))
                else:
                    sensor_list.append(MobileSensor(
                        tuple(tuple(map(int, c)) for c in item)))
        table = extract_measurements(data, sensor_list)
        return sensor_list, table

    def _fit_codec(self, data, spatial_shape, compress, field_id):
        width = int(np.prod(spatial_shape))
        if self.parametric:
            snaps = data.reshape(self._n_traj, self._n_steps, width)
            train_snaps = snaps[self._train_rows()].reshape(-1, width)
            flat = snaps.reshape(-1, width)
        else:
            flat = data.reshape(self._n_steps, width)
            train_snaps = flat[self._train_rows()]

        if compress is None:
            compressor = None
        elif isinstance(compress, SvdCompression):
            k = compress.modes
            if not 1 <= k <= min(train_snaps.shape):
                raise ValueError(
                    f"svd modes {k} out of range for training snapshots "
                    f"{train_snaps.shape}")
            compressor = randomized_svd(train_snaps, k,
                                        seed=self.seed + len(self.fields))
        elif isinstance(compress, FourierCompression):
            if len(spatial_shape) != 2:
                raise ValueError("fourier compression needs a 2-D grid, got "
                                 f"shape {spatial_shape}")
            compressor = FourierTruncation.create(
                spatial_shape, compress.max_kx, compress.max_ky)
        else:
            raise TypeError(f"unsupported compress spec {compress!r}")

        codec = FieldCodec(spatial_shape, scaler=None, compressor=compressor)
        raw_codes = codec.compress(flat)
        train_raw = (raw_codes.reshape(self._n_traj, self._n_steps, -1)
                     [self._train_rows()].reshape(-1, raw_codes.shape[-1])
                     if self.parametric else raw_codes[self._train_rows()])
        codec.scaler = MinMaxScaler.fit(train_raw)
        codes = codec.scaler.apply(raw_codes)
        if self.parametric:
            codes = codes.reshape(self._n_traj, self._n_steps, -1)
        return codec, codes

    # noise and measurement views

    def inject_noise(self, std: float, seed: int = 0) -> None:
        """Add i.i.d. Gaussian noise to the stored sensor-measurement table.

        Call after add_data and before prepare so the noisy measurements
        flow into the datasets (and the sensor scaler).
        """
        if std < 0:
            raise ValueError("noise std must be nonnegative")
        if self.measurements is None or self.measurements.shape[-1] == 0:
            raise ValueError("no sensor measurements to perturb")
        rng = np.random.Generator(np.random.PCG64(seed))
        self.measurements = self.measurements + rng.normal(
            0.0, std, size=self.measurements.shape)

    @property
    def sensor_count(self) -> int:
        return 0 if self.measurements is None else self.measurements.shape[-1]

    @property
    def target_width(self) -> int:
        return sum(f.codec.width for f in self.fields)

    @property
    def field_ids(self) -> tuple[str, ...]:
        return tuple(f.field_id for f in self.fields)

    @property
    def field_widths(self) -> tuple[int, ...]:
        return tuple(f.codec.width for f in self.fields)

    def split_measurements(self, split: str) -> Array:
        """Raw measurement rows of one split ('train' | 'val' | 'test')."""
        if self.measurements is None:
            raise ValueError("no fields registered")
        if self.parametric:
            return self.measurements[self.trajectory_split()[split]]
        return self.measurements[self.time_split()[split]]

    # dataset assembly

    def prepare(self) -> PreparedDatasets:
        """Build the train/validation/test datasets.

        Sensor measurements are min-max scaled with a scaler fitted on the
        training portion, windows are built per timestep (per trajectory in
        the parametric regime, padding restarting at each trajectory start),
        and targets concatenate every field's scaled latent columns in
        registration order.
        """
        if not self.fields:
            raise ValueError("no fields registered")
        if self.sensor_count == 0:
            raise ValueError("no sensors anywhere; add at least one sensed field")

        if self.parametric:
            split = self.trajectory_split()
            train_rows = self.measurements[split["train"]].reshape(
                -1, self.sensor_count)
        else:
            split = self.time_split()
            train_rows = self.measurements[split["train"]]
        self.sensor_scaler = MinMaxScaler.fit(train_rows)

        targets = np.concatenate(
            [f.codes for f in self.fields], axis=-1)

        if self.parametric:
            scaled = np.stack([self.sensor_scaler.apply(m)
                               for m in self.measurements])
            windows = np.stack([build_lagged_sequences(m, self.lags)[0]
                                for m in scaled])
            datasets = {}
            for name, rows in split.items():
                seqs = windows[rows].reshape(-1, self.lags, self.sensor_count)
                tgts = targets[rows].reshape(-1, self.target_width)
                idx = np.array([(r, t) for r in rows
                                for t in range(self._n_steps)])
                datasets[name] = SplitDataset(seqs, tgts, idx)
        else:
            scaled = self.sensor_scaler.apply(self.measurements)
            windows, _ = build_lagged_sequences(scaled, self.lags)
            datasets = {}
            for name, rows in split.items():
                datasets[name] = SplitDataset(windows[rows], targets[rows],
                                              rows.copy())
        return PreparedDatasets(
            train=datasets["train"], val=datasets["val"], test=datasets["test"],
            lags=self.lags, sensor_count=self.sensor_count,
            target_width=self.target_width, field_ids=self.field_ids,
            field_widths=self.field_widths)

    # state persistence (codecs, sensors, splits, measurement table)

    def save(self, path) -> None:
        """Persist the full manager state as one binary container.

        Reruns from identical inputs write byte-identical files, so trained
        pipelines can be checked for reproducibility at the file level.
        """
        meta: dict = {
            "lags": self.lags, "train_size": self.train_size,
            "val_size": self.val_size, "test_size": self.test_size,
            "parametric": self.parametric, "seed": self.seed,
            "n_steps": self._n_steps, "n_traj": self._n_traj,
            "traj_split": None if self._traj_split is None else
            {k: v.tolist() for k, v in self._traj_split.items()},
            "has_sensor_scaler": hasattr(self, "sensor_scaler"),
            "fields": [],
        }
        arrays: list[Array] = [
            self.measurements if self.measurements is not None
            else np.zeros((0, 0))]
        if meta["has_sensor_scaler"]:
            arrays.extend([self.sensor_scaler.mins, self.sensor_scaler.ranges])
        for rec in self.fields:
            sensors = []
            for s in rec.sensors:
                if isinstance(s, StationarySensor):
                    sensors.append({"type": "stationary",
                                    "coords": list(s.coords)})
                else:
                    sensors.append({"type": "mobile",
                                    "trajectory": [list(c)
                                                   for c in s.trajectory]})
            comp = rec.codec.compressor
            if comp is None:
                comp_meta = None
            elif isinstance(comp, SvdFactors):
                comp_meta = {"kind": "svd"}
            else:
                comp_meta = {"kind": "fourier", "shape": list(comp.shape),
                             "max_kx": comp.max_kx, "max_ky": comp.max_ky}
            meta["fields"].append({
                "id": rec.field_id, "spatial_shape": list(rec.spatial_shape),
                "n_measured": rec.n_measured, "sensors": sensors,
                "compressor": comp_meta,
            })
            arrays.extend([rec.codec.scaler.mins, rec.codec.scaler.ranges,
                           rec.codes])
            if isinstance(comp, SvdFactors):
                arrays.extend([comp.U, comp.S, comp.V])
        write_container(path, MANAGER_MAGIC, meta, arrays)

    @classmethod
    def load(cls, path) -> "ShredDataManager":
        meta, arrays = read_container(path, MANAGER_MAGIC)
        mgr = cls(meta["lags"], meta["train_size"], meta["val_size"],
                  meta["test_size"], parametric=meta["parametric"],
                  seed=meta["seed"])
        mgr._n_steps = meta["n_steps"]
        mgr._n_traj = meta["n_traj"]
        if meta["traj_split"] is not None:
            mgr._traj_split = {k: np.asarray(v, dtype=int)
                               for k, v in meta["traj_split"].items()}
        cursor = 0
        mgr.measurements = arrays[cursor]
        cursor += 1
        if meta["has_sensor_scaler"]:
            mgr.sensor_scaler = MinMaxScaler(mins=arrays[cursor],
                                             ranges=arrays[cursor + 1])
            cursor += 2
        for fmeta in meta["fields"]:
            scaler = MinMaxScaler(mins=arrays[cursor],
                                  ranges=arrays[cursor + 1])
            codes = arrays[cursor + 2]
            cursor += 3
            comp_meta = fmeta["compressor"]
            if comp_meta is None:
                compressor = None
            elif comp_meta["kind"] == "svd":
                compressor = SvdFactors(U=arrays[cursor], S=arrays[cursor + 1],
                                        V=arrays[cursor + 2])
                cursor += 3
            else:
                compressor = FourierTruncation.create(
                    tuple(comp_meta["shape"]), comp_meta["max_kx"],
                    comp_meta["max_ky"])
            sensors = []
            for s in fmeta["sensors"]:
                if s["type"] == "stationary":
                    sensors.append(StationarySensor(tuple(s["coords"])))
                else:
                    sensors.append(MobileSensor(
                        tuple(tuple(c) for c in s["trajectory"])))
            codec = FieldCodec(tuple(fmeta["spatial_shape"]), scaler,
                               compressor)
            mgr.fields.append(FieldRecord(
                field_id=fmeta["id"],
                spatial_shape=tuple(fmeta["spatial_shape"]), codec=codec,
                sensors=tuple(sensors), n_measured=fmeta["n_measured"],
                codes=codes))
        return mgr
