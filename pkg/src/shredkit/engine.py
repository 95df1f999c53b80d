"""Downstream pipeline: raw sensor measurements to latents, latents to
decoded physical fields, and end-to-end evaluation in physical space.

An engine pairs a prepared data manager (codecs, sensor scaler, split
bookkeeping) with a trained model. All operations are read-only and safe to
call concurrently. In the parametric regime every trajectory is processed
independently: lag padding restarts at each trajectory start and windows
never straddle trajectories.
"""

from __future__ import annotations

import numpy as np

from .data import ShredDataManager, build_lagged_sequences
from .model import EVAL_CHUNK, ShredModel

Array = np.ndarray


class ShredEngine:
    def __init__(self, manager: ShredDataManager, model: ShredModel):
        if not hasattr(manager, "sensor_scaler"):
            raise ValueError("manager.prepare() must run before building an "
                             "engine (the sensor scaler is fit there)")
        if model.input_size != manager.sensor_count:
            raise ValueError(
                f"model input width {model.input_size} != manager sensor "
                f"count {manager.sensor_count}")
        if model.output_size != manager.target_width:
            raise ValueError(
                f"model output width {model.output_size} != manager target "
                f"width {manager.target_width}")
        self.manager = manager
        self.model = model

    @property
    def parametric(self) -> bool:
        return self.manager.parametric

    # sensors -> latents

    def _encode_series(self, measurements: Array) -> Array:
        scaled = self.manager.sensor_scaler.apply(measurements)
        windows, _ = build_lagged_sequences(scaled, self.manager.lags)
        outs = [self.model.encode(windows[i:i + EVAL_CHUNK])
                for i in range(0, len(windows), EVAL_CHUNK)]
        return np.vstack(outs)

    def sensor_to_latent(self, measurements: Array) -> Array:
        """Latent trajectory for raw measurements, one latent per timestep.

        Accepts (T, s) or, for a parametric engine, (R, T, s); the lagged
        windows repeat the first measurement before t=0 so even the first
        timestep maps to a latent.
        """
        m = np.asarray(measurements, dtype=np.float64)
        if not np.all(np.isfinite(m)):
            raise ValueError("measurements contain non-finite values")
        if self.parametric:
            if m.ndim == 2:  # a single trajectory
                return self._encode_series(m)
            if m.ndim != 3:
                raise ValueError("parametric engine expects (R, T, s) "
                                 f"measurements, got shape {m.shape}")
            return np.stack([self._encode_series(traj) for traj in m])
        if m.ndim != 2:
            raise ValueError(f"expected (T, s) measurements, got shape {m.shape}")
        return self._encode_series(m)

    # latents -> future latents

    def forecast_latent(self, seed_latents: Array, horizon: int) -> Array:
        """Advance the latent state ``horizon`` steps past the seed sequence."""
        if self.parametric:
            raise ValueError("forecasting unsupported in parametric regime")
        forecaster = self.model.forecaster
        if forecaster is None:
            raise ValueError("model has no latent forecaster attached")
        if horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if horizon == 0:
            return np.zeros((0, self.model.hidden_size))
        return forecaster.forecast(seed_latents, horizon)

    # latents -> physical fields

    def decode(self, latents: Array) -> dict[str, Array]:
        """Map latents to physical space: decoder, then per-field unscaling
        and decompression, split by registration order."""
        z = np.asarray(latents, dtype=np.float64)
        lead: tuple[int, ...]
        if self.parametric and z.ndim == 3:
            lead = z.shape[:2]
            z = z.reshape(-1, z.shape[-1])
        elif z.ndim == 2:
            lead = (z.shape[0],)
        else:
            raise ValueError(f"latents must be 2-D (or 3-D parametric), got "
                             f"shape {z.shape}")
        if z.shape[-1] != self.model.hidden_size:
            raise ValueError(f"latent width {z.shape[-1]} != model latent "
                             f"dimension {self.model.hidden_size}")
        outputs = self.model.decode_latent(z) if len(z) <= EVAL_CHUNK else \
            np.vstack([self.model.decode_latent(z[i:i + EVAL_CHUNK])
                       for i in range(0, len(z), EVAL_CHUNK)])
        result: dict[str, Array] = {}
        offset = 0
        for record in self.manager.fields:
            width = record.codec.width
            block = outputs[:, offset:offset + width]
            offset += width
            physical = record.codec.decode(block)
            result[record.field_id] = physical.reshape(
                *lead, *record.spatial_shape)
        return result

    # end-to-end evaluation

    def reconstruct(self, split: str = "test") -> dict[str, Array]:
        """decode(sensor_to_latent(.)) on one split's stored measurements."""
        measurements = self.manager.split_measurements(split)
        return self.decode(self.sensor_to_latent(measurements))

    def evaluate(self, truth: dict[str, Array], split: str = "test"
                 ) -> dict[str, dict]:
        """Physical-space error report per field on one split.

        ``truth`` maps field ids to full ground-truth arrays with the
        registered shapes; the engine selects the split rows itself. Reports
        MSE and the mean relative error (1/N) sum ||psi_n - psi_hat_n|| /
        ||psi_n|| over snapshots; zero-norm snapshots are excluded from the
        relative mean and counted.
        """
        recon = self.reconstruct(split)
        rows = (self.manager.trajectory_split()[split] if self.parametric
                else self.manager.time_split()[split])
        report: dict[str, dict] = {}
        for record in self.manager.fields:
            fid = record.field_id
            if fid not in truth:
                raise ValueError(f"ground truth missing field {fid!r}")
            full = np.asarray(truth[fid], dtype=np.float64)
            expected = ((self.manager._n_traj, self.manager._n_steps)
                        if self.parametric else (self.manager._n_steps,))
            if full.shape != (*expected, *record.spatial_shape):
                raise ValueError(
                    f"ground truth for {fid!r} has shape {full.shape}, "
                    f"expected {(*expected, *record.spatial_shape)}")
            actual = full[rows]
            predicted = recon[fid]
            diff = predicted - actual
            n_snap = int(np.prod(actual.shape[:2])) if self.parametric \
                else actual.shape[0]
            flat_true = actual.reshape(n_snap, -1)
            flat_diff = diff.reshape(n_snap, -1)
            norms = np.linalg.norm(flat_true, axis=1)
            err_norms = np.linalg.norm(flat_diff, axis=1)
            nonzero = norms > 0
            rel = (float(np.mean(err_norms[nonzero] / norms[nonzero]))
                   if nonzero.any() else float("nan"))
            report[fid] = {
                "mse": float(np.mean(flat_diff ** 2)),
                "mean_relative_error": rel,
                "snapshots": n_snap,
                "excluded_zero_norm": int((~nonzero).sum()),
            }
        return report


def vorticity(u: Array, v: Array, dx: float, dy: float) -> Array:
    """w = -du/dy + dv/dx on (T, ny, nx) stacks.

    Central differences in the interior, one-sided at the boundaries
    (numpy.gradient's convention).
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"u shape {u.shape} != v shape {v.shape}")
    if u.ndim != 3:
        raise ValueError(f"expected (T, ny, nx) arrays, got shape {u.shape}")
    if dx <= 0 or dy <= 0:
        raise ValueError("grid spacings must be positive")
    du_dy = np.gradient(u, dy, axis=1)
    dv_dx = np.gradient(v, dx, axis=2)
    return -du_dy + dv_dx
