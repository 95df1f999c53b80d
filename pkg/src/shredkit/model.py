"""Sensor-history-to-state network and its training loop.

A recurrent encoder (GRU or LSTM stack) maps each lagged sensor window to a
latent vector; a feed-forward decoder maps the latent to the scaled,
compressed target vector. Training minimizes mean squared reconstruction
error with Adam over shuffled mini-batches, early-stops on validation error,
and can add a latent-ODE consistency penalty when a sparse-dynamics
forecaster is attached.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .data import SplitDataset
from .forecast import (LatentSequenceForecaster, RecurrentForecaster,
                       SindyForecaster, sindy_consistency,
                       sindy_consistency_grad)
from .nn import Adam, Mlp, RecurrentLayer

Array = np.ndarray

CHECKPOINT_MAGIC = b"SHRD"
CHECKPOINT_VERSION = 1

EVAL_CHUNK = 2048


class NumericalError(RuntimeError):
    """Training aborted because the loss left the finite range."""


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-3
    patience: int = 50
    seed: int = 0
    sindy_regularization: float = 0.0
    sindy_thres_epoch: int = 20
    sindy_threshold: float = 0.05
    verbose: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.sindy_regularization < 0 or self.sindy_threshold < 0:
            raise ValueError("regularization and threshold must be nonnegative")
        if self.sindy_thres_epoch < 1:
            raise ValueError("sindy_thres_epoch must be at least 1")


@dataclass
class TrainReport:
    val_errors: list[float]
    best_epoch: int
    train_mse: float
    val_mse: float


class ShredModel:
    """Recurrent encoder + shallow decoder with optional latent forecaster.

    hidden_size doubles as the latent dimension; it defaults to 64, or to 3
    when a sparse-dynamics forecaster is attached (low-dimensional latents
    keep the discovered ODE interpretable).
    """

    def __init__(self, input_size: int, output_size: int,
                 encoder: str = "lstm", hidden_size: int | None = None,
                 num_layers: int = 2,
                 decoder_hidden: tuple[int, ...] = (350, 400),
                 activation: str = "relu", seed: int = 0, forecaster=None):
        if encoder not in ("gru", "lstm"):
            raise ValueError(f"unknown encoder {encoder!r}")
        if hidden_size is None:
            hidden_size = 3 if getattr(forecaster, "kind", None) == "sindy" \
                else 64
        self.input_size = input_size
        self.output_size = output_size
        self.encoder_kind = encoder
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        self.decoder_hidden = tuple(decoder_hidden)
        self.activation = activation
        self.seed = seed
        self.forecaster = forecaster

        rng = np.random.Generator(np.random.PCG64(seed))
        self.encoder_layers = []
        width = input_size
        for _ in range(num_layers):
            self.encoder_layers.append(
                RecurrentLayer(encoder, width, hidden_size, rng))
            width = hidden_size
        self.decoder = Mlp(hidden_size, self.decoder_hidden, output_size,
                           activation, rng)

    # parameter bookkeeping

    def parameters(self) -> list[Array]:
        params = []
        for layer in self.encoder_layers:
            params.extend(layer.params())
        params.extend(self.decoder.params())
        return params

    def parameter_names(self) -> list[str]:
        names = []
        for i, layer in enumerate(self.encoder_layers):
            names.extend(f"encoder{i}.{n}" for n in layer.param_names())
        names.extend(f"decoder.{n}" for n in self.decoder.param_names())
        return names

    # forward paths

    def _check_sequences(self, sequences: Array) -> Array:
        x = np.asarray(sequences, dtype=np.float64)
        squeeze = x.ndim == 2
        if squeeze:
            x = x[None]
        if x.ndim != 3 or x.shape[2] != self.input_size:
            raise ValueError(
                f"expected sequences (*, lags, {self.input_size}), got "
                f"{np.shape(sequences)}")
        if not np.all(np.isfinite(x)):
            raise ValueError("sequences contain non-finite values")
        return x

    def _encode_batch(self, x: Array) -> tuple[Array, list]:
        out = np.ascontiguousarray(np.swapaxes(x, 0, 1))  # time-major
        caches = []
        for layer in self.encoder_layers:
            out, cache = layer.forward(out)
            caches.append(cache)
        return out[-1], caches

    def encode(self, sequences: Array) -> Array:
        """Latent vector(s) for one (lags, s) window or a (B, lags, s) batch."""
        squeeze = np.ndim(sequences) == 2
        x = self._check_sequences(sequences)
        latent, _ = self._encode_batch(x)
        return latent[0] if squeeze else latent

    def decode_latent(self, latents: Array) -> Array:
        """Decoder output(s) for one latent vector or a batch of them."""
        z = np.asarray(latents, dtype=np.float64)
        squeeze = z.ndim == 1
        if squeeze:
            z = z[None]
        if z.shape[1] != self.hidden_size:
            raise ValueError(f"latent width {z.shape[1]} != {self.hidden_size}")
        y, _ = self.decoder.forward(z)
        return y[0] if squeeze else y

    def forward(self, sequences: Array) -> Array:
        """Full prediction: encode windows, decode latents."""
        return self.decode_latent(self.encode(sequences))

    def predict(self, sequences: Array, chunk: int = EVAL_CHUNK) -> Array:
        """forward() in memory-bounded chunks."""
        x = self._check_sequences(sequences)
        outs = [self.forward(x[i:i + chunk]) for i in range(0, len(x), chunk)]
        return np.vstack(outs)

    # loss and gradients

    def loss(self, sequences: Array, targets: Array, sindy=None,
             sindy_weight: float = 0.0) -> float:
        """Mean squared error plus the weighted latent-ODE consistency term.

        The consistency term treats the batch as a time-ordered latent
        sequence, so it is only meaningful for temporally contiguous batches.
        """
        x = self._check_sequences(sequences)
        y = np.atleast_2d(np.asarray(targets, dtype=np.float64))
        if len(x) == 0:
            raise ValueError("batch must be nonempty")
        latent, _ = self._encode_batch(x)
        pred, _ = self.decoder.forward(latent)
        value = float(np.mean((pred - y) ** 2))
        if sindy is None and getattr(self.forecaster, "kind", None) == "sindy":
            sindy = self.forecaster.model
        if sindy_weight > 0.0 and sindy is not None and len(x) >= 3:
            value += sindy_weight * sindy_consistency(latent, sindy)
        return value

    def loss_and_gradients(self, sequences: Array, targets: Array,
                           sindy_weight: float = 0.0
                           ) -> tuple[float, float, list[Array]]:
        """(total loss, reconstruction mse, gradients) for one batch.

        Gradients follow parameters() order and are exact: backpropagation
        through the decoder, the latent consistency term (when active), and
        the full recurrent unrolling.
        """
        x = self._check_sequences(sequences)
        y = np.atleast_2d(np.asarray(targets, dtype=np.float64))
        if len(x) == 0:
            raise ValueError("batch must be nonempty")

        latent, caches = self._encode_batch(x)
        pred, acts = self.decoder.forward(latent)
        err = pred - y
        mse = float(np.mean(err * err))
        d_pred = 2.0 * err / err.size
        dec_grads, d_latent = self.decoder.backward(d_pred, acts)

        total = mse
        sindy = getattr(self.forecaster, "model", None) \
            if getattr(self.forecaster, "kind", None) == "sindy" else None
        if sindy_weight > 0.0 and sindy is not None and len(x) >= 3:
            value, dz = sindy_consistency_grad(latent, sindy)
            total += sindy_weight * value
            d_latent = d_latent + sindy_weight * dz

        d_out = np.zeros((x.shape[1], len(x), self.hidden_size))
        d_out[-1] = d_latent
        enc_grads: list[Array] = []
        for layer, cache in zip(reversed(self.encoder_layers),
                                reversed(caches)):
            grads, d_out = layer.backward(d_out, cache)
            enc_grads = grads + enc_grads
        return total, mse, enc_grads + dec_grads

    def evaluate(self, dataset: SplitDataset) -> float:
        """Mean squared error over a dataset, in scaled target space."""
        if len(dataset) == 0:
            raise ValueError("dataset must be nonempty")
        pred = self.predict(dataset.sequences)
        return float(np.mean((pred - dataset.targets) ** 2))

    # training

    def fit(self, train: SplitDataset, val: SplitDataset,
            cfg: TrainConfig | None = None) -> TrainReport:
        """Train with Adam, record validation MSE per epoch, early-stop on
        patience, and restore the best-validation weights.

        With a sparse-dynamics forecaster attached, mini-batches are drawn
        as contiguous time blocks (shuffled block order) so the consistency
        term sees uniformly spaced latent sequences; the ODE coefficients
        are refit from the full training latent trajectory after every
        epoch and hard-thresholded every sindy_thres_epoch epochs.
        """
        cfg = cfg or TrainConfig()
        if len(train) == 0 or len(val) == 0:
            raise ValueError("train and validation datasets must be nonempty")
        x_train = np.ascontiguousarray(train.sequences, dtype=np.float64)
        y_train = np.ascontiguousarray(train.targets, dtype=np.float64)
        if x_train.shape[2] != self.input_size:
            raise ValueError(f"dataset sensor width {x_train.shape[2]} != "
                             f"model input width {self.input_size}")
        if y_train.shape[1] != self.output_size:
            raise ValueError(f"dataset target width {y_train.shape[1]} != "
                             f"model output width {self.output_size}")

        sindy = self.forecaster \
            if getattr(self.forecaster, "kind", None) == "sindy" else None
        use_consistency = sindy is not None and cfg.sindy_regularization > 0
        if use_consistency and np.ndim(train.indices) == 2:
            # trajectory-major datasets have no single uniformly spaced time
            # axis for the derivative stencils
            raise ValueError("latent-ODE consistency training needs a "
                             "non-parametric (single-trajectory) dataset")
        if sindy is not None:
            sindy.configure(self.hidden_size, threshold=cfg.sindy_threshold)
            sindy.refit(self._train_latents(x_train))

        params = self.parameters()
        opt = Adam(params, lr=cfg.lr)
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
        n = len(x_train)

        best_val = np.inf
        best_epoch = 0
        best_params = [p.copy() for p in params]
        val_errors: list[float] = []
        stall = 0

        for epoch in range(1, cfg.epochs + 1):
            if use_consistency:
                starts = np.arange(0, n, cfg.batch_size)
                rng.shuffle(starts)
                batches = [np.arange(s, min(s + cfg.batch_size, n))
                           for s in starts]
            else:
                order = rng.permutation(n)
                batches = [order[s:s + cfg.batch_size]
                           for s in range(0, n, cfg.batch_size)]
            weight = cfg.sindy_regularization if use_consistency else 0.0
            for batch in batches:
                loss, _, grads = self.loss_and_gradients(
                    x_train[batch], y_train[batch], sindy_weight=weight)
                if not np.isfinite(loss):
                    raise NumericalError(
                        f"non-finite loss at epoch {epoch}; try a lower "
                        f"learning rate or check inputs for bad scaling")
                opt.step(grads)

            if sindy is not None:
                sindy.refit(self._train_latents(x_train))
                if epoch % cfg.sindy_thres_epoch == 0:
                    sindy.threshold_pass()

            val_mse = self.evaluate(val)
            val_errors.append(val_mse)
            if cfg.verbose:
                print(f"epoch {epoch}: val mse {val_mse:.6g}")
            if val_mse < best_val:
                best_val = val_mse
                best_epoch = epoch - 1
                best_params = [p.copy() for p in params]
                stall = 0
            else:
                stall += 1
                if stall >= cfg.patience:
                    break

        for p, b in zip(params, best_params):
            p[:] = b

        if sindy is not None:
            sindy.refit(self._train_latents(x_train))
            sindy.threshold_pass()
        elif getattr(self.forecaster, "kind", None) == "recurrent":
            self.forecaster.fit(self._train_latents(x_train))

        return TrainReport(val_errors=val_errors, best_epoch=best_epoch,
                           train_mse=self.evaluate(train), val_mse=best_val)

    def _train_latents(self, x_train: Array) -> Array:
        """Latents of the training windows in time order, chunked."""
        outs = [self.encode(x_train[i:i + EVAL_CHUNK])
                for i in range(0, len(x_train), EVAL_CHUNK)]
        return np.vstack(outs)

    # checkpointing

    def _architecture(self) -> dict:
        arch = {
            "input_size": self.input_size,
            "output_size": self.output_size,
            "encoder": self.encoder_kind,
            "hidden_size": self.hidden_size,
            "num_layers": self.num_layers,
            "decoder_hidden": list(self.decoder_hidden),
            "activation": self.activation,
            "seed": self.seed,
            "forecaster": None,
        }
        f = self.forecaster
        if getattr(f, "kind", None) == "sindy":
            arch["forecaster"] = {
                "kind": "sindy", "poly_order": f.poly_order,
                "include_sine": f.include_sine, "dt": f.dt,
                "threshold": f.threshold, "ridge_lam": f.ridge_lam,
                "mask": None if f.model is None
                else np.asarray(f.model.mask, dtype=int).tolist(),
            }
        elif getattr(f, "kind", None) == "recurrent":
            arch["forecaster"] = {
                "kind": "recurrent", "window": f.window,
                "hidden_size": f.hidden_size, "epochs": f.epochs,
                "lr": f.lr, "seed": f.seed,
                "fitted": f.model is not None,
            }
        return arch

    def _checkpoint_arrays(self) -> list[Array]:
        arrays = list(self.parameters())
        f = self.forecaster
        if getattr(f, "kind", None) == "sindy" and f.model is not None:
            arrays.append(f.model.coeffs)
        elif getattr(f, "kind", None) == "recurrent" and f.model is not None:
            arrays.extend(f.model.params())
        return arrays

    def save(self, path) -> None:
        """Write a versioned binary checkpoint.

        Layout: magic "SHRD", u32 version, u64 JSON-architecture length, the
        JSON bytes, then every weight array as little-endian float64 in
        parameters() order (forecaster state last). All shapes are derivable
        from the architecture block.
        """
        arch = json.dumps(self._architecture(), sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<I", CHECKPOINT_VERSION))
            fh.write(struct.pack("<Q", len(arch)))
            fh.write(arch)
            for arr in self._checkpoint_arrays():
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "ShredModel":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != CHECKPOINT_MAGIC:
                raise ValueError(f"not a model checkpoint (magic {magic!r})")
            version = struct.unpack("<I", fh.read(4))[0]
            if version != CHECKPOINT_VERSION:
                raise ValueError(
                    f"unsupported checkpoint version {version}, expected "
                    f"{CHECKPOINT_VERSION}")
            arch_len = struct.unpack("<Q", fh.read(8))[0]
            arch = json.loads(fh.read(arch_len).decode())
            payload = fh.read()

        forecaster = None
        fdesc = arch["forecaster"]
        if fdesc is not None and fdesc["kind"] == "sindy":
            forecaster = SindyForecaster(
                poly_order=fdesc["poly_order"],
                include_sine=fdesc["include_sine"], dt=fdesc["dt"],
                threshold=fdesc["threshold"], ridge_lam=fdesc["ridge_lam"])
        elif fdesc is not None and fdesc["kind"] == "recurrent":
            forecaster = LatentSequenceForecaster(
                window=fdesc["window"], hidden_size=fdesc["hidden_size"],
                epochs=fdesc["epochs"], lr=fdesc["lr"], seed=fdesc["seed"])

        model = cls(arch["input_size"], arch["output_size"],
                    encoder=arch["encoder"], hidden_size=arch["hidden_size"],
                    num_layers=arch["num_layers"],
                    decoder_hidden=tuple(arch["decoder_hidden"]),
                    activation=arch["activation"], seed=arch["seed"],
                    forecaster=forecaster)

        arrays = list(model.parameters())
        extra: list[Array] = []
        if fdesc is not None and fdesc["kind"] == "sindy" \
                and fdesc["mask"] is not None:
            forecaster.configure(arch["hidden_size"],
                                 threshold=fdesc["threshold"])
            p = forecaster.spec.n_terms
            extra.append(np.zeros((p, arch["hidden_size"])))
        elif fdesc is not None and fdesc["kind"] == "recurrent" \
                and fdesc["fitted"]:
            forecaster.model = RecurrentForecaster(
                arch["hidden_size"], fdesc["window"],
                hidden_size=fdesc["hidden_size"], seed=fdesc["seed"])
            extra.extend(forecaster.model.params())

        offset = 0
        for arr in arrays + extra:
            count = arr.size
            chunk = payload[offset:offset + 8 * count]
            if len(chunk) != 8 * count:
                raise ValueError("checkpoint payload truncated")
            arr[:] = np.frombuffer(chunk, dtype="<f8").reshape(arr.shape)
            offset += 8 * count
        if offset != len(payload):
            raise ValueError("checkpoint payload has trailing bytes")

        if fdesc is not None and fdesc["kind"] == "sindy" \
                and fdesc["mask"] is not None:
            mask = np.asarray(fdesc["mask"], dtype=bool)
            forecaster.set_model(extra[0], mask)
        return model
