"""Latent-dynamics forecasters.

Two ways to advance latent states without new sensor data: a sparse ODE
identified by sequentially thresholded ridge regression on a candidate
function library, integrated with classical RK4; and an autoregressive
recurrent next-step predictor.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np

from .linalg import ridge_solve
from .nn import Adam, DenseLayer, RecurrentLayer

Array = np.ndarray


class DivergenceError(RuntimeError):
    """Raised when forward ODE integration leaves the finite range.

    Carries the finite prefix of the trajectory in ``partial``.
    """

    def __init__(self, partial: Array):
        super().__init__(
            f"forecast diverged after {len(partial)} finite steps")
        self.partial = partial
        self.steps_completed = len(partial)


@dataclass(frozen=True)
class SindyLibrarySpec:
    """Candidate function library: polynomials up to poly_order, optional sines.

    Column order is fixed: constant, then z_0..z_{d-1}, then higher-degree
    monomials in graded lexicographic order, then sin(z_0)..sin(z_{d-1}).
    """

    dim: int
    poly_order: int = 1
    include_sine: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("latent dimension must be positive")
        if self.poly_order < 0:
            raise ValueError("poly_order must be nonnegative")

    def terms(self) -> list[tuple]:
        out: list[tuple] = [("const",)]
        for degree in range(1, self.poly_order + 1):
            for combo in itertools.combinations_with_replacement(
                    range(self.dim), degree):
                out.append(("mono", combo))
        if self.include_sine:
            out.extend(("sin", i) for i in range(self.dim))
        return out

    def labels(self, var: str = "x") -> list[str]:
        labels = []
        for term in self.terms():
            if term[0] == "const":
                labels.append("1")
            elif term[0] == "mono":
                labels.append("*".join(f"{var}{i}" for i in term[1]))
            else:
                labels.append(f"sin({var}{term[1]})")
        return labels

    @property
    def n_terms(self) -> int:
        return len(self.terms())


def build_library(z: Array, spec: SindyLibrarySpec) -> Array:
    """Evaluate the candidate library on latent rows z (N, dim) -> (N, p)."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if z.shape[1] != spec.dim:
        raise ValueError(
            f"latent width {z.shape[1]} does not match library dim {spec.dim}")
    cols = []
    for term in spec.terms():
        if term[0] == "const":
            cols.append(np.ones(len(z)))
        elif term[0] == "mono":
            col = np.ones(len(z))
            for i in term[1]:
                col = col * z[:, i]
            cols.append(col)
        else:
            cols.append(np.sin(z[:, term[1]]))
    return np.column_stack(cols)


def library_with_gradient(z: Array, spec: SindyLibrarySpec
                          ) -> tuple[Array, Array]:
    """Library values plus per-row Jacobian d theta_j / d z_k, (N, p, dim)."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    n, d = z.shape
    terms = spec.terms()
    theta = build_library(z, spec)
    grad = np.zeros((n, len(terms), d))
    for j, term in enumerate(terms):
        if term[0] == "mono":
            counts = np.bincount(term[1], minlength=d)
            for k in np.flatnonzero(counts):
                reduced = counts.copy()
                reduced[k] -= 1
                col = np.ones(n)
                for i in np.flatnonzero(reduced):
                    col = col * z[:, i] ** reduced[i]
                grad[:, j, k] = counts[k] * col
        elif term[0] == "sin":
            grad[:, j, term[1]] = np.cos(z[:, term[1]])
    return theta, grad


@dataclass(frozen=True)
class SindyModel:
    """Sparse latent ODE dz/dt = theta(z) @ coeffs with persistent support mask."""

    library: SindyLibrarySpec
    coeffs: Array
    dt: float
    threshold: float
    mask: Array

    @property
    def dim(self) -> int:
        return self.library.dim


def finite_difference_derivatives(z: Array, dt: float) -> Array:
    """Second-order time derivatives: central interior, one-sided ends."""
    z = np.asarray(z, dtype=np.float64)
    if len(z) < 3:
        raise ValueError("need at least 3 samples for derivative estimates")
    if dt <= 0:
        raise ValueError("dt must be positive")
    dz = np.empty_like(z)
    dz[1:-1] = (z[2:] - z[:-2]) / (2.0 * dt)
    dz[0] = (-3.0 * z[0] + 4.0 * z[1] - z[2]) / (2.0 * dt)
    dz[-1] = (3.0 * z[-1] - 4.0 * z[-2] + z[-3]) / (2.0 * dt)
    return dz


def sindy_fit(z: Array, dt: float, spec: SindyLibrarySpec,
              lam: float = 1e-6, mask: Array | None = None,
              threshold: float = 0.05) -> SindyModel:
    """Ridge-fit library coefficients to finite-difference latent derivatives.

    ``mask`` restricts the fit to a surviving support (per output column);
    masked-out coefficients stay exactly zero, which keeps earlier
    thresholding decisions in force across refits.
    """
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    dzdt = finite_difference_derivatives(z, dt)
    theta = build_library(z, spec)
    p, h = theta.shape[1], z.shape[1]
    if mask is None:
        mask = np.ones((p, h), dtype=bool)
    if mask.shape != (p, h):
        raise ValueError(f"mask shape {mask.shape} does not match ({p}, {h})")

    coeffs = np.zeros((p, h))
    if mask.all():
        coeffs[:] = ridge_solve(theta, dzdt, lam)
    else:
        for j in range(h):
            active = np.flatnonzero(mask[:, j])
            if len(active) == 0:
                continue
            coeffs[active, j] = ridge_solve(theta[:, active], dzdt[:, j:j + 1],
                                            lam)[:, 0]
    return SindyModel(library=spec, coeffs=coeffs, dt=dt,
                      threshold=threshold, mask=mask.copy())


def sindy_threshold(model: SindyModel, tau: float | None = None) -> SindyModel:
    """Zero every coefficient with magnitude below tau; the mask persists."""
    if tau is None:
        tau = model.threshold
    if tau < 0:
        raise ValueError("threshold must be nonnegative")
    keep = model.mask & (np.abs(model.coeffs) >= tau)
    coeffs = np.where(keep, model.coeffs, 0.0)
    return replace(model, coeffs=coeffs, mask=keep, threshold=tau)


def sindy_consistency(z: Array, model: SindyModel) -> float:
    """Mean squared residual of the latent sequence against the fitted ODE."""
    value, _ = sindy_consistency_grad(z, model, need_grad=False)
    return value


def sindy_consistency_grad(z: Array, model: SindyModel, need_grad: bool = True
                           ) -> tuple[float, Array | None]:
    """Consistency residual and its exact gradient with respect to z.

    The gradient flows through both the finite-difference stencil and the
    library evaluation, so it can drive the latent trajectory toward
    ODE-consistent shapes during training.
    """
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    n, h = z.shape
    if n < 3:
        raise ValueError("need at least 3 latent samples")
    dzdt = finite_difference_derivatives(z, model.dt)
    if need_grad:
        theta, theta_grad = library_with_gradient(z, model.library)
    else:
        theta = build_library(z, model.library)
    resid = dzdt - theta @ model.coeffs
    value = float(np.mean(resid * resid))
    if not need_grad:
        return value, None

    d_resid = 2.0 * resid / resid.size
    scale = 1.0 / (2.0 * model.dt)
    dz = np.zeros_like(z)
    inner = d_resid[1:-1] * scale
    dz[2:] += inner
    dz[:-2] -= inner
    dz[0] += -3.0 * scale * d_resid[0]
    dz[1] += 4.0 * scale * d_resid[0]
    dz[2] += -1.0 * scale * d_resid[0]
    dz[-1] += 3.0 * scale * d_resid[-1]
    dz[-2] += -4.0 * scale * d_resid[-1]
    dz[-3] += 1.0 * scale * d_resid[-1]

    d_theta = -(d_resid @ model.coeffs.T)
    dz += np.einsum("np,npk->nk", d_theta, theta_grad)
    return value, dz


def sindy_forecast(model: SindyModel, z0: Array, steps: int) -> Array:
    """Integrate the fitted ODE forward with classical RK4.

    Row k of the result is the state after k+1 steps of size model.dt.
    Raises DivergenceError (carrying the finite prefix) if the state leaves
    the finite range.
    """
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    z = np.asarray(z0, dtype=np.float64).reshape(-1)
    if len(z) != model.dim:
        raise ValueError(f"z0 has length {len(z)}, expected {model.dim}")
    coeffs, spec, dt = model.coeffs, model.library, model.dt

    def rhs(state: Array) -> Array:
        return build_library(state[None, :], spec)[0] @ coeffs

    out = np.empty((steps, model.dim))
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            k1 = rhs(z)
            k2 = rhs(z + 0.5 * dt * k1)
            k3 = rhs(z + 0.5 * dt * k2)
            k4 = rhs(z + dt * k3)
            z = z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(z)):
                raise DivergenceError(out[:k].copy())
            out[k] = z
    return out


def equations_text(model: SindyModel, var: str = "x") -> str:
    """Render the fitted ODE one equation per line, coefficients to 3 decimals."""
    labels = model.library.labels(var)
    lines = []
    for j in range(model.dim):
        parts = []
        for label, value in zip(labels, model.coeffs[:, j]):
            if value == 0.0:
                continue
            mag = f"{abs(value):.3f}"
            text = mag if label == "1" else f"{mag} {label}"
            if not parts:
                parts.append(text if value > 0 else f"-{text}")
            else:
                parts.append(f"{'+' if value > 0 else '-'} {text}")
        rhs = " ".join(parts) if parts else "0"
        lines.append(f"d{var}{j}/dt = {rhs}")
    return "\n".join(lines)


def coefficient_rows(model: SindyModel, var: str = "x"
                     ) -> list[tuple[str, int, float]]:
    """(term label, output index, value) rows for CSV export."""
    labels = model.library.labels(var)
    return [(labels[i], j, float(model.coeffs[i, j]))
            for i in range(model.library.n_terms)
            for j in range(model.dim)]


class RecurrentForecaster:
    """Autoregressive next-step latent predictor: LSTM over a window, linear head."""

    def __init__(self, dim: int, window: int, hidden_size: int = 32,
                 seed: int = 0):
        if window < 1:
            raise ValueError("window must be positive")
        self.dim = dim
        self.window = window
        self.hidden_size = hidden_size
        self.seed = seed
        rng = np.random.Generator(np.random.PCG64(seed))
        self.cell = RecurrentLayer("lstm", dim, hidden_size, rng)
        self.head = DenseLayer(hidden_size, dim, rng)

    def params(self) -> list[Array]:
        return [*self.cell.params(), self.head.W, self.head.b]

    def param_names(self) -> list[str]:
        return [f"cell.{n}" for n in self.cell.param_names()] + ["head.W",
                                                                 "head.b"]

    def predict(self, windows: Array) -> Array:
        """Next latent for each window in (B, window, dim) (or one (window, dim))."""
        squeeze = windows.ndim == 2
        w = np.atleast_3d(windows if not squeeze else windows[None])
        out, _ = self.cell.forward(
            np.ascontiguousarray(np.swapaxes(w, 0, 1)))
        y = out[-1] @ self.head.W.T + self.head.b
        return y[0] if squeeze else y

    def forecast(self, seed_window: Array, steps: int) -> Array:
        """Roll the predictor forward: append each prediction, drop the oldest."""
        if steps < 0:
            raise ValueError("steps must be nonnegative")
        window = np.asarray(seed_window, dtype=np.float64)
        if window.shape != (self.window, self.dim):
            raise ValueError(
                f"seed window shape {window.shape} != ({self.window}, {self.dim})")
        out = np.empty((steps, self.dim))
        for k in range(steps):
            nxt = self.predict(window)
            out[k] = nxt
            window = np.vstack([window[1:], nxt])
        return out

    def _step(self, x: Array, y: Array, opt: Adam) -> float:
        out, cache = self.cell.forward(
            np.ascontiguousarray(np.swapaxes(x, 0, 1)))
        final = out[-1]
        pred = final @ self.head.W.T + self.head.b
        err = pred - y
        loss = float(np.mean(err * err))
        d_pred = 2.0 * err / err.size
        dW_head = d_pred.T @ final
        db_head = d_pred.sum(axis=0)
        d_out = np.zeros_like(out)
        d_out[-1] = d_pred @ self.head.W
        cell_grads, _ = self.cell.backward(d_out, cache)
        opt.step([*cell_grads, dW_head, db_head])
        return loss


class SindyForecaster:
    """Attachable latent forecaster backed by a sparse ODE.

    Construction fixes the library shape (poly_order, include_sine) and the
    integration timestep; the coefficient matrix is (re)fit from latent
    trajectories during training, with hard-threshold passes that permanently
    prune library terms.
    """

    kind = "sindy"

    def __init__(self, poly_order: int = 1, include_sine: bool = False,
                 dt: float = 1.0, threshold: float = 0.05,
                 ridge_lam: float = 1e-6):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.poly_order = poly_order
        self.include_sine = include_sine
        self.dt = dt
        self.threshold = threshold
        self.ridge_lam = ridge_lam
        self.spec: SindyLibrarySpec | None = None
        self.model: SindyModel | None = None

    @property
    def min_seed_length(self) -> int:
        return 1

    def configure(self, dim: int, threshold: float | None = None) -> None:
        """Bind the library to a latent dimension (idempotent per dim)."""
        if threshold is not None:
            self.threshold = threshold
        if self.spec is None or self.spec.dim != dim:
            self.spec = SindyLibrarySpec(dim=dim, poly_order=self.poly_order,
                                         include_sine=self.include_sine)
            self.model = None

    def refit(self, latents: Array) -> None:
        if self.spec is None:
            self.configure(np.atleast_2d(latents).shape[1])
        mask = self.model.mask if self.model is not None else None
        self.model = sindy_fit(latents, self.dt, self.spec,
                               lam=self.ridge_lam, mask=mask,
                               threshold=self.threshold)

    def threshold_pass(self) -> None:
        if self.model is None:
            raise ValueError("forecaster has no fitted coefficients yet")
        self.model = sindy_threshold(self.model, self.threshold)

    def set_model(self, coeffs: Array, mask: Array) -> None:
        if self.spec is None:
            raise ValueError("configure() must run before set_model()")
        self.model = SindyModel(library=self.spec, coeffs=coeffs, dt=self.dt,
                                threshold=self.threshold, mask=mask)

    def forecast(self, seed_latents: Array, steps: int) -> Array:
        """Integrate forward from the last row of the seed latents."""
        if self.model is None:
            raise ValueError("forecaster is not fitted; train the model first")
        seed = np.atleast_2d(np.asarray(seed_latents, dtype=np.float64))
        return sindy_forecast(self.model, seed[-1], steps)

    def equations(self, var: str = "x") -> str:
        if self.model is None:
            raise ValueError("forecaster is not fitted; train the model first")
        return equations_text(self.model, var)


class LatentSequenceForecaster:
    """Attachable latent forecaster backed by a recurrent next-step net."""

    kind = "recurrent"

    def __init__(self, window: int = 10, hidden_size: int = 32,
                 epochs: int = 300, lr: float = 1e-3, seed: int = 0):
        if window < 1:
            raise ValueError("window must be positive")
        self.window = window
        self.hidden_size = hidden_size
        self.epochs = epochs
        self.lr = lr
        self.seed = seed
        self.model: RecurrentForecaster | None = None

    @property
    def min_seed_length(self) -> int:
        return self.window

    def fit(self, latents: Array) -> None:
        self.model = fit_recurrent_forecaster(
            latents, self.window, epochs=self.epochs, lr=self.lr,
            hidden_size=self.hidden_size, seed=self.seed)

    def forecast(self, seed_latents: Array, steps: int) -> Array:
        if self.model is None:
            raise ValueError("forecaster is not fitted; train the model first")
        seed = np.atleast_2d(np.asarray(seed_latents, dtype=np.float64))
        if len(seed) < self.window:
            raise ValueError(
                f"seed needs at least {self.window} latent rows, got {len(seed)}")
        return self.model.forecast(seed[-self.window:], steps)


def fit_recurrent_forecaster(latents: Array, window: int, epochs: int = 300,
                             lr: float = 1e-3, batch_size: int = 64,
                             hidden_size: int = 32, patience: int = 50,
                             seed: int = 0) -> RecurrentForecaster:
    """Train a next-step predictor on (window -> next latent) pairs.

    The last fifth of the pairs is held out to drive early stopping; the
    returned forecaster carries the best held-out weights.
    """
    latents = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    n, dim = latents.shape
    if n <= window:
        raise ValueError(f"need more than window={window} latents, got {n}")

    x = np.stack([latents[t - window:t] for t in range(window, n)])
    y = latents[window:]
    n_pairs = len(x)
    n_val = max(1, n_pairs // 5) if n_pairs > 1 else 0
    x_train, y_train = x[:n_pairs - n_val], y[:n_pairs - n_val]
    x_val, y_val = x[n_pairs - n_val:], y[n_pairs - n_val:]
    if len(x_train) == 0 or len(x_val) == 0:
        x_train, y_train = x, y
        x_val, y_val = x, y

    rf = RecurrentForecaster(dim, window, hidden_size=hidden_size, seed=seed)
    opt = Adam(rf.params(), lr=lr)
    rng = np.random.Generator(np.random.PCG64(seed + 1))

    best_val = np.inf
    best = [p.copy() for p in rf.params()]
    stall = 0
    for _ in range(epochs):
        order = rng.permutation(len(x_train))
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            rf._step(x_train[idx], y_train[idx], opt)
        val_pred = rf.predict(x_val)
        val_mse = float(np.mean((val_pred - y_val) ** 2))
        if val_mse < best_val:
            best_val = val_mse
            best = [p.copy() for p in rf.params()]
            stall = 0
        else:
            stall += 1
            if stall >= patience:
                break
    for p, b in zip(rf.params(), best):
        p[:] = b
    return rf
