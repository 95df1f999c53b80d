"""Deterministic synthetic field generators used for tests and demos.

Two families: the analytic double-gyre velocity field (a standard
time-dependent two-vortex benchmark) and a simple traveling sine wave that
stands in for large geophysical datasets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Array = np.ndarray

DEFAULT_EPS_RANGE = (0.1, 0.3)
DEFAULT_OMEGA_RANGE = (math.pi / 10.0, 2.0 * math.pi / 5.0)


@dataclass(frozen=True)
class DoubleGyreParams:
    """Configuration of the analytic double-gyre flow on [0, lx] x [0, ly].

    The velocity field is sampled on node coordinates including both
    endpoints: x_i = i * lx / (nx - 1), y_j = j * ly / (ny - 1), at uniform
    times from 0 to t_end inclusive with step dt.
    """

    eps: float = 0.25
    omega: float = 2.0 * math.pi / 10.0
    intensity: float = 0.1
    lx: float = 2.0
    ly: float = 1.0
    nx: int = 50
    ny: int = 25
    t_end: float = 10.0
    dt: float = 0.05

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid counts must be at least 2")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def times(self) -> Array:
        n_steps = int(round(self.t_end / self.dt))
        return np.linspace(0.0, n_steps * self.dt, n_steps + 1)


def double_gyre(params: DoubleGyreParams) -> tuple[Array, Array]:
    """Sample the double-gyre velocity field on the configured grid.

    The stream-function geometry oscillates through
    f(x, t) = eps * sin(omega t) * x^2 + (1 - 2 eps sin(omega t)) * x, giving

        u(x, y, t) = -pi * I * sin(pi f) * cos(pi y)
        v(x, y, t) =  pi * I * cos(pi f) * sin(pi y) * df/dx

    Returns
    -------
    (U, V) : pair of (T, ny, nx) arrays
    """
    x = np.linspace(0.0, params.lx, params.nx)
    y = np.linspace(0.0, params.ly, params.ny)
    t = params.times
    tt = t[:, None, None]
    xx = x[None, None, :]
    yy = y[None, :, None]

    a = params.eps * np.sin(params.omega * tt)
    f = a * xx ** 2 + (1.0 - 2.0 * a) * xx
    dfdx = 2.0 * a * xx + (1.0 - 2.0 * a)

    pi_i = math.pi * params.intensity
    u = -pi_i * np.sin(math.pi * f) * np.cos(math.pi * yy)
    v = pi_i * np.cos(math.pi * f) * np.sin(math.pi * yy) * dfdx
    return u, v


@dataclass(frozen=True)
class ParameterSample:
    """Random (eps, omega) draws with the ranges and seed that produced them."""

    pairs: Array
    eps_range: tuple[float, float]
    omega_range: tuple[float, float]
    seed: int


def sample_parameters(n: int,
                      eps_range: tuple[float, float] = DEFAULT_EPS_RANGE,
                      omega_range: tuple[float, float] = DEFAULT_OMEGA_RANGE,
                      seed: int = 0) -> ParameterSample:
    """Draw n i.i.d. uniform (eps, omega) pairs, deterministic per seed."""
    if n < 1:
        raise ValueError("need at least one parameter sample")
    for name, (lo, hi) in (("eps", eps_range), ("omega", omega_range)):
        if hi < lo:
            raise ValueError(f"inverted {name} range ({lo}, {hi})")
    rng = np.random.Generator(np.random.PCG64(seed))
    eps = rng.uniform(eps_range[0], eps_range[1], size=n)
    omega = rng.uniform(omega_range[0], omega_range[1], size=n)
    return ParameterSample(pairs=np.column_stack([eps, omega]),
                           eps_range=tuple(eps_range),
                           omega_range=tuple(omega_range), seed=seed)


def double_gyre_ensemble(sample: ParameterSample,
                         base: DoubleGyreParams = DoubleGyreParams()
                         ) -> tuple[Array, Array]:
    """Stack double-gyre runs for every (eps, omega) pair in the sample.

    Returns (U, V) with shape (n_pairs, T, ny, nx).
    """
    us, vs = [], []
    for eps, omega in sample.pairs:
        params = DoubleGyreParams(eps=float(eps), omega=float(omega),
                                  intensity=base.intensity, lx=base.lx,
                                  ly=base.ly, nx=base.nx, ny=base.ny,
                                  t_end=base.t_end, dt=base.dt)
        u, v = double_gyre(params)
        us.append(u)
        vs.append(v)
    return np.stack(us), np.stack(vs)


def traveling_wave(shape: tuple[int, int], steps: int, speed: float = 0.5,
                   wavelength: float = 16.0) -> Array:
    """Sinusoid translating along the last grid axis.

    value(t, i, j) = sin(2 pi (j - speed * t) / wavelength), so the field is
    smooth, low rank, and exactly periodic with period wavelength / speed
    timesteps. Grid coordinates are the integer indices.
    """
    m, n = int(shape[0]), int(shape[1])
    if m < 1 or n < 1 or steps < 1:
        raise ValueError("grid shape and steps must be positive")
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    t = np.arange(steps, dtype=np.float64)[:, None, None]
    j = np.arange(n, dtype=np.float64)[None, None, :]
    phase = 2.0 * math.pi * (j - speed * t) / wavelength
    return np.broadcast_to(np.sin(phase), (steps, m, n)).copy()
