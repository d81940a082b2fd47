"""Path simulation and exact filtering.

Generates the hidden signal by exact exponential holding times (no
discretisation bias in the ground truth), the observation by Gaussian
increments on the grid, and the posterior mean by an Euler recursion of the
filtering equation driven by observation increments.  A discrete two-state
Bayes filter (matrix-exponential transition, Gaussian likelihood) is provided
as an independent reference for the Euler filter.

Randomness contract: path ``i`` of a run with master seed ``s`` draws from
the stream ``(s, i)`` obtained by seed-sequence splitting, in a fixed order
(signal start, holding times, then observation noise).  Identical seed and
config give bit-identical paths, and the streams can be replayed across
policies or grid refinements for common-random-number comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from numba import njit

from .model import ModelParams


class GridMismatch(ValueError):
    """Observation path length disagrees with the config grid."""


@dataclass(frozen=True)
class SimConfig:
    """Time grid, start point and seeding for simulation runs."""

    dt: float = 1e-3
    horizon: float = 50.0
    x0: float = 0.0
    seed: int = 0
    clip: float = 1e-9

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not self.horizon >= self.dt:
            raise ValueError("horizon must be at least one step")
        if not -1.0 <= self.x0 <= 1.0:
            raise ValueError(f"x0 must lie in [-1, 1], got {self.x0!r}")
        if not 0.0 < self.clip < 1e-2:
            raise ValueError("clip must lie in (0, 1e-2)")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @cached_property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def refined(self, factor: int) -> "SimConfig":
        """Same run on a grid ``factor`` times finer."""
        return SimConfig(
            dt=self.dt / factor,
            horizon=self.horizon,
            x0=self.x0,
            seed=self.seed,
            clip=self.clip,
        )


@dataclass(frozen=True)
class PathBundle:
    """Aligned sample paths on a common grid.

    ``theta`` is the hidden signal (cadlag, +-1), ``x_obs`` the cumulative
    observation with ``x_obs[0] = 0``, ``m`` the filtered posterior mean,
    ``a`` the control path once a policy is attached (``a_init`` is the
    pre-time-zero guess, so ``a[0] != a_init`` marks a switch at time zero).
    """

    t: np.ndarray
    theta: np.ndarray
    x_obs: np.ndarray
    m: np.ndarray
    a: Optional[np.ndarray] = None
    a_init: Optional[int] = None

    def __post_init__(self):
        n = self.t.shape[0]
        for name in ("theta", "x_obs", "m"):
            arr = getattr(self, name)
            if arr is not None and arr.shape[0] != n:
                raise GridMismatch(f"{name} has {arr.shape[0]} points, grid has {n}")
        if self.a is not None and self.a.shape[0] != n:
            raise GridMismatch(f"a has {self.a.shape[0]} points, grid has {n}")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])


def path_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for path ``index`` under master seed ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def draw_signal(params: ModelParams, x0: float, horizon: float, rng) -> tuple:
    """Draw the initial state and exact jump times of the hidden signal.

    The start is +1 with probability (1 + x0)/2; holding times are
    exponential with rate ``lam`` in both states.
    """
    start = 1 if rng.random() < 0.5 * (1.0 + x0) else -1
    jumps = []
    acc = 0.0
    scale = 1.0 / params.lam
    while True:
        block = rng.exponential(scale, size=16)
        for h in block:
            acc += h
            if acc > horizon:
                return start, np.array(jumps)
            jumps.append(acc)


def signal_on_grid(start: int, jumps: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Sample the piecewise-constant signal at the grid times (cadlag)."""
    flips = np.searchsorted(jumps, t, side="right")
    return start * (-1.0) ** flips


def simulate_theta(params: ModelParams, config: SimConfig, rng) -> np.ndarray:
    """Hidden signal path on the config grid."""
    start, jumps = draw_signal(params, config.x0, config.horizon, rng)
    return signal_on_grid(start, jumps, config.times)


def simulate_observation(params: ModelParams, theta: np.ndarray, config: SimConfig, rng) -> np.ndarray:
    """Cumulative observation path: increments ``mu*theta*dt + sqrt(dt)*N(0,1)``."""
    if theta.shape[0] != config.n_steps + 1:
        raise GridMismatch(
            f"theta has {theta.shape[0]} points, grid has {config.n_steps + 1}"
        )
    dt = config.dt
    z = rng.standard_normal(config.n_steps)
    dx = params.mu * theta[:-1] * dt + np.sqrt(dt) * z
    x = np.empty(config.n_steps + 1)
    x[0] = 0.0
    np.cumsum(dx, out=x[1:])
    return x


@njit(cache=True)
def _euler_filter_kernel(dx, x0, lam, mu, dt, clip):
    n = dx.shape[0]
    m = np.empty(n + 1)
    m[0] = x0
    hi = 1.0 - clip
    for k in range(n):
        mk = m[k]
        mn = mk - 2.0 * lam * mk * dt + mu * (1.0 - mk * mk) * (dx[k] - mu * mk * dt)
        if mn > hi:
            mn = hi
        elif mn < -hi:
            mn = -hi
        m[k + 1] = mn
    return m


@njit(cache=True)
def _bayes_filter_kernel(dx, x0, lam, mu, dt):
    n = dx.shape[0]
    m = np.empty(n + 1)
    p = 0.5 * (1.0 + x0)
    m[0] = 2.0 * p - 1.0
    stay = 0.5 * (1.0 + np.exp(-2.0 * lam * dt))
    inv2dt = 1.0 / (2.0 * dt)
    for k in range(n):
        pp = p * stay + (1.0 - p) * (1.0 - stay)
        up = np.exp(-(dx[k] - mu * dt) ** 2 * inv2dt)
        dn = np.exp(-(dx[k] + mu * dt) ** 2 * inv2dt)
        num = pp * up
        p = num / (num + (1.0 - pp) * dn)
        m[k + 1] = 2.0 * p - 1.0
    return m


@njit(cache=True)
def _sde_path_kernel(x0, lam, mu, dt, dw, clip):
    n = dw.shape[0]
    m = np.empty(n + 1)
    m[0] = x0
    hi = 1.0 - clip
    for k in range(n):
        mk = m[k]
        mn = mk - 2.0 * lam * mk * dt + mu * (1.0 - mk * mk) * dw[k]
        if mn > hi:
            mn = hi
        elif mn < -hi:
            mn = -hi
        m[k + 1] = mn
    return m


def filter_posterior_mean(params: ModelParams, x_obs: np.ndarray, config: SimConfig) -> np.ndarray:
    """Euler recursion of the filtering equation along an observation path.

    ``m[k+1] = m[k] - 2*lam*m[k]*dt + mu*(1 - m[k]^2)*(dx[k] - mu*m[k]*dt)``,
    clipped to stay strictly inside (-1, 1); the continuous-time posterior
    mean never reaches the endpoints but the discrete recursion can overshoot.
    Entrance starts x0 = +-1 are permitted and move inside after one step.
    """
    if x_obs.shape[0] != config.n_steps + 1:
        raise GridMismatch(
            f"x_obs has {x_obs.shape[0]} points, grid has {config.n_steps + 1}"
        )
    dx = np.diff(x_obs)
    return _euler_filter_kernel(
        dx, config.x0, params.lam, params.mu, config.dt, config.clip
    )


def bayes_posterior_mean(params: ModelParams, x_obs: np.ndarray, config: SimConfig) -> np.ndarray:
    """Exact discrete two-state Bayes filter (reference for the Euler filter).

    Predicts through the matrix exponential of the rate matrix over one step
    and updates with the Gaussian likelihood of the observation increment.
    Implemented independently of the Euler recursion.
    """
    if x_obs.shape[0] != config.n_steps + 1:
        raise GridMismatch(
            f"x_obs has {x_obs.shape[0]} points, grid has {config.n_steps + 1}"
        )
    dx = np.diff(x_obs)
    return _bayes_filter_kernel(dx, config.x0, params.lam, params.mu, config.dt)


def simulate_bundle(params: ModelParams, config: SimConfig, path_index: int = 0) -> PathBundle:
    """Simulate signal, observation and filtered mean for one path index."""
    rng = path_rng(config.seed, path_index)
    theta = simulate_theta(params, config, rng)
    x_obs = simulate_observation(params, theta, config, rng)
    m = filter_posterior_mean(params, x_obs, config)
    return PathBundle(t=config.times, theta=theta, x_obs=x_obs, m=m)


def posterior_sde_path(params: ModelParams, config: SimConfig, rng) -> np.ndarray:
    """Euler path of the posterior-mean diffusion driven by a fresh Brownian
    motion (no observation involved); used for hitting-time checks."""
    dw = np.sqrt(config.dt) * rng.standard_normal(config.n_steps)
    return _sde_path_kernel(
        config.x0, params.lam, params.mu, config.dt, dw, config.clip
    )


def discounted_hitting_estimate(
    params: ModelParams, config: SimConfig, level: float, n_paths: int
) -> tuple:
    """Monte Carlo estimate of ``E[exp(-alpha * first time m hits level)]``.

    Paths start at ``config.x0 > level``; paths that fail to hit within the
    horizon contribute zero (bias at most ``exp(-alpha*horizon)``).  Returns
    ``(mean, stderr)``.
    """
    if not level < config.x0:
        raise ValueError("level must lie below the start point")
    vals = np.empty(n_paths)
    for i in range(n_paths):
        rng = path_rng(config.seed, i)
        m = posterior_sde_path(params, config, rng)
        hits = np.flatnonzero(m <= level)
        vals[i] = np.exp(-params.alpha * config.times[hits[0]]) if hits.size else 0.0
    mean = float(vals.mean())
    stderr = float(vals.std(ddof=1) / np.sqrt(n_paths))
    return mean, stderr
