"""Control policies over filtered paths and discounted cost accumulation.

A policy turns a path bundle into a {-1, +1} control path with finitely many
switches.  Costs come in two equivalent forms: the signal form charges the
mismatch indicator against the hidden signal, the posterior form charges its
conditional expectation ``(1 - a*m)/2`` against the filtered mean.  Their
per-path values differ, but their expectations agree, and the posterior form
has smaller variance.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass
from typing import Union

import numpy as np

from .boundary import FreeBoundary
from .model import ModelParams
from .simulate import PathBundle


class MissingPath(ValueError):
    """Bundle lacks a path required by the cost form."""


@dataclass(frozen=True)
class ThresholdPolicy:
    """Symmetric alternating rule: with guess +1 switch once the posterior
    mean drops to ``-level``, with guess -1 once it recovers to ``+level``."""

    level: float
    a_init: int = 1

    def __post_init__(self):
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"level must lie in (0, 1), got {self.level!r}")
        _check_a(self.a_init)


@dataclass(frozen=True)
class NeverSwitchPolicy:
    a_init: int = 1

    def __post_init__(self):
        _check_a(self.a_init)


@dataclass(frozen=True)
class FixedLagSignPolicy:
    """Naive baseline: follow the sign of the observation increment over a
    trailing window of the given length (time units)."""

    window: float
    a_init: int = 1

    def __post_init__(self):
        if not self.window > 0.0:
            raise ValueError("window must be positive")
        _check_a(self.a_init)


@dataclass(frozen=True)
class BandPolicy:
    """Asymmetric threshold pair: with guess +1 switch at ``lower``, with
    guess -1 switch at ``upper``."""

    lower: float
    upper: float
    a_init: int = 1

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("lower threshold must lie below upper")
        _check_a(self.a_init)


Policy = Union[ThresholdPolicy, NeverSwitchPolicy, FixedLagSignPolicy, BandPolicy]


def _check_a(a):
    if a not in (-1, 1):
        raise ValueError(f"a_init must be -1 or +1, got {a!r}")


def band_control(lower: float, upper: float, a_init: int, m: np.ndarray) -> tuple:
    """Alternating first-passage control over a posterior-mean path.

    Crossings are detected at grid points.  A switch at index 0 is allowed
    (the control may jump at time zero).  Returns the control path and the
    switch indices, which strictly alternate between the two crossings.
    """
    _check_a(a_init)
    below = np.flatnonzero(m <= lower)
    above = np.flatnonzero(m >= upper)
    a = np.full(m.shape[0], a_init, dtype=np.float64)
    switches = []
    cur = a_init
    pos = 0
    while True:
        candidates = below if cur == 1 else above
        j = np.searchsorted(candidates, pos)
        if j >= candidates.size:
            break
        k = int(candidates[j])
        cur = -cur
        a[k:] = cur
        switches.append(k)
        pos = k  # the same index cannot trigger the opposite crossing
    return a, np.array(switches, dtype=np.int64)


def run_threshold_policy(boundary, a_init: int, m: np.ndarray) -> tuple:
    """Symmetric threshold control; ``boundary`` is a FreeBoundary or a level."""
    level = boundary.threshold if isinstance(boundary, FreeBoundary) else float(boundary)
    if level is None:
        raise ValueError("never-switch boundary carries no threshold")
    return band_control(-level, level, a_init, m)


def fixed_lag_sign_control(window: float, a_init: int, x_obs: np.ndarray, dt: float) -> tuple:
    """Trailing-sign control: at each step follow the sign of the observation
    change over the last ``window`` time units (previous guess on ties)."""
    _check_a(a_init)
    n = x_obs.shape[0]
    w = max(1, int(round(window / dt)))
    lagged = np.empty(n)
    lagged[: w + 1] = x_obs[0]
    if n > w + 1:
        lagged[w + 1 :] = x_obs[1 : n - w]
    move = x_obs - lagged
    move[0] = 0.0
    s = np.sign(move)
    # Forward-fill the last nonzero sign, seeded with the initial guess.
    idx = np.arange(n)
    idx[s == 0] = 0
    idx = np.maximum.accumulate(idx)
    filled = np.where(idx > 0, s[idx], float(a_init))
    a = filled
    switches = np.flatnonzero(np.diff(a) != 0) + 1
    if a[0] != a_init:
        switches = np.concatenate(([0], switches))
    return a, switches


def apply_policy(policy: Policy, bundle: PathBundle) -> PathBundle:
    """Attach the policy's control path to a bundle."""
    if isinstance(policy, NeverSwitchPolicy):
        a = np.full(bundle.t.shape[0], float(policy.a_init))
    elif isinstance(policy, ThresholdPolicy):
        a, _ = band_control(-policy.level, policy.level, policy.a_init, bundle.m)
    elif isinstance(policy, BandPolicy):
        a, _ = band_control(policy.lower, policy.upper, policy.a_init, bundle.m)
    elif isinstance(policy, FixedLagSignPolicy):
        a, _ = fixed_lag_sign_control(policy.window, policy.a_init, bundle.x_obs, bundle.dt)
    else:
        raise TypeError(f"unknown policy {policy!r}")
    return dataclasses.replace(bundle, a=a, a_init=policy.a_init)


class CostForm(enum.Enum):
    THETA = "theta"
    M = "m"


@dataclass(frozen=True)
class CostAccumulator:
    """Discounted cost split into running and switching parts.

    ``tail_bound`` bounds the running cost ignored beyond the horizon
    (``exp(-alpha*T)/alpha``); switch charges beyond the horizon are not
    bounded by it and are reported as a bound on the truncation bias only.
    """

    running: float
    switching: float
    total: float
    tail_bound: float
    form: CostForm

    def __post_init__(self):
        if self.running < 0.0 or self.switching < 0.0:
            raise ValueError("cost components must be nonnegative")


def _switch_indices(bundle: PathBundle) -> np.ndarray:
    a = bundle.a
    idx = np.flatnonzero(np.diff(a) != 0) + 1
    if bundle.a_init is not None and a[0] != bundle.a_init:
        idx = np.concatenate(([0], idx))
    return idx


def cost_theta_form(params: ModelParams, bundle: PathBundle, discount=None) -> CostAccumulator:
    """Signal-form cost: mismatch indicator plus switch charges against the
    hidden signal.  Left-endpoint Riemann sum on the grid; switch charges use
    the post-switch control and the grid (cadlag) signal value."""
    if bundle.a is None:
        raise MissingPath("bundle has no control path")
    if bundle.theta is None:
        raise MissingPath("bundle has no signal path")
    t, dt = bundle.t, bundle.dt
    if discount is None:
        discount = np.exp(-params.alpha * t[:-1])
    mismatch = bundle.a[:-1] != bundle.theta[:-1]
    running = float(dt * np.sum(discount[mismatch]))
    idx = _switch_indices(bundle)
    if idx.size:
        wrong = bundle.a[idx] != bundle.theta[idx]
        charges = params.c1 + params.c2 * wrong
        switching = float(np.sum(np.exp(-params.alpha * t[idx]) * charges))
    else:
        switching = 0.0
    tail = float(np.exp(-params.alpha * t[-1]) / params.alpha)
    return CostAccumulator(running, switching, running + switching, tail, CostForm.THETA)


def cost_m_form(params: ModelParams, bundle: PathBundle, discount=None) -> CostAccumulator:
    """Posterior-form cost: the conditional mismatch probability
    ``(1 - a*m)/2`` replaces the indicator, and the wrong-time surcharge is
    charged at ``c2/2 * (1 - a*m)``."""
    if bundle.a is None:
        raise MissingPath("bundle has no control path")
    if bundle.m is None:
        raise MissingPath("bundle has no posterior mean path")
    t, dt = bundle.t, bundle.dt
    if discount is None:
        discount = np.exp(-params.alpha * t[:-1])
    integrand = 0.5 * (1.0 - bundle.a[:-1] * bundle.m[:-1])
    running = float(dt * np.sum(discount * integrand))
    idx = _switch_indices(bundle)
    if idx.size:
        charges = params.c1 + 0.5 * params.c2 * (1.0 - bundle.a[idx] * bundle.m[idx])
        switching = float(np.sum(np.exp(-params.alpha * t[idx]) * charges))
    else:
        switching = 0.0
    tail = float(np.exp(-params.alpha * t[-1]) / params.alpha)
    return CostAccumulator(running, switching, running + switching, tail, CostForm.M)
