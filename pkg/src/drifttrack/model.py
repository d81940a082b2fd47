"""Model parameters, closed-form quantities and the differential operator.

The tracked signal is a symmetric two-state process with values in {-1, 1},
flip intensity ``lam`` in each direction, observed through a Brownian motion
with drift ``mu * signal``.  Tracking mistakes cost 1 per unit time, a switch
of the tracker costs ``c1`` plus ``c2`` when made at a wrong time, and all
costs are discounted at rate ``alpha``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

CONFIG_KEYS = ("lambda", "mu", "alpha", "c1", "c2")


class ParameterError(ValueError):
    """Invalid model parameter.  ``key`` names the offending config key."""

    def __init__(self, key: str, message: str):
        super().__init__(message)
        self.key = key


class Regime(enum.Enum):
    SWITCHING = "switching"
    NEVER_SWITCH = "never_switch"


@dataclass(frozen=True)
class ModelParams:
    """The five problem inputs plus derived constants.

    ``beta = 1/(2*lam + alpha)`` is the switching-cost scale: switching can be
    optimal only when ``c1 < beta``.  ``gamma = (c1 + c2/2)/(beta + c2/2)``
    is a lower bound for the optimal switching threshold.
    """

    lam: float
    mu: float
    alpha: float
    c1: float
    c2: float
    beta: float = field(init=False, repr=False)
    gamma: float = field(init=False, repr=False)

    def __post_init__(self):
        for key, value in (("lambda", self.lam), ("mu", self.mu), ("alpha", self.alpha)):
            if not value > 0.0:
                raise ParameterError(key, f"'{key}' must be positive, got {value!r}")
        for key, value in (("c1", self.c1), ("c2", self.c2)):
            if not value >= 0.0:
                raise ParameterError(key, f"'{key}' must be nonnegative, got {value!r}")
        if not self.c1 + self.c2 > 0.0:
            raise ParameterError("c1", "'c1' and 'c2' must not both be zero")
        object.__setattr__(self, "beta", 1.0 / (2.0 * self.lam + self.alpha))
        object.__setattr__(
            self, "gamma", (self.c1 + 0.5 * self.c2) / (self.beta + 0.5 * self.c2)
        )

    @classmethod
    def from_mapping(cls, data: Mapping) -> "ModelParams":
        """Build from a config mapping with keys lambda, mu, alpha, c1, c2.

        All five keys are required; unknown keys are rejected so typos
        surface by name.
        """
        for key in CONFIG_KEYS:
            if key not in data:
                raise ParameterError(key, f"missing required key '{key}'")
        for key in data:
            if key not in CONFIG_KEYS:
                raise ParameterError(key, f"unknown key '{key}'")
        values = {}
        for key in CONFIG_KEYS:
            raw = data[key]
            if isinstance(raw, bool) or not isinstance(raw, (int, float)):
                raise ParameterError(key, f"'{key}' must be a number, got {raw!r}")
            values[key] = float(raw)
        return cls(
            lam=values["lambda"],
            mu=values["mu"],
            alpha=values["alpha"],
            c1=values["c1"],
            c2=values["c2"],
        )

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "mu": self.mu,
            "alpha": self.alpha,
            "c1": self.c1,
            "c2": self.c2,
        }


def never_switch_value(params: ModelParams, x: float) -> float:
    """Expected discounted cost of keeping the guess +1 forever, started at
    posterior mean ``x``.

    Affine in x: ``1/(2*alpha) - x/(2*(2*lam + alpha))``.  This is also the
    particular solution used to build the value function.
    """
    if not -1.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [-1, 1], got {x!r}")
    return 1.0 / (2.0 * params.alpha) - x * params.beta / 2.0


def discounted_generator(params: ModelParams, x, f, f1, f2):
    """Evaluate the discounted generator of the posterior-mean diffusion.

    Returns ``0.5*mu^2*(1-x^2)^2*f2 - 2*lam*x*f1 - alpha*f`` for a candidate
    function with value ``f``, first derivative ``f1`` and second derivative
    ``f2`` at ``x``.  Degenerate at the endpoints, so x must be interior.
    Accepts scalars or aligned numpy arrays.
    """
    import numpy as np

    xs = np.asarray(x)
    if np.any(xs <= -1.0) or np.any(xs >= 1.0):
        raise ValueError("x must lie strictly inside (-1, 1)")
    one_minus = 1.0 - xs * xs
    out = (
        0.5 * params.mu**2 * one_minus**2 * np.asarray(f2)
        - 2.0 * params.lam * xs * np.asarray(f1)
        - params.alpha * np.asarray(f)
    )
    return float(out) if np.isscalar(x) or xs.ndim == 0 else out


def regime(params: ModelParams) -> Regime:
    """Switching is worthwhile iff the fixed cost is below ``beta``.

    The boundary case ``c1 == beta`` belongs to the never-switch regime.
    """
    return Regime.SWITCHING if params.c1 < params.beta else Regime.NEVER_SWITCH
