"""Scale function, speed measure and boundary classification of the
posterior-mean diffusion.

The scale density ``exp{(2*lam/mu^2)/(1-x^2)}`` blows up super-exponentially
at the endpoints, so the scale function diverges there: the boundaries are
unreachable from inside.  They are entrance boundaries because the
scale-times-speed integral stays finite; that in turn follows from the ratio

    scale(x) / (scale_density(x) * (1-x^2)^2)

having the finite limit ``mu^2/(4*lam)`` at the boundary.  Everything here
evaluates those statements numerically.  Products of scale and speed are
computed jointly in log space (the ratio is bounded even where each factor
over/underflows on its own).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad

from .model import ModelParams

_OVERFLOW_LOG = 700.0  # beyond this the scale density exceeds float range


def log_scale_density(params: ModelParams, x: float) -> float:
    return (2.0 * params.lam / params.mu**2) / (1.0 - x * x)


def scale_density(params: ModelParams, x: float) -> float:
    if not -1.0 < x < 1.0:
        raise ValueError("x must lie strictly inside (-1, 1)")
    g = log_scale_density(params, x)
    return float(np.inf) if g > _OVERFLOW_LOG else float(np.exp(g))


def scale_function(params: ModelParams, x: float, overflow_log: float = _OVERFLOW_LOG) -> float:
    """Scale transform ``integral_0^x scale_density``, odd, zero at zero.

    Reported as +-inf once the scale density at ``x`` exceeds float range
    (the transform genuinely diverges at the endpoints).
    """
    if not -1.0 < x < 1.0:
        raise ValueError("x must lie strictly inside (-1, 1)")
    if x == 0.0:
        return 0.0
    ax = abs(x)
    if log_scale_density(params, ax) > overflow_log:
        return float(np.sign(x) * np.inf)
    val, _ = quad(
        lambda y: np.exp(log_scale_density(params, y)),
        0.0,
        ax,
        epsabs=0.0,
        epsrel=1e-12,
        limit=500,
    )
    return float(np.sign(x) * val)


def speed_density(params: ModelParams, x: float) -> float:
    """Speed measure density ``2 / (scale_density * mu^2 * (1-x^2)^2)``."""
    if not -1.0 < x < 1.0:
        raise ValueError("x must lie strictly inside (-1, 1)")
    g = log_scale_density(params, x)
    # 2 / (e^g * mu^2 * (1-x^2)^2), kept in logs to dodge underflow.
    log_val = np.log(2.0) - g - np.log(params.mu**2) - 2.0 * np.log1p(-x * x)
    return float(np.exp(log_val))


@dataclass(frozen=True)
class ScaleSpeed:
    """Scale/speed pair of the posterior-mean diffusion."""

    params: ModelParams

    def scale(self, x: float) -> float:
        return scale_function(self.params, x)

    def scale_density(self, x: float) -> float:
        return scale_density(self.params, x)

    def speed_density(self, x: float) -> float:
        return speed_density(self.params, x)


def entrance_ratio(params: ModelParams, x: float) -> float:
    """``scale(x) / (scale_density(x) * (1-x^2)^2)`` without overflow.

    Rewritten as ``integral_0^x exp{g(y) - g(x)} dy / (1-x^2)^2`` with g the
    log scale density; the integrand is at most one, so the ratio is computable
    arbitrarily close to the boundary.  Tends to ``mu^2/(4*lam)`` as x -> 1.
    """
    if not 0.0 < x < 1.0:
        raise ValueError("x must lie in (0, 1)")
    c = 2.0 * params.lam / params.mu**2
    gx = c / (1.0 - x * x)
    # Integrand below exp(-60) contributes < 1e-26 relative; start there.
    inv = gx / c - 60.0 / c
    lo = 0.0 if inv <= 1.0 else float(np.sqrt(1.0 - 1.0 / inv))
    val, _ = quad(
        lambda y: np.exp(c / (1.0 - y * y) - gx),
        lo,
        x,
        epsabs=1e-14,
        epsrel=1e-12,
        limit=300,
    )
    return float(val / (1.0 - x * x) ** 2)


def entrance_ratio_limit(params: ModelParams) -> float:
    return params.mu**2 / (4.0 * params.lam)


def scale_speed_product(params: ModelParams, x: float) -> float:
    """Integrand of the entrance criterion: scale times speed density,
    bounded up to the boundary with limit ``1/(2*lam)``."""
    return 2.0 / params.mu**2 * entrance_ratio(params, x)


@dataclass(frozen=True)
class EntranceCheck:
    """Convergence trace of the scale-times-speed integral toward the
    boundary, plus the ratio trace against its analytic limit."""

    caps: np.ndarray
    integrals: np.ndarray
    differences: np.ndarray
    converged: bool
    tolerance: float
    ratios: np.ndarray
    ratio_limit: float

    def to_dict(self) -> dict:
        return {
            "caps": self.caps.tolist(),
            "integrals": self.integrals.tolist(),
            "differences": self.differences.tolist(),
            "converged": self.converged,
            "tolerance": self.tolerance,
            "ratios": self.ratios.tolist(),
            "ratio_limit": self.ratio_limit,
        }


def entrance_boundary_check(
    params: ModelParams,
    caps: Optional[Sequence[float]] = None,
    tol: float = 1e-6,
) -> EntranceCheck:
    """Evaluate ``integral_0^cap scale*speed`` over caps refining toward 1.

    Converged means the last Cauchy difference is below ``tol``: the integral
    stays finite at the boundary, which classifies it as entrance.
    """
    if caps is None:
        caps = [1.0 - 10.0**-k for k in range(2, 9)]
    caps = np.asarray(sorted(caps))
    if np.any(caps <= 0.0) or np.any(caps >= 1.0):
        raise ValueError("caps must lie in (0, 1)")
    integrals = np.array(
        [
            quad(
                lambda y: scale_speed_product(params, y),
                0.0,
                cap,
                epsabs=1e-12,
                epsrel=1e-10,
                limit=300,
            )[0]
            for cap in caps
        ]
    )
    differences = np.abs(np.diff(integrals))
    converged = bool(differences.size and differences[-1] < tol)
    ratios = np.array([entrance_ratio(params, cap) for cap in caps])
    return EntranceCheck(
        caps=caps,
        integrals=integrals,
        differences=differences,
        converged=converged,
        tolerance=tol,
        ratios=ratios,
        ratio_limit=entrance_ratio_limit(params),
    )
