"""Decreasing positive solution of the homogeneous generator equation.

The equation ``0.5*mu^2*(1-x^2)^2 f'' - 2*lam*x f' - alpha f = 0`` on (-1, 1)
has, up to a positive multiple, a unique strictly decreasing strictly positive
solution.  It stays finite at the right endpoint but blows up at the left one,
so the usable characterisation is a Cauchy problem posed just inside the right
endpoint:

    f(1 - eps)  = normalization,
    f'(1 - eps) = -alpha/(2*lam) * normalization,

integrated leftward.  The initial slope is the one-sided limit of f'/f at 1,
which selects the decreasing branch; the leftward direction is the stable one
(the contamination by the increasing solution decays relative to f).

The integrator is an adaptive Dormand-Prince 5(4) pair on the first-order
system (f, f').  The leading coefficient (1-x^2)^2 vanishes at both endpoints,
so steps shrink automatically near them; a hard minimum step guards against
stalling and a value cap truncates the table once f outgrows anything the
downstream root-finding could need (f exceeds float range long before -1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .model import ModelParams


class IntegrationFailure(RuntimeError):
    """Step control could not proceed; ``reached`` is the last good x."""

    def __init__(self, message: str, reached: float):
        super().__init__(f"{message} (reached x = {reached:.6g})")
        self.reached = reached


class InvariantViolation(RuntimeError):
    """The computed table fails a structural property of the solution."""


# Dormand-Prince 5(4) tableau.
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
)
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
# b5 - b4, including the 7th (FSAL) stage weight.
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


@dataclass(frozen=True)
class DecreasingSolution:
    """Tabulated decreasing solution with derivative, interpolable on its grid.

    ``xs`` is increasing and covers ``[left, 1 - epsilon]`` where ``left`` is
    ``-1 + epsilon`` or, if the value cap was hit first, the truncation point
    recorded in ``truncated_at``.  Queries use Hermite interpolation of the
    stored (value, slope) pairs; the slope table is interpolated with node
    curvatures reconstructed from the equation, which keeps slope queries at
    full integration accuracy.
    """

    params: ModelParams
    epsilon: float
    xs: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    normalization: float
    rtol: float
    truncated_at: Optional[float] = None

    @cached_property
    def _value_spline(self) -> CubicHermiteSpline:
        return CubicHermiteSpline(self.xs, self.values, self.slopes)

    @cached_property
    def _slope_spline(self) -> CubicHermiteSpline:
        curv = _curvature(self.params, self.xs, self.values, self.slopes)
        return CubicHermiteSpline(self.xs, self.slopes, curv)

    @property
    def x_min(self) -> float:
        return float(self.xs[0])

    @property
    def x_max(self) -> float:
        return float(self.xs[-1])

    def _check_domain(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < self.xs[0] - 1e-15) or np.any(x > self.xs[-1] + 1e-15):
            raise ValueError(
                f"x outside covered interval [{self.xs[0]:.6g}, {self.xs[-1]:.6g}]"
            )
        return np.clip(x, self.xs[0], self.xs[-1])

    def value(self, x):
        x = self._check_domain(x)
        out = self._value_spline(x)
        return float(out) if out.ndim == 0 else out

    def slope(self, x):
        x = self._check_domain(x)
        out = self._slope_spline(x)
        return float(out) if out.ndim == 0 else out

    def at(self, x) -> tuple:
        """Return the (value, slope) pair at ``x``."""
        return self.value(x), self.slope(x)

    def curvature(self, x):
        """Second derivative reconstructed from the equation itself."""
        x = self._check_domain(x)
        out = _curvature(self.params, x, self._value_spline(x), self._slope_spline(x))
        return float(out) if np.ndim(out) == 0 else out

    def equation_residual(self, x):
        """Generator residual using the interpolant's own curvature.

        Measures the internal consistency of the tabulated solution between
        nodes (at nodes it vanishes by construction).  The curvature here is
        the derivative of the slope interpolant, deliberately not the
        equation-implied one, which would cancel identically.
        """
        x = self._check_domain(x)
        p = self.params
        f = self._value_spline(x)
        f1 = self._slope_spline(x)
        f2 = self._slope_spline.derivative()(x)
        out = 0.5 * p.mu**2 * (1.0 - x * x) ** 2 * f2 - 2.0 * p.lam * x * f1 - p.alpha * f
        return float(out) if out.ndim == 0 else out


def _curvature(params: ModelParams, x, value, slope):
    return (
        2.0
        * (2.0 * params.lam * x * slope + params.alpha * value)
        / (params.mu**2 * (1.0 - x * x) ** 2)
    )


def solve_decreasing(
    params: ModelParams,
    epsilon: float = 1e-4,
    rtol: float = 1e-11,
    atol: float = 1e-13,
    normalization: float = 1.0,
    value_cap: float = 1e12,
    max_step: float = 5e-3,
    min_step: float = 1e-13,
    growth_cap: float = 0.01,
) -> DecreasingSolution:
    """Integrate the homogeneous equation leftward from ``1 - epsilon``.

    Cauchy data: value ``normalization``, slope ``-alpha/(2*lam)`` times it.
    Stops at ``-1 + epsilon`` or where the value first exceeds ``value_cap``
    (recorded as ``truncated_at``); the solution explodes toward -1, and the
    root-finding downstream only ever queries points well inside the cap.
    """
    if not 0.0 < epsilon <= 1e-2:
        raise ValueError(f"epsilon must lie in (0, 1e-2], got {epsilon!r}")
    if rtol <= 0.0 or atol <= 0.0:
        raise ValueError("tolerances must be positive")
    if normalization <= 0.0:
        raise ValueError("normalization must be positive")

    lam, mu, alpha = params.lam, params.mu, params.alpha
    half_mu2 = 0.5 * mu**2

    def rhs(x: float, f: float, f1: float) -> tuple:
        f2 = (2.0 * lam * x * f1 + alpha * f) / (half_mu2 * (1.0 - x * x) ** 2)
        return f1, f2

    x_start = 1.0 - epsilon
    x_end = -1.0 + epsilon
    f = normalization
    f1 = -alpha / (2.0 * lam) * normalization

    xs = [x_start]
    values = [f]
    slopes = [f1]

    x = x_start
    h = -min(max_step, epsilon)  # leftward
    truncated_at = None
    k1 = rhs(x, f, f1)

    while x > x_end:
        # Keep per-step growth of the solution and its slope below a few
        # percent; the error test alone lets nodes spread out so far in the
        # blow-up tail that interpolated curvature degrades.
        rate = max(abs(k1[0] / f), abs(k1[1] / k1[0]))
        if rate > 0.0 and -h > growth_cap / rate:
            h = -growth_cap / rate
        if x + h < x_end:
            h = x_end - x
        if -h < min_step:
            raise IntegrationFailure("step size underflow", reached=x)

        # Dormand-Prince stages on the (f, f') system.
        k = [k1]
        err = math.inf
        failed = False
        for i in range(1, 6):
            a = _A[i]
            df = sum(a[j] * k[j][0] for j in range(i))
            df1 = sum(a[j] * k[j][1] for j in range(i))
            xi = x + _C[i] * h
            if not -1.0 < xi < 1.0:
                failed = True
                break
            k.append(rhs(xi, f + h * df, f1 + h * df1))
        if not failed:
            f_new = f + h * sum(_B5[j] * k[j][0] for j in range(6))
            f1_new = f1 + h * sum(_B5[j] * k[j][1] for j in range(6))
            x_new = x + h
            if math.isfinite(f_new) and math.isfinite(f1_new) and -1.0 < x_new < 1.0:
                k7 = rhs(x_new, f_new, f1_new)
                err_f = h * (sum(_E[j] * k[j][0] for j in range(6)) + _E[6] * k7[0])
                err_f1 = h * (sum(_E[j] * k[j][1] for j in range(6)) + _E[6] * k7[1])
                sc_f = atol + rtol * max(abs(f), abs(f_new))
                sc_f1 = atol + rtol * max(abs(f1), abs(f1_new))
                err = math.sqrt(0.5 * ((err_f / sc_f) ** 2 + (err_f1 / sc_f1) ** 2))
            else:
                failed = True

        if failed or not math.isfinite(err):
            h *= 0.2
            continue

        if err <= 1.0:
            x, f, f1 = x_new, f_new, f1_new
            k1 = k7
            xs.append(x)
            values.append(f)
            slopes.append(f1)
            if abs(f) >= value_cap:
                truncated_at = x
                break
        factor = 0.9 * (err + 1e-300) ** -0.2
        h *= min(5.0, max(0.2, factor))
        if -h > max_step:
            h = -max_step

    xs_arr = np.array(xs[::-1])
    values_arr = np.array(values[::-1])
    slopes_arr = np.array(slopes[::-1])
    _check_invariants(xs_arr, values_arr, slopes_arr)

    return DecreasingSolution(
        params=params,
        epsilon=epsilon,
        xs=xs_arr,
        values=values_arr,
        slopes=slopes_arr,
        normalization=normalization,
        rtol=rtol,
        truncated_at=truncated_at,
    )


def _check_invariants(xs: np.ndarray, values: np.ndarray, slopes: np.ndarray):
    if xs.size < 4:
        raise InvariantViolation(f"table too short ({xs.size} nodes)")
    if np.any(values <= 0.0):
        raise InvariantViolation("solution not strictly positive on the grid")
    if np.any(slopes >= 0.0):
        raise InvariantViolation("slope not strictly negative on the grid")
    if np.any(np.diff(slopes) <= 0.0):
        raise InvariantViolation("slopes not strictly increasing (convexity broken)")
    if np.any(np.diff(values) >= 0.0):
        raise InvariantViolation("values not strictly decreasing in x")


def solution_at(sol: DecreasingSolution, x) -> tuple:
    """(value, slope) of the tabulated solution at ``x``; domain-checked."""
    return sol.at(x)
