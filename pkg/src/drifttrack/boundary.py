"""Free boundary of the switching problem and the pasted value function.

In the switching regime the optimal rule is a symmetric threshold pair: with
current guess +1, switch once the posterior mean drops to -B, then back once
it recovers to +B.  The pair (K, B) - multiplier of the decreasing solution
and threshold - is pinned down by value matching and slope matching of the
pasted candidate at -B, which collapse to a scalar root problem

    K = value_fit_multiplier(B) = slope_fit_multiplier(B).

Both fit functions are explicit in the tabulated decreasing solution, so the
root is found by bracketing on their difference over (gamma, 1).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .model import ModelParams, Regime, never_switch_value, regime
from .ode import DecreasingSolution


class NoRootBracket(RuntimeError):
    """The fit mismatch never changes sign on the scanned interval.

    Signals a truncated solution table or pathological parameters rather
    than a legitimate no-switch answer (that case is detected from c1
    before any root finding)."""


class DegenerateDenominator(RuntimeError):
    """Slope denominator not positive; the solution table is broken."""


@dataclass(frozen=True)
class FreeBoundary:
    """Threshold/multiplier pair, or the never-switch marker.

    ``multiplier`` is stated relative to ``norm_value``, the solution's value
    at its right endpoint; the threshold is normalization-free.
    """

    regime: Regime
    threshold: Optional[float] = None
    multiplier: Optional[float] = None
    norm_value: float = 1.0

    def __post_init__(self):
        if self.regime is Regime.SWITCHING:
            if self.threshold is None or self.multiplier is None:
                raise ValueError("switching regime requires threshold and multiplier")
        elif self.threshold is not None or self.multiplier is not None:
            raise ValueError("never-switch regime carries no threshold/multiplier")


def value_fit_multiplier(params: ModelParams, sol: DecreasingSolution, x):
    """Candidate multiplier from the value-matching condition at threshold x.

    ``((beta + c2/2) x - c1 - c2/2) / (sol(-x) - sol(x))``; negative below
    gamma, zero at gamma, positive above.
    """
    x = _check_reflected(sol, x)
    num = (params.beta + 0.5 * params.c2) * x - params.c1 - 0.5 * params.c2
    den = sol.value(-x) - sol.value(x)
    return num / den


def slope_fit_multiplier(params: ModelParams, sol: DecreasingSolution, x):
    """Candidate multiplier from the slope-matching condition at threshold x.

    ``(beta + c2/2) / (-sol'(-x) - sol'(x))``; strictly positive on (0, 1)
    because the solution's slope is negative everywhere.
    """
    x = _check_reflected(sol, x)
    den = -sol.slope(-x) - sol.slope(x)
    if np.any(np.asarray(den) <= 0.0):
        raise DegenerateDenominator(
            "slope denominator not positive; solution table is not decreasing"
        )
    return (params.beta + 0.5 * params.c2) / den


def fit_mismatch(params: ModelParams, sol: DecreasingSolution, x):
    """Difference of the two candidate multipliers; its root is the threshold."""
    return value_fit_multiplier(params, sol, x) - slope_fit_multiplier(params, sol, x)


def _check_reflected(sol: DecreasingSolution, x):
    xs = np.asarray(x, dtype=float)
    if np.any(xs <= 0.0) or np.any(xs >= 1.0):
        raise ValueError("threshold candidate must lie in (0, 1)")
    if np.any(xs > sol.x_max) or np.any(-xs < sol.x_min):
        raise ValueError(
            f"need both x and -x inside the covered interval "
            f"[{sol.x_min:.6g}, {sol.x_max:.6g}]"
        )
    return x


def solve_free_boundary(
    params: ModelParams,
    sol: DecreasingSolution,
    root_tol: float = 1e-12,
    scan_points: int = 400,
    gamma_margin: float = 1e-6,
) -> FreeBoundary:
    """Locate the unique threshold/multiplier pair in the switching regime.

    Scans the fit mismatch on (gamma + margin, scan_hi) for a sign change,
    then polishes with a bracketing root solver.  ``scan_hi`` respects both
    the right edge of the table and the left truncation point (the reflected
    point must stay covered).  Returns the never-switch marker untouched when
    c1 >= beta.
    """
    if regime(params) is Regime.NEVER_SWITCH:
        return FreeBoundary(regime=Regime.NEVER_SWITCH, norm_value=sol.normalization)

    lo = params.gamma + gamma_margin
    hi = min(sol.x_max, -sol.x_min) * (1.0 - 1e-12)
    if not lo < hi:
        raise NoRootBracket(
            f"scan interval empty: gamma={params.gamma:.6g}, coverage up to {hi:.6g}"
        )
    grid = np.linspace(lo, hi, scan_points)
    mism = fit_mismatch(params, sol, grid)
    sign_flips = np.flatnonzero(np.sign(mism[:-1]) * np.sign(mism[1:]) < 0)
    if sign_flips.size == 0:
        raise NoRootBracket(
            "fit mismatch does not change sign; solution table may be truncated "
            f"too early (coverage [{sol.x_min:.6g}, {sol.x_max:.6g}])"
        )
    i = sign_flips[0]
    threshold = brentq(
        lambda x: fit_mismatch(params, sol, x), grid[i], grid[i + 1], xtol=root_tol
    )
    multiplier = value_fit_multiplier(params, sol, threshold)
    return FreeBoundary(
        regime=Regime.SWITCHING,
        threshold=float(threshold),
        multiplier=float(multiplier),
        norm_value=sol.normalization,
    )


@dataclass(frozen=True)
class ValueFunction:
    """Pasted value function of the tracking problem.

    With guess +1 the value equals the smooth branch
    ``never_switch_value(x) - multiplier * sol(x)`` down to -threshold and the
    switch branch (reflected smooth branch plus the switch charge) below it;
    the guess -1 values follow by reflection.  In the never-switch regime the
    value is just ``never_switch_value``.
    """

    params: ModelParams
    sol: DecreasingSolution
    boundary: FreeBoundary

    def _smooth(self, x):
        p = self.params
        base = 1.0 / (2.0 * p.alpha) - np.asarray(x) * p.beta / 2.0
        return base - self.boundary.multiplier * self.sol.value(x)

    def _smooth_slope(self, x):
        return -self.params.beta / 2.0 - self.boundary.multiplier * self.sol.slope(x)

    def _clip(self, x):
        lim = 1.0 - self.sol.epsilon
        return np.clip(x, -lim, lim)

    def value(self, x, a: int = 1):
        """Value at posterior mean ``x`` with standing guess ``a``.

        Endpoint queries are delegated to one-sided limits at ``1 - epsilon``
        inside the solution table; the affine parts use ``x`` exactly.
        """
        if a not in (-1, 1):
            raise ValueError("a must be -1 or +1")
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x < -1.0) or np.any(x > 1.0):
            raise ValueError("x must lie in [-1, 1]")
        if a == -1:
            x = -x
        p = self.params
        if self.boundary.regime is Regime.NEVER_SWITCH:
            out = 1.0 / (2.0 * p.alpha) - x * p.beta / 2.0
            return float(out[0]) if scalar else out
        b = self.boundary.threshold
        xc = self._clip(x)
        cont = x >= -b
        out = np.empty_like(x)
        out[cont] = self._smooth(xc[cont])
        out[~cont] = self._smooth(-xc[~cont]) + (
            p.c1 + 0.5 * p.c2 * (1.0 + x[~cont])
        )
        return float(out[0]) if scalar else out

    def slope(self, x, a: int = 1):
        """Derivative in ``x``; continuous across the switch threshold."""
        if a not in (-1, 1):
            raise ValueError("a must be -1 or +1")
        sign = 1.0 if a == 1 else -1.0
        scalar = np.ndim(x) == 0
        x = sign * np.atleast_1d(np.asarray(x, dtype=float))
        p = self.params
        if self.boundary.regime is Regime.NEVER_SWITCH:
            out = np.full(x.shape, -p.beta / 2.0) * sign
            return float(out[0]) if scalar else out
        b = self.boundary.threshold
        xc = self._clip(x)
        cont = x >= -b
        out = np.empty_like(x)
        out[cont] = self._smooth_slope(xc[cont])
        out[~cont] = -self._smooth_slope(-xc[~cont]) + 0.5 * p.c2
        out *= sign
        return float(out[0]) if scalar else out

    def minimum_value(self, x):
        """Value minimised over the standing guess."""
        return np.minimum(self.value(x, 1), self.value(x, -1))


def value_at(vf: ValueFunction, x, a: int = 1):
    """Value of the pasted solution at ``x`` with standing guess ``a``."""
    return vf.value(x, a)


@dataclass(frozen=True)
class FitCheck:
    name: str
    value: float
    tolerance: float
    passed: bool


@dataclass(frozen=True)
class FitReport:
    """Residual report for the pasted value function.

    Checks: (a) value matching at -threshold, (b) slope matching, (c) the
    generator identity on the continuation region, (d) strict generator
    slack on the switch region, (e) the jump bound |value gap| <= switch
    charge everywhere.
    """

    checks: tuple

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> FitCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            c.name: {"value": c.value, "tolerance": c.tolerance, "passed": c.passed}
            for c in self.checks
        }


def verify_fit(
    vf: ValueFunction,
    n_grid: int = 1000,
    value_fit_tol: float = 1e-6,
    slope_fit_tol: float = 1e-5,
    generator_tol: float = 1e-5,
    sign_margin: float = 1e-9,
) -> FitReport:
    """Check the construction of the pasted value function on a dense grid.

    The generator is evaluated with the curvature reconstructed from the
    homogeneous equation, matching how the smooth branch was built.
    """
    fb = vf.boundary
    if fb.regime is not Regime.SWITCHING:
        raise ValueError("fit verification applies to the switching regime only")
    p, sol, b, k = vf.params, vf.sol, fb.threshold, fb.multiplier

    value_gap = vf.value(-b, 1) - vf.value(b, 1) - p.c1 - 0.5 * p.c2 * (1.0 - b)
    slope_gap = vf.slope(-b, 1) + vf.slope(b, 1) - 0.5 * p.c2

    # Continuation region (-threshold, right edge): generator + running cost = 0.
    xs_cont = np.linspace(-b + 1e-9, sol.x_max - 1e-12, n_grid)
    res_cont = _generator_plus_cost(vf, xs_cont)
    max_cont = float(np.max(np.abs(res_cont)))

    # Switch region (left edge, -threshold): strict slack required.
    left = max(-1.0 + sol.epsilon, -sol.x_max)
    xs_sw = np.linspace(left + 1e-12, -b - 1e-9, n_grid)
    res_sw = _generator_plus_cost(vf, xs_sw)
    min_sw = float(np.min(res_sw))

    # Jump bound: |value(x,1) - value(x,-1)| <= c1 + c2/2 (1 + x).
    xs_all = np.linspace(left + 1e-12, sol.x_max - 1e-12, n_grid)
    gap = np.abs(vf.value(xs_all, 1) - vf.value(xs_all, -1))
    excess = float(np.max(gap - (p.c1 + 0.5 * p.c2 * (1.0 + xs_all))))

    checks = (
        FitCheck("value_fit", abs(float(value_gap)), value_fit_tol,
                 abs(float(value_gap)) <= value_fit_tol),
        FitCheck("slope_fit", abs(float(slope_gap)), slope_fit_tol,
                 abs(float(slope_gap)) <= slope_fit_tol),
        FitCheck("generator_continuation", max_cont, generator_tol,
                 max_cont <= generator_tol),
        FitCheck("generator_switch_slack", min_sw, sign_margin, min_sw > sign_margin),
        FitCheck("jump_bound", excess, sign_margin, excess <= sign_margin),
    )
    return FitReport(checks=checks)


def _generator_plus_cost(vf: ValueFunction, xs: np.ndarray) -> np.ndarray:
    """Generator of the guess-(+1) value plus the running cost (1 - x)/2.

    Zero on the continuation region by construction, strictly positive on
    the switch region.  Curvature of the tabulated solution comes from the
    homogeneous equation at the queried (possibly reflected) points.
    """
    p, sol, fb = vf.params, vf.sol, vf.boundary
    b, k = fb.threshold, fb.multiplier
    beta = p.beta
    out = np.empty_like(xs)

    cont = xs >= -b
    if np.any(cont):
        x = xs[cont]
        f = vf.value(x, 1)
        f1 = -beta / 2.0 - k * sol.slope(x)
        f2 = -k * sol.curvature(x)
        lv = 0.5 * p.mu**2 * (1 - x * x) ** 2 * f2 - 2 * p.lam * x * f1 - p.alpha * f
        out[cont] = lv + 0.5 * (1.0 - x)

    sw = ~cont
    if np.any(sw):
        x = xs[sw]
        f = vf.value(x, 1)
        f1 = beta / 2.0 + k * sol.slope(-x) + 0.5 * p.c2
        f2 = -k * sol.curvature(-x)
        lv = 0.5 * p.mu**2 * (1 - x * x) ** 2 * f2 - 2 * p.lam * x * f1 - p.alpha * f
        out[sw] = lv + 0.5 * (1.0 - x)

    return out
