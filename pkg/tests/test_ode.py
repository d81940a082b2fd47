import numpy as np
import pytest
from scipy.integrate import solve_ivp

from drifttrack.model import ModelParams, discounted_generator
from drifttrack.ode import (
    DecreasingSolution,
    IntegrationFailure,
    solution_at,
    solve_decreasing,
)

DEFAULT = ModelParams(lam=0.25, mu=1.0, alpha=0.25, c1=0.25, c2=0.0)


@pytest.fixture(scope="module")
def sol():
    return solve_decreasing(DEFAULT)


def reference_solution(params, epsilon=1e-4, normalization=1.0):
    """Independent high-order oracle: scipy DOP853 at much finer tolerance."""

    def rhs(x, y):
        f, f1 = y
        f2 = 2.0 * (2 * params.lam * x * f1 + params.alpha * f) / (
            params.mu**2 * (1 - x * x) ** 2
        )
        return [f1, f2]

    def too_big(x, y):
        return abs(y[0]) - 1e12

    too_big.terminal = True
    out = solve_ivp(
        rhs,
        [1 - epsilon, -1 + epsilon],
        [normalization, -params.alpha / (2 * params.lam) * normalization],
        method="DOP853",
        rtol=1e-12,
        atol=1e-14,
        dense_output=True,
        events=too_big,
    )
    return out.sol


def test_cauchy_data(sol):
    # Start value 1 and slope -alpha/(2 lam) = -0.5 at x = 0.9999.
    assert sol.value(1 - 1e-4) == pytest.approx(1.0, abs=1e-14)
    assert sol.slope(1 - 1e-4) == pytest.approx(-0.5, abs=1e-14)


def test_structural_invariants(sol):
    assert np.all(sol.values > 0)
    assert np.all(sol.slopes < 0)
    assert np.all(np.diff(sol.slopes) > 0)  # discrete convexity
    assert np.all(np.diff(sol.values) < 0)


def test_blowup_ordering(sol):
    # Left end exceeds the right end by many orders of magnitude.
    assert sol.values[0] > 1e10 * sol.values[-1]
    assert sol.truncated_at is not None
    assert sol.truncated_at == pytest.approx(sol.x_min)


def test_slope_ratio_diverges_at_left_end(sol):
    # slope/value is hugely negative where the table ends.
    ratio = sol.slopes[0] / sol.values[0]
    assert ratio < -100.0


def test_matches_independent_integrator(sol):
    ref = reference_solution(DEFAULT)
    for x in (-0.9, -0.5, 0.0, 0.5, 0.9):
        assert sol.value(x) == pytest.approx(float(ref(x)[0]), rel=1e-8)
        assert sol.slope(x) == pytest.approx(float(ref(x)[1]), rel=1e-8)


def test_interpolation_exact_at_nodes(sol):
    mid = sol.xs.size // 2
    x = sol.xs[mid]
    v, s = solution_at(sol, x)
    assert v == sol.values[mid]
    assert s == sol.slopes[mid]


def test_interpolation_between_nodes_monotone(sol):
    i = np.searchsorted(sol.xs, 0.2)
    x_mid = 0.5 * (sol.xs[i] + sol.xs[i + 1])
    v = sol.value(x_mid)
    assert sol.values[i + 1] < v < sol.values[i]
    assert v > 0


def test_dense_query_monotone_positive(sol):
    xs = np.linspace(sol.x_min, sol.x_max, 20001)
    vals = sol.value(xs)
    assert np.all(vals > 0)
    assert np.all(np.diff(vals) < 0)
    slopes = sol.slope(xs)
    assert np.all(slopes < 0)


def test_midpoint_against_reintegration(sol):
    # Re-run with a finer tolerance and compare at an off-grid point.
    fine = solve_decreasing(DEFAULT, rtol=1e-12, atol=1e-14)
    i = np.searchsorted(sol.xs, -0.4)
    x_mid = 0.5 * (sol.xs[i] + sol.xs[i + 1])
    assert sol.value(x_mid) == pytest.approx(fine.value(x_mid), rel=10 * sol.rtol)


def test_reflection_solves_equation(sol):
    # f(x) := sol(-x) is the increasing solution: generator(f) = 0.
    xs = np.linspace(-sol.x_max + 1e-6, -0.01, 500)
    f = sol.value(-xs)
    f1 = -sol.slope(-xs)
    f2 = sol.curvature(-xs)
    residual = discounted_generator(DEFAULT, xs, f, f1, f2)
    assert np.max(np.abs(residual)) < 1e-7


def test_equation_residual_between_nodes(sol):
    # Interpolant consistency: the generator residual with the interpolant's
    # own curvature is small where curvature is actually consumed (the fit
    # checks never query it left of the threshold region), and merely bounded
    # in the blow-up tail where derivative reconstruction degrades.
    xs = np.linspace(-0.9, sol.x_max - 1e-9, 8001)
    rel = np.abs(sol.equation_residual(xs)) / (np.abs(sol.value(xs)) + 1.0)
    assert np.max(rel) < 1e-6
    xs_all = np.linspace(sol.x_min + 1e-9, sol.x_max - 1e-9, 8001)
    rel_all = np.abs(sol.equation_residual(xs_all)) / (np.abs(sol.value(xs_all)) + 1.0)
    assert np.max(rel_all) < 1e-4


def test_equation_holds_at_nodes(sol):
    # With the equation-reconstructed curvature the generator annihilates the
    # table at the nodes to round-off.
    from drifttrack.model import discounted_generator

    inner = slice(1, -1)
    res = discounted_generator(
        DEFAULT,
        sol.xs[inner],
        sol.values[inner],
        sol.slopes[inner],
        sol.curvature(sol.xs[inner]),
    )
    assert np.max(np.abs(res) / np.abs(sol.values[inner])) < 1e-12


def test_scale_invariance():
    base = solve_decreasing(DEFAULT)
    scaled = solve_decreasing(DEFAULT, normalization=2.0)
    for x in (-0.8, -0.2, 0.4, 0.95):
        assert scaled.value(x) == pytest.approx(2.0 * base.value(x), rel=1e-8)
        assert scaled.slope(x) == pytest.approx(2.0 * base.slope(x), rel=1e-8)


def test_domain_errors(sol):
    with pytest.raises(ValueError):
        sol.value(sol.x_max + 1e-3)
    with pytest.raises(ValueError):
        sol.value(sol.x_min - 1e-3)


def test_epsilon_validation():
    with pytest.raises(ValueError):
        solve_decreasing(DEFAULT, epsilon=0.5)
    with pytest.raises(ValueError):
        solve_decreasing(DEFAULT, epsilon=0.0)


def test_truncation_respects_cap():
    small_cap = solve_decreasing(DEFAULT, value_cap=1e6)
    assert small_cap.truncated_at is not None
    assert small_cap.values[0] >= 1e6
    assert small_cap.values[1] < 1e6
    # The cap only trims the left tail; interior values agree.
    base = solve_decreasing(DEFAULT)
    assert small_cap.value(-0.5) == pytest.approx(base.value(-0.5), rel=1e-9)


def test_overflow_without_cap_reports_reached_x():
    with pytest.raises(IntegrationFailure) as err:
        solve_decreasing(DEFAULT, value_cap=np.inf)
    assert -1.0 < err.value.reached < -0.9


def test_coverage_fields(sol):
    assert isinstance(sol, DecreasingSolution)
    assert sol.x_max == pytest.approx(1 - 1e-4)
    assert sol.x_min < -0.9
    assert sol.epsilon == 1e-4
    assert sol.normalization == 1.0
