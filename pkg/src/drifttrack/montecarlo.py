"""Replicated policy evaluation with confidence intervals.

Replications are independent across path indices and deterministic given the
master seed; several policies are always evaluated on the same bundles, so
policy deltas are common-random-number comparisons by construction.  Merging
per-path costs is plain summation, so results do not depend on scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import ModelParams
from .policy import (
    CostForm,
    Policy,
    ThresholdPolicy,
    apply_policy,
    cost_m_form,
    cost_theta_form,
)
from .simulate import (
    PathBundle,
    SimConfig,
    draw_signal,
    filter_posterior_mean,
    path_rng,
    signal_on_grid,
)


@dataclass(frozen=True)
class CostEstimate:
    mean: float
    stderr: float
    n: int
    ci95: tuple
    tail_bound: float
    form: CostForm

    @classmethod
    def from_samples(cls, samples: np.ndarray, tail_bound: float, form: CostForm):
        n = samples.shape[0]
        if n < 2:
            raise ValueError("need at least two replications")
        mean = float(samples.mean())
        stderr = float(samples.std(ddof=1) / np.sqrt(n))
        return cls(
            mean=mean,
            stderr=stderr,
            n=n,
            ci95=(mean - 1.96 * stderr, mean + 1.96 * stderr),
            tail_bound=tail_bound,
            form=form,
        )

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "n": self.n,
            "ci95": list(self.ci95),
            "tail_bound": self.tail_bound,
            "form": self.form.value,
        }


@dataclass(frozen=True)
class EvaluationResult:
    """Both cost-form estimates for one policy, with per-path samples kept
    for paired comparisons."""

    policy: Policy
    config: SimConfig
    theta: CostEstimate
    m: CostEstimate
    samples_theta: np.ndarray
    samples_m: np.ndarray

    def estimate(self, form: CostForm) -> CostEstimate:
        return self.theta if form is CostForm.THETA else self.m

    def samples(self, form: CostForm) -> np.ndarray:
        return self.samples_theta if form is CostForm.THETA else self.samples_m


def evaluate_policies(
    params: ModelParams,
    policies: Sequence[Policy],
    config: SimConfig,
    n_paths: int,
) -> list:
    """Evaluate all policies on the same simulated bundles (common random
    numbers).  Returns one EvaluationResult per policy."""
    if n_paths < 2:
        raise ValueError("need at least two replications")
    policies = list(policies)
    if not policies:
        return []
    samples = np.empty((len(policies), 2, n_paths))
    discount = np.exp(-params.alpha * config.times[:-1])
    for i in range(n_paths):
        bundle = _simulate_path(params, config, i)
        _accumulate(params, policies, bundle, discount, samples[:, :, i])
    return _package(params, policies, config, samples)


def estimate_cost(
    params: ModelParams, policy: Policy, config: SimConfig, n_paths: int
) -> EvaluationResult:
    """Estimate the discounted cost of one policy; both forms available."""
    return evaluate_policies(params, [policy], config, n_paths)[0]


def estimate_cost_refined(
    params: ModelParams,
    policy: Policy,
    config: SimConfig,
    n_paths: int,
    factor: int = 2,
) -> tuple:
    """Coupled evaluation at the config grid and a ``factor`` times finer one.

    Both resolutions share each path's jump times and Brownian increments
    (coarse observation increments are block sums of the fine ones), so the
    difference between the two estimates isolates the discretisation effect.
    Returns ``(coarse, fine)`` EvaluationResults.
    """
    if factor < 2:
        raise ValueError("refinement factor must be at least 2")
    fine = config.refined(factor)
    n_f = fine.n_steps
    sqrt_dtf = np.sqrt(fine.dt)
    samples_c = np.empty((1, 2, n_paths))
    samples_f = np.empty((1, 2, n_paths))
    disc_c = np.exp(-params.alpha * config.times[:-1])
    disc_f = np.exp(-params.alpha * fine.times[:-1])
    for i in range(n_paths):
        rng = path_rng(config.seed, i)
        start, jumps = draw_signal(params, config.x0, config.horizon, rng)
        theta_f = signal_on_grid(start, jumps, fine.times)
        z = rng.standard_normal(n_f)
        dx_f = params.mu * theta_f[:-1] * fine.dt + sqrt_dtf * z
        bundle_f = _bundle_from_increments(params, fine, theta_f, dx_f)
        dx_c = dx_f.reshape(-1, factor).sum(axis=1)
        theta_c = theta_f[::factor]
        bundle_c = _bundle_from_increments(params, config, theta_c, dx_c)
        _accumulate(params, [policy], bundle_c, disc_c, samples_c[:, :, i])
        _accumulate(params, [policy], bundle_f, disc_f, samples_f[:, :, i])
    coarse = _package(params, [policy], config, samples_c)[0]
    refined = _package(params, [policy], fine, samples_f)[0]
    return coarse, refined


def _simulate_path(params: ModelParams, config: SimConfig, index: int) -> PathBundle:
    rng = path_rng(config.seed, index)
    start, jumps = draw_signal(params, config.x0, config.horizon, rng)
    theta = signal_on_grid(start, jumps, config.times)
    z = rng.standard_normal(config.n_steps)
    dx = params.mu * theta[:-1] * config.dt + np.sqrt(config.dt) * z
    return _bundle_from_increments(params, config, theta, dx)


def _bundle_from_increments(params, config, theta, dx) -> PathBundle:
    x = np.empty(dx.shape[0] + 1)
    x[0] = 0.0
    np.cumsum(dx, out=x[1:])
    m = filter_posterior_mean(params, x, config)
    return PathBundle(t=config.times, theta=theta, x_obs=x, m=m)


def _accumulate(params, policies, bundle, discount, out):
    for j, policy in enumerate(policies):
        controlled = apply_policy(policy, bundle)
        out[j, 0] = cost_theta_form(params, controlled, discount=discount).total
        out[j, 1] = cost_m_form(params, controlled, discount=discount).total


def _package(params, policies, config, samples) -> list:
    tail = float(np.exp(-params.alpha * config.horizon) / params.alpha)
    results = []
    for j, policy in enumerate(policies):
        results.append(
            EvaluationResult(
                policy=policy,
                config=config,
                theta=CostEstimate.from_samples(samples[j, 0], tail, CostForm.THETA),
                m=CostEstimate.from_samples(samples[j, 1], tail, CostForm.M),
                samples_theta=samples[j, 0].copy(),
                samples_m=samples[j, 1].copy(),
            )
        )
    return results


def paired_difference(
    first: EvaluationResult, second: EvaluationResult, form: CostForm = CostForm.M
) -> tuple:
    """Mean and standard error of the per-path cost difference first - second.

    Meaningful when both results come from the same run (shared bundles)."""
    d = first.samples(form) - second.samples(form)
    return float(d.mean()), float(d.std(ddof=1) / np.sqrt(d.shape[0]))


@dataclass(frozen=True)
class SweepResult:
    """Common-random-number threshold sweep."""

    levels: np.ndarray
    results: tuple

    def estimates(self, form: CostForm = CostForm.M) -> list:
        return [r.estimate(form) for r in self.results]

    def argmin_level(self, form: CostForm = CostForm.M) -> Optional[float]:
        if len(self.results) == 0:
            return None
        means = [e.mean for e in self.estimates(form)]
        return float(self.levels[int(np.argmin(means))])

    def ci_overlap_levels(self, form: CostForm = CostForm.M) -> list:
        """Levels whose 95% CI overlaps the CI of the empirical argmin."""
        if len(self.results) == 0:
            return []
        ests = self.estimates(form)
        best = ests[int(np.argmin([e.mean for e in ests]))]
        lo, hi = best.ci95
        return [
            float(level)
            for level, e in zip(self.levels, ests)
            if e.ci95[0] <= hi and e.ci95[1] >= lo
        ]

    def rows(self, form: CostForm = CostForm.M) -> list:
        return [
            (float(level), e) for level, e in zip(self.levels, self.estimates(form))
        ]


def threshold_sweep(
    params: ModelParams,
    config: SimConfig,
    levels: Sequence[float],
    n_paths: int,
    a_init: int = 1,
) -> SweepResult:
    """Evaluate the symmetric threshold family on shared bundles."""
    levels = np.asarray(sorted(float(b) for b in levels))
    if levels.size == 0:
        return SweepResult(levels=levels, results=())
    policies = [ThresholdPolicy(level=b, a_init=a_init) for b in levels]
    results = evaluate_policies(params, policies, config, n_paths)
    return SweepResult(levels=levels, results=tuple(results))
