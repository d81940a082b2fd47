"""Command line interface: solve / simulate / evaluate / sweep / verify.

Parameters come from an optional JSON or TOML config file with the model keys
at top level (lambda, mu, alpha, c1, c2) and optional "sim" and "numerics"
sections; command line flags override file values.  Every JSON report embeds
the fully resolved configuration and the package version, so a run can be
reproduced from its report alone.

Exit codes: 0 success, 1 error (message on stderr, partial outputs removed),
2 solution produced but a verification check failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .boundary import ValueFunction, solve_free_boundary, verify_fit
from .model import CONFIG_KEYS, ModelParams, ParameterError, Regime
from .ode import solve_decreasing

DEFAULT_MODEL = {"lambda": 0.25, "mu": 1.0, "alpha": 0.25, "c1": 0.25, "c2": 0.0}


@dataclass
class RunConfig:
    """Fully resolved run configuration, echoed into every report."""

    model: dict
    dt: float = 1e-3
    horizon: float = 50.0
    x0: float = 0.0
    seed: int = 0
    epsilon: float = 1e-4
    ode_rtol: float = 1e-11
    ode_atol: float = 1e-13
    root_tol: float = 1e-12
    value_fit_tol: float = 1e-6
    slope_fit_tol: float = 1e-5
    clip: float = 1e-9
    value_cap: float = 1e12
    out: str = "."
    format: str = "json"

    def to_dict(self) -> dict:
        return {
            "model": dict(self.model),
            "sim": {
                "dt": self.dt,
                "horizon": self.horizon,
                "x0": self.x0,
                "seed": self.seed,
            },
            "numerics": {
                "epsilon": self.epsilon,
                "ode_rtol": self.ode_rtol,
                "ode_atol": self.ode_atol,
                "root_tol": self.root_tol,
                "value_fit_tol": self.value_fit_tol,
                "slope_fit_tol": self.slope_fit_tol,
                "clip": self.clip,
                "value_cap": self.value_cap,
            },
            "out": self.out,
            "format": self.format,
        }


def _load_config_file(path: str) -> dict:
    p = Path(path)
    text = p.read_bytes()
    if p.suffix.lower() == ".toml":
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text.decode())
    return json.loads(text.decode())


_SIM_KEYS = {"dt": float, "horizon": float, "x0": float, "seed": int}
_NUMERIC_KEYS = {
    "epsilon": float,
    "ode_rtol": float,
    "ode_atol": float,
    "root_tol": float,
    "value_fit_tol": float,
    "slope_fit_tol": float,
    "clip": float,
    "value_cap": float,
}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    file_data: dict = {}
    if getattr(args, "config", None):
        file_data = _load_config_file(args.config)

    model = dict(DEFAULT_MODEL)
    if "model" in file_data:
        model.update(file_data["model"])
    flat = {k: v for k, v in file_data.items() if k in CONFIG_KEYS}
    model.update(flat)
    for key in CONFIG_KEYS:
        flag = getattr(args, {"lambda": "lam"}.get(key, key), None)
        if flag is not None:
            model[key] = flag

    cfg = RunConfig(model=model)
    sim_section = file_data.get("sim", {})
    for key, cast in _SIM_KEYS.items():
        if key in sim_section:
            setattr(cfg, key, cast(sim_section[key]))
    numerics_section = file_data.get("numerics", {})
    for key, cast in _NUMERIC_KEYS.items():
        if key in numerics_section:
            setattr(cfg, key, cast(numerics_section[key]))
    for key in (*_SIM_KEYS, *_NUMERIC_KEYS, "out", "format"):
        flag = getattr(args, key, None)
        if flag is not None:
            setattr(cfg, key, flag)

    unknown = set(file_data) - set(CONFIG_KEYS) - {"model", "sim", "numerics"}
    if unknown:
        raise ParameterError(sorted(unknown)[0], f"unknown config key '{sorted(unknown)[0]}'")
    return cfg


def _params(cfg: RunConfig) -> ModelParams:
    return ModelParams.from_mapping(cfg.model)


def _report(payload: dict, cfg: RunConfig) -> dict:
    payload["config"] = cfg.to_dict()
    payload["version"] = __version__
    return payload


def _emit(payload: dict, cfg: RunConfig):
    if cfg.format == "csv":
        writer = csv.writer(sys.stdout)
        writer.writerow(["key", "value"])
        flat = _flatten(payload)
        for k, v in flat.items():
            writer.writerow([k, v])
    else:
        json.dump(payload, sys.stdout, indent=2)
        sys.stdout.write("\n")


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, prefix=f"{key}."))
        else:
            out[key] = json.dumps(v) if isinstance(v, (list, tuple)) else v
    return out


class _OutputTracker:
    """Resolves dump paths against the output directory and removes files
    written during a failed command."""

    def __init__(self, out_dir: str = "."):
        self.out_dir = Path(out_dir)
        self.paths = []

    def open(self, path: str):
        p = Path(path)
        if not p.is_absolute():
            p = self.out_dir / p
        p.parent.mkdir(parents=True, exist_ok=True)
        self.paths.append(p)
        return p.open("w", newline="")

    def cleanup(self):
        for p in self.paths:
            try:
                p.unlink()
            except OSError:
                pass


def _solve(cfg: RunConfig):
    params = _params(cfg)
    sol = solve_decreasing(
        params,
        epsilon=cfg.epsilon,
        rtol=cfg.ode_rtol,
        atol=cfg.ode_atol,
        value_cap=cfg.value_cap,
    )
    fb = solve_free_boundary(params, sol, root_tol=cfg.root_tol)
    return params, sol, fb


def cmd_solve(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    tracker = _OutputTracker(cfg.out)
    try:
        params, sol, fb = _solve(cfg)
        payload = {
            "regime": fb.regime.value,
            "beta": params.beta,
            "gamma": params.gamma,
        }
        exit_code = 0
        if fb.regime is Regime.SWITCHING:
            vf = ValueFunction(params=params, sol=sol, boundary=fb)
            fit = verify_fit(
                vf,
                value_fit_tol=cfg.value_fit_tol,
                slope_fit_tol=cfg.slope_fit_tol,
            )
            payload["B"] = fb.threshold
            payload["K"] = fb.multiplier
            payload["phi_normalization"] = fb.norm_value
            payload["fit"] = fit.to_dict()
            if not fit.all_pass:
                exit_code = 2
        else:
            vf = ValueFunction(params=params, sol=sol, boundary=fb)

        if args.dump_phi:
            with tracker.open(args.dump_phi) as fh:
                w = csv.writer(fh)
                w.writerow(["x", "phi", "dphi"])
                for x, v, s in zip(sol.xs, sol.values, sol.slopes):
                    w.writerow([repr(float(x)), repr(float(v)), repr(float(s))])
        if args.dump_value:
            xs = np.linspace(-1.0, 1.0, args.value_grid)
            v_plus = vf.value(xs, 1)
            v_minus = vf.value(xs, -1)
            with tracker.open(args.dump_value) as fh:
                w = csv.writer(fh)
                w.writerow(["x", "v_plus", "v_minus", "v_star"])
                for x, vp, vm in zip(xs, v_plus, v_minus):
                    w.writerow([repr(float(x)), repr(float(vp)), repr(float(vm)),
                                repr(float(min(vp, vm)))])
        _emit(_report(payload, cfg), cfg)
        return exit_code
    except Exception:
        tracker.cleanup()
        raise


def cmd_simulate(args: argparse.Namespace) -> int:
    from .policy import apply_policy
    from .simulate import SimConfig, simulate_bundle

    cfg = resolve_config(args)
    params = _params(cfg)
    sim = SimConfig(dt=cfg.dt, horizon=cfg.horizon, x0=cfg.x0, seed=cfg.seed, clip=cfg.clip)
    policy = None
    if args.policy:
        policy = _build_policy(args, cfg, a_init=args.a_init)

    tracker = _OutputTracker(cfg.out)
    try:
        rows_written = 0
        fh = tracker.open(args.dump) if args.dump else None
        writer = csv.writer(fh) if fh else csv.writer(sys.stdout)
        header = ["path_id", "t", "theta", "x", "m"] + (["a"] if policy else [])
        writer.writerow(header)
        for i in range(args.paths):
            bundle = simulate_bundle(params, sim, i)
            if policy is not None:
                bundle = apply_policy(policy, bundle)
            cols = [bundle.t, bundle.theta, bundle.x_obs, bundle.m]
            if policy is not None:
                cols.append(bundle.a)
            for row in zip(*cols):
                writer.writerow([i] + [repr(float(v)) for v in row])
                rows_written += 1
        if fh:
            fh.close()
            _emit(_report({"paths": args.paths, "rows": rows_written,
                           "dump": args.dump}, cfg), cfg)
        return 0
    except Exception:
        tracker.cleanup()
        raise


def _build_policy(args, cfg: RunConfig, a_init: int):
    from .policy import (
        BandPolicy,
        FixedLagSignPolicy,
        NeverSwitchPolicy,
        ThresholdPolicy,
    )

    kind = args.policy
    if kind == "never":
        return NeverSwitchPolicy(a_init=a_init)
    if kind == "sign":
        return FixedLagSignPolicy(window=args.window, a_init=a_init)
    if kind == "band":
        if args.lower is None or args.upper is None:
            raise ParameterError("lower", "band policy requires --lower and --upper")
        return BandPolicy(lower=args.lower, upper=args.upper, a_init=a_init)
    if kind == "threshold":
        level = args.B
        if level is None:
            params = _params(cfg)
            sol = solve_decreasing(params, epsilon=cfg.epsilon, rtol=cfg.ode_rtol,
                                   atol=cfg.ode_atol, value_cap=cfg.value_cap)
            fb = solve_free_boundary(params, sol, root_tol=cfg.root_tol)
            if fb.regime is not Regime.SWITCHING:
                raise ParameterError(
                    "c1", "never-switch regime: pass --B to force a threshold"
                )
            level = fb.threshold
        return ThresholdPolicy(level=level, a_init=a_init)
    raise ParameterError("policy", f"unknown policy '{kind}'")


def cmd_evaluate(args: argparse.Namespace) -> int:
    from .montecarlo import estimate_cost
    from .policy import CostForm
    from .simulate import SimConfig

    cfg = resolve_config(args)
    params = _params(cfg)
    sim = SimConfig(dt=cfg.dt, horizon=cfg.horizon, x0=cfg.x0, seed=cfg.seed, clip=cfg.clip)
    policy = _build_policy(args, cfg, a_init=args.a_init)
    result = estimate_cost(params, policy, sim, args.paths)
    form = CostForm(args.form)
    payload = result.estimate(form).to_dict()
    payload["policy"] = repr(result.policy)
    _emit(_report(payload, cfg), cfg)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    from .montecarlo import threshold_sweep
    from .policy import CostForm
    from .simulate import SimConfig

    cfg = resolve_config(args)
    params = _params(cfg)
    sim = SimConfig(dt=cfg.dt, horizon=cfg.horizon, x0=cfg.x0, seed=cfg.seed, clip=cfg.clip)
    levels = _parse_grid(args.b_grid)
    form = CostForm(args.form)
    sweep = threshold_sweep(params, sim, levels, args.paths, a_init=args.a_init)

    tracker = _OutputTracker(cfg.out)
    try:
        if args.dump:
            with tracker.open(args.dump) as fh:
                w = csv.writer(fh)
                w.writerow(["B", "mean", "stderr"])
                for level, est in sweep.rows(form):
                    w.writerow([repr(level), repr(est.mean), repr(est.stderr)])
        payload = {
            "levels": [float(b) for b in sweep.levels],
            "estimates": [est.to_dict() for _, est in sweep.rows(form)],
            "argmin": sweep.argmin_level(form),
            "ci_overlap_argmin": sweep.ci_overlap_levels(form),
        }
        _emit(_report(payload, cfg), cfg)
        return 0
    except Exception:
        tracker.cleanup()
        raise


def _parse_grid(spec: str) -> list:
    if ":" in spec:
        start, stop, step = (float(v) for v in spec.split(":"))
        n = int(round((stop - start) / step)) + 1
        return [start + k * step for k in range(n) if start + k * step <= stop + 1e-12]
    return [float(v) for v in spec.split(",") if v.strip()]


def cmd_verify(args: argparse.Namespace) -> int:
    from .diffusion import entrance_boundary_check, entrance_ratio, entrance_ratio_limit

    cfg = resolve_config(args)
    params = _params(cfg)
    checks = {}

    params, sol, fb = _solve(cfg)
    if fb.regime is Regime.SWITCHING:
        vf = ValueFunction(params=params, sol=sol, boundary=fb)
        fit = verify_fit(vf, value_fit_tol=cfg.value_fit_tol, slope_fit_tol=cfg.slope_fit_tol)
        checks["fit"] = fit.to_dict()
        checks["fit_pass"] = fit.all_pass

        # Threshold sensitivity to the boundary offset (no asserted bound).
        sol_small = solve_decreasing(params, epsilon=cfg.epsilon / 10.0,
                                     rtol=cfg.ode_rtol, atol=cfg.ode_atol,
                                     value_cap=cfg.value_cap)
        fb_small = solve_free_boundary(params, sol_small, root_tol=cfg.root_tol)
        checks["threshold_epsilon_sensitivity"] = {
            "epsilon": cfg.epsilon,
            "B": fb.threshold,
            "epsilon_tenth": cfg.epsilon / 10.0,
            "B_tenth": fb_small.threshold,
            "difference": abs(fb.threshold - fb_small.threshold),
        }
    else:
        checks["fit_pass"] = True
        checks["regime"] = fb.regime.value

    probe = np.linspace(sol.x_min + 1e-9, sol.x_max - 1e-9, 2001)
    residual = float(np.max(np.abs(sol.equation_residual(probe))))
    ode_tol = 100.0 * max(cfg.ode_rtol, 1e-12) * float(np.max(sol.values))
    ode_tol = max(ode_tol, 1e-8)
    checks["ode_residual"] = {"max": residual, "tolerance": ode_tol,
                              "passed": residual <= ode_tol}

    entrance = entrance_boundary_check(params)
    checks["entrance_integral"] = entrance.to_dict()
    ratio = entrance_ratio(params, 1.0 - 1e-5)
    limit = entrance_ratio_limit(params)
    checks["entrance_ratio"] = {
        "at": 1.0 - 1e-5,
        "value": ratio,
        "limit": limit,
        "relative_error": abs(ratio - limit) / limit,
        "passed": abs(ratio - limit) / limit < 0.01,
    }

    ok = (
        checks["fit_pass"]
        and checks["ode_residual"]["passed"]
        and entrance.converged
        and checks["entrance_ratio"]["passed"]
    )
    checks["all_pass"] = bool(ok)
    _emit(_report(checks, cfg), cfg)
    return 0 if ok else 2


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON or TOML config file")
    parser.add_argument("--seed", type=int, help="master RNG seed")
    parser.add_argument("--out", help="output directory for dumps")
    parser.add_argument("--format", choices=["json", "csv"], help="stdout report format")
    parser.add_argument("--lambda", dest="lam", type=float, help="jump intensity")
    parser.add_argument("--mu", type=float, help="drift magnitude")
    parser.add_argument("--alpha", type=float, help="discount rate")
    parser.add_argument("--c1", type=float, help="fixed switching cost")
    parser.add_argument("--c2", type=float, help="wrong-time switching surcharge")
    parser.add_argument("--epsilon", type=float, help="boundary offset of the solver")
    parser.add_argument("--ode-rtol", dest="ode_rtol", type=float)
    parser.add_argument("--ode-atol", dest="ode_atol", type=float)
    parser.add_argument("--root-tol", dest="root_tol", type=float)
    parser.add_argument("--value-fit-tol", dest="value_fit_tol", type=float)
    parser.add_argument("--slope-fit-tol", dest="slope_fit_tol", type=float)
    parser.add_argument("--clip", type=float)
    parser.add_argument("--value-cap", dest="value_cap", type=float)
    parser.add_argument("--dt", type=float)
    parser.add_argument("--horizon", type=float)
    parser.add_argument("--x0", type=float)


def _add_policy_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--policy", choices=["threshold", "never", "sign", "band"])
    parser.add_argument("--B", type=float, help="threshold override")
    parser.add_argument("--window", type=float, default=0.5, help="sign-policy window")
    parser.add_argument("--lower", type=float, help="band policy lower threshold")
    parser.add_argument("--upper", type=float, help="band policy upper threshold")
    parser.add_argument("--a-init", dest="a_init", type=int, default=1, choices=[-1, 1])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drifttrack",
        description="Optimal tracking of a hidden two-state drift: solver and simulator",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="compute the threshold/multiplier pair")
    _add_common(p_solve)
    p_solve.add_argument("--dump-phi", dest="dump_phi", help="CSV of the tabulated solution")
    p_solve.add_argument("--dump-value", dest="dump_value", help="CSV of the value function")
    p_solve.add_argument("--value-grid", dest="value_grid", type=int, default=801)
    p_solve.set_defaults(func=cmd_solve)

    p_sim = sub.add_parser("simulate", help="simulate signal/observation/filter paths")
    _add_common(p_sim)
    _add_policy_flags(p_sim)
    p_sim.add_argument("--paths", type=int, default=1)
    p_sim.add_argument("--dump", help="CSV output path (default: stdout)")
    p_sim.set_defaults(func=cmd_simulate)

    p_eval = sub.add_parser("evaluate", help="Monte Carlo policy cost estimate")
    _add_common(p_eval)
    _add_policy_flags(p_eval)
    p_eval.add_argument("--paths", type=int, default=1000)
    p_eval.add_argument("--form", choices=["theta", "m"], default="m")
    p_eval.set_defaults(func=cmd_evaluate)

    p_sweep = sub.add_parser("sweep", help="common-random-number threshold sweep")
    _add_common(p_sweep)
    p_sweep.add_argument("--b-grid", dest="b_grid", default="0.44:0.84:0.05",
                         help="start:stop:step or comma list")
    p_sweep.add_argument("--paths", type=int, default=1000)
    p_sweep.add_argument("--form", choices=["theta", "m"], default="m")
    p_sweep.add_argument("--a-init", dest="a_init", type=int, default=1, choices=[-1, 1])
    p_sweep.add_argument("--dump", help="CSV output path")
    p_sweep.set_defaults(func=cmd_sweep)

    p_verify = sub.add_parser("verify", help="run construction and boundary checks")
    _add_common(p_verify)
    p_verify.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"error [{exc.key}]: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # solver/simulation failures
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
