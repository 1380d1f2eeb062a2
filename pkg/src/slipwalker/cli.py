"""Command-line runner: simulate, optimize and reproduce-paper.

Configuration comes from an INI-style ``key = value`` file plus a few
overriding flags.  Each run writes delimited trajectory output, a
key-value manifest and SVG figures into the output directory.  Exit
codes: 0 success, 1 usage/config error, 2 crash, 3 solver failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .dmoc import (
    OCProblem,
    SolverConfig,
    assemble_nlp,
    solve,
    zero_control_warm_start,
)
from .errors import ConfigError, WalkerError
from .figures import render_figures
from .integrator import IntegratorConfig, del_residual, simulate_hybrid
from .model import ReducedState, ReferenceTrajectory, WalkerParams, energy, reference_eval

__all__ = ["main", "load_config", "RunConfig", "DEFAULTS"]

# Recognized configuration keys, their parsers and defaults.  The defaults
# are the flat-ground reference experiment: N = 80 intervals of h = 0.1
# with tracking weights (epsilon, eta, rho) = (0.1, 100, 1).
DEFAULTS = {
    # walker
    "m": (float, 1.0),
    "inertia": (float, 0.5),
    "r": (float, 1.0),
    "g": (float, 9.8),
    "kappa": (float, 0.2),
    "a": (float, math.pi / 6.0),
    "alpha": (float, 0.0),
    # grid
    "h": (float, 0.1),
    "n_steps": (int, 80),
    # initial state
    "x0": (float, 0.0),
    "theta0": (float, math.pi / 6.0),
    "xdot0": (float, 1.0),
    "thetadot0": (float, 0.1),
    # tracking weights
    "epsilon": (float, 0.1),
    "eta": (float, 100.0),
    "rho": (float, 1.0),
    # reference trajectory
    "xbar_r0": (float, 0.0),
    "xbardot_r0": (float, 1.0),
    "thetadot_r0": (float, -0.08),
    "x_composition": (str, "printed"),
    # terminal configuration (nan -> take the reference at T)
    "xn": (float, math.nan),
    "thetan": (float, math.nan),
    # solver
    "feas_tol": (float, 1e-8),
    "opt_tol": (float, 1e-6),
    "max_iter": (int, 200),
    "newton_tol": (float, 1e-12),
    # misc
    "seed": (int, 0),
    "out_dir": (str, ""),
}

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


class RunConfig(dict):
    """Resolved key-value configuration with attribute access."""

    def __getattr__(self, key):
        try:
            return self[key]
        except KeyError as exc:
            raise AttributeError(key) from exc


def _parse_value(key: str, raw: str, where: str):
    kind, _ = DEFAULTS[key]
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in _BOOL_TRUE:
                return True
            if low in _BOOL_FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: field '{key}': {exc}") from exc


def load_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    """Defaults, overlaid by an optional file and explicit overrides.

    The file format is flat ``key = value`` with ``#`` comments.  Unknown
    keys and unparsable values raise ConfigError naming the line.
    """
    cfg = RunConfig({k: v for k, (_, v) in DEFAULTS.items()})
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                lines = fh.readlines()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for lineno, line in enumerate(lines, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {text!r}")
            key, raw = (part.strip() for part in text.split("=", 1))
            if key not in DEFAULTS:
                raise ConfigError(f"{path}:{lineno}: unknown field '{key}'")
            cfg[key] = _parse_value(key, raw, f"{path}:{lineno}")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in DEFAULTS:
            raise ConfigError(f"unknown override '{key}'")
        cfg[key] = value
    return cfg


def _resolve_out_dir(cfg: RunConfig) -> str:
    out = cfg.out_dir or os.environ.get("WALKER_OUT_DIR") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _walker(cfg: RunConfig) -> WalkerParams:
    return WalkerParams.from_composites(
        cfg.m,
        cfg.inertia,
        cfg.r,
        g=cfg.g,
        kappa=cfg.kappa,
        a=cfg.a,
        alpha=cfg.alpha,
    )


def _reference(cfg: RunConfig) -> ReferenceTrajectory:
    return ReferenceTrajectory(
        r=cfg.r,
        a=cfg.a,
        xbar0=cfg.xbar_r0,
        xbardot0=cfg.xbardot_r0,
        thetadot0=cfg.thetadot_r0,
        x_composition=cfg.x_composition,
    )


# -- output writers ----------------------------------------------------------


def _fmt(value: float) -> str:
    return repr(float(value))


def _write_lines(path: str, lines: list[str]) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def _velocity_estimates(times, configs, impact_indices):
    """Central differences away from ends and impact pairs, one-sided there."""
    n = len(times) - 1
    v = np.zeros((n + 1, 2))
    for k in range(n + 1):
        central_ok = (
            0 < k < n
            and k not in impact_indices
            and (k - 1) not in impact_indices
            and times[k + 1] > times[k - 1]
        )
        if central_ok:
            v[k] = (configs[k + 1] - configs[k - 1]) / (times[k + 1] - times[k - 1])
        elif k < n:
            v[k] = (configs[k + 1] - configs[k]) / (times[k + 1] - times[k])
        else:
            v[k] = (configs[k] - configs[k - 1]) / (times[k] - times[k - 1])
    return v


def write_trajectory_csv(path: str, params: WalkerParams, discrete_path) -> None:
    times = np.asarray(discrete_path.times, dtype=float)
    q = np.asarray(discrete_path.configs, dtype=float)
    touched = discrete_path.impact_indices()
    v = _velocity_estimates(times, q, touched)
    rows = ["k,t,x,theta,xdot_est,thetadot_est,xbar,y,energy,impact_flag"]
    for k in range(len(times)):
        x, theta = q[k]
        state = ReducedState(x, theta, v[k, 0], v[k, 1])
        rows.append(
            ",".join(
                [
                    str(k),
                    _fmt(times[k]),
                    _fmt(x),
                    _fmt(theta),
                    _fmt(v[k, 0]),
                    _fmt(v[k, 1]),
                    _fmt(x - params.r * math.sin(theta)),
                    _fmt(params.r * math.cos(theta)),
                    _fmt(energy(params, state)),
                    "1" if k in touched else "0",
                ]
            )
        )
    _write_lines(path, rows)


def write_controls_csv(path: str, discrete_path) -> None:
    times = np.asarray(discrete_path.times, dtype=float)
    u = np.asarray(discrete_path.controls, dtype=float)
    rows = ["k,t_mid,u_x,u_theta"]
    for k in range(len(u)):
        t_mid = 0.5 * (times[k] + times[k + 1])
        rows.append(",".join([str(k), _fmt(t_mid), _fmt(u[k, 0]), _fmt(u[k, 1])]))
    _write_lines(path, rows)


def write_reference_csv(path: str, ref: ReferenceTrajectory, times) -> None:
    rows = ["k,t,x_r,theta_r,xdot_r,thetadot_r"]
    for k, t in enumerate(times):
        x_r, theta_r, xdot_r, thetadot_r = reference_eval(ref, float(t))
        rows.append(
            ",".join(
                [str(k), _fmt(t), _fmt(x_r), _fmt(theta_r), _fmt(xdot_r), _fmt(thetadot_r)]
            )
        )
    _write_lines(path, rows)


def write_manifest(path: str, entries: dict) -> None:
    rows = [f"{key}={value}" for key, value in entries.items()]
    _write_lines(path, rows)


def _manifest_base(cfg: RunConfig, command: str, started: float) -> dict:
    entries = {"command": command, "version": __version__}
    for key in DEFAULTS:
        entries[f"config_{key}"] = cfg[key]
    entries["wall_time_s"] = f"{time.monotonic() - started:.3f}"
    return entries


def _max_interior_residual(params: WalkerParams, discrete_path, h: float) -> float:
    """Max-norm forced DEL residual over interior non-impact grid points."""
    q = discrete_path.configs
    u = discrete_path.controls
    touched = discrete_path.impact_indices()
    worst = 0.0
    for j in range(1, len(q) - 1):
        if j in touched or (j - 1) in touched or (j + 1) in touched:
            continue
        u_prev = u[j - 1] if u is not None else None
        u_cur = u[j] if u is not None else None
        res = del_residual(params, q[j - 1], q[j], q[j + 1], u_prev, u_cur, h)
        worst = max(worst, float(np.abs(res).max()))
    return worst


# -- commands ----------------------------------------------------------------


def cmd_simulate(cfg: RunConfig) -> int:
    started = time.monotonic()
    out = _resolve_out_dir(cfg)
    params = _walker(cfg)
    icfg = IntegratorConfig(h=cfg.h, newton_tol=cfg.newton_tol)
    q0 = np.array([cfg.x0, cfg.theta0])
    qdot0 = np.array([cfg.xdot0, cfg.thetadot0])
    path = simulate_hybrid(params, icfg, q0, qdot0, cfg.n_steps)
    write_trajectory_csv(os.path.join(out, "trajectory.csv"), params, path)
    render_figures(out, params, path, reference=_reference(cfg))
    entries = _manifest_base(cfg, "simulate", started)
    entries["outcome"] = path.outcome
    entries["n_impacts"] = len(path.impacts)
    for rec in path.impacts:
        entries[f"impact_{rec.index}"] = _fmt(path.times[rec.index + 1])
    entries["max_del_residual"] = _fmt(_max_interior_residual(params, path, cfg.h))
    write_manifest(os.path.join(out, "manifest"), entries)
    if path.outcome == "crashed":
        print(f"simulate: crashed at t={path.times[-1]:.3f} (theta reached pi/2)")
        return 2
    print(f"simulate: completed {path.n_steps} steps, {len(path.impacts)} impact(s)")
    return 0


def _tracking_metrics(params: WalkerParams, discrete_path, ref: ReferenceTrajectory) -> dict:
    """Foot-position tracking error statistics against the reference."""
    times = np.asarray(discrete_path.times, dtype=float)
    q = np.asarray(discrete_path.configs, dtype=float)
    xbar = q[:, 0] - params.r * np.sin(q[:, 1])
    errors = np.empty(len(times))
    for k, t in enumerate(times):
        x_r, theta_r, _, _ = reference_eval(ref, float(t))
        if ref.x_composition == "printed":
            xbar_r = x_r - params.r * math.cos(theta_r)
        else:
            xbar_r = x_r - params.r * math.sin(theta_r)
        errors[k] = abs(xbar[k] - xbar_r)
    tail = errors[2 * len(errors) // 3 :]
    return {
        "foot_error_mean": float(errors.mean()),
        "foot_error_tail_mean": float(tail.mean()),
        "foot_error_max": float(errors.max()),
    }


def cmd_optimize(cfg: RunConfig) -> int:
    started = time.monotonic()
    out = _resolve_out_dir(cfg)
    params = _walker(cfg)
    ref = _reference(cfg)
    T = cfg.n_steps * cfg.h
    if math.isnan(cfg.xn) or math.isnan(cfg.thetan):
        x_T, theta_T, _, _ = reference_eval(ref, T)
        qN = np.array(
            [cfg.xn if not math.isnan(cfg.xn) else x_T,
             cfg.thetan if not math.isnan(cfg.thetan) else theta_T]
        )
    else:
        qN = np.array([cfg.xn, cfg.thetan])
    problem = OCProblem(
        params=params,
        n_steps=cfg.n_steps,
        h=cfg.h,
        epsilon=cfg.epsilon,
        eta=cfg.eta,
        rho=cfg.rho,
        q0=np.array([cfg.x0, cfg.theta0]),
        qN=qN,
        reference=ref,
        qdot0=np.array([cfg.xdot0, cfg.thetadot0]),
    )
    solver_cfg = SolverConfig(
        feas_tol=cfg.feas_tol, opt_tol=cfg.opt_tol, max_iter=cfg.max_iter
    )
    baseline = zero_control_warm_start(problem)
    result = solve(problem, solver_cfg, warm_start=baseline)

    nlp = assemble_nlp(problem, [rec.index for rec in baseline.impacts])
    baseline_objective = nlp.objective(nlp.decision_from_path(baseline))

    write_trajectory_csv(os.path.join(out, "trajectory.csv"), params, result.path)
    write_controls_csv(os.path.join(out, "controls.csv"), result.path)
    write_reference_csv(os.path.join(out, "reference.csv"), ref, result.path.times)
    render_figures(out, params, result.path, reference=ref, baseline=baseline)

    metrics = _tracking_metrics(params, result.path, ref)
    base_metrics = _tracking_metrics(params, baseline, ref)
    entries = _manifest_base(cfg, "optimize", started)
    entries.update(
        {
            "outcome": result.status,
            "objective": _fmt(result.objective),
            "baseline_objective": _fmt(baseline_objective),
            "constraint_residual": _fmt(result.constraint_residual),
            "stationarity": _fmt(result.stationarity),
            "iterations": result.iterations,
            "n_impacts": len(result.path.impacts),
            "max_control": _fmt(
                float(np.abs(result.path.controls).max()) if len(result.path.controls) else 0.0
            ),
        }
    )
    for key, value in metrics.items():
        entries[f"metric_{key}"] = _fmt(value)
    for key, value in base_metrics.items():
        entries[f"metric_baseline_{key}"] = _fmt(value)
    write_manifest(os.path.join(out, "manifest"), entries)

    print(f"optimize: {result.status} in {result.iterations} iteration(s)")
    print(f"  objective            {result.objective:.6e}")
    print(f"  baseline objective   {baseline_objective:.6e}")
    print(f"  constraint residual  {result.constraint_residual:.3e}")
    print(f"  stationarity         {result.stationarity:.3e}")
    print(f"  impacts              {len(result.path.impacts)}")
    print(f"  foot error (tail)    {metrics['foot_error_tail_mean']:.6e}")
    print(f"  baseline foot error  {base_metrics['foot_error_tail_mean']:.6e}")
    if result.status != "converged":
        print(
            f"optimize: solver failure — residual {result.constraint_residual:.3e}, "
            f"stationarity {result.stationarity:.3e}",
            file=sys.stderr,
        )
        return 3
    return 0


def cmd_reproduce_paper(cfg: RunConfig, uncontrolled: bool) -> int:
    if uncontrolled:
        return cmd_simulate(cfg)
    return cmd_optimize(cfg)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slipwalker",
        description="Sliding-foot walker: hybrid variational simulation and "
        "discrete trajectory optimization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "optimize", "reproduce-paper"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key = value config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--h", type=float, default=None, help="time step")
        p.add_argument("--N", type=int, default=None, help="number of intervals")
        p.add_argument("--seed", type=int, default=None, help="randomization seed")
        if name == "reproduce-paper":
            p.add_argument(
                "--uncontrolled",
                action="store_true",
                help="run the zero-control baseline instead of the optimization",
            )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        overrides = {
            "out_dir": args.out,
            "h": args.h,
            "n_steps": args.N,
            "seed": args.seed,
        }
        cfg = load_config(args.config, overrides)
        np.random.seed(cfg.seed)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "optimize":
            return cmd_optimize(cfg)
        return cmd_reproduce_paper(cfg, args.uncontrolled)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except WalkerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
