"""Independent verification machinery.

A fixed-step classical fourth-order integrator of the continuous forced
dynamics with bisection event location, central-difference derivative
checks, and a brute-force grid optimizer for tiny tracking instances.
Everything here exists to cross-check the variational integrator and the
trajectory optimizer through an unrelated numerical route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EventLocationError, InvalidParameterError
from .model import (
    CRASH_ANGLE,
    ReducedState,
    WalkerParams,
    _accelerations,
    impact_map,
)

__all__ = [
    "OracleConfig",
    "ContinuousTrajectory",
    "integrate_continuous",
    "central_difference_jacobian",
    "fd_check",
    "brute_force_small_nlp",
]


@dataclass(frozen=True)
class OracleConfig:
    """Fine step, event tolerance and finite-difference step scale."""

    h_fine: float = 1e-4
    event_tol: float = 1e-10
    fd_scale: float = 1e-6
    impact_cap: int = 1000

    def __post_init__(self):
        if self.h_fine <= 0.0 or self.event_tol <= 0.0 or self.fd_scale <= 0.0:
            raise InvalidParameterError("oracle steps and tolerances must be positive")


@dataclass
class ContinuousTrajectory:
    """Dense output of the reference integration."""

    times: np.ndarray
    states: np.ndarray  # shape (n, 4): x, theta, xdot, thetadot
    events: list = field(default_factory=list)  # (time, pre_state, post_state)
    outcome: str = "completed"

    def final_state(self) -> ReducedState:
        return ReducedState.from_array(self.states[-1])


def _rk4_step(params, y, u, dt):
    def f(yv):
        xddot, thetaddot = _accelerations(params, yv[1], yv[2], yv[3], u[0], u[1])
        return np.array([yv[2], yv[3], xddot, thetaddot])

    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _bisect_event(params, y_prev, u, dt, target, tol, max_iter=200):
    """Find dt* in (0, dt] where theta(dt*) = target, by bisection."""
    lo, hi = 0.0, dt
    y_lo = y_prev
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        y_mid = _rk4_step(params, y_prev, u, mid)
        if abs(y_mid[1] - target) <= tol:
            return mid, y_mid
        if (y_lo[1] - target) * (y_mid[1] - target) > 0.0:
            lo, y_lo = mid, y_mid
        else:
            hi = mid
    raise EventLocationError(
        f"bisection failed to reach |theta - {target}| <= {tol}"
    )


def integrate_continuous(
    params: WalkerParams,
    state: ReducedState,
    u_of_t,
    T: float,
    cfg: OracleConfig = OracleConfig(),
    detect_impacts: bool = True,
    stop_on_crash: bool = True,
) -> ContinuousTrajectory:
    """Integrate the forced reduced dynamics with guard handling.

    ``u_of_t`` maps time to a length-2 control array, or is None for the
    uncontrolled system.  Step crossings of theta = -a are located by
    bisection and resolved with the continuous impact map; a crash at
    theta = pi/2 terminates the run.
    """
    if u_of_t is None:
        u_of_t = lambda t: np.zeros(2)
    h = cfg.h_fine
    guard = -params.a
    t = 0.0
    y = state.as_array()
    times = [t]
    states = [y]
    events = []
    outcome = "completed"
    while t < T - 1e-12 and outcome == "completed":
        dt = min(h, T - t)
        u = np.asarray(u_of_t(t + 0.5 * dt), dtype=float)
        y_new = _rk4_step(params, y, u, dt)
        if stop_on_crash and y_new[1] >= CRASH_ANGLE:
            dt_star, y_star = _bisect_event(
                params, y, u, dt, CRASH_ANGLE, cfg.event_tol
            )
            t += dt_star
            times.append(t)
            states.append(y_star)
            outcome = "crashed"
            break
        if detect_impacts and y[1] > guard >= y_new[1]:
            if len(events) >= cfg.impact_cap:
                raise EventLocationError(
                    f"impact cap {cfg.impact_cap} exceeded at t={t}"
                )
            dt_star, y_star = _bisect_event(params, y, u, dt, guard, cfg.event_tol)
            t += dt_star
            pre = ReducedState.from_array(y_star)
            post = impact_map(params, pre, guard_tol=max(10 * cfg.event_tol, 1e-9))
            y = post.as_array()
            events.append((t, pre, post))
            times.append(t)
            states.append(y)
            continue
        t += dt
        y = y_new
        times.append(t)
        states.append(y)
    return ContinuousTrajectory(
        times=np.array(times), states=np.array(states), events=events, outcome=outcome
    )


# -- finite differences ------------------------------------------------------


def central_difference_jacobian(f, x, scale: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of f at x; step scale*max(1, |x_i|)."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(f(x), dtype=float))
    jac = np.zeros((f0.size, x.size))
    for i in range(x.size):
        step = scale * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        fp = np.atleast_1d(np.asarray(f(xp), dtype=float))
        fm = np.atleast_1d(np.asarray(f(xm), dtype=float))
        jac[:, i] = (fp - fm) / (2.0 * step)
    return jac


def fd_check(f, analytic_jacobian, x, scale: float = 1e-6) -> float:
    """Max relative discrepancy between an analytic Jacobian and central FD."""
    x = np.asarray(x, dtype=float)
    fd = central_difference_jacobian(f, x, scale)
    ana = np.asarray(analytic_jacobian(x), dtype=float).reshape(fd.shape)
    denom = max(1.0, float(np.abs(ana).max()), float(np.abs(fd).max()))
    return float(np.abs(ana - fd).max() / denom)


# -- brute-force optimizer for tiny instances --------------------------------


def brute_force_small_nlp(
    problem,
    bounds,
    points_per_dim: int = 5,
    target_resolution: float = 1e-3,
):
    """Exhaustive grid minimization of a tiny tracking instance.

    Works on problems with N in {2, 3}, fixed endpoint configurations, no
    velocity boundary conditions and no impacts.  The equality constraints
    are eliminated exactly: for any interior configurations the discrete
    dynamics fix the control sums, leaving the free variables
    (q_1, ..., q_{N-1}, u_{N-1}' block) sampled on a shrinking grid until
    the grid resolution reaches ``target_resolution``.

    ``bounds`` is a list of (lo, hi) per free variable:
    N=2 -> [x1, theta1, u1x, u1theta];
    N=3 -> [x1, theta1, x2, theta2, u1x, u1theta].

    Returns (best_free_vector, best_objective).
    """
    from .dmoc import _eliminated_objective  # local import to avoid a cycle

    n = problem.n_steps
    if n not in (2, 3):
        raise InvalidParameterError(f"brute force supports N in {{2, 3}}, got N={n}")
    if problem.qdot0 is not None or problem.qdotN is not None:
        raise InvalidParameterError("brute force requires free boundary velocities")
    bounds = [tuple(map(float, b)) for b in bounds]
    ndim = 2 * (n - 1) + 2
    if len(bounds) != ndim:
        raise InvalidParameterError(f"expected {ndim} bounds, got {len(bounds)}")
    for lo, hi in bounds:
        if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
            raise InvalidParameterError(f"invalid bound ({lo}, {hi})")

    centers = np.array([0.5 * (lo + hi) for lo, hi in bounds])
    spans = np.array([0.5 * (hi - lo) for lo, hi in bounds])

    def evaluate_grid(centers, spans):
        axes = [
            np.linspace(c - s, c + s, points_per_dim) if s > 0 else np.array([c])
            for c, s in zip(centers, spans)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        values = _eliminated_objective(problem, pts)
        best = int(np.argmin(values))
        return pts[best], float(values[best])

    best_pt, best_val = evaluate_grid(centers, spans)
    # Shrink the grid around the incumbent until the spacing is resolved.
    while spans.max() > 0 and (2 * spans.max() / (points_per_dim - 1)) > target_resolution:
        spans = spans * (2.0 / (points_per_dim - 1))
        cand_pt, cand_val = evaluate_grid(best_pt, spans)
        if cand_val < best_val:
            best_pt, best_val = cand_pt, cand_val
    return best_pt, best_val
