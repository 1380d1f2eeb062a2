"""Midpoint forced variational integrator on configuration pairs.

Configurations are length-2 arrays ``q = (x, theta)`` and controls are
length-2 arrays ``u = (u_x, u_theta)``.  The discrete Lagrangian is the
midpoint quadrature of the reduced Lagrangian; friction enters through a
pair of half-step discrete forces.  The implicit update and the
velocity-to-configuration bridge are solved by Newton iteration with the
exact 2x2 Jacobian.  ``simulate_hybrid`` alternates implicit steps with
the midpoint-discretized leg exchange whenever the angle crosses -a.

All formula-level functions broadcast over leading array dimensions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GuardViolationError, StepFailureError, ZenoGuardError
from .model import CRASH_ANGLE, WalkerParams, _friction

__all__ = [
    "IntegratorConfig",
    "DiscretePath",
    "DiscreteForcePair",
    "ImpactRecord",
    "discrete_lagrangian",
    "d1_Ld",
    "d2_Ld",
    "discrete_forces",
    "del_residual",
    "step",
    "init_from_velocity",
    "legendre_momentum",
    "momentum_velocity",
    "discrete_impact",
    "simulate_hybrid",
]


@dataclass(frozen=True)
class IntegratorConfig:
    """Time step and Newton/hybrid execution settings."""

    h: float
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    impact_cap: int = 10_000

    def __post_init__(self):
        if self.h <= 0.0:
            raise ValueError(f"h must be positive, got {self.h}")
        if self.newton_tol <= 0.0:
            raise ValueError(f"newton_tol must be positive, got {self.newton_tol}")
        if self.newton_max_iter < 1:
            raise ValueError(f"newton_max_iter must be >= 1, got {self.newton_max_iter}")


@dataclass(frozen=True)
class DiscreteForcePair:
    """Discrete force covectors assigned to the two ends of one interval."""

    f_minus: np.ndarray
    f_plus: np.ndarray


@dataclass(frozen=True)
class ImpactRecord:
    """Pre/post configuration pairs of one discrete leg exchange.

    ``index`` is the grid index k of the crossing pair (q_k, q_{k+1}).
    """

    index: int
    pre_pair: np.ndarray  # shape (2, 2): rows q_k^-, q_{k+1}^-
    post_pair: np.ndarray  # shape (2, 2): rows q_k^+, q_{k+1}^+


@dataclass
class DiscretePath:
    """Grid times, configurations, optional controls and impact records."""

    times: np.ndarray
    configs: np.ndarray  # shape (len(times), 2)
    controls: np.ndarray | None = None
    impacts: list[ImpactRecord] = field(default_factory=list)
    outcome: str = "completed"

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def impact_indices(self) -> set[int]:
        """Grid indices touched by an impact pair."""
        touched = set()
        for rec in self.impacts:
            touched.add(rec.index)
            touched.add(rec.index + 1)
        return touched


# -- discrete Lagrangian and its derivatives ---------------------------------


def _midpoint_terms(params: WalkerParams, q0, q1):
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    dx = q1[..., 0] - q0[..., 0]
    dtheta = q1[..., 1] - q0[..., 1]
    theta_mid = 0.5 * (q0[..., 1] + q1[..., 1])
    s, c = np.sin(theta_mid), np.cos(theta_mid)
    mass_theta = params.I + params.m * params.r ** 2 * s ** 2
    return dx, dtheta, s, c, mass_theta


def discrete_lagrangian(params: WalkerParams, q0, q1, h: float) -> float | np.ndarray:
    """Midpoint discrete Lagrangian over one interval."""
    dx, dtheta, s, c, mass_theta = _midpoint_terms(params, q0, q1)
    m, g, r = params.m, params.g, params.r
    ca, sa = math.cos(params.alpha), math.sin(params.alpha)
    x_mid = 0.5 * (np.asarray(q0, dtype=float)[..., 0] + np.asarray(q1, dtype=float)[..., 0])
    value = (
        m / (2.0 * h) * dx ** 2
        + mass_theta / (2.0 * h) * dtheta ** 2
        - h * m * g * r * c * ca
        + h * m * g * sa * x_mid
    )
    return value if value.ndim else float(value)


def d1_Ld(params: WalkerParams, q0, q1, h: float) -> np.ndarray:
    """Partial derivative of the discrete Lagrangian in its first argument."""
    dx, dtheta, s, c, mass_theta = _midpoint_terms(params, q0, q1)
    m, g, r = params.m, params.g, params.r
    ca, sa = math.cos(params.alpha), math.sin(params.alpha)
    dmass = 2.0 * m * r ** 2 * s * c  # d(mass_theta)/d(theta_mid)
    gx = -m / h * dx + 0.5 * h * m * g * sa
    gtheta = (
        dmass / (4.0 * h) * dtheta ** 2
        - mass_theta / h * dtheta
        + 0.5 * h * m * g * r * s * ca
    )
    return np.stack([gx, gtheta], axis=-1)


def d2_Ld(params: WalkerParams, q0, q1, h: float) -> np.ndarray:
    """Partial derivative of the discrete Lagrangian in its second argument."""
    dx, dtheta, s, c, mass_theta = _midpoint_terms(params, q0, q1)
    m, g, r = params.m, params.g, params.r
    ca, sa = math.cos(params.alpha), math.sin(params.alpha)
    dmass = 2.0 * m * r ** 2 * s * c
    gx = m / h * dx + 0.5 * h * m * g * sa
    gtheta = (
        dmass / (4.0 * h) * dtheta ** 2
        + mass_theta / h * dtheta
        + 0.5 * h * m * g * r * s * ca
    )
    return np.stack([gx, gtheta], axis=-1)


def _Ld_hessian_blocks(params: WalkerParams, q0, q1, h: float):
    """Second derivatives of the discrete Lagrangian: (D11, D12, D22).

    Each block is the 2x2 matrix of partials of the corresponding gradient;
    D21 equals D12 transposed (here diagonal, hence identical).
    """
    dx, dtheta, s, c, mass_theta = _midpoint_terms(params, q0, q1)
    m, g, r = params.m, params.g, params.r
    ca = math.cos(params.alpha)
    dmass = 2.0 * m * r ** 2 * s * c
    ddmass = 2.0 * m * r ** 2 * (c ** 2 - s ** 2)
    grav = 0.25 * h * m * g * r * c * ca
    curv = ddmass / (8.0 * h) * dtheta ** 2
    t_aa = curv - dmass / h * dtheta + mass_theta / h + grav
    t_ab = curv - mass_theta / h + grav
    t_bb = curv + dmass / h * dtheta + mass_theta / h + grav
    mh = m / h
    d11 = np.array([[mh, 0.0], [0.0, t_aa]])
    d12 = np.array([[-mh, 0.0], [0.0, t_ab]])
    d22 = np.array([[mh, 0.0], [0.0, t_bb]])
    return d11, d12, d22


# -- discrete forces ---------------------------------------------------------


def _half_step_force(params: WalkerParams, q0, q1, h: float) -> np.ndarray:
    """(h/2) times the friction covector at the interval midpoint."""
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    theta_mid = 0.5 * (q0[..., 1] + q1[..., 1])
    vx = (q1[..., 0] - q0[..., 0]) / h
    vtheta = (q1[..., 1] - q0[..., 1]) / h
    fx, ftheta = _friction(params, theta_mid, vx, vtheta)
    return 0.5 * h * np.stack([fx, ftheta], axis=-1)


def discrete_forces(params: WalkerParams, q0, q1, h: float) -> DiscreteForcePair:
    """Half-step discrete friction forces for one interval.

    Both members evaluate the continuous covector at the same midpoint, so
    they are numerically equal; f_minus is assigned to the interval start
    and f_plus to its end.
    """
    f = _half_step_force(params, q0, q1, h)
    return DiscreteForcePair(f_minus=f, f_plus=f.copy())


def _half_step_force_jacobians(params: WalkerParams, q0, q1, h: float):
    """Derivatives of the half-step force in its two arguments (2x2 each)."""
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    r, kappa = params.r, params.kappa
    theta_mid = 0.5 * (q0[1] + q1[1])
    s, c = math.sin(theta_mid), math.cos(theta_mid)
    vx = (q1[0] - q0[0]) / h
    vtheta = (q1[1] - q0[1]) / h
    w = vx + r * vtheta * c  # foot slip velocity
    scale = -0.5 * h * kappa
    # partials of w
    w_x0, w_x1 = -1.0 / h, 1.0 / h
    w_t0 = -r * c / h - 0.5 * r * s * vtheta
    w_t1 = r * c / h - 0.5 * r * s * vtheta
    # f_x = scale * w ; f_theta = scale * r * c * w
    d0 = np.array(
        [
            [scale * w_x0, scale * w_t0],
            [scale * r * c * w_x0, scale * (-0.5 * s * r * w + r * c * w_t0)],
        ]
    )
    d1 = np.array(
        [
            [scale * w_x1, scale * w_t1],
            [scale * r * c * w_x1, scale * (-0.5 * s * r * w + r * c * w_t1)],
        ]
    )
    return d0, d1


# -- forced discrete Euler-Lagrange equations --------------------------------


def del_residual(
    params: WalkerParams,
    q_prev,
    q_cur,
    q_next,
    u_prev=None,
    u_cur=None,
    h: float = None,
) -> np.ndarray:
    """Forced discrete Euler-Lagrange residual at the middle configuration.

    Zero on a discrete trajectory.  Controls enter additively, one per
    adjacent interval.
    """
    res = d1_Ld(params, q_cur, q_next, h) + d2_Ld(params, q_prev, q_cur, h)
    res = res + _half_step_force(params, q_cur, q_next, h)
    res = res + _half_step_force(params, q_prev, q_cur, h)
    if u_prev is not None:
        res = res + np.asarray(u_prev, dtype=float)
    if u_cur is not None:
        res = res + np.asarray(u_cur, dtype=float)
    return res


def _residual_jacobian_qnext(params: WalkerParams, q_cur, q_next, h: float) -> np.ndarray:
    """Derivative of the DEL residual with respect to the unknown q_next."""
    _, d12, _ = _Ld_hessian_blocks(params, q_cur, q_next, h)
    _, df1 = _half_step_force_jacobians(params, q_cur, q_next, h)
    return d12 + df1


def _newton_solve(residual_fn, jacobian_fn, q_seed, cfg: IntegratorConfig) -> np.ndarray:
    q = np.array(q_seed, dtype=float)
    res = residual_fn(q)
    norm = float(np.linalg.norm(res))
    for _ in range(cfg.newton_max_iter):
        if norm <= cfg.newton_tol:
            return q
        jac = jacobian_fn(q)
        det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
        scale = max(1.0, float(np.abs(jac).max()))
        if abs(det) < 1e-14 * scale:
            raise StepFailureError(
                f"singular Newton Jacobian (det={det})", residual_norm=norm
            )
        q = q - np.linalg.solve(jac, res)
        res = residual_fn(q)
        norm = float(np.linalg.norm(res))
    if norm <= cfg.newton_tol:
        return q
    raise StepFailureError(
        f"Newton did not converge in {cfg.newton_max_iter} iterations "
        f"(residual {norm})",
        residual_norm=norm,
    )


def step(
    params: WalkerParams,
    cfg: IntegratorConfig,
    q_prev,
    q_cur,
    u_prev=None,
    u_cur=None,
) -> np.ndarray:
    """One implicit step of the forced discrete flow: solve for q_next."""
    q_prev = np.asarray(q_prev, dtype=float)
    q_cur = np.asarray(q_cur, dtype=float)
    seed = 2.0 * q_cur - q_prev
    return _newton_solve(
        lambda q: del_residual(params, q_prev, q_cur, q, u_prev, u_cur, cfg.h),
        lambda q: _residual_jacobian_qnext(params, q_cur, q, cfg.h),
        seed,
        cfg,
    )


def legendre_momentum(params: WalkerParams, q, qdot) -> np.ndarray:
    """Continuous Legendre transform of the reduced Lagrangian."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    s = math.sin(q[1])
    mass_theta = params.I + params.m * params.r ** 2 * s ** 2
    return np.array([params.m * qdot[0], mass_theta * qdot[1]])


def momentum_velocity(params: WalkerParams, q_prev, q_cur, h: float) -> np.ndarray:
    """Velocity estimate at q_cur from the discrete Legendre momentum."""
    p = d2_Ld(params, q_prev, q_cur, h)
    s = math.sin(float(np.asarray(q_cur)[1]))
    mass_theta = params.I + params.m * params.r ** 2 * s ** 2
    return np.array([p[0] / params.m, p[1] / mass_theta])


def init_from_velocity(
    params: WalkerParams,
    cfg: IntegratorConfig,
    q0,
    qdot0,
    u0=None,
) -> np.ndarray:
    """First configuration from the forced discrete Legendre condition.

    Solves p(q0, qdot0) + D1 L_d(q0, q1) + F_d^-(q0, q1) + u0 = 0 for q1.
    This is the only velocity-to-configuration bridge in the codebase.
    """
    q0 = np.asarray(q0, dtype=float)
    qdot0 = np.asarray(qdot0, dtype=float)
    p0 = legendre_momentum(params, q0, qdot0)
    u = np.zeros(2) if u0 is None else np.asarray(u0, dtype=float)

    def residual(q1):
        return (
            p0 + d1_Ld(params, q0, q1, cfg.h) + _half_step_force(params, q0, q1, cfg.h) + u
        )

    return _newton_solve(
        residual,
        lambda q1: _residual_jacobian_qnext(params, q0, q1, cfg.h),
        q0 + cfg.h * qdot0,
        cfg,
    )


# -- discrete impact ---------------------------------------------------------


def discrete_impact(
    params: WalkerParams,
    pre_pair,
    guard_tol: float = 1e-10,
    check_guard: bool = True,
):
    """Midpoint-discretized leg exchange applied to a configuration pair.

    ``pre_pair`` holds the rows (q_0^-, q_1^-).  The closed form keeps the
    midpoint foot abscissa and the divided-difference foot velocity, resets
    the angle by 2a and scales the discrete angular difference by cos(2a).
    """
    pre = np.asarray(pre_pair, dtype=float)
    a, r = params.a, params.r
    theta0, theta1 = pre[0, 1], pre[1, 1]
    if check_guard and abs(theta0 + a) > guard_tol:
        raise GuardViolationError(
            f"discrete_impact called with theta_0={theta0}, expected -a={-a} "
            f"within {guard_tol}"
        )
    d = theta1 - theta0
    c2a = math.cos(2.0 * a)
    psi = a + 0.5 * c2a * d
    spread = 0.5 * r * d * (math.cos(a) - c2a * math.cos(psi))
    shift = r * (math.sin(a) + math.sin(psi))
    x0_post = pre[0, 0] + spread + shift
    x1_post = pre[1, 0] - spread + shift
    theta0_post = 2.0 * a + theta0
    theta1_post = c2a * d + a
    return np.array([[x0_post, theta0_post], [x1_post, theta1_post]])


def _discrete_impact_jacobian(params: WalkerParams, pre_pair) -> np.ndarray:
    """Derivative of the post pair in the pre pair, flattened (x0,t0,x1,t1)."""
    pre = np.asarray(pre_pair, dtype=float)
    a, r = params.a, params.r
    d = pre[1, 1] - pre[0, 1]
    c2a = math.cos(2.0 * a)
    psi = a + 0.5 * c2a * d
    # d(spread)/dd and d(shift)/dd
    dspread = (
        0.5 * r * (math.cos(a) - c2a * math.cos(psi))
        + 0.25 * r * d * c2a ** 2 * math.sin(psi)
    )
    dshift = 0.5 * r * c2a * math.cos(psi)
    dx0_dd = dspread + dshift
    dx1_dd = -dspread + dshift
    jac = np.zeros((4, 4))
    jac[0, 0] = 1.0
    jac[0, 1] = -dx0_dd
    jac[0, 3] = dx0_dd
    jac[1, 1] = 1.0
    jac[2, 2] = 1.0
    jac[2, 1] = -dx1_dd
    jac[2, 3] = dx1_dd
    jac[3, 1] = -c2a
    jac[3, 3] = c2a
    return jac


# -- hybrid execution --------------------------------------------------------


def simulate_hybrid(
    params: WalkerParams,
    cfg: IntegratorConfig,
    q0,
    qdot0,
    n_steps: int,
    controls=None,
    detect_impacts: bool = True,
    stop_on_crash: bool = True,
) -> DiscretePath:
    """Run the discrete hybrid flow for n_steps intervals.

    Impacts are applied to the bracketing pair whenever theta crosses -a
    from above; the stored configurations are the post-impact (right
    continuous) values, with the pre pair kept in the impact record.
    A crash (theta reaching pi/2) terminates the run when
    ``stop_on_crash`` is set.
    """
    q0 = np.asarray(q0, dtype=float)
    if controls is None:
        u = np.zeros((n_steps, 2))
    else:
        u = np.asarray(controls, dtype=float)
        if u.shape != (n_steps, 2):
            raise ValueError(f"controls must have shape ({n_steps}, 2), got {u.shape}")

    h = cfg.h
    guard = -params.a
    configs = [q0]
    impacts: list[ImpactRecord] = []
    outcome = "completed"

    q_cur = init_from_velocity(params, cfg, q0, qdot0, u[0] if n_steps else None)
    k_pair = 0  # index of the pair (configs[-2], configs[-1]) once appended

    def handle_pair(q_a, q_b, k):
        """Apply the discrete guard/reset to the freshly produced pair."""
        nonlocal outcome
        if detect_impacts and q_a[1] > guard >= q_b[1]:
            if len(impacts) >= cfg.impact_cap:
                raise ZenoGuardError(
                    f"impact cap {cfg.impact_cap} exceeded at step {k}"
                )
            pre = np.array([q_a, q_b])
            post = discrete_impact(params, pre, check_guard=False)
            impacts.append(ImpactRecord(index=k, pre_pair=pre, post_pair=post))
            return post[0], post[1]
        return q_a, q_b

    q_prev = q0
    q_a, q_b = handle_pair(q_prev, q_cur, 0)
    configs[-1] = q_a
    configs.append(q_b)
    q_prev, q_cur = q_a, q_b
    if stop_on_crash and q_cur[1] >= CRASH_ANGLE:
        outcome = "crashed"

    for k in range(1, n_steps):
        if outcome == "crashed":
            break
        q_next = step(params, cfg, q_prev, q_cur, u[k - 1], u[k])
        q_a, q_b = handle_pair(q_cur, q_next, k)
        configs[-1] = q_a
        configs.append(q_b)
        q_prev, q_cur = q_a, q_b
        if stop_on_crash and q_cur[1] >= CRASH_ANGLE:
            outcome = "crashed"

    n_done = len(configs) - 1
    return DiscretePath(
        times=h * np.arange(n_done + 1),
        configs=np.array(configs),
        controls=u[:n_done],
        impacts=impacts,
        outcome=outcome,
    )
