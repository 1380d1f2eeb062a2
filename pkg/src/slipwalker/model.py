"""Continuous-time physics of a two-mass walker whose stance foot slides.

The walker is an inverted pendulum with a point foot of mass ``m1`` and a
hip of mass ``m2`` joined by a rigid leg of length ``ell``.  The foot stays
on the ground, which reduces the configuration to ``(x, theta)``: the
horizontal position of the center of mass and the leg angle from vertical.
This module provides the reduced energies, the viscous foot-slip friction,
the forced equations of motion, the step/crash guards, the rigid-hip
impact map and the piecewise-affine reference trajectory used for
tracking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GuardViolationError, InvalidParameterError, OutOfDomainError

__all__ = [
    "WalkerParams",
    "ReducedState",
    "EmbeddedState",
    "ControlInput",
    "ReferenceTrajectory",
    "derive_composites",
    "friction_force",
    "forced_dynamics",
    "energy",
    "impact_map",
    "guards",
    "embed",
    "project",
    "reference_eval",
]

CRASH_ANGLE = math.pi / 2.0


def derive_composites(m1: float, m2: float, ell: float) -> tuple[float, float, float]:
    """Total mass, moment of inertia about the COM, and foot-to-COM distance.

    Raises InvalidParameterError unless all three inputs are strictly
    positive.
    """
    if m1 <= 0.0 or m2 <= 0.0 or ell <= 0.0:
        raise InvalidParameterError(
            f"m1, m2 and ell must be strictly positive, got "
            f"m1={m1}, m2={m2}, ell={ell}"
        )
    m = m1 + m2
    inertia = ell ** 2 * m1 * m2 / m
    r = ell * m2 / m
    return m, inertia, r


@dataclass(frozen=True)
class WalkerParams:
    """Physical constants of the walker.

    The composites ``m``, ``I`` and ``r`` are always recomputed from
    ``(m1, m2, ell)`` and never stored independently.  ``alpha`` is the
    ground-slope angle; the flat-ground model has ``alpha = 0``.
    """

    m1: float
    m2: float
    ell: float
    g: float = 9.8
    kappa: float = 0.2
    a: float = math.pi / 6.0
    alpha: float = 0.0
    m: float = field(init=False)
    I: float = field(init=False)
    r: float = field(init=False)

    def __post_init__(self):
        m, inertia, r = derive_composites(self.m1, self.m2, self.ell)
        if self.kappa < 0.0:
            raise InvalidParameterError(f"kappa must be >= 0, got {self.kappa}")
        if not 0.0 < self.a < math.pi / 2.0:
            raise InvalidParameterError(f"a must lie in (0, pi/2), got {self.a}")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "I", inertia)
        object.__setattr__(self, "r", r)

    @classmethod
    def from_composites(cls, m: float, inertia: float, r: float, **kwargs) -> "WalkerParams":
        """Build params realizing given (m, I, r).

        Inverts m = m1 + m2, I = ell^2 m1 m2 / m, r = ell m2 / m:
        ell = (I/r + m r)/m, m1 = I/(r ell), m2 = m r / ell.
        """
        if m <= 0.0 or inertia <= 0.0 or r <= 0.0:
            raise InvalidParameterError(
                f"m, I, r must be strictly positive, got m={m}, I={inertia}, r={r}"
            )
        ell = (inertia / r + m * r) / m
        m1 = inertia / (r * ell)
        m2 = m * r / ell
        return cls(m1=m1, m2=m2, ell=ell, **kwargs)

    def with_(self, **changes) -> "WalkerParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class ReducedState:
    """Point of the reduced phase space: (x, theta, xdot, thetadot)."""

    x: float
    theta: float
    xdot: float
    thetadot: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.theta, self.xdot, self.thetadot])

    @classmethod
    def from_array(cls, y) -> "ReducedState":
        return cls(float(y[0]), float(y[1]), float(y[2]), float(y[3]))


@dataclass(frozen=True)
class ControlInput:
    """Force along x and torque on theta."""

    ux: float = 0.0
    utheta: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.ux, self.utheta])


ZERO_CONTROL = ControlInput(0.0, 0.0)


@dataclass(frozen=True)
class EmbeddedState:
    """Walker state in the ambient plane: COM, foot and leg angle.

    Constructed so that y = r cos(theta) and ybar = 0 hold exactly.
    """

    x: float
    y: float
    xbar: float
    ybar: float
    theta: float
    xdot: float
    ydot: float
    xbardot: float
    ybardot: float
    thetadot: float


def embed(params: WalkerParams, state: ReducedState) -> EmbeddedState:
    """Lift a reduced state to the ambient plane."""
    r = params.r
    s, c = math.sin(state.theta), math.cos(state.theta)
    return EmbeddedState(
        x=state.x,
        y=r * c,
        xbar=state.x - r * s,
        ybar=0.0,
        theta=state.theta,
        xdot=state.xdot,
        ydot=-r * s * state.thetadot,
        xbardot=state.xdot - r * c * state.thetadot,
        ybardot=0.0,
        thetadot=state.thetadot,
    )


def project(embedded: EmbeddedState) -> ReducedState:
    """Drop an embedded state back to reduced coordinates."""
    return ReducedState(embedded.x, embedded.theta, embedded.xdot, embedded.thetadot)


def _friction(params: WalkerParams, theta, xdot, thetadot):
    """Friction covector components (F_x, F_theta); numpy-broadcastable."""
    c = np.cos(theta)
    foot_speed = xdot + params.r * thetadot * c
    fx = -params.kappa * foot_speed
    return fx, params.r * c * fx


def friction_force(params: WalkerParams, state: ReducedState) -> tuple[float, float]:
    """Viscous foot-slip friction as a force covector on (x, theta)."""
    fx, ftheta = _friction(params, state.theta, state.xdot, state.thetadot)
    return float(fx), float(ftheta)


def _accelerations(params: WalkerParams, theta, xdot, thetadot, ux, utheta):
    """(xddot, thetaddot); numpy-broadcastable over the state components."""
    m, inertia, r, g = params.m, params.I, params.r, params.g
    s, c = np.sin(theta), np.cos(theta)
    fx, ftheta = _friction(params, theta, xdot, thetadot)
    ca, sa = math.cos(params.alpha), math.sin(params.alpha)
    xddot = (fx + ux + m * g * sa) / m
    mass_theta = inertia + m * r ** 2 * s ** 2
    thetaddot = (ftheta + utheta + r * m * s * (g * ca - r * thetadot ** 2 * c)) / mass_theta
    return xddot, thetaddot


def forced_dynamics(
    params: WalkerParams, state: ReducedState, u: ControlInput = ZERO_CONTROL
) -> tuple[float, float]:
    """Accelerations (xddot, thetaddot) of the forced reduced dynamics."""
    xddot, thetaddot = _accelerations(
        params, state.theta, state.xdot, state.thetadot, u.ux, u.utheta
    )
    return float(xddot), float(thetaddot)


def energy(params: WalkerParams, state: ReducedState) -> float:
    """Total mechanical energy of the reduced system."""
    m, inertia, r, g = params.m, params.I, params.r, params.g
    s, c = math.sin(state.theta), math.cos(state.theta)
    kinetic = 0.5 * m * (state.xdot ** 2 + r ** 2 * s ** 2 * state.thetadot ** 2)
    kinetic += 0.5 * inertia * state.thetadot ** 2
    potential = m * g * (r * c * math.cos(params.alpha) - state.x * math.sin(params.alpha))
    return kinetic + potential


def guards(params: WalkerParams, state: ReducedState) -> str:
    """Classify a state: 'crash' (theta >= pi/2), 'step' (theta <= -a) or 'none'."""
    if state.theta >= CRASH_ANGLE:
        return "crash"
    if state.theta <= -params.a:
        return "step"
    return "none"


def impact_map(
    params: WalkerParams, state: ReducedState, guard_tol: float = 1e-10
) -> ReducedState:
    """Rigid-hip leg exchange at the switching surface theta = -a.

    The foot keeps its position and velocity; the angle is reset by 2a and
    the angular rate scaled by cos(2a).
    """
    a, r = params.a, params.r
    if abs(state.theta + a) > guard_tol:
        raise GuardViolationError(
            f"impact_map called at theta={state.theta}, expected -a={-a} "
            f"within {guard_tol}"
        )
    theta_post = state.theta + 2.0 * a
    thetadot_post = math.cos(2.0 * a) * state.thetadot
    x_post = state.x - r * math.sin(-a) + r * math.sin(theta_post)
    xdot_post = (
        state.xdot
        - r * state.thetadot * math.cos(-a)
        + r * thetadot_post * math.cos(theta_post)
    )
    return ReducedState(x_post, theta_post, xdot_post, thetadot_post)


@dataclass
class _Phase:
    t_start: float
    xbar_offset: float
    xbar_rate: float
    theta_rate: float
    t_end: float  # math.inf when the phase never reaches -a


@dataclass
class ReferenceTrajectory:
    """Piecewise-affine walking reference on the reduced configuration.

    Within each phase theta_r is affine with theta_r(t_start) = a, and the
    foot abscissa is affine in global time.  A phase ends when theta_r
    reaches -a; the next phase is produced by the impact map, which keeps
    the foot position and velocity and scales the angular rate by cos(2a).

    ``x_composition`` selects how the tracked first component combines the
    foot offset and the angle: "printed" uses xbar_r + r cos(theta_r),
    "model" uses the COM-consistent xbar_r + r sin(theta_r).
    """

    r: float
    a: float
    xbar0: float = 0.0
    xbardot0: float = 1.0
    thetadot0: float = -0.08
    t0: float = 0.0
    x_composition: str = "printed"

    def __post_init__(self):
        if self.x_composition not in ("printed", "model"):
            raise InvalidParameterError(
                f"x_composition must be 'printed' or 'model', got {self.x_composition!r}"
            )
        self._phases = [self._make_phase(self.t0, self.xbar0, self.xbardot0, self.thetadot0)]

    def _make_phase(self, t_start, offset, rate, theta_rate) -> _Phase:
        if theta_rate < 0.0:
            t_end = t_start + (-2.0 * self.a) / theta_rate
        else:
            t_end = math.inf
        return _Phase(t_start, offset, rate, theta_rate, t_end)

    def _phase_at(self, t: float) -> _Phase:
        if t < self.t0:
            raise OutOfDomainError(f"reference evaluated at t={t} before t0={self.t0}")
        while t >= self._phases[-1].t_end:
            last = self._phases[-1]
            # Impact: foot position/velocity unchanged, angular rate scaled.
            self._phases.append(
                self._make_phase(
                    last.t_end,
                    last.xbar_offset,
                    last.xbar_rate,
                    math.cos(2.0 * self.a) * last.theta_rate,
                )
            )
        for phase in self._phases:
            if phase.t_start <= t < phase.t_end:
                return phase
        return self._phases[-1]

    def impact_times(self, t_max: float) -> list[float]:
        """Phase-boundary instants up to t_max."""
        self._phase_at(t_max)
        return [p.t_end for p in self._phases if p.t_end <= t_max]


def reference_eval(
    ref: ReferenceTrajectory, t: float
) -> tuple[float, float, float, float]:
    """Reference sample (x_r, theta_r, xdot_r, thetadot_r) at time t."""
    phase = ref._phase_at(t)
    theta_r = ref.a + phase.theta_rate * (t - phase.t_start)
    xbar_r = phase.xbar_offset + phase.xbar_rate * t
    if ref.x_composition == "printed":
        x_r = xbar_r + ref.r * math.cos(theta_r)
        xdot_r = phase.xbar_rate - ref.r * math.sin(theta_r) * phase.theta_rate
    else:
        x_r = xbar_r + ref.r * math.sin(theta_r)
        xdot_r = phase.xbar_rate + ref.r * math.cos(theta_r) * phase.theta_rate
    return x_r, theta_r, xdot_r, phase.theta_rate
