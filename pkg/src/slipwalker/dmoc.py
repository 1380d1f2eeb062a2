"""Trajectory optimization by direct transcription of the discrete dynamics.

The tracking cost is summed over interval midpoints while the forced
discrete Euler-Lagrange equations, the optional velocity boundary
conditions and the discrete leg-exchange linking conditions enter as
equality constraints of a nonlinear program.  The program is solved by
an equality-constrained SQP: Newton steps on the KKT system with the
exact constraint Jacobian, the (exact, constant) cost Hessian and an
l1-merit backtracking line search.

Impact handling is multi-phase: the number and grid indices of impacts
are frozen from the zero-control warm start; at an impact interval the
two bracketing configurations get duplicated pre/post copies tied
together by the closed-form discrete impact map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, InvalidParameterError
from .integrator import (
    DiscretePath,
    ImpactRecord,
    IntegratorConfig,
    _discrete_impact_jacobian,
    _half_step_force,
    _half_step_force_jacobians,
    _Ld_hessian_blocks,
    d1_Ld,
    d2_Ld,
    discrete_impact,
    legendre_momentum,
    simulate_hybrid,
)
from .model import ReferenceTrajectory, WalkerParams, reference_eval

__all__ = [
    "OCProblem",
    "TabulatedReference",
    "SolverConfig",
    "NLPResult",
    "TranscribedProblem",
    "discrete_cost",
    "assemble_nlp",
    "solve",
    "constraint_jacobian",
    "zero_control_warm_start",
    "path_to_decision",
    "reference_from_path",
]


@dataclass
class TabulatedReference:
    """Per-interval midpoint reference samples (one row per interval)."""

    x: np.ndarray
    theta: np.ndarray
    xdot: np.ndarray
    thetadot: np.ndarray

    def __post_init__(self):
        n = len(self.x)
        if not (len(self.theta) == len(self.xdot) == len(self.thetadot) == n):
            raise InvalidParameterError("tabulated reference columns differ in length")


def reference_from_path(path: DiscretePath) -> TabulatedReference:
    """Midpoint/divided-difference samples of an existing discrete path.

    A path reproduced through these samples has exactly zero tracking
    cost, which makes it the fixed point of the zero-control problem.
    """
    q = path.configs
    h = float(path.times[1] - path.times[0])
    return TabulatedReference(
        x=0.5 * (q[:-1, 0] + q[1:, 0]),
        theta=0.5 * (q[:-1, 1] + q[1:, 1]),
        xdot=np.diff(q[:, 0]) / h,
        thetadot=np.diff(q[:, 1]) / h,
    )


@dataclass
class OCProblem:
    """One discrete trajectory-tracking instance."""

    params: WalkerParams
    n_steps: int
    h: float
    epsilon: float
    eta: float
    rho: float
    q0: np.ndarray
    qN: np.ndarray
    reference: ReferenceTrajectory | TabulatedReference
    qdot0: np.ndarray | None = None
    qdotN: np.ndarray | None = None
    impact_intervals: list[int] | None = None  # None -> read off the warm start

    def __post_init__(self):
        if self.n_steps < 2:
            raise InvalidParameterError(f"n_steps must be >= 2, got {self.n_steps}")
        if self.h <= 0.0:
            raise InvalidParameterError(f"h must be positive, got {self.h}")
        if self.epsilon <= 0.0:
            raise InvalidParameterError(f"epsilon must be > 0, got {self.epsilon}")
        if self.eta < 0.0 or self.rho < 0.0:
            raise InvalidParameterError("eta and rho must be >= 0")
        self.q0 = np.asarray(self.q0, dtype=float)
        self.qN = np.asarray(self.qN, dtype=float)
        if self.qdot0 is not None:
            self.qdot0 = np.asarray(self.qdot0, dtype=float)
        if self.qdotN is not None:
            self.qdotN = np.asarray(self.qdotN, dtype=float)


@dataclass(frozen=True)
class SolverConfig:
    feas_tol: float = 1e-8
    opt_tol: float = 1e-6
    max_iter: int = 200
    newton_tol: float = 1e-12
    levenberg: float = 1e-8
    armijo: float = 1e-4
    max_backtracks: int = 40


@dataclass
class NLPResult:
    """Solution of one transcribed instance."""

    path: DiscretePath
    objective: float
    constraint_residual: float
    stationarity: float
    multipliers: np.ndarray
    iterations: int
    status: str  # converged | max-iter | line-search-failure


def _reference_samples(problem: OCProblem) -> np.ndarray:
    """(N, 4) array of (x_r, theta_r, xdot_r, thetadot_r) per interval."""
    n, h = problem.n_steps, problem.h
    ref = problem.reference
    if isinstance(ref, TabulatedReference):
        if len(ref.x) != n:
            raise InvalidParameterError(
                f"tabulated reference has {len(ref.x)} rows, expected {n}"
            )
        return np.stack([ref.x, ref.theta, ref.xdot, ref.thetadot], axis=-1)
    samples = np.empty((n, 4))
    for k in range(n):
        samples[k] = reference_eval(ref, h * (2 * k + 1) / 2.0)
    return samples


def _interval_cost(problem: OCProblem, qa, qb, u, ref_row):
    """Midpoint discrete cost of one interval; numpy-broadcastable."""
    h = problem.h
    qa = np.asarray(qa, dtype=float)
    qb = np.asarray(qb, dtype=float)
    u = np.asarray(u, dtype=float)
    mx = 0.5 * (qa[..., 0] + qb[..., 0])
    mtheta = 0.5 * (qa[..., 1] + qb[..., 1])
    vx = (qb[..., 0] - qa[..., 0]) / h
    vtheta = (qb[..., 1] - qa[..., 1]) / h
    return 0.5 * h * (
        problem.epsilon * (u[..., 0] ** 2 + u[..., 1] ** 2)
        + problem.eta * ((mx - ref_row[0]) ** 2 + (mtheta - ref_row[1]) ** 2)
        + problem.rho * ((vx - ref_row[2]) ** 2 + (vtheta - ref_row[3]) ** 2)
    )


def discrete_cost(problem: OCProblem, q_k, q_k1, u_k, k: int) -> float:
    """Discrete tracking cost of interval k."""
    if not 0 <= k < problem.n_steps:
        raise InvalidParameterError(f"interval index {k} outside [0, {problem.n_steps})")
    ref = _reference_samples(problem)[k]
    return float(_interval_cost(problem, q_k, q_k1, u_k, ref))


def _eliminated_objective(problem: OCProblem, pts: np.ndarray) -> np.ndarray:
    """Objective over free variables after exact control elimination.

    Used by the brute-force oracle for N in {2, 3}: the discrete dynamics
    determine the control sums, so u_0 (and u_{N-1}) follow from the
    interior configurations and the remaining free control block.
    """
    from .integrator import del_residual

    n, h = problem.n_steps, problem.h
    params = problem.params
    ref = _reference_samples(problem)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    q0, qN = problem.q0, problem.qN
    if n == 2:
        q1, u1 = pts[:, 0:2], pts[:, 2:4]
        u0 = -del_residual(params, q0, q1, qN, None, None, h) - u1
        return (
            _interval_cost(problem, q0, q1, u0, ref[0])
            + _interval_cost(problem, q1, qN, u1, ref[1])
        )
    q1, q2, u1 = pts[:, 0:2], pts[:, 2:4], pts[:, 4:6]
    u0 = -del_residual(params, q0, q1, q2, None, None, h) - u1
    u2 = -del_residual(params, q1, q2, qN, None, None, h) - u1
    return (
        _interval_cost(problem, q0, q1, u0, ref[0])
        + _interval_cost(problem, q1, q2, u1, ref[1])
        + _interval_cost(problem, q2, qN, u2, ref[2])
    )


class TranscribedProblem:
    """Flattened NLP: objective, equality constraints and derivatives.

    Decision vector layout: interior configurations q_1..q_{N-1}, then a
    4-slot post-impact duplicate block per impact interval, then controls
    u_0..u_{N-1}.
    """

    def __init__(self, problem: OCProblem, impact_intervals=None):
        self.problem = problem
        n = problem.n_steps
        if impact_intervals is None:
            impact_intervals = problem.impact_intervals or []
        ks = sorted(int(k) for k in impact_intervals)
        for k in ks:
            if not 1 <= k <= n - 2:
                raise ConfigError(
                    f"impact interval {k} outside the interior range [1, {n - 2}]"
                )
        if len(set(ks)) != len(ks) or any(b - a < 2 for a, b in zip(ks, ks[1:])):
            raise ConfigError(f"impact intervals overlap: {ks}")
        self.impact_intervals = ks
        self._pair_of_index = {}
        for m, k in enumerate(ks):
            self._pair_of_index[k] = m
            self._pair_of_index[k + 1] = m
        self.n_base = 2 * (n - 1)
        self.n_dup = 4 * len(ks)
        self.n_ctrl = 2 * n
        self.n_dec = self.n_base + self.n_dup + self.n_ctrl
        self.n_res = 2 * (n - 1)
        self.n_link = 4 * len(ks)
        self.n_bc = (2 if problem.qdot0 is not None else 0) + (
            2 if problem.qdotN is not None else 0
        )
        self.n_con = self.n_res + self.n_link + self.n_bc
        self.ref = _reference_samples(problem)
        self._hessian = self._build_cost_hessian()

    # -- decision-vector access ----------------------------------------------

    def _base_offset(self, j: int) -> int:
        return 2 * (j - 1)

    def _dup_offset(self, j: int) -> int:
        m = self._pair_of_index[j]
        k = self.impact_intervals[m]
        return self.n_base + 4 * m + (0 if j == k else 2)

    def _ctrl_offset(self, i: int) -> int:
        return self.n_base + self.n_dup + 2 * i

    def _slot(self, j: int, post: bool):
        """(offset or None, fixed_value or None) of grid index j."""
        n = self.problem.n_steps
        if j == 0:
            return None, self.problem.q0
        if j == n:
            return None, self.problem.qN
        if post and j in self._pair_of_index:
            return self._dup_offset(j), None
        return self._base_offset(j), None

    def _value(self, z, j: int, post: bool) -> np.ndarray:
        off, fixed = self._slot(j, post)
        return fixed if off is None else z[off : off + 2]

    def _pair(self, z, i: int, mode: str):
        """Configurations of interval i, with impact-pair versions.

        mode 'in': the pair as produced by the flow entering the impact
        (pre values on the impact interval itself); mode 'out': the pair
        the flow continues from (post values on the impact interval).
        """
        out = []
        for j in (i, i + 1):
            m = self._pair_of_index.get(j)
            if m is None:
                post = False
            else:
                k = self.impact_intervals[m]
                post = i >= (k if mode == "out" else k + 1)
            out.append((j, post))
        return out

    def _pair_values(self, z, i: int, mode: str):
        (ja, pa), (jb, pb) = self._pair(z, i, mode)
        return self._value(z, ja, pa), self._value(z, jb, pb)

    def control(self, z, i: int) -> np.ndarray:
        off = self._ctrl_offset(i)
        return z[off : off + 2]

    # -- objective -----------------------------------------------------------

    def objective(self, z) -> float:
        total = 0.0
        for i in range(self.problem.n_steps):
            qa, qb = self._pair_values(z, i, "in")
            total += float(
                _interval_cost(self.problem, qa, qb, self.control(z, i), self.ref[i])
            )
        return total

    def gradient(self, z) -> np.ndarray:
        pb = self.problem
        h = pb.h
        g = np.zeros(self.n_dec)
        for i in range(pb.n_steps):
            (ja, pa), (jb, pbb) = self._pair(z, i, "in")
            qa = self._value(z, ja, pa)
            qb = self._value(z, jb, pbb)
            u = self.control(z, i)
            mx = 0.5 * (qa[0] + qb[0]) - self.ref[i, 0]
            mt = 0.5 * (qa[1] + qb[1]) - self.ref[i, 1]
            vx = (qb[0] - qa[0]) / h - self.ref[i, 2]
            vt = (qb[1] - qa[1]) / h - self.ref[i, 3]
            ga = 0.5 * h * np.array(
                [
                    pb.eta * mx - 2.0 * pb.rho * vx / h,
                    pb.eta * mt - 2.0 * pb.rho * vt / h,
                ]
            )
            gb = 0.5 * h * np.array(
                [
                    pb.eta * mx + 2.0 * pb.rho * vx / h,
                    pb.eta * mt + 2.0 * pb.rho * vt / h,
                ]
            )
            for (j, post), grad in (((ja, pa), ga), ((jb, pbb), gb)):
                off, _ = self._slot(j, post)
                if off is not None:
                    g[off : off + 2] += grad
            off = self._ctrl_offset(i)
            g[off : off + 2] += h * pb.epsilon * u
        return g

    def _build_cost_hessian(self) -> np.ndarray:
        pb = self.problem
        h = pb.h
        H = np.zeros((self.n_dec, self.n_dec))
        z = np.zeros(self.n_dec)  # slot layout only; values unused
        diag = 0.5 * h * np.array([pb.eta / 2.0, pb.eta / 2.0])
        dd = 0.5 * h * np.array([2.0 * pb.rho / h ** 2, 2.0 * pb.rho / h ** 2])
        for i in range(pb.n_steps):
            (ja, pa), (jb, pbb) = self._pair(z, i, "in")
            offa, _ = self._slot(ja, pa)
            offb, _ = self._slot(jb, pbb)
            for off in (offa, offb):
                if off is None:
                    continue
                H[off, off] += diag[0] + dd[0]
                H[off + 1, off + 1] += diag[1] + dd[1]
            if offa is not None and offb is not None:
                cross_x = diag[0] - dd[0]
                cross_t = diag[1] - dd[1]
                H[offa, offb] += cross_x
                H[offb, offa] += cross_x
                H[offa + 1, offb + 1] += cross_t
                H[offb + 1, offa + 1] += cross_t
            off = self._ctrl_offset(i)
            H[off, off] += h * pb.epsilon
            H[off + 1, off + 1] += h * pb.epsilon
        return H

    def cost_hessian(self) -> np.ndarray:
        return self._hessian

    # -- constraints ---------------------------------------------------------

    def constraints(self, z) -> np.ndarray:
        pb = self.problem
        params, h = pb.params, pb.h
        n = pb.n_steps
        c = np.zeros(self.n_con)
        for j in range(1, n):
            qa_l, qb_l = self._pair_values(z, j - 1, "out")
            qa_r, qb_r = self._pair_values(z, j, "in")
            res = (
                d1_Ld(params, qa_r, qb_r, h)
                + d2_Ld(params, qa_l, qb_l, h)
                + _half_step_force(params, qa_r, qb_r, h)
                + _half_step_force(params, qa_l, qb_l, h)
                + self.control(z, j - 1)
                + self.control(z, j)
            )
            c[2 * (j - 1) : 2 * j] = res
        row = self.n_res
        for m, k in enumerate(self.impact_intervals):
            pre = np.array(
                [self._value(z, k, False), self._value(z, k + 1, False)]
            )
            post = discrete_impact(pb.params, pre, check_guard=False)
            dup = np.array(
                [self._value(z, k, True), self._value(z, k + 1, True)]
            )
            c[row : row + 4] = (dup - post).ravel()
            row += 4
        if pb.qdot0 is not None:
            q1 = self._value(z, 1, False)
            res = (
                legendre_momentum(params, pb.q0, pb.qdot0)
                + d1_Ld(params, pb.q0, q1, h)
                + _half_step_force(params, pb.q0, q1, h)
                + self.control(z, 0)
            )
            c[row : row + 2] = res
            row += 2
        if pb.qdotN is not None:
            qa, qb = self._pair_values(z, n - 1, "out")
            res = (
                legendre_momentum(params, pb.qN, pb.qdotN)
                - d2_Ld(params, qa, qb, h)
                - _half_step_force(params, qa, qb, h)
                + self.control(z, n - 1)
            )
            c[row : row + 2] = res
        return c

    def jacobian_dense(self, z) -> np.ndarray:
        pb = self.problem
        params, h = pb.params, pb.h
        n = pb.n_steps
        A = np.zeros((self.n_con, self.n_dec))

        def add(row, j, post, block):
            off, _ = self._slot(j, post)
            if off is not None:
                A[row : row + 2, off : off + 2] += block

        for j in range(1, n):
            row = 2 * (j - 1)
            (jl, pl), (jc_l, pc_l) = self._pair(z, j - 1, "out")
            (jc_r, pc_r), (jr, pr) = self._pair(z, j, "in")
            ql_a = self._value(z, jl, pl)
            ql_b = self._value(z, jc_l, pc_l)
            qr_a = self._value(z, jc_r, pc_r)
            qr_b = self._value(z, jr, pr)
            d11_l, d12_l, d22_l = _Ld_hessian_blocks(params, ql_a, ql_b, h)
            d11_r, d12_r, d22_r = _Ld_hessian_blocks(params, qr_a, qr_b, h)
            df0_l, df1_l = _half_step_force_jacobians(params, ql_a, ql_b, h)
            df0_r, df1_r = _half_step_force_jacobians(params, qr_a, qr_b, h)
            add(row, jl, pl, d12_l.T + df0_l)  # d(D2Ld + F)(left pair)/d(first)
            add(row, jc_l, pc_l, d22_l + df1_l)
            add(row, jc_r, pc_r, d11_r + df0_r)
            add(row, jr, pr, d12_r + df1_r)
            for i in (j - 1, j):
                off = self._ctrl_offset(i)
                A[row, off] += 1.0
                A[row + 1, off + 1] += 1.0
        row = self.n_res
        for m, k in enumerate(self.impact_intervals):
            pre = np.array(
                [self._value(z, k, False), self._value(z, k + 1, False)]
            )
            dmap = _discrete_impact_jacobian(pb.params, pre)
            off_pre_a, _ = self._slot(k, False)
            off_pre_b, _ = self._slot(k + 1, False)
            off_post_a, _ = self._slot(k, True)
            off_post_b, _ = self._slot(k + 1, True)
            A[row : row + 4, off_post_a : off_post_a + 2] += np.eye(4)[:, 0:2]
            A[row : row + 4, off_post_b : off_post_b + 2] += np.eye(4)[:, 2:4]
            A[row : row + 4, off_pre_a : off_pre_a + 2] -= dmap[:, 0:2]
            A[row : row + 4, off_pre_b : off_pre_b + 2] -= dmap[:, 2:4]
            row += 4
        if pb.qdot0 is not None:
            q1 = self._value(z, 1, False)
            _, d12, _ = _Ld_hessian_blocks(params, pb.q0, q1, h)
            _, df1 = _half_step_force_jacobians(params, pb.q0, q1, h)
            add(row, 1, False, d12 + df1)
            off = self._ctrl_offset(0)
            A[row, off] += 1.0
            A[row + 1, off + 1] += 1.0
            row += 2
        if pb.qdotN is not None:
            (ja, pa), (jb, pbb) = self._pair(z, n - 1, "out")
            qa = self._value(z, ja, pa)
            qb = self._value(z, jb, pbb)
            _, d12, d22 = _Ld_hessian_blocks(params, qa, qb, h)
            df0, df1 = _half_step_force_jacobians(params, qa, qb, h)
            add(row, ja, pa, -(d12.T + df0))
            add(row, jb, pbb, -(d22 + df1))
            off = self._ctrl_offset(n - 1)
            A[row, off] += 1.0
            A[row + 1, off + 1] += 1.0
        return A

    def jacobian(self, z) -> sp.csr_matrix:
        return sp.csr_matrix(self.jacobian_dense(z))

    # -- path conversion -----------------------------------------------------

    def decision_from_path(self, path: DiscretePath) -> np.ndarray:
        n = self.problem.n_steps
        if path.n_steps != n:
            raise ConfigError(
                f"path has {path.n_steps} steps, problem expects {n}"
            )
        z = np.zeros(self.n_dec)
        pre_values = {}
        for rec in path.impacts:
            pre_values[rec.index] = rec.pre_pair[0]
            pre_values[rec.index + 1] = rec.pre_pair[1]
        for j in range(1, n):
            off = self._base_offset(j)
            z[off : off + 2] = pre_values.get(j, path.configs[j])
        for j, m in self._pair_of_index.items():
            off = self._dup_offset(j)
            z[off : off + 2] = path.configs[j]
        if path.controls is not None:
            for i in range(n):
                off = self._ctrl_offset(i)
                z[off : off + 2] = path.controls[i]
        return z

    def path_from_decision(self, z) -> DiscretePath:
        pb = self.problem
        n = pb.n_steps
        configs = np.zeros((n + 1, 2))
        for j in range(n + 1):
            configs[j] = self._value(z, j, True)
        controls = np.zeros((n, 2))
        for i in range(n):
            controls[i] = self.control(z, i)
        impacts = []
        for k in self.impact_intervals:
            pre = np.array(
                [self._value(z, k, False), self._value(z, k + 1, False)]
            )
            post = np.array(
                [self._value(z, k, True), self._value(z, k + 1, True)]
            )
            impacts.append(ImpactRecord(index=k, pre_pair=pre, post_pair=post))
        return DiscretePath(
            times=pb.h * np.arange(n + 1),
            configs=configs,
            controls=controls,
            impacts=impacts,
            outcome="completed",
        )


def assemble_nlp(problem: OCProblem, impact_intervals=None) -> TranscribedProblem:
    """Transcribe one problem into objective + equality constraints."""
    return TranscribedProblem(problem, impact_intervals)


def constraint_jacobian(problem_or_nlp, decision) -> sp.csr_matrix:
    """Exact Jacobian of all equality constraints at a decision vector."""
    nlp = (
        problem_or_nlp
        if isinstance(problem_or_nlp, TranscribedProblem)
        else assemble_nlp(problem_or_nlp)
    )
    return nlp.jacobian(np.asarray(decision, dtype=float))


def zero_control_warm_start(problem: OCProblem) -> DiscretePath:
    """Feasible-by-construction start: the uncontrolled discrete flow.

    Crash termination is disabled so the path always spans the horizon;
    the impact phase plan is read off this run.
    """
    if problem.qdot0 is None:
        raise ConfigError("zero-control warm start needs an initial velocity")
    cfg = IntegratorConfig(h=problem.h)
    return simulate_hybrid(
        problem.params,
        cfg,
        problem.q0,
        problem.qdot0,
        problem.n_steps,
        stop_on_crash=False,
    )


def path_to_decision(nlp: TranscribedProblem, path: DiscretePath) -> np.ndarray:
    return nlp.decision_from_path(path)


def _solve_kkt(H, A, g, c, damping):
    n, m = H.shape[0], A.shape[0]
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = H + damping * np.eye(n)
    kkt[:n, n:] = A.T
    kkt[n:, :n] = A
    rhs = np.concatenate([-g, -c])
    sol = np.linalg.solve(kkt, rhs)
    return sol[:n], sol[n:]


def solve(
    problem: OCProblem,
    solver_cfg: SolverConfig = SolverConfig(),
    warm_start: DiscretePath | None = None,
) -> NLPResult:
    """Solve the transcribed tracking problem by equality-constrained SQP."""
    if warm_start is None and problem.impact_intervals is None:
        warm_start = zero_control_warm_start(problem)
    if problem.impact_intervals is not None:
        intervals = problem.impact_intervals
    elif warm_start is not None:
        intervals = [rec.index for rec in warm_start.impacts]
    else:
        intervals = []
    nlp = assemble_nlp(problem, intervals)

    if warm_start is not None and warm_start.n_steps == problem.n_steps:
        z = nlp.decision_from_path(warm_start)
    else:
        z = np.zeros(nlp.n_dec)
        for j in range(1, problem.n_steps):
            frac = j / problem.n_steps
            off = nlp._base_offset(j)
            z[off : off + 2] = (1.0 - frac) * problem.q0 + frac * problem.qN

    H = nlp.cost_hessian()
    mu = 1.0
    status = "max-iter"
    lam = np.zeros(nlp.n_con)
    it = 0
    for it in range(1, solver_cfg.max_iter + 1):
        c = nlp.constraints(z)
        A = nlp.jacobian_dense(z)
        g = nlp.gradient(z)
        damping = solver_cfg.levenberg
        while True:
            try:
                d, lam = _solve_kkt(H, A, g, c, damping)
            except np.linalg.LinAlgError:
                damping *= 10.0
                if damping > 1e6:
                    status = "line-search-failure"
                    break
                continue
            if np.all(np.isfinite(d)):
                break
            damping *= 10.0
            if damping > 1e6:
                status = "line-search-failure"
                break
        if status == "line-search-failure":
            break

        feas = float(np.abs(c).max()) if c.size else 0.0
        stat = float(np.abs(g + A.T @ lam).max())
        if feas <= solver_cfg.feas_tol and stat <= solver_cfg.opt_tol:
            status = "converged"
            break

        mu = max(mu, 2.0 * float(np.abs(lam).max()) + 1.0)
        merit0 = nlp.objective(z) + mu * float(np.abs(c).sum())
        descent = float(g @ d) - mu * float(np.abs(c).sum())
        alpha = 1.0
        accepted = False
        for _ in range(solver_cfg.max_backtracks):
            z_try = z + alpha * d
            merit_try = nlp.objective(z_try) + mu * float(
                np.abs(nlp.constraints(z_try)).sum()
            )
            if merit_try <= merit0 + solver_cfg.armijo * alpha * descent or (
                descent >= 0.0 and merit_try < merit0
            ):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if float(np.linalg.norm(d)) < 1e-14:
                break
            status = "line-search-failure"
            break
        z = z + alpha * d

    c = nlp.constraints(z)
    A = nlp.jacobian_dense(z)
    g = nlp.gradient(z)
    feas = float(np.abs(c).max()) if c.size else 0.0
    stat = float(np.abs(g + A.T @ lam).max())
    if status != "converged" and feas <= solver_cfg.feas_tol and stat <= solver_cfg.opt_tol:
        status = "converged"
    return NLPResult(
        path=nlp.path_from_decision(z),
        objective=nlp.objective(z),
        constraint_residual=feas,
        stationarity=stat,
        multipliers=lam,
        iterations=it,
        status=status,
    )
