import math

import numpy as np
import pytest

from slipwalker import (
    ConfigError,
    IntegratorConfig,
    InvalidParameterError,
    OCProblem,
    ReferenceTrajectory,
    TabulatedReference,
    WalkerParams,
    assemble_nlp,
    constraint_jacobian,
    discrete_cost,
    reference_from_path,
    simulate_hybrid,
    solve,
    zero_control_warm_start,
)
from slipwalker.dmoc import _eliminated_objective
from slipwalker.oracle import fd_check


@pytest.fixture
def params():
    return WalkerParams.from_composites(1.0, 0.5, 1.0)


@pytest.fixture
def reference():
    return ReferenceTrajectory(r=1.0, a=math.pi / 6)


def small_problem(params, reference, n=6, **kwargs):
    return OCProblem(
        params=params,
        n_steps=n,
        h=0.1,
        epsilon=0.1,
        eta=100.0,
        rho=1.0,
        q0=np.array([0.0, math.pi / 6]),
        qN=np.array([0.55, math.pi / 6 - 0.05]),
        reference=reference,
        **kwargs,
    )


class TestProblemSetup:
    def test_validation(self, params, reference):
        with pytest.raises(InvalidParameterError):
            small_problem(params, reference, n=1)
        with pytest.raises(InvalidParameterError):
            OCProblem(
                params=params,
                n_steps=4,
                h=0.1,
                epsilon=0.0,
                eta=1.0,
                rho=1.0,
                q0=np.zeros(2),
                qN=np.zeros(2),
                reference=reference,
            )

    def test_cost_value(self, params, reference):
        problem = small_problem(params, reference)
        q_k = np.array([0.0, 0.4])
        q_k1 = np.array([0.1, 0.35])
        u = np.array([0.3, -0.2])
        from slipwalker.model import reference_eval

        x_r, th_r, vx_r, vth_r = reference_eval(reference, 0.05)
        expected = 0.05 * (
            0.1 * (0.3 ** 2 + 0.2 ** 2)
            + 100.0 * ((0.05 - x_r) ** 2 + (0.375 - th_r) ** 2)
            + 1.0 * ((1.0 - vx_r) ** 2 + (-0.5 - vth_r) ** 2)
        )
        assert discrete_cost(problem, q_k, q_k1, u, 0) == pytest.approx(expected)

    def test_cost_index_checked(self, params, reference):
        problem = small_problem(params, reference)
        with pytest.raises(InvalidParameterError):
            discrete_cost(problem, np.zeros(2), np.zeros(2), np.zeros(2), 6)

    def test_tabulated_reference_validated(self):
        with pytest.raises(InvalidParameterError):
            TabulatedReference(np.zeros(3), np.zeros(3), np.zeros(2), np.zeros(3))

    def test_counting_no_impacts(self, params, reference):
        nlp = assemble_nlp(small_problem(params, reference, n=2, impact_intervals=[]))
        # one interior point (2 unknowns) + two control blocks (4 unknowns)
        assert nlp.n_dec == 6
        assert nlp.n_con == 2

    def test_counting_with_impact_and_boundaries(self, params, reference):
        problem = small_problem(
            params,
            reference,
            n=6,
            impact_intervals=[2],
            qdot0=np.array([0.5, -4.0]),
            qdotN=np.array([0.2, -1.0]),
        )
        nlp = assemble_nlp(problem)
        assert nlp.n_dec == 2 * 5 + 4 + 2 * 6
        assert nlp.n_con == 2 * 5 + 4 + 4

    def test_impact_interval_range_checked(self, params, reference):
        for bad in ([0], [5], [2, 3]):
            with pytest.raises(ConfigError):
                assemble_nlp(small_problem(params, reference, n=6, impact_intervals=bad))


class TestDerivatives:
    def test_constraint_jacobian_no_impacts(self, params, reference):
        problem = small_problem(
            params, reference, qdot0=np.array([0.5, -0.2]), impact_intervals=[]
        )
        nlp = assemble_nlp(problem)
        rng = np.random.default_rng(5)
        for _ in range(10):
            z = 0.3 * rng.normal(size=nlp.n_dec)
            err = fd_check(lambda v: nlp.constraints(v), lambda v: nlp.jacobian_dense(v), z)
            assert err < 1e-7

    def test_constraint_jacobian_with_impacts(self, params, reference):
        cfg = IntegratorConfig(h=0.1)
        path = simulate_hybrid(
            params, cfg, [0.0, params.a], [0.5, -4.0], 12, stop_on_crash=False
        )
        problem = OCProblem(
            params=params,
            n_steps=12,
            h=0.1,
            epsilon=0.1,
            eta=100.0,
            rho=1.0,
            q0=path.configs[0],
            qN=path.configs[-1],
            reference=reference,
            qdot0=np.array([0.5, -4.0]),
            qdotN=np.array([0.1, -0.5]),
            impact_intervals=[rec.index for rec in path.impacts],
        )
        nlp = assemble_nlp(problem)
        z0 = nlp.decision_from_path(path)
        rng = np.random.default_rng(6)
        for _ in range(5):
            z = z0 + 0.02 * rng.normal(size=nlp.n_dec)
            err = fd_check(lambda v: nlp.constraints(v), lambda v: nlp.jacobian_dense(v), z)
            assert err < 1e-7

    def test_sparse_jacobian_matches_dense(self, params, reference):
        problem = small_problem(params, reference, impact_intervals=[])
        nlp = assemble_nlp(problem)
        z = 0.1 * np.arange(nlp.n_dec)
        np.testing.assert_allclose(
            constraint_jacobian(problem, z).toarray(), nlp.jacobian_dense(z)
        )

    def test_cost_gradient_and_hessian(self, params, reference):
        problem = small_problem(params, reference, impact_intervals=[])
        nlp = assemble_nlp(problem)
        rng = np.random.default_rng(8)
        z = 0.3 * rng.normal(size=nlp.n_dec)
        errg = fd_check(
            lambda v: np.atleast_1d(nlp.objective(v)),
            lambda v: nlp.gradient(v).reshape(1, -1),
            z,
        )
        errh = fd_check(lambda v: nlp.gradient(v), lambda v: nlp.cost_hessian(), z)
        assert errg < 1e-7
        assert errh < 1e-8


class TestWarmStartAndSolve:
    def test_warm_start_is_feasible(self, params, reference):
        problem = small_problem(
            params,
            reference,
            n=12,
            qdot0=np.array([0.5, -4.0]),
        )
        path = zero_control_warm_start(problem)
        problem.qN = path.configs[-1]
        nlp = assemble_nlp(problem, [rec.index for rec in path.impacts])
        c = nlp.constraints(nlp.decision_from_path(path))
        assert np.abs(c).max() < 1e-10

    def test_warm_start_needs_velocity(self, params, reference):
        with pytest.raises(ConfigError):
            zero_control_warm_start(small_problem(params, reference))

    def test_solve_converges_no_impacts(self, params, reference):
        problem = small_problem(
            params, reference, qdot0=np.array([1.0, 0.1]), impact_intervals=[]
        )
        result = solve(problem)
        assert result.status == "converged"
        assert result.constraint_residual < 1e-8
        assert result.stationarity < 1e-6

    def test_solve_converges_through_impacts(self, params, reference):
        cfg = IntegratorConfig(h=0.1)
        path = simulate_hybrid(
            params, cfg, [0.0, params.a], [0.5, -4.0], 20, stop_on_crash=False
        )
        assert len(path.impacts) >= 2
        problem = OCProblem(
            params=params,
            n_steps=20,
            h=0.1,
            epsilon=0.1,
            eta=100.0,
            rho=1.0,
            q0=path.configs[0],
            qN=path.configs[-1],
            reference=ReferenceTrajectory(r=1.0, a=math.pi / 6, thetadot0=-0.5),
            qdot0=np.array([0.5, -4.0]),
        )
        result = solve(problem, warm_start=path)
        assert result.status == "converged"
        assert len(result.path.impacts) == len(path.impacts)
        assert result.constraint_residual < 1e-8

    def test_zero_control_fixed_point(self, params):
        cfg = IntegratorConfig(h=0.1)
        free = simulate_hybrid(
            params, cfg, [0.0, 0.3], [0.2, -0.1], 10, detect_impacts=False,
            stop_on_crash=False,
        )
        problem = OCProblem(
            params=params,
            n_steps=10,
            h=0.1,
            epsilon=0.1,
            eta=100.0,
            rho=1.0,
            q0=free.configs[0],
            qN=free.configs[-1],
            reference=reference_from_path(free),
            qdot0=np.array([0.2, -0.1]),
            impact_intervals=[],
        )
        result = solve(problem, warm_start=free)
        assert result.status == "converged"
        assert np.abs(result.path.controls).max() < 1e-8
        assert result.objective < 1e-12

    def test_objective_below_baseline(self, params, reference):
        problem = small_problem(
            params, reference, n=12, qdot0=np.array([1.0, 0.1])
        )
        base = zero_control_warm_start(problem)
        problem.qN = base.configs[-1]
        result = solve(problem, warm_start=base)
        nlp = assemble_nlp(problem, [rec.index for rec in base.impacts])
        baseline_objective = nlp.objective(nlp.decision_from_path(base))
        assert result.status == "converged"
        assert result.objective < baseline_objective


class TestEliminatedObjective:
    def test_matches_transcription_on_feasible_points(self, params, reference):
        # pick free variables, eliminate the forced controls, and compare
        # against the full transcription objective at the induced decision
        problem = small_problem(params, reference, n=3, impact_intervals=[])
        problem.qN = np.array([0.3, math.pi / 6 - 0.03])
        nlp = assemble_nlp(problem)
        rng = np.random.default_rng(9)
        for _ in range(5):
            q1 = problem.q0 + 0.1 * rng.normal(size=2)
            q2 = problem.qN + 0.1 * rng.normal(size=2)
            u1 = rng.normal(size=2)
            pt = np.concatenate([q1, q2, u1])
            value = float(_eliminated_objective(problem, pt[None, :])[0])
            from slipwalker.integrator import del_residual

            u0 = -del_residual(params, problem.q0, q1, q2, None, None, 0.1) - u1
            u2 = -del_residual(params, q1, q2, problem.qN, None, None, 0.1) - u1
            z = np.zeros(nlp.n_dec)
            z[0:2], z[2:4] = q1, q2
            for i, u in enumerate((u0, u1, u2)):
                off = nlp._ctrl_offset(i)
                z[off : off + 2] = u
            assert np.abs(nlp.constraints(z)).max() < 1e-10
            assert value == pytest.approx(nlp.objective(z))
