"""Sequence-conditioned solves: assembly, roots, residuals, variants."""

import numpy as np
import pytest

from hymppc import (FixedHorizon, FreeFinal, assemble, assemble_and_solve,
                    extended_matrix, ft_jacobian, gap_residual, jpmpa, jpmpb,
                    optimal_control, solution_residuals, solve_jump_times,
                    system_dimension, transition_map)
from hymppc.errors import NoRoot, UnknownTransition
from hymppc.oracles import rk4_flow_costate

from conftest import HORIZON, chain_model, random_two_mode


def test_system_dimension_formulas():
    for n in range(1, 5):
        for n_x in (1, 2, 3):
            assert system_dimension(n, n_x, free_final=False) == 4 * n * n_x + n - 1
            assert system_dimension(n, n_x, free_final=True) == (4 * n - 2) * n_x + n - 1


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("n_x", [1, 2, 3])
def test_assemble_is_square(n, n_x):
    model = chain_model(max(n, 2), n_x)
    q = tuple(f"m{i + 1}" for i in range(n))
    sigma = ("s",) * (n - 1)
    times = [0.3 * (i + 1) for i in range(n - 1)]
    K, rhs = assemble(model, q, sigma, times, np.zeros(n_x), FixedHorizon(2.0))
    want = system_dimension(n, n_x, free_final=False)
    assert K.shape == (want, want) and rhs.shape == (want,)
    if n >= 2:
        K, rhs = assemble(model, q, sigma, times, np.zeros(n_x), FreeFinal())
        want = system_dimension(n, n_x, free_final=True)
        assert K.shape == (want, want) and rhs.shape == (want,)


def test_extended_matrix_blocks(benchmark):
    mode = benchmark.mode("q1")
    cost = benchmark.mode_cost("q1")
    Ae = extended_matrix(mode, cost)
    n_x = benchmark.n_x
    assert Ae.shape == (2 * n_x + 1, 2 * n_x + 1)
    np.testing.assert_allclose(Ae[:n_x, :n_x], mode.A)
    S = mode.Bu @ np.linalg.solve(cost.Wu, mode.Bu.T)
    np.testing.assert_allclose(Ae[:n_x, n_x:2 * n_x], -S)
    np.testing.assert_allclose(Ae[n_x:2 * n_x, :n_x], -cost.Wx)
    np.testing.assert_allclose(Ae[n_x:2 * n_x, n_x:2 * n_x], -mode.A.T)
    np.testing.assert_allclose(Ae[2 * n_x, :], 0.0)


def test_transition_map_matches_rk4(benchmark):
    mode = benchmark.mode("q1")
    cost = benchmark.mode_cost("q1")
    Ae = extended_matrix(mode, cost)
    z0 = np.array([0.3, -0.2, 0.1, 0.4, 1.0])
    Psi = transition_map(mode, cost, 0.7)
    _, zs = rk4_flow_costate(Ae, z0, 0.7, dt=1e-4)
    np.testing.assert_allclose(Psi @ z0, zs[-1][:4], atol=1e-9)


def test_single_mode_solve_matches_linear_flow(benchmark):
    # n = 1: no root-find, just the two-point linear solve
    _, J, sol = jpmpa(benchmark, np.array([0.5, -0.5]), (), ("q1",), HORIZON)
    u = sol.unknowns
    Ae = extended_matrix(benchmark.mode("q1"), benchmark.mode_cost("q1"))
    z0 = np.concatenate([u.x_plus[0], u.lambda_plus[0], [1.0]])
    _, zs = rk4_flow_costate(Ae, z0, HORIZON, dt=1e-4)
    np.testing.assert_allclose(zs[-1][:2], u.x_minus[0], atol=1e-8)
    np.testing.assert_allclose(zs[-1][2:4], u.lambda_minus[0], atol=1e-8)
    # terminal condition ties the flow down
    cost = benchmark.mode_cost("q1")
    np.testing.assert_allclose(u.lambda_minus[0],
                               cost.Wf @ (u.x_minus[0] - cost.xbar), atol=1e-9)


def test_benchmark_two_mode_root(benchmark):
    _, _, sol = jpmpa(benchmark, np.zeros(2), ("s1",), ("q1", "q2"), HORIZON)
    t1 = sol.jump_times[0]
    assert 0.0 < t1 < HORIZON
    g = benchmark.guard_residual("q1", "s1", "q2", sol.unknowns.x_minus[0])
    assert abs(g) <= 1e-10
    F = gap_residual(benchmark, ("q1", "q2"), ("s1",), np.zeros(2),
                     FixedHorizon(HORIZON), [t1])
    assert np.max(np.abs(F)) <= 1e-9


def test_free_final_transversality(benchmark):
    _, Jm, sol = jpmpb(benchmark, np.zeros(2), ("s1",), ("q1", "q2"),
                       t_scale=HORIZON)
    assert np.max(np.abs(sol.unknowns.lambda_plus[1])) <= 1e-10
    assert Jm > 0.0
    # prefix score must undercut the fixed-horizon completion through q2
    _, J, _ = jpmpa(benchmark, np.zeros(2), ("s1",), ("q1", "q2"), HORIZON)
    assert Jm <= J + 1e-8


def test_jpmpb_needs_a_jump(benchmark):
    with pytest.raises(ValueError):
        jpmpb(benchmark, np.zeros(2), (), ("q1",))


def test_undeclared_transition_raises(benchmark):
    with pytest.raises(UnknownTransition):
        solve_jump_times(benchmark, ("q2", "q1"), ("s1",), np.zeros(2),
                         FixedHorizon(HORIZON))


def test_no_root_when_guard_unreachable(benchmark):
    # starting deep in q2's half-space, the q1 dynamics can't be made to
    # cross back and forth within the horizon at optimality from x0 far away
    with pytest.raises(NoRoot):
        jpmpa(benchmark, np.array([-50.0, 0.0]), ("s1",), ("q1", "q2"), 0.05)


def test_solver_is_deterministic(benchmark):
    a = jpmpa(benchmark, np.zeros(2), ("s1",), ("q1", "q2"), HORIZON)[2]
    b = jpmpa(benchmark, np.zeros(2), ("s1",), ("q1", "q2"), HORIZON)[2]
    assert a.jump_times == b.jump_times
    assert a.cost.J == b.cost.J


def test_residuals_on_benchmark(benchmark):
    _, _, sol = jpmpa(benchmark, np.zeros(2), ("s1",), ("q1", "q2"), HORIZON)
    r = solution_residuals(benchmark, ("q1", "q2"), ("s1",), sol)
    assert r["costate_ode"] <= 1e-6
    assert r["costate_jump"] <= 1e-9
    assert r["terminal"] <= 1e-9
    assert r["guard"] <= 1e-9
    assert r["hamiltonian_gap"] <= 1e-8


def test_ft_jacobian_matches_central_difference(benchmark):
    q, sigma = ("q1", "q2"), ("s1",)
    x0 = np.zeros(2)
    variant = FixedHorizon(HORIZON)
    t = np.array([0.8])
    J_fwd = ft_jacobian(benchmark, q, sigma, x0, variant, t)
    h = 1e-6
    Fp = gap_residual(benchmark, q, sigma, x0, variant, t + h)
    Fm = gap_residual(benchmark, q, sigma, x0, variant, t - h)
    J_cen = (Fp - Fm) / (2 * h)
    assert np.allclose(J_fwd, J_cen, rtol=1e-4)


def test_optimal_control_formula(benchmark):
    mode = benchmark.mode("q1")
    cost = benchmark.mode_cost("q1")
    lam = np.array([0.7, -0.2])
    u = optimal_control(mode, cost, lam)
    np.testing.assert_allclose(
        u, cost.ubar - np.linalg.solve(cost.Wu, mode.Bu.T @ lam))


def test_random_instance_solves(benchmark):
    model, x0 = random_two_mode(seed=0)
    _, J, sol = jpmpa(model, x0, ("s",), ("m1", "m2"), HORIZON)
    assert np.isfinite(J)
    r = solution_residuals(model, ("m1", "m2"), ("s",), sol)
    assert r["hamiltonian_gap"] <= 1e-8


def test_condition_number_reported(benchmark):
    u = assemble_and_solve(benchmark, ("q1", "q2"), ("s1",), [0.9],
                           np.zeros(2), FixedHorizon(HORIZON))
    assert np.isfinite(u.condition) and u.condition >= 1.0
