"""Quantitative self-checks behind the `hymppc bench` subcommand.

Each check returns (name, passed, detail).  These mirror the repository's
acceptance tests at a slightly coarser oracle resolution so the whole table
runs in well under a minute.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import NoRoot, SingularSystem
from .model import AffineHybridModel, validate
from .mpc import MpcLimits, closed_loop_run, iteration_bound, mpc_step
from .oracles import expm_taylor, riccati_lqr
from .sim import Simulator, simulate
from .solver import (FixedHorizon, SolverOptions, assemble, assemble_and_solve,
                     build_execution, jpmpa, jpmpb, solution_residuals,
                     system_dimension, transition_map)
from .execution import execution_cost

HORIZON = 2.0


def check_validation(model) -> tuple[str, bool, str]:
    rep = validate(model)
    ok = not rep.errors and not rep.warnings
    return ("model validation", ok,
            f"{len(rep.errors)} errors, {len(rep.warnings)} warnings")


def check_lqr_oracle(model, dt=1e-4) -> tuple[str, bool, str]:
    q0 = sorted(model.modes)[0]
    mode = model.mode(q0)
    cost = model.mode_cost(q0)
    x0 = np.zeros(model.n_x)
    _, J, sol = jpmpa(model, x0, (), (q0,), HORIZON)
    ora = riccati_lqr(mode.A, mode.Bu, mode.Bc, cost.Wx, cost.Wu, cost.Wc,
                      cost.xbar, cost.ubar, cost.Wf, x0, HORIZON, dt=dt)
    xerr = max(np.max(np.abs(sol.execution.evaluate(t, "right").x - x))
               for t, x in zip(ora.ts[::50], ora.xs[::50]))
    jerr = abs(J - ora.cost) / max(1.0, abs(ora.cost))
    ok = xerr <= 1e-6 and jerr <= 1e-6
    return ("LQR vs Riccati oracle", ok, f"sup|x| err {xerr:.2e}, rel cost err {jerr:.2e}")


def check_residuals(model) -> tuple[str, bool, str]:
    _, _, sol = jpmpa(model, np.zeros(model.n_x), ("s1",), ("q1", "q2"), HORIZON)
    r = solution_residuals(model, ("q1", "q2"), ("s1",), sol)
    ok = (r["costate_ode"] <= 1e-6 and r["costate_jump"] <= 1e-9
          and r["terminal"] <= 1e-9 and r["guard"] <= 1e-9
          and r["hamiltonian_gap"] <= 1e-8)
    worst = max(r.items(), key=lambda kv: kv[1])
    return ("maximum-principle residuals", ok, f"worst {worst[0]} = {worst[1]:.2e}")


def check_dimensions(model) -> tuple[str, bool, str]:
    K, _ = assemble(model, ("q1", "q2"), ("s1",), [1.0], np.zeros(model.n_x),
                    FixedHorizon(HORIZON))
    want = system_dimension(2, model.n_x, free_final=False)
    ok = K.shape == (want, want)
    return ("square system dimension", ok, f"shape {K.shape}, expected {want}")


def check_replay(model) -> tuple[str, bool, str]:
    _, _, sol = jpmpa(model, np.zeros(model.n_x), ("s1",), ("q1", "q2"), HORIZON)
    ex = sol.execution

    def sched(t):
        return ex.evaluate(min(t, HORIZON), "right").u, "s1"

    rep = simulate(model, np.zeros(model.n_x), "q1", sched, HORIZON)
    xerr = max(np.max(np.abs(rep.evaluate(t, "right").x - ex.evaluate(t, "right").x))
               for t in np.linspace(0, HORIZON, 201))
    terr = abs(rep.jump_times[0] - sol.jump_times[0])
    ok = xerr <= 1e-5 and terr <= 1e-6
    return ("simulator replay", ok, f"sup|x| err {xerr:.2e}, jump-time err {terr:.2e}")


def enumerate_sequences(model, q0, max_depth):
    """All declared mode/input sequences from q0 with |q| <= max_depth."""
    seqs = [((q0,), ())]
    frontier = [((q0,), ())]
    while frontier:
        nxt = []
        for q, s in frontier:
            if len(q) >= max_depth:
                continue
            for sig, q2 in model.transitions_from(q[-1]):
                ext = (q + (q2,), s + (sig,))
                seqs.append(ext)
                nxt.append(ext)
        frontier = nxt
    return seqs


def check_bnb_exactness(model) -> tuple[str, bool, str]:
    x0 = np.zeros(model.n_x)
    res = mpc_step(model, "q1", x0, HORIZON, limits=MpcLimits(max_depth=3))
    best = np.inf
    for q, s in enumerate_sequences(model, "q1", 3):
        try:
            _, J, _ = jpmpa(model, x0, s, q, HORIZON)
        except (NoRoot, SingularSystem):
            continue
        best = min(best, J)
    ok = abs(res.chosen.J - best) <= 1e-8
    return ("branch-and-bound exactness", ok,
            f"winner J {res.chosen.J:.9g} vs exhaustive {best:.9g}")


def check_lower_bound(model, grid=40) -> tuple[str, bool, str]:
    x0 = np.zeros(model.n_x)
    _, Jm, _ = jpmpb(model, x0, ("s1",), ("q1", "q2"), t_scale=HORIZON)
    worst = np.inf
    for t1 in np.linspace(0.05, HORIZON - 0.05, grid):
        try:
            u = assemble_and_solve(model, ("q1", "q2"), ("s1",), [t1], x0,
                                   FixedHorizon(HORIZON))
            ex = build_execution(model, ("q1", "q2"), ("s1",), [t1],
                                 FixedHorizon(HORIZON), u)
            worst = min(worst, execution_cost(model, ex).J)
        except SingularSystem:
            continue
    ok = Jm <= worst + 1e-8
    return ("prefix lower bound", ok, f"J_m {Jm:.6g} <= min completion {worst:.6g}")


def check_iteration_bound(model) -> tuple[str, bool, str]:
    x0 = np.zeros(model.n_x)
    res = mpc_step(model, "q1", x0, HORIZON, limits=MpcLimits(max_depth=3))
    h_min = model.min_jump_cost()
    n_sigma = len({t.input for t in model.transitions})
    bound = iteration_bound(res.chosen.J, h_min, len(model.modes), n_sigma)
    unit_ok = iteration_bound(2.0, 1.0, 2, 1) == 3 and iteration_bound(2.0, 1.0, 3, 2) == 21
    ok = res.iterations <= bound and unit_ok
    return ("iteration bound", ok, f"{res.iterations} iterations <= bound {bound}")


def check_expm(model, seed=0) -> tuple[str, bool, str]:
    q0 = sorted(model.modes)[0]
    mode = model.mode(q0)
    cost = model.mode_cost(q0)
    n_x = model.n_x
    Psi0 = transition_map(mode, cost, 0.0)
    id_ok = np.array_equal(Psi0, np.eye(2 * n_x + 1)[: 2 * n_x, :])
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(5):
        a, b = rng.uniform(0.05, 1.0, size=2)
        Pab = transition_map(mode, cost, a + b)
        from scipy.linalg import expm
        prod = transition_map(mode, cost, a) @ expm(b * _ae(mode, cost))
        ref = _top(expm_taylor((a + b) * _ae(mode, cost)), n_x)
        worst = max(worst,
                    float(np.max(np.abs(Pab - prod))) / max(1.0, np.max(np.abs(Pab))),
                    float(np.max(np.abs(Pab - ref))) / max(1.0, np.max(np.abs(Pab))))
    ok = id_ok and worst <= 1e-10
    return ("matrix exponential contract", ok,
            f"identity {'exact' if id_ok else 'BROKEN'}, semigroup err {worst:.2e}")


def _ae(mode, cost):
    from .solver import extended_matrix
    return extended_matrix(mode, cost)


def _top(M, n_x):
    return M[: 2 * n_x, :]


def check_closed_loop(model) -> tuple[str, bool, str]:
    x0 = np.zeros(model.n_x)
    plant = Simulator(model, x0, "q1")
    trace = closed_loop_run(model, plant, x0, "q1", horizon=HORIZON, dt=0.1,
                            steps=40, limits=MpcLimits(max_depth=3))
    target = model.mode_cost(trace.final_q).xbar
    dist = float(np.linalg.norm(trace.final_x - target))
    ok = dist <= 0.05
    return ("closed-loop target", ok, f"final distance {dist:.4f} (<= 0.05)")


def run_all(model: AffineHybridModel, seed: int = 0) -> list[tuple[str, bool, str]]:
    checks = [
        check_validation,
        check_lqr_oracle,
        check_residuals,
        check_dimensions,
        check_replay,
        check_bnb_exactness,
        check_lower_bound,
        check_iteration_bound,
        lambda m: check_expm(m, seed=seed),
        check_closed_loop,
    ]
    return [c(model) for c in checks]
