"""Executions: evaluation, cost quadrature, admissibility, trace output."""

import csv

import numpy as np
import pytest

from hymppc import (check_execution, execution_cost, execution_summary, jpmpa,
                    write_summary_json, write_trace_csv)
from hymppc.errors import DimensionMismatch
from hymppc.execution import Execution

from conftest import HORIZON


@pytest.fixture(scope="module")
def two_mode_solution(benchmark):
    _, _, sol = jpmpa(benchmark, np.zeros(2), ("s1",), ("q1", "q2"), HORIZON)
    return sol


def test_evaluate_sides_at_jump(benchmark, two_mode_solution):
    ex = two_mode_solution.execution
    t1 = ex.jump_times[0]
    left = ex.evaluate(t1, "left")
    right = ex.evaluate(t1, "right")
    assert left.q == "q1" and right.q == "q2"
    # identity reset on the benchmark: state is continuous, mode is not
    np.testing.assert_allclose(left.x, right.x, atol=1e-9)


def test_evaluate_rejects_bad_args(two_mode_solution):
    ex = two_mode_solution.execution
    with pytest.raises(ValueError):
        ex.evaluate(ex.t_final + 1.0)
    with pytest.raises(ValueError):
        ex.evaluate(0.5, side="middle")


def test_execution_shape_checks():
    with pytest.raises(DimensionMismatch):
        Execution(t=(0.0, 1.0), q=("a", "b"), sigma=("s",), segments=[None, None])
    with pytest.raises(DimensionMismatch):
        Execution(t=(0.0, 1.0, 0.5), q=("a", "b"), sigma=("s",),
                  segments=[None, None])


def test_cost_breakdown_adds_up(benchmark, two_mode_solution):
    cb = execution_cost(benchmark, two_mode_solution.execution)
    assert cb.J_m == pytest.approx(cb.stage + cb.jumps)
    assert cb.J == pytest.approx(cb.J_m + cb.terminal)
    assert cb.jumps == pytest.approx(0.1)   # one jump at the flat cost


def test_solver_execution_is_admissible(benchmark, two_mode_solution):
    rep = check_execution(benchmark, two_mode_solution.execution, tol=1e-6)
    assert rep.ok, rep.errors


def test_check_execution_catches_broken_flow(benchmark, two_mode_solution):
    ex = two_mode_solution.execution
    bad_mode = dict(benchmark.modes)
    # evaluating the q1 segment against q2's dynamics must trip the residual
    bad_mode["q1"], bad_mode["q2"] = bad_mode["q2"], bad_mode["q1"]
    from dataclasses import replace
    bad = replace(benchmark, modes=bad_mode)
    rep = check_execution(bad, ex, tol=1e-6)
    assert not rep.ok


def test_trace_csv_round_trip(benchmark, two_mode_solution, tmp_path):
    ex = two_mode_solution.execution
    path = tmp_path / "trace.csv"
    write_trace_csv(ex, path, benchmark.n_x, benchmark.n_u, dt=1e-3)
    with open(path) as f:
        rows = list(csv.DictReader(f))
    assert rows, "empty trace"
    sides = {r["side"] for r in rows}
    assert {"-", "+"} <= sides
    # recompute J from the samples by the trapezoid rule; it should agree
    # with the quadrature value at sampled-trace resolution
    by_seg: dict = {}
    for r in rows:
        key = (r["mode"], r["side"] == "-" or None)
        by_seg.setdefault(r["mode"], []).append(r)
    J = 0.0
    for q, seg_rows in by_seg.items():
        cost = benchmark.mode_cost(q)
        ts = np.array([float(r["t"]) for r in seg_rows])
        ls = np.array([cost.stage([float(r[f"x_{i+1}"]) for i in range(2)],
                                  [float(r["u_1"])]) for r in seg_rows])
        J += np.trapezoid(ls, ts)
    cb = execution_cost(benchmark, ex)
    J += cb.jumps + cb.terminal
    assert J == pytest.approx(cb.J, rel=1e-5)


def test_trace_csv_is_deterministic(benchmark, two_mode_solution, tmp_path):
    ex = two_mode_solution.execution
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_trace_csv(ex, p1, 2, 1)
    write_trace_csv(ex, p2, 2, 1)
    assert p1.read_bytes() == p2.read_bytes()


def test_summary_json(benchmark, two_mode_solution, tmp_path):
    summary = execution_summary(benchmark, two_mode_solution.execution)
    assert summary["q_seq"] == ["q1", "q2"]
    assert summary["sigma_seq"] == ["s1"]
    assert len(summary["t_jumps"]) == 1
    path = tmp_path / "summary.json"
    write_summary_json(summary, path)
    import json
    back = json.loads(path.read_text())
    assert back["J"] == pytest.approx(summary["J"])
