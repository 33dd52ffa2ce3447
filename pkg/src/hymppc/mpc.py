"""Branch-and-bound over discrete sequences, and the closed-loop runner.

Each iteration pops the cheapest expandable prefix, scores its fixed-horizon
completion (an incumbent) and its one-jump extensions (lower-bound prefixes,
scored without terminal cost under the free-final-time relaxation), and
stops as soon as the cheapest node in the frontier is a completed candidate.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import Exhausted, IterationLimit, NoRoot, SingularSystem
from .model import AffineHybridModel, InputId, ModeId
from .sim import Simulator
from .solver import SolverOptions, SolverSolution, jpmpa, jpmpb


@dataclass(frozen=True)
class CandidateNode:
    """Frontier entry: nu = 0 means expandable prefix (scored by J_m),
    nu = 1 a completed fixed-horizon candidate (scored by J)."""

    nu: int
    sigma: tuple[InputId, ...]
    q: tuple[ModeId, ...]
    u0: tuple[float, ...]
    J: float

    @property
    def key(self):
        return (self.nu, self.sigma, self.q)

    def sort_key(self):
        # ties: shorter sequence first, then lexicographic (sigma, q)
        return (self.J, len(self.q), self.sigma, self.q)


@dataclass
class MpcResult:
    u_ap: np.ndarray
    sigma_ap: InputId | None
    chosen: CandidateNode
    iterations: int
    explored: list[dict]
    solution: SolverSolution


@dataclass(frozen=True)
class MpcLimits:
    max_depth: int = 4
    max_iterations: int = 1000


def iteration_bound(J_opt: float, h_min: float, n_q: int, n_sigma: int) -> int:
    """Worst-case iteration count of the search for a given optimal cost."""
    if h_min <= 0:
        raise ValueError("h_min must be positive")
    m = math.floor(1.0 + J_opt / h_min)
    n_a = n_sigma * (n_q - 1)
    if n_a == 0:
        return 1
    if n_a == 1:
        return m
    return (n_a ** m - 1) // (n_a - 1)


def mpc_step(model: AffineHybridModel, q_ic: ModeId, x_ic,
             horizon: float, limits: MpcLimits = MpcLimits(),
             options: SolverOptions = SolverOptions(),
             jobs: int = 1) -> MpcResult:
    """One optimal-control solve: search the discrete sequences, return the
    continuous input and first discrete input of the winner."""
    model.mode(q_ic)
    x_ic = np.asarray(x_ic, dtype=float)
    root = CandidateNode(nu=0, sigma=(), q=(q_ic,), u0=(0.0,) * model.n_u, J=0.0)
    frontier: dict = {root.key: root}
    solutions: dict = {}
    explored: list[dict] = []
    best = root
    iterations = 0

    def score_completion(node):
        u0, J, sol = jpmpa(model, x_ic, node.sigma, node.q, horizon, options)
        return CandidateNode(1, node.sigma, node.q, tuple(u0), J), sol

    def score_extension(node, sigma, q2):
        u0, Jm, sol = jpmpb(model, x_ic, node.sigma + (sigma,), node.q + (q2,),
                            options, t_scale=horizon)
        return CandidateNode(0, node.sigma + (sigma,), node.q + (q2,),
                             tuple(u0), Jm), sol

    while best.nu == 0:
        iterations += 1
        if iterations > limits.max_iterations:
            raise IterationLimit(f"exceeded {limits.max_iterations} iterations")

        tasks = [("complete", None, None)]
        if len(best.q) < limits.max_depth:
            tasks += [("extend", s, q2) for s, q2 in model.transitions_from(best.q[-1])]

        def run(task):
            kind, s, q2 = task
            try:
                if kind == "complete":
                    return task, score_completion(best), None
                return task, score_extension(best, s, q2), None
            except (NoRoot, SingularSystem) as exc:
                return task, None, exc

        if jobs > 1 and len(tasks) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(run, tasks))
        else:
            results = [run(t) for t in tasks]

        for task, scored, exc in results:
            kind, s, q2 = task
            if scored is None:
                explored.append({"kind": kind, "sigma": list(best.sigma) + ([s] if s else []),
                                 "q": list(best.q) + ([q2] if q2 else []),
                                 "status": type(exc).__name__, "parent_J": best.J})
                continue
            node, sol = scored
            frontier[node.key] = node
            solutions[node.key] = sol
            explored.append({"kind": kind, "sigma": list(node.sigma),
                             "q": list(node.q), "nu": node.nu, "J": node.J,
                             "status": "ok", "parent_J": best.J})

        del frontier[best.key]
        if not frontier:
            raise Exhausted("every candidate sequence was infeasible")
        best = min(frontier.values(), key=CandidateNode.sort_key)

    return MpcResult(
        u_ap=np.array(best.u0),
        sigma_ap=best.sigma[0] if best.sigma else None,
        chosen=best,
        iterations=iterations,
        explored=explored,
        solution=solutions[best.key],
    )


@dataclass
class StepRecord:
    step: int
    t: float
    q: ModeId
    x: np.ndarray
    u: np.ndarray
    sigma_ap: InputId | None
    J: float
    iterations: int
    solve_ms: float


@dataclass
class ClosedLoopTrace:
    records: list[StepRecord] = field(default_factory=list)
    final_q: ModeId | None = None
    final_x: np.ndarray | None = None

    @property
    def total_cost(self) -> float:
        return sum(r.J for r in self.records)

    @property
    def max_iterations(self) -> int:
        return max((r.iterations for r in self.records), default=0)


def closed_loop_run(model: AffineHybridModel, plant: Simulator, x0, q0: ModeId,
                    horizon: float, dt: float, steps: int,
                    limits: MpcLimits = MpcLimits(),
                    options: SolverOptions = SolverOptions(),
                    jobs: int = 1, measure_time: bool = False) -> ClosedLoopTrace:
    """Receding-horizon loop: solve, apply (u, sigma) zero-order-hold for dt.

    The solve sees the plant state with time shifted back to the origin.
    `measure_time` fills solve_ms with wall-clock measurements; it is off by
    default so that traces are bit-reproducible.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    trace = ClosedLoopTrace()
    for k in range(steps):
        q, x = plant.state.q, plant.state.x.copy()
        tic = time.perf_counter()
        res = mpc_step(model, q, x, horizon, limits=limits, options=options, jobs=jobs)
        ms = (time.perf_counter() - tic) * 1e3 if measure_time else 0.0
        if res.sigma_ap is not None:
            plant.set_latch(res.sigma_ap)
        plant.step(res.u_ap, dt)
        trace.records.append(StepRecord(
            step=k, t=k * dt, q=q, x=x, u=res.u_ap, sigma_ap=res.sigma_ap,
            J=res.chosen.J, iterations=res.iterations, solve_ms=ms))
    trace.final_q = plant.state.q
    trace.final_x = plant.state.x.copy()
    return trace
