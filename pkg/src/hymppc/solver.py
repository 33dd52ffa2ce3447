"""Closed-form maximum-principle solver for affine hybrid systems.

For a fixed mode/input sequence the optimality conditions reduce to a
square linear system over the boundary values of state and costate (plus
one guard multiplier per jump) parameterised by the jump times, and a
low-dimensional root-find enforcing Hamiltonian continuity across jumps
pins the jump times down.  Two variants are provided: the fixed-horizon
solve (terminal cost, final time pinned) and the free-final-time solve
(no terminal cost, costate zero after the last jump, zero-length final
segment).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import NoRoot, OrderViolation, SingularSystem
from .execution import (ClosedFormSegment, CostBreakdown, Execution,
                        execution_cost)
from .model import AffineHybridModel, AffineMode, InputId, ModeCost, ModeId


# -- variants -------------------------------------------------------------

@dataclass(frozen=True)
class FixedHorizon:
    T_h: float


@dataclass(frozen=True)
class FreeFinal:
    pass


# -- options --------------------------------------------------------------

@dataclass(frozen=True)
class SolverOptions:
    newton_tol: float = 1e-9
    fd_step: float = 1e-6
    max_newton_iter: int = 60
    min_step: float = 1e-12
    n_multistart: int = 8
    seed: int = 0
    pivot_tol: float = 1e-12
    cond_limit: float = 1e12


# -- building blocks ------------------------------------------------------

def control_gain(mode: AffineMode, cost: ModeCost) -> np.ndarray:
    """K = Wu^-1 Bu^T, so that u = ubar - K lambda."""
    return np.linalg.solve(cost.Wu, mode.Bu.T)


def optimal_control(mode: AffineMode, cost: ModeCost, lam) -> np.ndarray:
    """Hamiltonian-minimising control for costate lambda."""
    return cost.ubar - control_gain(mode, cost) @ np.asarray(lam, dtype=float)


def hamiltonian(mode: AffineMode, cost: ModeCost, x, u, lam) -> float:
    """Stage cost plus costate-weighted vector field."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    lam = np.asarray(lam, dtype=float)
    f = mode.A @ x + mode.Bu @ u + mode.Bc
    return cost.stage(x, u) + float(lam @ f)


def extended_matrix(mode: AffineMode, cost: ModeCost) -> np.ndarray:
    """(2 n_x + 1)-square matrix propagating (x; lambda; 1) along a segment."""
    n_x = mode.A.shape[0]
    Ae = np.zeros((2 * n_x + 1, 2 * n_x + 1))
    Ae[:n_x, :n_x] = mode.A
    Ae[:n_x, n_x: 2 * n_x] = -mode.Bu @ control_gain(mode, cost)
    Ae[:n_x, 2 * n_x] = mode.Bc + mode.Bu @ cost.ubar
    Ae[n_x: 2 * n_x, :n_x] = -cost.Wx
    Ae[n_x: 2 * n_x, n_x: 2 * n_x] = -mode.A.T
    Ae[n_x: 2 * n_x, 2 * n_x] = cost.Wx @ cost.xbar
    return Ae


def transition_map(mode: AffineMode, cost: ModeCost, alpha: float) -> np.ndarray:
    """Top 2 n_x rows of exp(alpha * Ae).

    The exponential is computed by scipy's scaling-and-squaring Pade
    approximant (Al-Mohy/Higham), which meets the 1e-12 relative accuracy
    contract for the matrix norms arising here.
    """
    n_x = mode.A.shape[0]
    with np.errstate(over="ignore", invalid="ignore"):
        M = expm(alpha * extended_matrix(mode, cost))
    if not np.all(np.isfinite(M)):
        raise OverflowError("matrix exponential overflowed (alpha * ||Ae|| too large)")
    return M[: 2 * n_x, :]


# -- unknown bookkeeping --------------------------------------------------

@dataclass
class SolverUnknowns:
    """Boundary values of the two-point system, straight out of the linear solve.

    ``x_minus[i]``/``lambda_minus[i]`` are the left limits at t_{i+1} (absent
    for the final segment in the free-final-time variant), ``x_plus[i]``/
    ``lambda_plus[i]`` the right values at t_i, and ``alpha`` the guard
    multipliers.
    """

    n: int
    n_x: int
    free_final: bool
    x_minus: np.ndarray      # (n or n-1, n_x)
    lambda_minus: np.ndarray
    x_plus: np.ndarray       # (n, n_x)
    lambda_plus: np.ndarray
    alpha: np.ndarray        # (n-1,)

    @property
    def dimension(self) -> int:
        m = self.n - 1 if self.free_final else self.n
        return 2 * (m + self.n) * self.n_x + self.n - 1


def system_dimension(n: int, n_x: int, free_final: bool) -> int:
    if free_final:
        return (4 * n - 2) * n_x + n - 1
    return 4 * n * n_x + n - 1


def assemble(model: AffineHybridModel, q, sigma, times, x_ic,
             variant) -> tuple[np.ndarray, np.ndarray]:
    """Build the square linear system (K, rhs) over the solver unknowns.

    ``times`` are the jump times t_1..t_{n-1}; the final time is the
    variant's horizon (fixed) or t_{n-1} (free final, whose last propagation
    row set is dropped together with the final-segment left limits).
    """
    q = list(q)
    sigma = list(sigma)
    n = len(q)
    n_x = model.n_x
    free = isinstance(variant, FreeFinal)
    if len(sigma) != n - 1:
        raise ValueError(f"|sigma| must be |q| - 1, got {len(sigma)} vs {n}")
    if len(times) != n - 1:
        raise ValueError(f"need {n - 1} jump times, got {len(times)}")

    t_seq = [0.0, *[float(t) for t in times]]
    if free:
        t_seq.append(t_seq[-1])
        n_prop = n - 1
    else:
        t_seq.append(variant.T_h)
        n_prop = n

    m = n - 1 if free else n
    dim = 2 * (m + n) * n_x + n - 1

    def xm(i):   # x_i^-, i in 1..m
        return slice((i - 1) * n_x, i * n_x)

    def lm(i):   # lambda_i^-
        return slice((m + i - 1) * n_x, (m + i) * n_x)

    def xp(i):   # x_i^+, i in 0..n-1
        return slice((2 * m + i) * n_x, (2 * m + i + 1) * n_x)

    def lp(i):   # lambda_i^+
        return slice((2 * m + n + i) * n_x, (2 * m + n + i + 1) * n_x)

    def al(i):   # alpha_i, i in 1..n-1
        return 2 * (m + n) * n_x + (i - 1)

    K = np.zeros((dim, dim))
    rhs = np.zeros(dim)
    row = 0

    # initial continuous state
    K[row: row + n_x, xp(0)] = np.eye(n_x)
    rhs[row: row + n_x] = np.asarray(x_ic, dtype=float)
    row += n_x

    # segment propagation through the extended exponential
    for i in range(1, n_prop + 1):
        mode = model.mode(q[i - 1])
        cost = model.mode_cost(q[i - 1])
        Psi = transition_map(mode, cost, t_seq[i] - t_seq[i - 1])
        K[row: row + 2 * n_x, xm(i)] = np.eye(2 * n_x)[:, :n_x]
        K[row: row + 2 * n_x, lm(i)] = np.eye(2 * n_x)[:, n_x:]
        K[row: row + 2 * n_x, xp(i - 1)] = -Psi[:, :n_x]
        K[row: row + 2 * n_x, lp(i - 1)] = -Psi[:, n_x: 2 * n_x]
        rhs[row: row + 2 * n_x] = Psi[:, 2 * n_x]
        row += 2 * n_x

    for i in range(1, n):
        tr = model.transition(q[i - 1], sigma[i - 1], q[i])
        # guard hyperplane hit
        K[row, xm(i)] = tr.Mx
        rhs[row] = -tr.Mc
        row += 1
        # state reset
        K[row: row + n_x, xp(i)] = np.eye(n_x)
        K[row: row + n_x, xm(i)] = -tr.Lx
        rhs[row: row + n_x] = tr.Lc
        row += n_x
        # costate jump (the jump cost is state-independent, so no gradient term)
        K[row: row + n_x, lm(i)] = np.eye(n_x)
        K[row: row + n_x, lp(i)] = -tr.Lx.T
        K[row: row + n_x, al(i)] = -tr.Mx
        row += n_x

    if free:
        # costate vanishes after the last jump
        K[row: row + n_x, lp(n - 1)] = np.eye(n_x)
        row += n_x
    else:
        # terminal costate from the terminal cost gradient
        cost = model.mode_cost(q[-1])
        K[row: row + n_x, lm(n)] = np.eye(n_x)
        K[row: row + n_x, xm(n)] = -cost.Wf
        rhs[row: row + n_x] = -cost.Wf @ cost.xbar
        row += n_x

    assert row == dim
    return K, rhs


def _split_unknowns(y: np.ndarray, n: int, n_x: int, free: bool) -> SolverUnknowns:
    m = n - 1 if free else n
    o = 0
    x_minus = y[o: o + m * n_x].reshape(m, n_x); o += m * n_x
    lambda_minus = y[o: o + m * n_x].reshape(m, n_x); o += m * n_x
    x_plus = y[o: o + n * n_x].reshape(n, n_x); o += n * n_x
    lambda_plus = y[o: o + n * n_x].reshape(n, n_x); o += n * n_x
    alpha = y[o:]
    return SolverUnknowns(n=n, n_x=n_x, free_final=free, x_minus=x_minus,
                          lambda_minus=lambda_minus, x_plus=x_plus,
                          lambda_plus=lambda_plus, alpha=alpha)


def assemble_and_solve(model: AffineHybridModel, q, sigma, times, x_ic, variant,
                       options: SolverOptions = SolverOptions()) -> SolverUnknowns:
    """Solve the boundary-value linear system at the given jump times."""
    K, rhs = assemble(model, q, sigma, times, x_ic, variant)
    cond = np.linalg.cond(K)
    if not np.isfinite(cond) or cond > options.cond_limit:
        raise SingularSystem(
            f"linear system is singular or ill-conditioned (cond ~ {cond:.3e})"
        )
    y = np.linalg.solve(K, rhs)
    u = _split_unknowns(y, len(q), model.n_x, isinstance(variant, FreeFinal))
    u.condition = cond  # type: ignore[attr-defined]
    return u


def hamiltonian_gap(model: AffineHybridModel, q, sigma,
                    unknowns: SolverUnknowns) -> np.ndarray:
    """Hamiltonian mismatch across each jump (the root-find residual)."""
    q = list(q)
    n = len(q)
    gaps = np.zeros(n - 1)
    for i in range(1, n):
        mode_l = model.mode(q[i - 1])
        cost_l = model.mode_cost(q[i - 1])
        lam_l = unknowns.lambda_minus[i - 1]
        u_l = optimal_control(mode_l, cost_l, lam_l)
        H_l = hamiltonian(mode_l, cost_l, unknowns.x_minus[i - 1], u_l, lam_l)
        mode_r = model.mode(q[i])
        cost_r = model.mode_cost(q[i])
        lam_r = unknowns.lambda_plus[i]
        u_r = optimal_control(mode_r, cost_r, lam_r)
        H_r = hamiltonian(mode_r, cost_r, unknowns.x_plus[i], u_r, lam_r)
        gaps[i - 1] = H_l - H_r
    return gaps


# -- execution reconstruction --------------------------------------------

def build_execution(model: AffineHybridModel, q, sigma, times, variant,
                    unknowns: SolverUnknowns) -> Execution:
    q = tuple(q)
    sigma = tuple(sigma)
    n = len(q)
    free = isinstance(variant, FreeFinal)
    t_seq = [0.0, *[float(t) for t in times]]
    t_seq.append(t_seq[-1] if free else variant.T_h)
    segments = []
    for i in range(n):
        mode = model.mode(q[i])
        cost = model.mode_cost(q[i])
        z0 = np.concatenate([unknowns.x_plus[i], unknowns.lambda_plus[i], [1.0]])
        segments.append(ClosedFormSegment(
            mode=q[i], t_start=t_seq[i], t_end=t_seq[i + 1], z0=z0,
            Ae=extended_matrix(mode, cost), K=control_gain(mode, cost),
            ubar=cost.ubar,
        ))
    return Execution(t=tuple(t_seq), q=q, sigma=sigma, segments=segments)


@dataclass
class SolverSolution:
    unknowns: SolverUnknowns
    jump_times: tuple[float, ...]
    final_time: float
    execution: Execution
    cost: CostBreakdown
    u0: np.ndarray
    diagnostics: dict = field(default_factory=dict)


# -- Newton over the jump times ------------------------------------------

def _ordered(times: np.ndarray, upper: float | None) -> bool:
    if len(times) == 0:
        return True
    if times[0] <= 0.0:
        return False
    if np.any(np.diff(times) <= 0.0):
        return False
    return upper is None or times[-1] < upper


def gap_residual(model, q, sigma, x_ic, variant, times,
                 options: SolverOptions = SolverOptions()) -> np.ndarray:
    """F_t: Hamiltonian gaps as a function of the jump times."""
    u = assemble_and_solve(model, q, sigma, times, x_ic, variant, options)
    return hamiltonian_gap(model, q, sigma, u)


def ft_jacobian(model, q, sigma, x_ic, variant, times,
                step: float = 1e-6, f0: np.ndarray | None = None,
                options: SolverOptions = SolverOptions()) -> np.ndarray:
    """Forward-difference Jacobian of the gap residual at the given times."""
    times = np.asarray(times, dtype=float)
    if f0 is None:
        f0 = gap_residual(model, q, sigma, x_ic, variant, times, options)
    J = np.zeros((len(times), len(times)))
    for k in range(len(times)):
        h = step * max(1.0, abs(times[k]))
        tp = times.copy()
        tp[k] += h
        J[:, k] = (gap_residual(model, q, sigma, x_ic, variant, tp, options) - f0) / h
    return J


def _multistart_guesses(n: int, variant, options: SolverOptions, seed: int,
                        t_scale: float) -> list[np.ndarray]:
    upper = variant.T_h if isinstance(variant, FixedHorizon) else None
    k = n - 1
    span = upper if upper is not None else t_scale
    base = np.array([(i + 1) * span / n for i in range(k)])
    guesses = [base]
    rng = np.random.default_rng(seed)
    ns = options.n_multistart
    # Latin-hypercube fractions of the span, sorted to keep the ordering
    strata = np.stack([rng.permutation(ns) for _ in range(k)], axis=1)
    u = (strata + rng.random((ns, k))) / ns
    for row in u:
        frac = np.sort(0.02 + 0.96 * row)
        t = frac * span if upper is not None else frac * 2.0 * span
        if _ordered(t, upper) and np.all(np.diff(np.concatenate([[0.0], t])) > 1e-9 * span):
            guesses.append(t)
    return guesses


def _newton_from(model, q, sigma, x_ic, variant, t0: np.ndarray,
                 options: SolverOptions) -> tuple[np.ndarray, np.ndarray, int] | None:
    """Damped Newton on the gap residual; returns (times, F, iterations) or None."""
    upper = variant.T_h if isinstance(variant, FixedHorizon) else None
    t = np.asarray(t0, dtype=float).copy()
    try:
        f = gap_residual(model, q, sigma, x_ic, variant, t, options)
    except (SingularSystem, OverflowError):
        return None
    for it in range(options.max_newton_iter):
        if np.max(np.abs(f)) <= options.newton_tol:
            return t, f, it
        try:
            J = ft_jacobian(model, q, sigma, x_ic, variant, t,
                            step=options.fd_step, f0=f, options=options)
            dt = np.linalg.solve(J, -f)
        except (SingularSystem, OverflowError, np.linalg.LinAlgError):
            return None
        # halve the step until the iterate stays ordered and the residual drops
        lam = 1.0
        improved = False
        while lam * np.max(np.abs(dt)) >= options.min_step:
            t_new = t + lam * dt
            if _ordered(t_new, upper):
                try:
                    f_new = gap_residual(model, q, sigma, x_ic, variant, t_new, options)
                except (SingularSystem, OverflowError):
                    f_new = None
                if f_new is not None and (np.linalg.norm(f_new) < np.linalg.norm(f)
                                          or np.max(np.abs(f_new)) <= options.newton_tol):
                    t, f = t_new, f_new
                    improved = True
                    break
            lam *= 0.5
        if not improved:
            break
    if np.max(np.abs(f)) <= options.newton_tol:
        return t, f, options.max_newton_iter
    return None


def _derived_seed(options: SolverOptions, q, sigma, variant) -> int:
    tag = repr((tuple(q), tuple(sigma), type(variant).__name__)).encode()
    return (options.seed * 1000003) ^ zlib.crc32(tag)


def solve_jump_times(model: AffineHybridModel, q, sigma, x_ic, variant,
                     options: SolverOptions = SolverOptions(),
                     t_scale: float = 1.0) -> SolverSolution:
    """Root-find the jump times and reconstruct the optimal execution.

    Multistart damped Newton over the ordered jump-time region; among the
    converged roots the one with the lowest cost (J for the fixed-horizon
    variant, J_m for free final time) wins.  Raises NoRoot when every start
    fails.
    """
    q = tuple(q)
    sigma = tuple(sigma)
    n = len(q)
    free = isinstance(variant, FreeFinal)
    for i in range(n - 1):
        model.transition(q[i], sigma[i], q[i + 1])  # raises if undeclared

    def finish(times, f_norm, iters, starts_tried, starts_converged):
        u = assemble_and_solve(model, q, sigma, times, x_ic, variant, options)
        ex = build_execution(model, q, sigma, times, variant, u)
        cb = execution_cost(model, ex)
        mode0 = model.mode(q[0])
        cost0 = model.mode_cost(q[0])
        u0 = optimal_control(mode0, cost0, u.lambda_plus[0])
        return SolverSolution(
            unknowns=u, jump_times=tuple(float(t) for t in times),
            final_time=ex.t_final, execution=ex, cost=cb, u0=u0,
            diagnostics={
                "newton_iterations": iters,
                "residual_inf": f_norm,
                "condition": getattr(u, "condition", None),
                "starts_tried": starts_tried,
                "starts_converged": starts_converged,
            },
        )

    if n == 1:
        return finish(np.zeros(0), 0.0, 0, 0, 0)

    seed = _derived_seed(options, q, sigma, variant)
    guesses = _multistart_guesses(n, variant, options, seed, t_scale)
    roots = []
    for g in guesses:
        res = _newton_from(model, q, sigma, x_ic, variant, g, options)
        if res is None:
            continue
        t, f, iters = res
        if not _ordered(t, variant.T_h if isinstance(variant, FixedHorizon) else None):
            continue
        roots.append((t, f, iters))
    if not roots:
        raise NoRoot(f"no Hamiltonian-continuity root found for q={q}, sigma={sigma}")

    best = None
    for t, f, iters in roots:
        try:
            sol = finish(t, float(np.max(np.abs(f))), iters, len(guesses), len(roots))
        except SingularSystem:
            continue
        score = sol.cost.J_m if free else sol.cost.J
        if best is None or score < best[0] - 1e-12:
            best = (score, sol)
    if best is None:
        raise NoRoot(f"all converged roots degenerate for q={q}, sigma={sigma}")
    return best[1]


def solution_residuals(model: AffineHybridModel, q, sigma,
                       sol: SolverSolution, n_samples: int = 32) -> dict:
    """Worst-case residuals of the optimality conditions at a solution.

    Returns the costate-ODE residual (finite differences on the closed
    form), the costate jump condition, the terminal/transversality
    condition, the guard hit and the Hamiltonian gap, each as an inf-norm.
    """
    q = tuple(q)
    u = sol.unknowns
    free = u.free_final
    n = len(q)
    res = {"costate_ode": 0.0, "costate_jump": 0.0, "terminal": 0.0,
           "guard": 0.0, "hamiltonian_gap": 0.0}

    for seg in sol.execution.segments:
        length = seg.t_end - seg.t_start
        if length <= 0:
            continue
        cost = model.mode_cost(seg.mode)
        A = model.mode(seg.mode).A
        h = 1e-6 * length
        for t in np.linspace(seg.t_start + 2 * h, seg.t_end - 2 * h, n_samples):
            lam_dot = (seg.costate(t + h) - seg.costate(t - h)) / (2 * h)
            x = seg.state(t)
            lam = seg.costate(t)
            r = lam_dot + cost.Wx @ (x - cost.xbar) + A.T @ lam
            res["costate_ode"] = max(res["costate_ode"], float(np.max(np.abs(r))))

    for i in range(1, n):
        tr = model.transition(q[i - 1], sigma[i - 1], q[i])
        r = u.lambda_minus[i - 1] - tr.Lx.T @ u.lambda_plus[i] - u.alpha[i - 1] * tr.Mx
        res["costate_jump"] = max(res["costate_jump"], float(np.max(np.abs(r))))
        g = tr.Mx @ u.x_minus[i - 1] + tr.Mc
        res["guard"] = max(res["guard"], abs(float(g)))

    if free:
        res["terminal"] = float(np.max(np.abs(u.lambda_plus[n - 1])))
    else:
        cost = model.mode_cost(q[-1])
        r = u.lambda_minus[n - 1] - cost.Wf @ (u.x_minus[n - 1] - cost.xbar)
        res["terminal"] = float(np.max(np.abs(r)))

    gaps = hamiltonian_gap(model, q, sigma, u)
    if len(gaps):
        res["hamiltonian_gap"] = float(np.max(np.abs(gaps)))
    return res


# -- the two sequence-conditioned solves ---------------------------------

def jpmpa(model: AffineHybridModel, x_ic, sigma, q, horizon: float,
          options: SolverOptions = SolverOptions()) -> tuple[np.ndarray, float, SolverSolution]:
    """Fixed-horizon solve; returns (u(0), total cost J, full solution)."""
    sol = solve_jump_times(model, q, sigma, x_ic, FixedHorizon(horizon),
                           options=options, t_scale=horizon)
    return sol.u0, sol.cost.J, sol


def jpmpb(model: AffineHybridModel, x_ic, sigma, q,
          options: SolverOptions = SolverOptions(),
          t_scale: float = 1.0) -> tuple[np.ndarray, float, SolverSolution]:
    """Free-final-time, terminal-cost-free solve; returns (u(0), J_m, solution)."""
    if len(q) < 2:
        raise ValueError("the free-final-time solve needs at least one jump")
    sol = solve_jump_times(model, q, sigma, x_ic, FreeFinal(),
                           options=options, t_scale=t_scale)
    return sol.u0, sol.cost.J_m, sol
