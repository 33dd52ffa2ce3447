"""Numerical plant simulator with guard-crossing event detection.

This is the independent oracle against which the closed-form solver is
cross-checked: flows are integrated with an adaptive Runge-Kutta method,
guard crossings of transitions armed by the current discrete input are
localized by bisection on the dense output, and resets are applied through
the same model code path as everywhere else.  Jumps preempt flow.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IntegrationFailure, ZenoSuspect
from .execution import Execution, SampledSegment
from .model import AffineHybridModel, AffineTransition, InputId, ModeId


@dataclass(frozen=True)
class SimulatorState:
    q: ModeId
    x: np.ndarray
    t: float
    sigma_latch: InputId | None = None


@dataclass(frozen=True)
class JumpEvent:
    t: float
    transition: tuple[ModeId, InputId, ModeId]
    x_minus: np.ndarray
    x_plus: np.ndarray


def _armed(model: AffineHybridModel, q: ModeId,
           latch: InputId | None) -> list[AffineTransition]:
    return [tr for tr in model.transitions
            if tr.source == q and tr.input == latch]


def _guard_ok(tr: AffineTransition, x: np.ndarray) -> bool:
    return tr.extra_guard is None or tr.extra_guard.contains(x, tol=1e-9)


def _locate_crossing(tr: AffineTransition, dense, lo: float, hi: float,
                     g_lo: float, g_hi: float, g_tol: float = 1e-10) -> float:
    """Bisection on the dense output until |g| <= g_tol at the returned time."""
    def g(t):
        return float(tr.Mx @ dense(t) + tr.Mc)
    if abs(g_lo) <= g_tol:
        return lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g_mid = g(mid)
        if abs(g_mid) <= g_tol or (hi - lo) < 1e-15 * max(1.0, abs(hi)):
            return mid
        if (g_lo < 0) == (g_mid < 0):
            lo, g_lo = mid, g_mid
        else:
            hi, g_hi = mid, g_mid
    return 0.5 * (lo + hi)


def _integrate_until_event(model, q, x0, t0, t1, ufun, armed,
                           rtol, atol, max_step):
    """Integrate the flow on [t0, t1]; stop at the earliest armed guard crossing.

    Returns (t_end, records, hit_transition_or_None) where records is the list
    of (t, x, u, xdot) samples up to and including t_end.
    """
    mode = model.mode(q)

    def f(t, x):
        return mode.A @ x + mode.Bu @ ufun(t) + mode.Bc

    sol = solve_ivp(f, (t0, t1), np.asarray(x0, dtype=float), method="RK45",
                    rtol=rtol, atol=atol, dense_output=True, max_step=max_step)
    if not sol.success:
        raise IntegrationFailure(sol.message)

    ts = sol.t
    hit = None
    t_star = t1
    for j in range(len(ts) - 1):
        a, b = ts[j], ts[j + 1]
        for tr in armed:
            g_a = float(tr.Mx @ sol.sol(a) + tr.Mc)
            g_b = float(tr.Mx @ sol.sol(b) + tr.Mc)
            crossing = (g_a < 0) != (g_b < 0) or abs(g_b) <= 1e-12
            if not crossing and abs(g_a) > 1e-12:
                continue
            tc = _locate_crossing(tr, sol.sol, a, b, g_a, g_b)
            if tc <= t0 + 1e-15 * max(1.0, abs(t0)):
                continue  # crossing at the very start belongs to the previous event
            if not _guard_ok(tr, sol.sol(tc)):
                continue
            if hit is None or tc < t_star - 1e-15:
                hit, t_star = tr, tc
        if hit is not None:
            break

    useg = ufun
    if hit is not None:
        # Re-integrate up to the crossing with the input clamped at its left
        # limit.  A schedule that switches control laws exactly at the event
        # belongs to the next segment from t_star onward; without clamping the
        # final step straddles that discontinuity and pollutes the dense output.
        t_clamp = max(t0, t_star - 1e-9 * max(1.0, abs(t_star)))

        def useg(t, _tc=t_clamp):
            return ufun(min(t, _tc))

        def f2(t, x):
            return mode.A @ x + mode.Bu @ useg(t) + mode.Bc

        sol = solve_ivp(f2, (t0, t_star), np.asarray(x0, dtype=float),
                        method="RK45", rtol=rtol, atol=atol,
                        dense_output=True, max_step=max_step)
        if not sol.success:
            raise IntegrationFailure(sol.message)
        ts = sol.t

    records = []
    for t in ts[ts < t_star - 1e-15]:
        x = sol.sol(t)
        records.append((float(t), x, useg(t), mode.A @ x + mode.Bu @ useg(t) + mode.Bc))
    x_end = sol.sol(min(t_star, t1))
    u_end = useg(t_star)
    records.append((float(t_star), x_end, u_end, mode.A @ x_end + mode.Bu @ u_end + mode.Bc))
    return float(t_star), records, hit


def step(model: AffineHybridModel, state: SimulatorState, u, dt: float,
         rtol: float = 1e-9, atol: float = 1e-11,
         max_step: float = np.inf) -> tuple[SimulatorState, list[JumpEvent]]:
    """Advance the plant by dt under a zero-order-hold continuous input."""
    u = np.asarray(u, dtype=float)
    return _advance(model, state, lambda t: u, dt, rtol, atol, max_step)[:2]


def _advance(model, state, ufun, dt, rtol, atol, max_step, max_events=None):
    if dt <= 0:
        raise ValueError("dt must be positive")
    t_end = state.t + dt
    q, x, t = state.q, np.asarray(state.x, dtype=float), state.t
    events: list[JumpEvent] = []
    all_records: list[tuple[ModeId, list]] = []
    last_event_t = None
    while t < t_end - 1e-15 * max(1.0, abs(t_end)):
        armed = _armed(model, q, state.sigma_latch)
        t_star, records, hit = _integrate_until_event(
            model, q, x, t, t_end, ufun, armed, rtol, atol, max_step)
        all_records.append((q, records))
        x = records[-1][1]
        t = t_star
        if hit is None:
            break
        if last_event_t is not None and abs(t_star - last_event_t) <= 1e-12:
            raise ZenoSuspect(f"two jumps localized at t={t_star}")
        last_event_t = t_star
        x_plus = model.apply_reset(hit.source, hit.input, hit.target, x)
        events.append(JumpEvent(t=t_star, transition=hit.key,
                                x_minus=x.copy(), x_plus=x_plus))
        q, x = hit.target, x_plus
        if max_events is not None and len(events) >= max_events:
            break
    new_state = SimulatorState(q=q, x=x, t=t, sigma_latch=state.sigma_latch)
    return new_state, events, all_records


class Simulator:
    """Stateful wrapper around step(); one instance per plant."""

    def __init__(self, model: AffineHybridModel, x0, q0: ModeId,
                 t0: float = 0.0, sigma_latch: InputId | None = None,
                 rtol: float = 1e-9, atol: float = 1e-11,
                 max_step: float = np.inf):
        self.model = model
        self.state = SimulatorState(q=q0, x=np.asarray(x0, dtype=float),
                                    t=t0, sigma_latch=sigma_latch)
        self.rtol = rtol
        self.atol = atol
        self.max_step = max_step

    def set_latch(self, sigma: InputId | None) -> None:
        self.state = replace(self.state, sigma_latch=sigma)

    def step(self, u, dt: float) -> list[JumpEvent]:
        self.state, events = step(self.model, self.state, u, dt,
                                  rtol=self.rtol, atol=self.atol,
                                  max_step=self.max_step)
        return events


def simulate(model: AffineHybridModel, x0, q0: ModeId, input_schedule, T: float,
             rtol: float = 1e-9, atol: float = 1e-11,
             max_step: float | None = None) -> Execution:
    """Run the plant over [0, T] and package the result as a sampled execution.

    ``input_schedule`` maps t to (u, sigma_latch); the latch is re-read after
    every jump and at the start.  T = 0 returns a degenerate single-point
    execution.
    """
    x0 = np.asarray(x0, dtype=float)
    if max_step is None:
        # dense enough knots that spline interpolation stays below ~1e-7
        max_step = max(T / 256.0, 1e-4)
    if T == 0.0:
        seg = SampledSegment(q0, np.array([0.0]), x0.reshape(1, -1),
                             np.zeros((1, model.n_u)))
        return Execution(t=(0.0, 0.0), q=(q0,), sigma=(), segments=[seg],
                         degenerate=True)

    def ufun(tt):
        return np.asarray(input_schedule(tt)[0], dtype=float)

    t, q, x = 0.0, q0, x0
    times = [0.0]
    q_seq: list[ModeId] = []
    sigma_seq: list[InputId] = []
    segments = []
    last_event_t = None

    while t < T - 1e-15 * max(1.0, T):
        latch = input_schedule(t)[1]
        state = SimulatorState(q=q, x=x, t=t, sigma_latch=latch)
        new_state, events, recs = _advance(model, state, ufun, T - t,
                                           rtol, atol, max_step, max_events=1)
        mode_id, records = recs[0]
        ts = np.array([r[0] for r in records])
        keep = np.concatenate([[True], np.diff(ts) > 0])
        segments.append(SampledSegment(
            mode_id, ts[keep],
            np.array([r[1] for r in records])[keep],
            np.array([r[2] for r in records])[keep],
            np.array([r[3] for r in records])[keep]))
        q_seq.append(mode_id)
        if events:
            ev = events[0]
            if last_event_t is not None and abs(ev.t - last_event_t) <= 1e-12:
                raise ZenoSuspect(f"two jumps localized at t={ev.t}")
            last_event_t = ev.t
            times.append(ev.t)
            sigma_seq.append(ev.transition[1])
        q, x, t = new_state.q, new_state.x, new_state.t

    times.append(T)
    # a jump exactly at T leaves the post-jump mode without a flow segment
    if len(q_seq) == len(sigma_seq):
        segments.append(SampledSegment(q, np.array([T]),
                                       np.asarray(x).reshape(1, -1),
                                       np.zeros((1, model.n_u))))
        q_seq.append(q)
    return Execution(t=tuple(times), q=tuple(q_seq), sigma=tuple(sigma_seq),
                     segments=segments)
