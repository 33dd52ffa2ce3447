"""Hybrid executions: trajectory segments, cost evaluation, admissibility.

An execution stitches together per-mode trajectory segments separated by
jumps.  Segments come in two flavours: closed-form (state and costate
propagated through the extended-matrix exponential, exact up to expm
accuracy) and sampled (a dense grid with spline interpolation, produced by
the numerical simulator).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import simpson
from scipy.interpolate import CubicHermiteSpline, CubicSpline
from scipy.linalg import expm

from .errors import DimensionMismatch
from .model import AffineHybridModel, InputId, ModeId


class ClosedFormSegment:
    """Flow segment evaluated through ``exp((t - t0) Ae) z0``.

    ``z0 = (x+; lambda+; 1)`` is the augmented start vector and ``Ae`` the
    extended Hamiltonian matrix of the segment's mode.  The control is
    recovered from the costate as ``u = ubar - K lambda``.
    """

    def __init__(self, mode: ModeId, t_start: float, t_end: float,
                 z0: np.ndarray, Ae: np.ndarray, K: np.ndarray, ubar: np.ndarray):
        self.mode = mode
        self.t_start = float(t_start)
        self.t_end = float(t_end)
        self.z0 = np.asarray(z0, dtype=float)
        self.Ae = np.asarray(Ae, dtype=float)
        self.K = np.asarray(K, dtype=float)
        self.ubar = np.asarray(ubar, dtype=float)
        self.n_x = (self.Ae.shape[0] - 1) // 2

    @property
    def zero_length(self) -> bool:
        return self.t_end == self.t_start

    def state_costate(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        z = expm((t - self.t_start) * self.Ae) @ self.z0
        return z[: self.n_x], z[self.n_x: 2 * self.n_x]

    def state(self, t: float) -> np.ndarray:
        return self.state_costate(t)[0]

    def costate(self, t: float) -> np.ndarray:
        return self.state_costate(t)[1]

    def input(self, t: float) -> np.ndarray:
        if self.zero_length:
            # u is undefined on a degenerate final segment
            return np.full(self.K.shape[0], np.nan)
        return self.ubar - self.K @ self.costate(t)


class SampledSegment:
    """Flow segment stored as a (t, x, u) grid with spline interpolation.

    When slope samples ``dxs`` are supplied (the simulator knows the exact
    vector field at every node) a cubic Hermite spline is used, which keeps
    the interpolated derivative consistent with the ODE.
    """

    def __init__(self, mode: ModeId, ts: np.ndarray, xs: np.ndarray, us: np.ndarray,
                 dxs: np.ndarray | None = None):
        self.mode = mode
        self.ts = np.asarray(ts, dtype=float)
        self.xs = np.asarray(xs, dtype=float)
        self.us = np.asarray(us, dtype=float)
        self.t_start = float(self.ts[0])
        self.t_end = float(self.ts[-1])
        self._xi = None
        self._ui = None
        if self.t_end > self.t_start:
            if dxs is not None and len(self.ts) >= 2:
                self._xi = CubicHermiteSpline(self.ts, self.xs, np.asarray(dxs, dtype=float), axis=0)
            elif len(self.ts) >= 4:
                self._xi = CubicSpline(self.ts, self.xs, axis=0)
            if len(self.ts) >= 4:
                self._ui = CubicSpline(self.ts, self.us, axis=0)
            elif len(self.ts) >= 2:
                self._ui = lambda t: self.us[np.searchsorted(self.ts, t, side="right") - 1]

    @property
    def zero_length(self) -> bool:
        return self.t_end == self.t_start

    def state(self, t: float) -> np.ndarray:
        if self._xi is None:
            return self.xs[0].copy()
        return np.asarray(self._xi(t))

    def input(self, t: float) -> np.ndarray:
        if self._ui is None:
            return self.us[0].copy()
        return np.asarray(self._ui(t))


class EvalPoint(NamedTuple):
    q: ModeId
    x: np.ndarray
    u: np.ndarray


@dataclass
class Execution:
    """Hybrid execution: times t0..tn, mode sequence of length n, n-1 inputs."""

    t: tuple[float, ...]
    q: tuple[ModeId, ...]
    sigma: tuple[InputId, ...]
    segments: list
    degenerate: bool = False

    def __post_init__(self):
        n = len(self.q)
        if len(self.t) != n + 1 or len(self.sigma) != n - 1 or len(self.segments) != n:
            raise DimensionMismatch(
                f"inconsistent execution: |t|={len(self.t)}, |q|={n}, "
                f"|sigma|={len(self.sigma)}, |segments|={len(self.segments)}"
            )
        for i in range(1, n):
            if self.t[i] <= self.t[i - 1]:
                raise DimensionMismatch("interior jump times must be strictly increasing")
        if self.t[n] < self.t[n - 1]:
            raise DimensionMismatch("final time must not precede the last jump")

    @property
    def n(self) -> int:
        return len(self.q)

    @property
    def t0(self) -> float:
        return self.t[0]

    @property
    def t_final(self) -> float:
        return self.t[-1]

    @property
    def jump_times(self) -> tuple[float, ...]:
        return self.t[1:-1]

    def _segment_index(self, t: float, side: str) -> int:
        if not (self.t0 <= t <= self.t_final):
            raise ValueError(f"t={t} outside [{self.t0}, {self.t_final}]")
        if side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")
        n = self.n
        for i in range(1, n):
            if abs(t - self.t[i]) == 0.0:
                return i - 1 if side == "left" else i
        for i in range(n):
            if self.t[i] <= t <= self.t[i + 1]:
                return i
        return n - 1

    def evaluate(self, t: float, side: str = "right") -> EvalPoint:
        """Mode, state and input at time t; `side` resolves jump instants."""
        i = self._segment_index(t, side)
        seg = self.segments[i]
        return EvalPoint(q=self.q[i], x=seg.state(t), u=seg.input(t))


@dataclass
class CostBreakdown:
    stage: float
    jumps: float
    terminal: float

    @property
    def J_m(self) -> float:
        return self.stage + self.jumps

    @property
    def J(self) -> float:
        return self.J_m + self.terminal

    def as_dict(self) -> dict:
        return {"stage": self.stage, "jumps": self.jumps,
                "terminal": self.terminal, "J_m": self.J_m, "J": self.J}


def _gauss_segment_integral(cost, seg, rel_tol: float = 1e-10,
                            order0: int = 8, order_max: int = 2048) -> float:
    """Adaptive-order Gauss-Legendre integral of the stage cost on a segment."""
    a, b = seg.t_start, seg.t_end
    if b <= a:
        return 0.0
    prev = None
    order = order0
    while True:
        nodes, weights = leggauss(order)
        ts = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        vals = np.array([cost.stage(seg.state(t), seg.input(t)) for t in ts])
        est = 0.5 * (b - a) * float(weights @ vals)
        if prev is not None and abs(est - prev) <= rel_tol * max(1.0, abs(est)):
            return est
        if order >= order_max:
            return est
        prev = est
        order *= 2


def _simpson_segment_integral(cost, seg: SampledSegment) -> float:
    if seg.zero_length:
        return 0.0
    vals = np.array([cost.stage(x, u) for x, u in zip(seg.xs, seg.us)])
    return float(simpson(vals, x=seg.ts))


def execution_cost(model: AffineHybridModel, ex: Execution) -> CostBreakdown:
    """Total cost of an execution: stage integrals + jump costs + terminal cost."""
    stage = 0.0
    for seg in ex.segments:
        cost = model.mode_cost(seg.mode)
        if isinstance(seg, SampledSegment):
            stage += _simpson_segment_integral(cost, seg)
        else:
            stage += _gauss_segment_integral(cost, seg)
    jumps = 0.0
    for i in range(1, ex.n):
        jumps += model.jump_cost(i, ex.q[i - 1], ex.sigma[i - 1], ex.q[i])
    x_final = ex.evaluate(ex.t_final, side="left").x
    terminal = model.mode_cost(ex.q[-1]).terminal(x_final)
    return CostBreakdown(stage=stage, jumps=jumps, terminal=terminal)


@dataclass
class AdmissibilityReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def check_execution(model: AffineHybridModel, ex: Execution, tol: float = 1e-6,
                    strict_domain: bool = False,
                    n_samples: int = 32) -> AdmissibilityReport:
    """Verify an execution against the model.

    Checks the flow ODE residual (finite differences), guard hit and reset
    consistency at each jump, sampled domain membership and time ordering.
    Domain violations are warnings unless `strict_domain`.
    """
    rep = AdmissibilityReport()
    n = ex.n

    for i in range(1, n):
        if ex.t[i] <= ex.t[i - 1]:
            rep.errors.append(f"time ordering violated at index {i}")
    if ex.t[n] < ex.t[n - 1]:
        rep.errors.append("final time precedes last jump")

    for i, seg in enumerate(ex.segments):
        length = seg.t_end - seg.t_start
        if length <= 0:
            continue
        h = 1e-6 * length
        ts = np.linspace(seg.t_start + 2 * h, seg.t_end - 2 * h, n_samples)
        worst = 0.0
        for t in ts:
            xdot = (seg.state(t + h) - seg.state(t - h)) / (2 * h)
            f = model.vector_field(seg.mode, seg.state(t), seg.input(t))
            worst = max(worst, float(np.max(np.abs(xdot - f))))
        if worst > tol:
            rep.errors.append(
                f"segment {i + 1} (mode {seg.mode}): ODE residual {worst:.3e} > {tol:.3e}"
            )
        dom = model.mode(seg.mode).domain
        viol = sum(0 if dom.contains(seg.state(t), tol=tol) else 1 for t in ts)
        if viol:
            msg = f"segment {i + 1} (mode {seg.mode}): {viol}/{n_samples} sampled points outside domain"
            (rep.errors if strict_domain else rep.warnings).append(msg)

    for i in range(1, n):
        ti = ex.t[i]
        xm = ex.segments[i - 1].state(ti)
        xp = ex.segments[i].state(ti)
        q, s, q2 = ex.q[i - 1], ex.sigma[i - 1], ex.q[i]
        g = model.guard_residual(q, s, q2, xm)
        if abs(g) > tol:
            rep.errors.append(f"jump {i}: guard residual {g:.3e} exceeds {tol:.1e}")
        tr = model.transition(q, s, q2)
        if tr.extra_guard is not None and not tr.extra_guard.contains(xm, tol=tol):
            rep.errors.append(f"jump {i}: pre-jump state outside extra_guard")
        err = float(np.max(np.abs(xp - model.apply_reset(q, s, q2, xm))))
        if err > tol:
            rep.errors.append(f"jump {i}: reset mismatch {err:.3e} exceeds {tol:.1e}")
    return rep


# -- export ---------------------------------------------------------------

def _fmt(v: float) -> str:
    return f"{v:.17g}"


def write_trace_csv(ex: Execution, path, n_x: int, n_u: int, dt: float = 1e-2) -> None:
    """Sampled CSV trace; jump instants get a '-' and a '+' row."""
    header = (["t", "mode"] + [f"x_{i + 1}" for i in range(n_x)]
              + [f"u_{i + 1}" for i in range(n_u)] + ["side"])
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for i, seg in enumerate(ex.segments):
            a, b = seg.t_start, seg.t_end
            if b <= a:
                continue
            m = max(2, int(round((b - a) / dt)) + 1)
            for t in np.linspace(a, b, m):
                side = ""
                if i > 0 and t == a:
                    side = "+"
                elif i < ex.n - 1 and t == b:
                    side = "-"
                x = seg.state(t)
                u = seg.input(t)
                w.writerow([_fmt(t), seg.mode] + [_fmt(v) for v in x]
                           + [_fmt(v) for v in u] + [side])


def execution_summary(model: AffineHybridModel, ex: Execution) -> dict:
    cb = execution_cost(model, ex)
    return {
        "t_jumps": list(ex.jump_times),
        "t_final": ex.t_final,
        "q_seq": list(ex.q),
        "sigma_seq": list(ex.sigma),
        **cb.as_dict(),
    }


def write_summary_json(summary: dict, path) -> None:
    with open(path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
