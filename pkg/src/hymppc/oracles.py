"""Independent numerical oracles used for cross-validation.

Nothing in here touches the closed-form solver machinery: the Riccati sweep
and the shooting integrator use hand-rolled fixed-step RK4, and the matrix
exponential reference is plain Taylor summation.  They exist so the solver
can be checked against arithmetic that shares no code path with it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _rk4_step(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


@dataclass
class LqrSweepResult:
    ts: np.ndarray
    xs: np.ndarray       # (m, n_x)
    us: np.ndarray       # (m, n_u)
    cost: float          # running + terminal


def riccati_lqr(A, Bu, Bc, Wx, Wu, Wc, xbar, ubar, Wf, x0, T, dt=1e-5) -> LqrSweepResult:
    """Finite-horizon affine-quadratic regulator by backward Riccati sweep.

    Backward RK4 integrates the quadratic value function V = 0.5 x'Px + s'x + c;
    the forward pass replays the optimal feedback u = ubar - Wu^-1 Bu'(Px + s)
    and accumulates the running cost.  Everything is fixed-step RK4 at dt/2
    resolution so the forward pass can read P, s at half-steps.
    """
    A, Bu, Bc = map(np.asarray, (A, Bu, Bc))
    Wx, Wu, Wf = map(np.asarray, (Wx, Wu, Wf))
    xbar = np.asarray(xbar, dtype=float)
    ubar = np.asarray(ubar, dtype=float)
    n_x = A.shape[0]
    Wu_inv = np.linalg.inv(Wu)
    S = Bu @ Wu_inv @ Bu.T
    b = Bc + Bu @ ubar

    m = int(round(T / dt))
    h = T / m                      # match the grid to T exactly
    n_half = 2 * m + 1

    Ps = np.empty((n_half, n_x, n_x))
    ss = np.empty((n_half, n_x))
    P = Wf.copy()
    s = -Wf @ xbar
    Ps[-1] = P
    ss[-1] = s

    def dP(P):
        return -(P @ A + A.T @ P - P @ S @ P + Wx)

    def ds(P, s):
        return -((A - S @ P).T @ s + P @ b - Wx @ xbar)

    hh = h / 2.0
    for j in range(n_half - 2, -1, -1):
        # one backward RK4 half-step on the coupled (P, s) pair
        k1P = dP(P);              k1s = ds(P, s)
        P2 = P - 0.5 * hh * k1P;  s2 = s - 0.5 * hh * k1s
        k2P = dP(P2);             k2s = ds(P2, s2)
        P3 = P - 0.5 * hh * k2P;  s3 = s - 0.5 * hh * k2s
        k3P = dP(P3);             k3s = ds(P3, s3)
        P4 = P - hh * k3P;        s4 = s - hh * k3s
        k4P = dP(P4);             k4s = ds(P4, s4)
        P = P - (hh / 6.0) * (k1P + 2 * k2P + 2 * k3P + k4P)
        s = s - (hh / 6.0) * (k1s + 2 * k2s + 2 * k3s + k4s)
        P = 0.5 * (P + P.T)
        Ps[j] = P
        ss[j] = s

    def u_of(j_half, x):
        return ubar - Wu_inv @ (Bu.T @ (Ps[j_half] @ x + ss[j_half]))

    def stage(x, u):
        dx = x - xbar
        du = u - ubar
        return float(0.5 * dx @ Wx @ dx + 0.5 * du @ Wu @ du + Wc)

    def fx(jj, xx):
        return A @ xx + Bu @ u_of(jj, xx) + Bc

    xs = np.empty((m + 1, n_x))
    us = np.empty((m + 1, Bu.shape[1]))
    x = np.asarray(x0, dtype=float).copy()
    run_cost = 0.0
    for j in range(m):
        xs[j] = x
        us[j] = u_of(2 * j, x)
        l0 = stage(x, u_of(2 * j, x))
        k1 = fx(2 * j, x)
        k2 = fx(2 * j + 1, x + 0.5 * h * k1)
        k3 = fx(2 * j + 1, x + 0.5 * h * k2)
        k4 = fx(2 * j + 2, x + h * k3)
        x_new = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        l_mid = stage(x + 0.5 * h * k2, u_of(2 * j + 1, x + 0.5 * h * k2))
        l1 = stage(x_new, u_of(2 * j + 2, x_new))
        run_cost += (h / 6.0) * (l0 + 4 * l_mid + l1)  # Simpson on the step
        x = x_new
    xs[m] = x
    us[m] = u_of(2 * m, x)
    dxT = x - xbar
    cost = run_cost + float(0.5 * dxT @ Wf @ dxT)
    ts = np.linspace(0.0, T, m + 1)
    return LqrSweepResult(ts=ts, xs=xs, us=us, cost=cost)


def rk4_flow_costate(Ae, z0, T, dt=1e-5):
    """Fixed-step RK4 on the augmented linear flow zdot = Ae z over [0, T]."""
    Ae = np.asarray(Ae, dtype=float)
    z = np.asarray(z0, dtype=float).copy()
    m = int(round(T / dt))
    h = T / max(m, 1)
    ts = np.linspace(0.0, T, m + 1)
    zs = np.empty((m + 1, len(z)))
    zs[0] = z

    def f(t, zz):
        return Ae @ zz

    for j in range(m):
        z = _rk4_step(f, ts[j], z, h)
        zs[j + 1] = z
    return ts, zs


def rk4_guard_crossing(Ae, z0, Mx, Mc, n_x, t_max, dt=1e-4, tol=1e-12):
    """First time the guard row crosses zero along zdot = Ae z, by RK4 plus
    bisection with re-integration.  Returns None if no crossing before t_max."""
    ts, zs = rk4_flow_costate(Ae, z0, t_max, dt)
    g = zs[:, :n_x] @ np.asarray(Mx, dtype=float) + Mc
    idx = None
    for j in range(len(g) - 1):
        if (g[j] < 0) != (g[j + 1] < 0) or abs(g[j + 1]) <= tol:
            idx = j
            break
    if idx is None:
        return None
    lo, hi = ts[idx], ts[idx + 1]

    def g_at(t):
        if t == 0.0:
            z = np.asarray(z0, dtype=float)
        else:
            z = rk4_flow_costate(Ae, z0, t, dt=min(dt, t / 8))[1][-1]
        return float(z[:n_x] @ np.asarray(Mx, dtype=float) + Mc)

    g_lo = g_at(lo)
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        g_mid = g_at(mid)
        if abs(g_mid) <= tol or hi - lo < 1e-14 * max(1.0, hi):
            return mid
        if (g_lo < 0) == (g_mid < 0):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def expm_taylor(M, tol=1e-16, max_terms=400):
    """Matrix exponential by straight Taylor summation (reference only;
    callers must keep ||M|| modest for this to be accurate)."""
    M = np.asarray(M, dtype=float)
    term = np.eye(M.shape[0])
    acc = term.copy()
    for k in range(1, max_terms):
        term = term @ M / k
        acc += term
        if np.max(np.abs(term)) <= tol * max(1.0, np.max(np.abs(acc))):
            break
    return acc
