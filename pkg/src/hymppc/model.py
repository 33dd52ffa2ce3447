"""Affine hybrid automata with quadratic costs.

A model is a finite set of modes, each with affine dynamics
``xdot = A x + Bu u + Bc`` and a polyhedral domain, plus transitions with
affine guard hyperplanes ``Mx . x + Mc = 0``, affine resets
``x+ = Lx x- + Lc`` and scalar jump costs.  Quadratic stage, jump and
terminal weights live alongside the modes.  Models are treated as immutable
after construction and can be shared freely between solver invocations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import null_space

from .errors import DimensionMismatch, UnknownMode, UnknownTransition

ModeId = str
InputId = str


def _arr(a, shape=None) -> np.ndarray:
    out = np.asarray(a, dtype=float)
    if shape is not None:
        out = out.reshape(shape)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Polyhedron:
    """Set {x : P x + p >= 0 componentwise}; k = 0 rows means the whole space."""

    P: np.ndarray
    p: np.ndarray

    @staticmethod
    def whole_space(n_x: int) -> "Polyhedron":
        return Polyhedron(_arr(np.zeros((0, n_x))), _arr(np.zeros(0)))

    @property
    def k(self) -> int:
        return self.P.shape[0]

    def contains(self, x, tol: float = 0.0) -> bool:
        if self.k == 0:
            return True
        return bool(np.all(self.P @ np.asarray(x, dtype=float) + self.p >= -tol))


@dataclass(frozen=True)
class AffineMode:
    id: ModeId
    A: np.ndarray
    Bu: np.ndarray
    Bc: np.ndarray
    domain: Polyhedron


@dataclass(frozen=True)
class AffineTransition:
    source: ModeId
    input: InputId
    target: ModeId
    Mx: np.ndarray          # (n_x,) guard row
    Mc: float
    Lx: np.ndarray          # (n_x, n_x) reset matrix
    Lc: np.ndarray          # (n_x,)
    jump_cost: float
    jump_cost_schedule: tuple[float, ...] | None = None
    extra_guard: Polyhedron | None = None

    @property
    def key(self) -> tuple[ModeId, InputId, ModeId]:
        return (self.source, self.input, self.target)

    def jump_cost_at(self, i: int) -> float:
        """Jump cost for the i-th jump (1-based); falls back to the flat cost."""
        if self.jump_cost_schedule is not None and 1 <= i <= len(self.jump_cost_schedule):
            return self.jump_cost_schedule[i - 1]
        return self.jump_cost


@dataclass(frozen=True)
class ModeCost:
    """Quadratic stage and terminal weights for one mode."""

    Wx: np.ndarray
    Wu: np.ndarray
    Wc: float
    xbar: np.ndarray
    ubar: np.ndarray
    Wf: np.ndarray

    def stage(self, x, u) -> float:
        dx = np.asarray(x, dtype=float) - self.xbar
        du = np.asarray(u, dtype=float) - self.ubar
        return float(0.5 * dx @ self.Wx @ dx + 0.5 * du @ self.Wu @ du + self.Wc)

    def terminal(self, x) -> float:
        dx = np.asarray(x, dtype=float) - self.xbar
        return float(0.5 * dx @ self.Wf @ dx)


@dataclass(frozen=True)
class AffineHybridModel:
    n_x: int
    n_u: int
    modes: dict[ModeId, AffineMode]
    transitions: tuple[AffineTransition, ...]
    cost: dict[ModeId, ModeCost]
    _by_key: dict[tuple[ModeId, InputId, ModeId], AffineTransition] = field(
        init=False, repr=False, compare=False, default_factory=dict
    )

    def __post_init__(self):
        object.__setattr__(
            self, "_by_key", {t.key: t for t in self.transitions}
        )

    # -- lookups ----------------------------------------------------------
    def mode(self, q: ModeId) -> AffineMode:
        try:
            return self.modes[q]
        except KeyError:
            raise UnknownMode(f"unknown mode {q!r}") from None

    def mode_cost(self, q: ModeId) -> ModeCost:
        self.mode(q)
        return self.cost[q]

    def transition(self, q: ModeId, sigma: InputId, q2: ModeId) -> AffineTransition:
        try:
            return self._by_key[(q, sigma, q2)]
        except KeyError:
            raise UnknownTransition(f"unknown transition ({q!r}, {sigma!r}, {q2!r})") from None

    # -- spec operations --------------------------------------------------
    def transitions_from(self, q: ModeId) -> list[tuple[InputId, ModeId]]:
        """Declared (input, target) pairs out of q, sorted by (input, target)."""
        self.mode(q)
        pairs = [(t.input, t.target) for t in self.transitions if t.source == q]
        return sorted(pairs)

    def guard_residual(self, q: ModeId, sigma: InputId, q2: ModeId, x) -> float:
        t = self.transition(q, sigma, q2)
        return float(t.Mx @ np.asarray(x, dtype=float) + t.Mc)

    def apply_reset(self, q: ModeId, sigma: InputId, q2: ModeId, x) -> np.ndarray:
        t = self.transition(q, sigma, q2)
        return t.Lx @ np.asarray(x, dtype=float) + t.Lc

    def vector_field(self, q: ModeId, x, u) -> np.ndarray:
        m = self.mode(q)
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if x.shape != (self.n_x,) or u.shape != (self.n_u,):
            raise DimensionMismatch(
                f"expected x {(self.n_x,)} and u {(self.n_u,)}, got {x.shape} and {u.shape}"
            )
        return m.A @ x + m.Bu @ u + m.Bc

    def jump_cost(self, i: int, q: ModeId, sigma: InputId, q2: ModeId) -> float:
        return self.transition(q, sigma, q2).jump_cost_at(i)

    def min_jump_cost(self) -> float:
        """Smallest declared jump cost (the h_min of the iteration bound)."""
        costs = [t.jump_cost for t in self.transitions]
        for t in self.transitions:
            if t.jump_cost_schedule is not None:
                costs.extend(t.jump_cost_schedule)
        return min(costs) if costs else float("inf")


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __str__(self) -> str:
        lines = [f"errors: {len(self.errors)}, warnings: {len(self.warnings)}"]
        lines += [f"ERROR: {e}" for e in self.errors]
        lines += [f"WARNING: {w}" for w in self.warnings]
        return "\n".join(lines)


def _check_shape(report, what, a, shape):
    if a.shape != shape:
        report.errors.append(f"{what}: expected shape {shape}, got {a.shape}")
        return False
    return True


def _polyhedron_nonempty(poly: Polyhedron) -> bool:
    """LP feasibility of {x : P x + p >= 0} (maximise the worst slack)."""
    from scipy.optimize import linprog

    k, n = poly.P.shape
    # variables (x, s): maximise s subject to P x + p >= s
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-poly.P, np.ones((k, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=poly.p, bounds=[(None, None)] * n + [(None, 1.0)])
    if res.status == 3:  # unbounded: some slack is achievable
        return True
    return res.success and -res.fun >= 0.0


def _guard_boundary_samples(tr: AffineTransition, n_x: int, n_samples: int) -> np.ndarray:
    """Deterministic sample points on the guard hyperplane, clipped to extra_guard."""
    nrm2 = float(tr.Mx @ tr.Mx)
    if nrm2 == 0.0:
        return np.zeros((0, n_x))
    x0 = -tr.Mc * tr.Mx / nrm2
    basis = null_space(tr.Mx.reshape(1, -1))  # (n_x, n_x - 1)
    if basis.shape[1] == 0:
        pts = x0.reshape(1, -1)
    else:
        rng = np.random.default_rng(0)
        coeffs = rng.uniform(-2.0, 2.0, size=(n_samples, basis.shape[1]))
        coeffs[0] = 0.0  # always include the foot point
        pts = x0 + coeffs @ basis.T
    if tr.extra_guard is not None:
        pts = np.array([p for p in pts if tr.extra_guard.contains(p, tol=1e-9)])
    return pts


def validate(model: AffineHybridModel, n_samples: int = 64) -> ValidationReport:
    """Structural validation of a model.

    Errors cover dimension mismatches, weight definiteness and degenerate
    guards; the sampled well-posedness check (reset image of the guard
    boundary must land in the flow-admissible part of the target domain)
    only produces warnings because it is approximate by nature.
    """
    rep = ValidationReport()
    nx, nu = model.n_x, model.n_u
    if nx <= 0 or nu <= 0:
        rep.errors.append(f"n_x and n_u must be positive (got {nx}, {nu})")
        return rep
    if not model.modes:
        rep.errors.append("model has no modes")
        return rep

    for q, m in model.modes.items():
        _check_shape(rep, f"mode {q}: A", m.A, (nx, nx))
        _check_shape(rep, f"mode {q}: Bu", m.Bu, (nx, nu))
        _check_shape(rep, f"mode {q}: Bc", m.Bc, (nx,))
        if m.domain.k > 0:
            _check_shape(rep, f"mode {q}: domain P", m.domain.P, (m.domain.k, nx))
            _check_shape(rep, f"mode {q}: domain p", m.domain.p, (m.domain.k,))
        c = model.cost.get(q)
        if c is None:
            rep.errors.append(f"mode {q}: no cost entry")
            continue
        _check_shape(rep, f"mode {q}: Wx", c.Wx, (nx, nx))
        _check_shape(rep, f"mode {q}: Wu", c.Wu, (nu, nu))
        _check_shape(rep, f"mode {q}: Wf", c.Wf, (nx, nx))
        _check_shape(rep, f"mode {q}: xbar", c.xbar, (nx,))
        _check_shape(rep, f"mode {q}: ubar", c.ubar, (nu,))
        if c.Wc < 0:
            rep.errors.append(f"mode {q}: Wc must be >= 0")
        try:
            np.linalg.cholesky(c.Wu)
        except np.linalg.LinAlgError:
            rep.errors.append(f"mode {q}: Wu not positive definite")
        for name, W in (("Wx", c.Wx), ("Wf", c.Wf)):
            if W.shape == (nx, nx):
                if np.max(np.abs(W - W.T)) > 1e-12:
                    rep.errors.append(f"mode {q}: {name} not symmetric")
                elif np.min(np.linalg.eigvalsh(W)) < -1e-10:
                    rep.errors.append(f"mode {q}: {name} not positive semidefinite")

    seen = set()
    for tr in model.transitions:
        key = tr.key
        tag = f"transition {key}"
        if key in seen:
            rep.errors.append(f"{tag}: duplicate (source, input, target)")
        seen.add(key)
        if tr.source not in model.modes:
            rep.errors.append(f"{tag}: unknown source mode")
        if tr.target not in model.modes:
            rep.errors.append(f"{tag}: unknown target mode")
        _check_shape(rep, f"{tag}: Mx", tr.Mx, (nx,))
        _check_shape(rep, f"{tag}: Lx", tr.Lx, (nx, nx))
        _check_shape(rep, f"{tag}: Lc", tr.Lc, (nx,))
        if np.all(tr.Mx == 0.0):
            rep.errors.append(f"{tag}: guard row Mx is zero")
        if tr.jump_cost <= 0:
            rep.errors.append(f"{tag}: jump cost must be > 0")

    # Every mode needs somewhere to go: a non-empty domain to flow in, or a jump out.
    for q, m in model.modes.items():
        if m.domain.k > 0 and not _polyhedron_nonempty(m.domain) \
                and not model.transitions_from(q):
            rep.warnings.append(
                f"mode {q}: empty domain and no outgoing transition "
                "(neither flow nor jump is possible)"
            )

    if rep.errors:
        return rep

    # Sampled well-posedness: reset(guard boundary) must lie in the target's
    # domain minus the target's own guard sets.
    for tr in model.transitions:
        tgt = model.modes[tr.target]
        out_of_tgt = [model._by_key[k] for k in model._by_key if k[0] == tr.target]
        bad = 0
        pts = _guard_boundary_samples(tr, nx, n_samples)
        for p in pts:
            y = tr.Lx @ p + tr.Lc
            if not tgt.domain.contains(y, tol=1e-9):
                bad += 1
                continue
            for tr2 in out_of_tgt:
                g = float(tr2.Mx @ y + tr2.Mc)
                in_extra = tr2.extra_guard is None or tr2.extra_guard.contains(y, tol=1e-9)
                if g < -1e-9 and in_extra:
                    bad += 1
                    break
        if bad:
            rep.warnings.append(
                f"transition {tr.key}: {bad}/{len(pts)} sampled guard-boundary "
                "points reset outside the flow-admissible target domain"
            )
    return rep


# -- config I/O -----------------------------------------------------------

def _poly_from_json(d, n_x: int) -> Polyhedron:
    if d is None:
        return Polyhedron.whole_space(n_x)
    P = _arr(d["P"])
    if P.size == 0:
        return Polyhedron.whole_space(n_x)
    P = P.reshape(-1, n_x)
    return Polyhedron(_arr(P), _arr(d["p"], (P.shape[0],)))


def model_from_dict(cfg: dict) -> AffineHybridModel:
    """Build a model from the JSON config structure (see README for the schema)."""
    nx = int(cfg["n_x"])
    nu = int(cfg["n_u"])
    modes = {}
    for m in cfg["modes"]:
        q = str(m["id"])
        modes[q] = AffineMode(
            id=q,
            A=_arr(m["A"], (nx, nx)),
            Bu=_arr(m["Bu"], (nx, nu)),
            Bc=_arr(m.get("Bc", np.zeros(nx)), (nx,)),
            domain=_poly_from_json(m.get("domain"), nx),
        )
    transitions = []
    for t in cfg.get("transitions", []):
        sched = t.get("jump_cost_schedule")
        transitions.append(
            AffineTransition(
                source=str(t["source"]),
                input=str(t["input"]),
                target=str(t["target"]),
                Mx=_arr(t["Mx"], (nx,)),
                Mc=float(t["Mc"]),
                Lx=_arr(t["Lx"], (nx, nx)),
                Lc=_arr(t.get("Lc", np.zeros(nx)), (nx,)),
                jump_cost=float(t["jump_cost"]),
                jump_cost_schedule=tuple(float(v) for v in sched) if sched else None,
                extra_guard=_poly_from_json(t["extra_guard"], nx) if t.get("extra_guard") else None,
            )
        )
    cost = {}
    for q, c in cfg["cost"].items():
        cost[str(q)] = ModeCost(
            Wx=_arr(c["Wx"], (nx, nx)),
            Wu=_arr(c["Wu"], (nu, nu)),
            Wc=float(c.get("Wc", 0.0)),
            xbar=_arr(c.get("xbar", np.zeros(nx)), (nx,)),
            ubar=_arr(c.get("ubar", np.zeros(nu)), (nu,)),
            Wf=_arr(c.get("Wf", np.zeros((nx, nx))), (nx, nx)),
        )
    return AffineHybridModel(n_x=nx, n_u=nu, modes=modes,
                             transitions=tuple(transitions), cost=cost)


def load_model(path) -> AffineHybridModel:
    with open(path) as f:
        cfg = json.load(f)
    return model_from_dict(cfg)


def benchmark_path() -> Path:
    """Path of the benchmark model config shipped with the package."""
    return Path(__file__).parent / "data" / "benchmark.json"


def load_benchmark() -> AffineHybridModel:
    return load_model(benchmark_path())
