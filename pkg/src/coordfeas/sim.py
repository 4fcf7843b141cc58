"""Fixed-step trajectory generation for constrained vehicle groups.

Virtual inputs are held over a step while the motion family is re-solved at
every integrator stage.  Null bases from successive solves are rotated onto
the previous one (orthogonal Procrustes), so held weights keep their
meaning as the state moves.  Weights are re-selected whenever the active
inequality set changes, or when an active row stops being satisfied.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import constraints as cons
from . import feasibility as feas
from .matlite import Inconsistent, solve_particular
from .vehicles import (
    NotInDistribution,
    VehicleKind,
    controls_from_velocity,
    offsets_for,
    state_dim,
)

log = logging.getLogger(__name__)

MAX_BISECT = 40
MAX_SUBSTEPS = 50
POLICIES = ("cruise", "hold", "random")


class ProjectionDiverged(RuntimeError):
    pass


@dataclass
class Scenario:
    kinds: list
    initial: list
    constraints: list
    duration: float = 20.0
    step: float = 1e-3
    integrator: str = "rk4"
    eps_act: float = cons.EPS_ACT
    margin: float = 0.0
    bound: float = 10.0
    cruise: Optional[object] = None  # list (graph) or {vehicle: list} (tree)
    policy: str = "cruise"
    projection: bool = False
    projection_tol: float = 1e-12
    tree: Optional[dict] = None  # {child: parent}; root maps to None
    seed: int = 0

    @property
    def dim(self) -> int:
        return sum(state_dim(k) for k in self.kinds)

    def initial_state(self) -> np.ndarray:
        return np.concatenate([np.asarray(s, dtype=float) for s in self.initial])

    def options(self) -> feas.Options:
        return feas.Options(eps_act=self.eps_act, margin=self.margin, bound=self.bound)

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.duration / self.step + 1e-9))


@dataclass
class Event:
    t: float
    kind: str  # "activate" | "deactivate"
    edge: int
    side: str


@dataclass
class TrajectoryLog:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    controls: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    active: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    strategies: list = field(default_factory=list)
    events: list = field(default_factory=list)
    reselections: int = 0
    status: str = feas.FEASIBLE
    status_timeline: list = field(default_factory=list)
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == feas.FEASIBLE


# --------------------------------------------------------------- validation


def validate(s: Scenario) -> list[str]:
    """Problems with a scenario; an empty list means it can be run."""
    errs = []
    if not s.step > 0:
        errs.append("step must be positive")
    if not s.duration >= 0:
        errs.append("duration must be non-negative")
    elif s.step > 0 and 0 < s.duration < s.step:
        errs.append("duration must be zero or at least one step")
    if s.integrator not in ("euler", "rk4"):
        errs.append(f"unknown integrator {s.integrator!r}")
    if s.policy not in POLICIES:
        errs.append(f"unknown policy {s.policy!r}")
    if not s.eps_act > 0:
        errs.append("eps_act must be positive")
    if s.margin < 0:
        errs.append("margin must be non-negative")
    if not s.bound > 0:
        errs.append("bound must be positive")
    if len(s.kinds) != len(s.initial):
        errs.append("each vehicle needs an initial state")
        return errs
    for v, (k, x) in enumerate(zip(s.kinds, s.initial)):
        x = np.asarray(x, dtype=float)
        if x.shape != (state_dim(k),):
            errs.append(f"vehicle {v}: initial state needs {state_dim(k)} entries")
        elif not np.all(np.isfinite(x)):
            errs.append(f"vehicle {v}: initial state not finite")
        elif k.kind == "car" and abs(x[3]) >= math.pi / 2 - 1e-6:
            errs.append(f"vehicle {v}: steering angle at singularity")
    if errs:
        return errs
    for n, c in enumerate(s.constraints):
        errs.extend(f"constraint {n}: {e}" for e in cons.validate(c, s.kinds))
    if s.tree is not None:
        try:
            feas.topological_order(s.tree, len(s.kinds))
        except ValueError as exc:
            errs.append(f"tree: {exc}")
        else:
            for n, c in enumerate(s.constraints):
                if not isinstance(c, cons.SINGLE_VEHICLE_TYPES) and s.tree.get(c.j) != c.i and s.tree.get(c.i) != c.j:
                    errs.append(f"constraint {n}: edge ({c.i}, {c.j}) is not a tree edge")
    if errs:
        return errs

    p = s.initial_state()
    for n, c in enumerate(s.constraints):
        gap = _band_gap(c)
        if gap is not None and s.eps_act >= gap:
            errs.append(f"constraint {n}: eps_act too large for the band width")
        if isinstance(c, cons.SINGLE_VEHICLE_TYPES):
            continue
        try:
            res = cons.residuals(c, s.kinds, p, 0.0)
        except cons.DegenerateGeometry as exc:
            errs.append(f"constraint {n}: {exc}")
            continue
        for side, g in res:
            if cons.is_equality(c) and abs(g) > 1e-9:
                errs.append(f"constraint {n}: equality not met at t=0 (residual {g:.3e})")
            elif not cons.is_equality(c) and g > s.eps_act:
                errs.append(f"constraint {n} ({side}): inequality violated at t=0 (residual {g:.3e})")
    return errs


def _band_gap(c):
    if isinstance(c, cons.DistanceBand):
        return (c.d_plus ** 2 - c.d_minus ** 2) / 4
    if isinstance(c, cons.HeadingBand):
        return (c.delta_plus - c.delta_minus) / 4
    return None


# --------------------------------------------------------------- projection


def _position_equalities(constraints):
    return [c for c in constraints if isinstance(c, (cons.DistanceEq, cons.HeadingEq))]


def project_equalities(s: Scenario, p, tol: float = 1e-12, max_iters: int = 20) -> np.ndarray:
    """Gauss-Newton pull-back of ``p`` onto the position-level equality manifold.

    Each correction is the minimum-norm step, so only coordinates the
    constraints depend on move.
    """
    p = np.array(p, dtype=float)
    eqs = _position_equalities(s.constraints)
    if not eqs:
        return p
    for _ in range(max_iters + 1):
        r = np.array([cons.residuals(c, s.kinds, p)[0][1] for c in eqs])
        if np.max(np.abs(r)) <= tol:
            return p
        jac = np.vstack([cons.equality_rows(c, s.kinds, p)[0] for c in eqs])
        try:
            dp = solve_particular(jac, -r)
        except Inconsistent:
            # contradictory or rank-deficient linearization: least-squares step
            dp = np.linalg.lstsq(jac, -r, rcond=None)[0]
        p = p + dp
    raise ProjectionDiverged(f"equality projection did not reach {tol:g} in {max_iters} iterations")


# --------------------------------------------------------------- dynamics


def _align(basis: np.ndarray, ref: Optional[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Rotate ``basis`` within its span to best match ``ref``; returns (aligned, Q)."""
    k = basis.shape[1]
    if ref is None or ref.shape != basis.shape or k == 0:
        return basis, np.eye(k)
    u, _, vt = np.linalg.svd(basis.T @ ref)
    q = u @ vt
    return basis @ q, q


class _Frame:
    """Held weights for one motion family together with its transported basis."""

    def __init__(self):
        self.ref: Optional[np.ndarray] = None
        self.w = np.zeros(0)
        self.strategy = feas.UNCONSTRAINED

    def velocity(self, fam: feas.MotionFamily) -> np.ndarray:
        basis, _ = _align(fam.basis, self.ref)
        if basis.shape[1] != self.w.shape[0]:
            log.warning("null-space dimension changed mid-step; using the particular motion")
            return fam.k_bar
        return fam.k_bar + basis @ self.w

    def transport(self, fam: feas.MotionFamily):
        self.ref, _ = _align(fam.basis, self.ref)
        if self.ref.shape[1] != self.w.shape[0]:
            self.w = np.zeros(self.ref.shape[1])

    def policy_weights(self, fam, policy, cruise, rng):
        """Weights (in the raw frame of ``fam``) for an empty active set."""
        aligned, q = _align(fam.basis, self.ref)
        kappa = fam.kappa
        if policy == "hold" and self.w.shape == (kappa,):
            w = self.w
        elif policy == "random":
            w = rng.uniform(-1.0, 1.0, size=kappa)
        elif cruise is not None:
            w = np.asarray(cruise, dtype=float)
            if w.shape != (kappa,):
                raise ValueError(f"cruise weights need length {kappa}, got {w.shape}")
        else:
            w = np.zeros(kappa)
        return q @ w

    def held(self, fam):
        """Current weights expressed in the raw frame of ``fam``."""
        _, q = _align(fam.basis, self.ref)
        if self.w.shape != (fam.kappa,):
            return np.zeros(fam.kappa)
        return q @ self.w

    def adopt(self, fam: feas.MotionFamily, sel: feas.MotionSelection):
        aligned, q = _align(fam.basis, self.ref)
        self.ref = aligned
        self.w = q.T @ sel.weights
        self.strategy = sel.tag()


class _FamilyCache:
    """Remembers the last few solves keyed on the exact (state, time) bits."""

    def __init__(self, solve: Callable, size: int = 8):
        self.solve = solve
        self.size = size
        self.store: dict = {}

    def __call__(self, p, t):
        key = (p.tobytes(), t)
        hit = self.store.get(key)
        if hit is None:
            hit = self.solve(p, t)
            if len(self.store) >= self.size:
                self.store.pop(next(iter(self.store)))
            self.store[key] = hit
        return hit


class _GraphDynamics:
    def __init__(self, s: Scenario, rng):
        self.s = s
        self.rng = rng
        self.frame = _Frame()
        self.family = _FamilyCache(self._solve)

    def _solve(self, p, t):
        omega, rhs = feas.equality_system(self.s.kinds, self.s.constraints, p, t)
        return feas.motion_family(omega, rhs)

    def velocity(self, p, t):
        return self.frame.velocity(self.family(p, t))

    def transport(self, p, t):
        self.frame.transport(self.family(p, t))

    def select(self, p, t, keep):
        s = self.s
        opts = s.options()
        opts.cruise = lambda fam: self.frame.policy_weights(fam, s.policy, s.cruise, self.rng)
        opts.base = self.frame.held
        rep = feas.check(s.kinds, s.constraints, p, t, opts, keep)
        if rep.feasible:
            self.frame.adopt(rep.family, rep.selection)
        return rep.status, rep.active, rep.diagnostics.get("error", "")

    def weights(self):
        return self.frame.w

    def strategy(self):
        return self.frame.strategy


class _TreeDynamics:
    def __init__(self, s: Scenario, rng):
        self.s = s
        self.rng = rng
        self.order = feas.topological_order(s.tree, len(s.kinds))
        self.frames = {v: _Frame() for v in self.order}
        self.offs = offsets_for(s.kinds)

    def _families(self, p, t):
        """Per-vehicle families and velocities in root-to-leaf order."""
        s = self.s
        pdot = np.zeros_like(p)
        fams = {}
        for v in self.order:
            u = s.tree.get(v)
            parent_pdot = None
            if u is not None:
                o = self.offs[u]
                parent_pdot = pdot[o:o + state_dim(s.kinds[u])]
            omega, rhs, *_ = feas.local_system(s.kinds, s.constraints, p, t, v, u, parent_pdot,
                                               s.eps_act, with_inequalities=False)
            fam = feas.motion_family(omega, rhs)
            fams[v] = fam
            o = self.offs[v]
            pdot[o:o + state_dim(s.kinds[v])] = self.frames[v].velocity(fam)
        return fams, pdot

    def velocity(self, p, t):
        return self._families(p, t)[1]

    def transport(self, p, t):
        fams, _ = self._families(p, t)
        for v, fam in fams.items():
            self.frames[v].transport(fam)

    def select(self, p, t, keep):
        s = self.s
        opts = s.options()
        cruise = {}
        for v in self.order:
            vc = s.cruise.get(v) if isinstance(s.cruise, Mapping) else None
            cruise[v] = (lambda fam, v=v, vc=vc:
                         self.frames[v].policy_weights(fam, s.policy, vc, self.rng))
        base = {v: self.frames[v].held for v in self.order}
        reports = feas.check_leader_follower(s.tree, s.kinds, s.constraints, p, t, opts,
                                             cruise=cruise, base=base, keep=keep)
        rows = []
        for v, rep in reports:
            if not rep.feasible:
                return rep.status, None, f"vehicle {v}: {rep.diagnostics.get('error', rep.status)}"
            rows.extend(rep.active.rows)
        for v, rep in reports:
            self.frames[v].adopt(rep.family, rep.selection)
        rows.sort(key=lambda r: (r.edge, r.side != "upper"))
        return feas.FEASIBLE, cons.ActiveSet(tuple(rows), t), ""

    def weights(self):
        return np.concatenate([self.frames[v].w for v in range(len(self.s.kinds))])

    def strategy(self):
        return ";".join(self.frames[v].strategy for v in range(len(self.s.kinds)))


# --------------------------------------------------------------- stepping


def _rk4(f, p, t, h):
    k1 = f(p, t)
    k2 = f(p + 0.5 * h * k1, t + 0.5 * h)
    k3 = f(p + 0.5 * h * k2, t + 0.5 * h)
    k4 = f(p + h * k3, t + h)
    return p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _euler(f, p, t, h):
    return p + h * f(p, t)


def _ineq_sides(s: Scenario, p, t):
    out = {}
    for k, c in enumerate(s.constraints):
        if not cons.is_equality(c):
            for side, g in cons.residuals(c, s.kinds, p, t):
                out[(k, side)] = g
    return out


def _active_keys(s: Scenario, p, t, keep):
    keys = []
    for (k, side), g in _ineq_sides(s, p, t).items():
        floor = -2.0 * s.eps_act if (k, side) in keep else -s.eps_act
        if g >= floor:
            keys.append((k, side))
    return tuple(keys)


class Simulator:
    """Stateful stepper; :func:`run` drives it over a whole scenario."""

    def __init__(self, s: Scenario):
        self.s = s
        self.rng = np.random.default_rng(s.seed)
        self.dyn = _TreeDynamics(s, self.rng) if s.tree is not None else _GraphDynamics(s, self.rng)
        self.integrate = _rk4 if s.integrator == "rk4" else _euler
        self.active: tuple = ()
        self.active_rows: Optional[cons.ActiveSet] = None
        self.log = TrajectoryLog()

    def _advance(self, p, t, h):
        q = self.integrate(self.dyn.velocity, p, t, h)
        if self.s.projection:
            q = project_equalities(self.s, q, self.s.projection_tol)
        return q

    def _reselect(self, p, t, reason):
        status, active, msg = self.dyn.select(p, t, self.active)
        if status != feas.FEASIBLE:
            self.log.status = status
            self.log.message = f"t={t:.6f}: {msg or status}"
            self.log.status_timeline.append((t, status))
            return False
        new = active.keys()
        for key in new:
            if key not in self.active:
                self.log.events.append(Event(t, "activate", *key))
        for key in self.active:
            if key not in new:
                self.log.events.append(Event(t, "deactivate", *key))
        self.active = new
        self.active_rows = active
        if reason != "start":
            self.log.reselections += 1
        return True

    def _certified(self, p, t):
        """Held weights still satisfy ``row @ pdot <= 0`` for every active row."""
        if not self.active:
            return True
        _, _, act = cons.collect(self.s.constraints, self.s.kinds, p, t, self.s.eps_act, self.active)
        if not act.rows:
            return True
        pdot = self.dyn.velocity(p, t)
        return bool(np.max(act.matrix(p.shape[0]) @ pdot) <= feas.CERT_TOL)

    def step(self, p, t, t_end):
        """Advance from ``t`` to ``t_end``, splitting at activation crossings.

        Returns the new state, or None when re-selection failed.
        """
        s = self.s
        for _ in range(MAX_SUBSTEPS):
            h = t_end - t
            if h <= 1e-15 * max(1.0, abs(t_end)):
                break
            q = self._advance(p, t, h)
            t_new = t_end
            g = _ineq_sides(s, q, t_end)
            crossing = [key for key, val in g.items() if key not in self.active and val > s.eps_act]
            if crossing:
                q, t_new = self._bisect(p, t, h, crossing)
            p, t = q, t_new
            self.dyn.transport(p, t)
            keys = _active_keys(s, p, t, self.active)
            if keys != self.active:
                if not self._reselect(p, t, "event"):
                    return None, t
            elif not self._certified(p, t):
                if not self._reselect(p, t, "certify"):
                    return None, t
        return p, t

    def _bisect(self, p, t, h, keys):
        s = self.s
        lo, hi = 0.0, h
        q_hi = None
        for _ in range(MAX_BISECT):
            mid = 0.5 * (lo + hi)
            q = self._advance(p, t, mid)
            g = _ineq_sides(s, q, t + mid)
            worst = max(g[k] for k in keys)
            if worst > s.eps_act:
                hi, q_hi = mid, q
            elif worst < -s.eps_act:
                lo = mid
            else:
                return q, t + mid
        if q_hi is None:
            q_hi = self._advance(p, t, hi)
        return q_hi, t + hi

    def record(self, p, t):
        s = self.s
        lg = self.log
        pdot = self.dyn.velocity(p, t)
        offs = offsets_for(s.kinds)
        ctrls = []
        for o, k in zip(offs, s.kinds):
            d = state_dim(k)
            try:
                ctrls.append(controls_from_velocity(k, p[o:o + d], pdot[o:o + d], tol=1e-8))
            except NotInDistribution:
                ctrls.append(np.full(2 if k.kind != "constant_speed" else 1, np.nan))
        res = []
        for c in s.constraints:
            res.extend(g for _, g in cons.residuals(c, s.kinds, p, t, pdot=pdot))
        flags = []
        for k, c in enumerate(s.constraints):
            if not cons.is_equality(c):
                flags.extend((k, side) in self.active for side in cons.sides(c))
        lg.times.append(t)
        lg.states.append(p.copy())
        lg.controls.append(ctrls)
        lg.residuals.append(res)
        lg.active.append(flags)
        lg.weights.append(np.array(self.dyn.weights(), dtype=float))
        lg.strategies.append(self.dyn.strategy())


def run(s: Scenario) -> TrajectoryLog:
    errs = validate(s)
    if errs:
        raise ValueError("invalid scenario: " + "; ".join(errs))
    sim = Simulator(s)
    p = s.initial_state()
    if s.projection:
        p = project_equalities(s, p, s.projection_tol)
    sim.active = _active_keys(s, p, 0.0, ())
    sim.log.status_timeline.append((0.0, feas.FEASIBLE))
    if not sim._reselect(p, 0.0, "start"):
        return sim.log
    # the initial active set is the starting point, not an event
    sim.log.events.clear()
    sim.record(p, 0.0)
    t = 0.0
    for k in range(s.n_steps):
        t_end = (k + 1) * s.step
        try:
            q, t_reached = sim.step(p, t, t_end)
        except (feas.EqualityInconsistent, ProjectionDiverged, cons.DegenerateGeometry) as exc:
            sim.log.status = (feas.EQUALITY_INCONSISTENT if isinstance(exc, feas.EqualityInconsistent)
                              else feas.NO_FEASIBLE_DIRECTION)
            sim.log.message = f"t={t:.6f}: {exc}"
            sim.log.status_timeline.append((t, sim.log.status))
            break
        if q is None:
            break
        p, t = q, t_end
        sim.record(p, t)
    return sim.log
