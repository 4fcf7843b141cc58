"""Feasibility checking and motion generation.

The joint kinematic and equality rows ``[omega_k; omega_e] @ pdot = [t_k; t_e]``
are solved for a particular velocity ``k_bar`` plus an orthonormal null
basis.  Every feasible velocity is ``k_bar + basis @ w`` for some virtual
input ``w``; active inequality rows then restrict ``w``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import linprog, minimize

from . import constraints as cons
from .matlite import DEFAULT_TOL, Inconsistent, particular_and_null, rank_of
from .vehicles import VehicleKind, offsets_for, stack_kinematics, state_dim

log = logging.getLogger(__name__)

FEASIBLE = "Feasible"
EQUALITY_INCONSISTENT = "EqualityInconsistent"
NO_FEASIBLE_DIRECTION = "NoFeasibleDirection"

UNCONSTRAINED = "Unconstrained"
SINGLE_VECTOR = "SingleVector"
COMBO_PROGRAM = "ComboProgram"

CERT_TOL = 1e-10


class EqualityInconsistent(ValueError):
    pass


class NoFeasibleDirection(ValueError):
    pass


@dataclass(frozen=True)
class MotionFamily:
    k_bar: np.ndarray
    basis: np.ndarray  # n x kappa, orthonormal columns
    rank: int
    rows: int

    @property
    def kappa(self) -> int:
        return self.basis.shape[1]

    def velocity(self, w) -> np.ndarray:
        return self.k_bar + self.basis @ np.asarray(w, dtype=float)


@dataclass(frozen=True)
class MotionSelection:
    weights: np.ndarray
    pdot: np.ndarray
    strategy: str
    index: Optional[int] = None  # basis index for SingleVector, 1-based

    def tag(self) -> str:
        return f"{self.strategy}({self.index})" if self.strategy == SINGLE_VECTOR else self.strategy


@dataclass
class Options:
    tol: float = DEFAULT_TOL
    eps_act: float = cons.EPS_ACT
    margin: float = 0.0
    bound: float = 10.0
    cruise: Optional[Sequence[float]] = None
    base: Optional[Sequence[float]] = None
    combo: bool = True


@dataclass
class FeasibilityReport:
    status: str
    family: Optional[MotionFamily] = None
    selection: Optional[MotionSelection] = None
    active: Optional[cons.ActiveSet] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE

    def to_dict(self) -> dict:
        d = {"status": self.status, "diagnostics": self.diagnostics}
        if self.family is not None:
            d["family"] = {
                "kappa": self.family.kappa,
                "rank": self.family.rank,
                "rows": self.family.rows,
                "k_bar": self.family.k_bar.tolist(),
                "basis": self.family.basis.T.tolist(),
            }
        if self.selection is not None:
            d["selection"] = {
                "strategy": self.selection.tag(),
                "weights": self.selection.weights.tolist(),
                "pdot": self.selection.pdot.tolist(),
            }
        if self.active is not None:
            d["active"] = [
                {"edge": r.edge, "side": r.side, "residual": r.residual, "row": r.row.tolist()}
                for r in self.active.rows
            ]
        return d


def motion_family(omega, t, tol: float = DEFAULT_TOL) -> MotionFamily:
    omega = np.asarray(omega, dtype=float)
    t = np.asarray(t, dtype=float)
    try:
        k_bar, basis, rank = particular_and_null(omega, t, tol)
    except Inconsistent as exc:
        raise EqualityInconsistent(str(exc)) from None
    return MotionFamily(k_bar, basis, rank, omega.shape[0])


def _as_rows(active, n):
    if active is None:
        return np.zeros((0, n))
    if isinstance(active, cons.ActiveSet):
        return active.matrix(n)
    return np.asarray(active, dtype=float).reshape(-1, n)


def _scalar_interval(a, b, margin, lo, hi):
    """Sub-interval of ``[lo, hi]`` where ``a + b*w <= -margin`` for all rows."""
    for ar, br in zip(a, b):
        need = -margin - ar
        scale = max(1.0, abs(ar), abs(need))
        if abs(br) <= 1e-14 * scale:
            if need < -CERT_TOL:
                return None
            continue
        if br > 0:
            hi = min(hi, need / br)
        else:
            lo = max(lo, need / br)
    if lo > hi:
        return None
    return lo, hi


def _certified(rows, rhs, pdot, margin) -> bool:
    if rows.shape[0] == 0:
        return True
    return bool(np.max(rows @ pdot - rhs) <= -margin + CERT_TOL)


def _combo(rows, rhs, family, margin, bound, base):
    """Smallest change ``delta`` to ``base`` meeting every row, or None."""
    a = rows @ family.basis
    c = rhs - margin - rows @ family.velocity(base)
    kappa = family.kappa
    lo, hi = -bound - base, bound - base
    # L1-minimal feasible change first (delta = dp - dn), then polish towards min ||delta||^2
    lp_bounds = [(0.0, max(0.0, h)) for h in hi] + [(0.0, max(0.0, -l)) for l in lo]
    for slack in (1e-9, 0.0):
        res = linprog(
            np.ones(2 * kappa),
            A_ub=np.hstack([a, -a]),
            b_ub=c - slack,
            bounds=lp_bounds,
            method="highs",
        )
        if res.status == 0:
            delta = res.x[:kappa] - res.x[kappa:]
            if np.all(a @ delta <= c + CERT_TOL):
                break
    else:
        return None

    qp = minimize(
        lambda x: float(x @ x),
        delta,
        jac=lambda x: 2.0 * x,
        method="SLSQP",
        bounds=list(zip(lo, hi)),
        constraints=[{"type": "ineq", "fun": lambda x: c - a @ x, "jac": lambda x: -a}],
        options={"maxiter": 200, "ftol": 1e-14},
    )
    if qp.success and np.all(a @ qp.x <= c + CERT_TOL) and np.all(np.abs(base + qp.x) <= bound):
        delta = qp.x
    return base + delta


def select_weights(family: MotionFamily, active=None, *, rhs=None, cruise=None, base=None,
                   margin: float = 0.0, bound: float = 10.0, combo: bool = True) -> MotionSelection:
    """Pick virtual inputs so every active row satisfies ``row @ pdot <= rhs - margin``.

    ``active`` is an :class:`ActiveSet` or a row matrix; ``rhs`` defaults to 0.
    With no active rows the weights come from ``cruise`` (a vector, or a
    callable receiving the family), defaulting to zero.

    Otherwise single basis vectors are scanned (lowest index first, then the
    smallest change), each adjusted on top of ``base`` (default zero, i.e.
    the particular motion alone).  If no single vector works, the smallest
    change over all weights is sought with a linear/quadratic program.
    """
    n = family.k_bar.shape[0]
    kappa = family.kappa
    rows = _as_rows(active, n)
    rhs = np.zeros(rows.shape[0]) if rhs is None else np.asarray(rhs, dtype=float)

    if rows.shape[0] == 0:
        if callable(cruise):
            cruise = cruise(family)
        w = np.zeros(kappa) if cruise is None else np.asarray(cruise, dtype=float)
        if w.shape != (kappa,):
            raise ValueError(f"cruise weights need length {kappa}, got {w.shape}")
        return MotionSelection(w, family.velocity(w), UNCONSTRAINED)

    if callable(base):
        base = base(family)
    base = np.zeros(kappa) if base is None else np.asarray(base, dtype=float)
    if base.shape != (kappa,):
        raise ValueError(f"base weights need length {kappa}, got {base.shape}")
    start = family.velocity(base)
    if _certified(rows, rhs, start, margin):
        # the base motion already satisfies every row: zero change on vector 1
        return MotionSelection(base.copy(), start, SINGLE_VECTOR if kappa else UNCONSTRAINED,
                               1 if kappa else None)
    if kappa == 0:
        raise NoFeasibleDirection("no free directions and the particular motion violates an active row")

    lhs = rows @ start - rhs
    proj = rows @ family.basis
    for l in range(kappa):
        iv = _scalar_interval(lhs, proj[:, l], margin, -bound - base[l], bound - base[l])
        if iv is None:
            continue
        lo, hi = iv
        w = base.copy()
        w[l] += min(max(0.0, lo), hi)
        pdot = family.velocity(w)
        if _certified(rows, rhs, pdot, margin):
            return MotionSelection(w, pdot, SINGLE_VECTOR, l + 1)

    if combo:
        w = _combo(rows, rhs, family, margin, bound, base)
        if w is not None:
            pdot = family.velocity(w)
            if _certified(rows, rhs, pdot, margin):
                return MotionSelection(w, pdot, COMBO_PROGRAM)
    raise NoFeasibleDirection("no virtual input satisfies the active inequality rows")


def equality_system(kinds: Sequence[VehicleKind], constraints: Sequence, p, t: float):
    """Stacked ``[omega_k; omega_e]`` and ``[t_k; t_e]`` at state ``p``."""
    offs = offsets_for(kinds)
    states = [p[o:o + state_dim(k)] for o, k in zip(offs, kinds)]
    omega_k, t_k = stack_kinematics(kinds, states)
    n = omega_k.shape[1]
    rows, rhs = [omega_k], [t_k]
    for c in constraints:
        if cons.is_equality(c):
            r, b = cons.equality_rows(c, kinds, p, t)
            rows.append(r)
            rhs.append(b)
    return np.vstack(rows).reshape(-1, n), np.concatenate(rhs)


def check(kinds: Sequence[VehicleKind], constraints: Sequence, p, t: float = 0.0,
          opts: Optional[Options] = None, keep=()) -> FeasibilityReport:
    """Decide feasibility of the whole group at ``(p, t)`` and pick a motion."""
    opts = opts or Options()
    p = np.asarray(p, dtype=float)
    diag: dict = {"t": t}
    try:
        omega_e, t_e, active = cons.collect(constraints, kinds, p, t, opts.eps_act, keep)
    except cons.DegenerateGeometry as exc:
        diag["error"] = str(exc)
        return FeasibilityReport(NO_FEASIBLE_DIRECTION, diagnostics=diag)
    offs = offsets_for(kinds)
    omega_k, t_k = stack_kinematics(kinds, [p[o:o + state_dim(k)] for o, k in zip(offs, kinds)])
    n = omega_k.shape[1]
    omega = np.vstack([omega_k, omega_e]).reshape(-1, n)
    rhs = np.concatenate([t_k, t_e])
    diag.update(kinematic_rows=omega_k.shape[0], equality_rows=omega_e.shape[0],
                rank=rank_of(omega, opts.tol) if omega.size else 0,
                rank_augmented=rank_of(np.column_stack([omega, rhs]), opts.tol) if omega.size else 0,
                active=[[r.edge, r.side] for r in active.rows])
    diag["singular"] = diag["rank"] < omega.shape[0]
    try:
        fam = motion_family(omega, rhs, opts.tol)
    except EqualityInconsistent:
        return FeasibilityReport(EQUALITY_INCONSISTENT, active=active, diagnostics=diag)
    diag["kappa"] = fam.kappa
    try:
        sel = select_weights(fam, active, cruise=opts.cruise, base=opts.base, margin=opts.margin,
                             bound=opts.bound, combo=opts.combo)
    except NoFeasibleDirection as exc:
        diag["error"] = str(exc)
        return FeasibilityReport(NO_FEASIBLE_DIRECTION, fam, active=active, diagnostics=diag)
    return FeasibilityReport(FEASIBLE, fam, sel, active, diag)


def topological_order(parent: Mapping[int, Optional[int]], n: int) -> list[int]:
    """Vehicles ordered root first; raises ValueError unless ``parent`` is a rooted tree."""
    roots = [v for v in range(n) if parent.get(v) is None]
    if len(roots) != 1:
        raise ValueError(f"leader-follower tree needs exactly one root, found {roots}")
    children: dict[int, list[int]] = {v: [] for v in range(n)}
    for v in range(n):
        u = parent.get(v)
        if u is not None:
            if not 0 <= u < n or u == v:
                raise ValueError(f"vehicle {v} has invalid parent {u}")
            children[u].append(v)
    order, stack = [], [roots[0]]
    while stack:
        v = stack.pop(0)
        order.append(v)
        stack.extend(sorted(children[v]))
    if len(order) != n:
        raise ValueError("parent map contains a cycle or disconnected vehicles")
    return order


def _edge_constraints(constraints, v, parent_v):
    """Constraints vehicle ``v`` is responsible for: its own speed tracks and
    pairwise constraints on the edge to its parent."""
    out = []
    for k, c in enumerate(constraints):
        if isinstance(c, cons.SINGLE_VEHICLE_TYPES):
            if c.i == v:
                out.append((k, c))
        elif parent_v is not None and {c.i, c.j} == {v, parent_v}:
            out.append((k, c))
    return out


def local_system(kinds, constraints, p, t, v, parent_v, parent_pdot, eps_act, keep=(),
                 with_inequalities=True):
    """Vehicle ``v``'s own block system given its parent's velocity.

    Returns ``(omega, rhs, rows_i, rhs_i, active_rows)`` in ``v``'s local
    coordinates: ``omega @ pdot_v = rhs`` and ``rows_i @ pdot_v <= rhs_i``.
    """
    offs = offsets_for(kinds)
    ov, dv = offs[v], state_dim(kinds[v])
    blk_rows, blk_rhs = [], []
    omega_k, t_k = stack_kinematics([kinds[v]], [p[ov:ov + dv]])
    blk_rows.append(omega_k)
    blk_rhs.append(t_k)
    n = p.shape[0]
    full_parent = np.zeros(n)
    if parent_v is not None and parent_pdot is not None:
        op = offs[parent_v]
        full_parent[op:op + state_dim(kinds[parent_v])] = parent_pdot
    keep = set(keep)
    ineq_rows, ineq_rhs, act = [], [], []
    for k, c in _edge_constraints(constraints, v, parent_v):
        if cons.is_equality(c):
            r, b = cons.equality_rows(c, kinds, p, t)
            blk_rows.append(r[:, ov:ov + dv])
            blk_rhs.append(b - r @ full_parent)
        elif with_inequalities:
            for ar in cons.active_rows(c, kinds, p, t, eps_act, edge=k,
                                       keep=[s for (e, s) in keep if e == k]):
                ineq_rows.append(ar.row[ov:ov + dv])
                ineq_rhs.append(-float(ar.row @ full_parent))
                act.append(ar)
    omega = np.vstack(blk_rows)
    rhs = np.concatenate(blk_rhs)
    ineq = np.vstack(ineq_rows) if ineq_rows else np.zeros((0, dv))
    return omega, rhs, ineq, np.asarray(ineq_rhs), cons.ActiveSet(tuple(act), t)


def check_leader_follower(parent: Mapping[int, Optional[int]], kinds: Sequence[VehicleKind],
                          constraints: Sequence, p, t: float = 0.0,
                          opts: Optional[Options] = None, root_pdot=None,
                          cruise: Optional[Mapping[int, Sequence[float]]] = None,
                          base: Optional[Mapping[int, Sequence[float]]] = None,
                          keep=()) -> list[tuple[int, FeasibilityReport]]:
    """Per-vehicle feasibility in root-to-leaf order.

    Each follower only sees its own kinematics and the constraints on the
    edge to its parent, with the parent's velocity already fixed.
    """
    opts = opts or Options()
    p = np.asarray(p, dtype=float)
    order = topological_order(parent, len(kinds))
    cruise = cruise or {}
    base = base or {}
    chosen: dict[int, Optional[np.ndarray]] = {}
    out = []
    for v in order:
        u = parent.get(v)
        diag: dict = {"vehicle": v, "parent": u, "t": t}
        if v == order[0] and root_pdot is not None:
            pd = np.asarray(root_pdot, dtype=float)
            chosen[v] = pd
            fam = MotionFamily(pd, np.zeros((pd.shape[0], 0)), pd.shape[0], pd.shape[0])
            out.append((v, FeasibilityReport(FEASIBLE, fam, MotionSelection(np.zeros(0), pd, UNCONSTRAINED),
                                             diagnostics={**diag, "prescribed": True})))
            continue
        parent_pdot = chosen.get(u) if u is not None else None
        if u is not None and parent_pdot is None:
            diag["parent_velocity"] = "unavailable; assumed zero"
            parent_pdot = np.zeros(state_dim(kinds[u]))
        try:
            omega, rhs, ineq, ineq_rhs, active = local_system(
                kinds, constraints, p, t, v, u, parent_pdot, opts.eps_act, keep)
        except cons.DegenerateGeometry as exc:
            diag["error"] = str(exc)
            chosen[v] = None
            out.append((v, FeasibilityReport(NO_FEASIBLE_DIRECTION, diagnostics=diag)))
            continue
        diag.update(rank=rank_of(omega, opts.tol), rows=omega.shape[0],
                    active=[[r.edge, r.side] for r in active.rows])
        diag["singular"] = diag["rank"] < omega.shape[0]
        try:
            fam = motion_family(omega, rhs, opts.tol)
        except EqualityInconsistent:
            chosen[v] = None
            out.append((v, FeasibilityReport(EQUALITY_INCONSISTENT, active=active, diagnostics=diag)))
            continue
        diag["kappa"] = fam.kappa
        try:
            sel = select_weights(fam, ineq, rhs=ineq_rhs, cruise=cruise.get(v), base=base.get(v),
                                 margin=opts.margin,
                                 bound=opts.bound, combo=opts.combo)
        except NoFeasibleDirection as exc:
            diag["error"] = str(exc)
            chosen[v] = fam.k_bar
            out.append((v, FeasibilityReport(NO_FEASIBLE_DIRECTION, fam, active=active, diagnostics=diag)))
            continue
        chosen[v] = sel.pdot
        out.append((v, FeasibilityReport(FEASIBLE, fam, sel, active, diag)))
    return out
