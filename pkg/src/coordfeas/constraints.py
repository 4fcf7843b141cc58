"""Pairwise coordination constraints.

Every constraint is written in residual form: equalities as ``g == 0`` and
inequalities as ``g <= 0``.  Rows returned by :func:`equality_rows` and
:func:`active_rows` are gradients of those residuals in composite
coordinates, so a composite velocity ``pdot`` changes ``g`` at the rate
``row @ pdot``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .vehicles import VehicleKind, control_covectors, offsets_for, state_dim

EPS_ACT = 1e-6
EPS_GEO = 1e-9


class DegenerateGeometry(ValueError):
    """Visibility evaluated with the two vehicles (almost) on top of each other."""


class WrongVariant(TypeError):
    pass


@dataclass(frozen=True)
class DistanceEq:
    i: int
    j: int
    d: float
    name = "distance_eq"


@dataclass(frozen=True)
class DistanceBand:
    i: int
    j: int
    d_minus: float
    d_plus: float
    name = "distance_band"


@dataclass(frozen=True)
class HeadingEq:
    i: int
    j: int
    delta: float
    name = "heading_eq"


@dataclass(frozen=True)
class HeadingBand:
    i: int
    j: int
    delta_minus: float
    delta_plus: float
    name = "heading_band"


@dataclass(frozen=True)
class Visibility:
    """Vehicle ``j`` keeps vehicle ``i`` inside a cone of half-angle ``delta_theta``."""

    i: int
    j: int
    delta_theta: float
    name = "visibility"


@dataclass(frozen=True)
class SpeedTrack:
    """Pin control channels of vehicle ``i`` to time references.

    ``refs[k]`` drives channel ``channels[k]`` (0-based control index).
    """

    i: int
    refs: tuple[Callable[[float], float], ...]
    channels: Optional[tuple[int, ...]] = None
    name = "speed_track"

    def channel_list(self) -> tuple[int, ...]:
        return self.channels if self.channels is not None else tuple(range(len(self.refs)))


@dataclass(frozen=True)
class RateEq:
    """Pin the rate of one state coordinate of vehicle ``i``: ``d(coord)/dt = ref(t)``."""

    i: int
    coord: int
    ref: Callable[[float], float]
    name = "rate_eq"


EdgeConstraint = Union[DistanceEq, DistanceBand, HeadingEq, HeadingBand, Visibility, SpeedTrack, RateEq]
SINGLE_VEHICLE_TYPES = (SpeedTrack, RateEq)
EQUALITY_TYPES = (DistanceEq, HeadingEq, SpeedTrack, RateEq)
INEQUALITY_TYPES = (DistanceBand, HeadingBand, Visibility)


def is_equality(c) -> bool:
    return isinstance(c, EQUALITY_TYPES)


def sides(c) -> tuple[str, ...]:
    """Residual labels in reporting order."""
    if isinstance(c, (DistanceBand, HeadingBand)):
        return ("upper", "lower")
    if isinstance(c, SpeedTrack):
        return tuple(f"ch{k + 1}" for k in c.channel_list())
    return ("single",)


@dataclass(frozen=True)
class ActiveRow:
    edge: int
    side: str
    row: np.ndarray
    residual: float


@dataclass(frozen=True)
class ActiveSet:
    rows: tuple[ActiveRow, ...]
    t: float

    def keys(self) -> tuple[tuple[int, str], ...]:
        return tuple((r.edge, r.side) for r in self.rows)

    def matrix(self, n: int) -> np.ndarray:
        if not self.rows:
            return np.zeros((0, n))
        return np.vstack([r.row for r in self.rows])

    def __len__(self):
        return len(self.rows)


def wrap_angle(a: float) -> float:
    """Reduce into (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


def validate(c, kinds: Sequence[VehicleKind]) -> list[str]:
    """Parameter and index problems for one constraint, empty when fine."""
    n = len(kinds)
    errs = []
    idx = [c.i] if isinstance(c, SINGLE_VEHICLE_TYPES) else [c.i, c.j]
    for v in idx:
        if not 0 <= v < n:
            errs.append(f"vehicle index {v} out of range 0..{n - 1}")
    if len(idx) == 2 and idx[0] == idx[1]:
        errs.append("constraint needs two distinct vehicles")
    if isinstance(c, DistanceEq) and not c.d > 0:
        errs.append("distance must be positive")
    if isinstance(c, DistanceBand) and not 0 < c.d_minus < c.d_plus:
        errs.append("distance band needs 0 < d_minus < d_plus")
    if isinstance(c, HeadingBand) and not c.delta_minus < c.delta_plus:
        errs.append("heading band needs delta_minus < delta_plus")
    if isinstance(c, Visibility) and not 0 < c.delta_theta < math.pi / 2:
        errs.append("visibility half-angle must lie in (0, pi/2)")
    if isinstance(c, RateEq) and not errs and not 0 <= c.coord < state_dim(kinds[c.i]):
        errs.append(f"rate constraint coordinate {c.coord} outside the vehicle state")
    if isinstance(c, SpeedTrack) and not errs:
        m = len(control_covectors(kinds[c.i], np.zeros(state_dim(kinds[c.i]))))
        chans = c.channel_list()
        if len(chans) != len(c.refs):
            errs.append("speed track needs one reference per channel")
        if any(not 0 <= k < m for k in chans) or len(set(chans)) != len(chans):
            errs.append(f"speed track channels must be distinct and within 0..{m - 1}")
    return errs


def _xy(p, off):
    return p[off], p[off + 1]


def _visibility_parts(c: Visibility, p, offs):
    oi, oj = offs[c.i], offs[c.j]
    ax = p[oi] - p[oj]
    ay = p[oi + 1] - p[oj + 1]
    na = math.hypot(ax, ay)
    if na <= EPS_GEO:
        raise DegenerateGeometry(f"vehicles {c.i} and {c.j} coincide; visibility undefined")
    th = p[oj + 2]
    return ax, ay, na, math.cos(th), math.sin(th)


def residuals(c, kinds: Sequence[VehicleKind], p, t: float = 0.0, pdot=None) -> list[tuple[str, float]]:
    """``(side, g)`` pairs for constraint ``c`` at composite state ``p``.

    Speed-track and rate residuals need the composite velocity ``pdot``; without it
    they are reported as 0 (the rows pin them exactly when solved).
    """
    p = np.asarray(p, dtype=float)
    offs = offsets_for(kinds)
    if isinstance(c, (DistanceEq, DistanceBand)):
        xi, yi = _xy(p, offs[c.i])
        xj, yj = _xy(p, offs[c.j])
        half_sq = 0.5 * ((xi - xj) ** 2 + (yi - yj) ** 2)
        if isinstance(c, DistanceEq):
            return [("single", half_sq - 0.5 * c.d ** 2)]
        return [("upper", half_sq - 0.5 * c.d_plus ** 2), ("lower", 0.5 * c.d_minus ** 2 - half_sq)]
    if isinstance(c, (HeadingEq, HeadingBand)):
        diff = p[offs[c.i] + 2] - p[offs[c.j] + 2]
        if isinstance(c, HeadingEq):
            return [("single", wrap_angle(diff - c.delta))]
        w = wrap_angle(diff)
        return [("upper", w - c.delta_plus), ("lower", c.delta_minus - w)]
    if isinstance(c, Visibility):
        ax, ay, na, cj, sj = _visibility_parts(c, p, offs)
        return [("single", math.cos(c.delta_theta) * na - (ax * cj + ay * sj))]
    if isinstance(c, SINGLE_VEHICLE_TYPES):
        if pdot is None:
            return [(s, 0.0) for s in sides(c)]
        rows, rhs = equality_rows(c, kinds, p, t)
        vals = rows @ np.asarray(pdot, dtype=float) - rhs
        return list(zip(sides(c), (float(v) for v in vals)))
    raise WrongVariant(f"unknown constraint {c!r}")


def bearing_offset(kinds: Sequence[VehicleKind], p, i: int, j: int) -> float:
    """Angle from vehicle j's heading to the bearing of vehicle i, in (-pi, pi].

    Diagnostic only; the inequality form used for motion generation is
    :class:`Visibility`.
    """
    offs = offsets_for(kinds)
    xi, yi = _xy(p, offs[i])
    xj, yj = _xy(p, offs[j])
    return wrap_angle(math.atan2(yi - yj, xi - xj) - p[offs[j] + 2])


def _gradient(c, kinds, p, offs, n) -> np.ndarray:
    """Gradient of the first (``upper``/``single``) residual of a pairwise constraint."""
    row = np.zeros(n)
    oi, oj = offs[c.i], offs[c.j]
    if isinstance(c, (DistanceEq, DistanceBand)):
        ax = p[oi] - p[oj]
        ay = p[oi + 1] - p[oj + 1]
        row[oi], row[oi + 1] = ax, ay
        row[oj], row[oj + 1] = -ax, -ay
    elif isinstance(c, (HeadingEq, HeadingBand)):
        row[oi + 2] = 1.0
        row[oj + 2] = -1.0
    elif isinstance(c, Visibility):
        ax, ay, na, cj, sj = _visibility_parts(c, p, offs)
        k = math.cos(c.delta_theta) / na
        gx, gy = k * ax - cj, k * ay - sj
        row[oi], row[oi + 1] = gx, gy
        row[oj], row[oj + 1] = -gx, -gy
        # d/dtheta_j of -<a, b_j> is -<a, c_j>
        row[oj + 2] = -(-ax * sj + ay * cj)
    else:
        raise WrongVariant(f"no pairwise gradient for {c!r}")
    return row


def equality_rows(c, kinds: Sequence[VehicleKind], p, t: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Rows and right-hand side of the velocity-level equality ``rows @ pdot == rhs``."""
    if not is_equality(c):
        raise WrongVariant(f"{type(c).__name__} is not an equality constraint")
    p = np.asarray(p, dtype=float)
    offs = offsets_for(kinds)
    n = sum(state_dim(k) for k in kinds)
    if isinstance(c, SpeedTrack):
        oi = offs[c.i]
        kind = kinds[c.i]
        cov = control_covectors(kind, p[oi:oi + state_dim(kind)])
        chans = c.channel_list()
        rows = np.zeros((len(chans), n))
        rows[:, oi:oi + state_dim(kind)] = cov[list(chans)]
        rhs = np.array([float(r(t)) for r in c.refs])
        return rows, rhs
    if isinstance(c, RateEq):
        row = np.zeros((1, n))
        row[0, offs[c.i] + c.coord] = 1.0
        return row, np.array([float(c.ref(t))])
    return _gradient(c, kinds, p, offs, n).reshape(1, -1), np.zeros(1)


def active_rows(c, kinds: Sequence[VehicleKind], p, t: float = 0.0, eps_act: float = EPS_ACT,
                edge: int = 0, keep: Iterable[str] = ()) -> list[ActiveRow]:
    """Active sides of an inequality constraint.

    A side activates once ``g >= -eps_act`` (violated sides count as active).
    Sides listed in ``keep`` were active before and stay active until
    ``g < -2 * eps_act``.
    """
    if is_equality(c):
        raise WrongVariant(f"{type(c).__name__} is not an inequality constraint")
    p = np.asarray(p, dtype=float)
    offs = offsets_for(kinds)
    n = p.shape[0]
    keep = set(keep)
    out = []
    grad = None
    for side, g in residuals(c, kinds, p, t):
        floor = -2.0 * eps_act if side in keep else -eps_act
        if g < floor:
            continue
        if grad is None:
            grad = _gradient(c, kinds, p, offs, n)
        row = -grad if side == "lower" else grad.copy()
        out.append(ActiveRow(edge, side, row, g))
    return out


def collect(constraints: Sequence, kinds: Sequence[VehicleKind], p, t: float = 0.0,
            eps_act: float = EPS_ACT, keep: Iterable[tuple[int, str]] = ()):
    """Stack all equality rows and all active inequality rows.

    Returns ``(omega_e, t_e, active)`` in declaration order, upper side first.
    """
    p = np.asarray(p, dtype=float)
    n = p.shape[0]
    keep = set(keep)
    eq_rows, eq_rhs, act = [], [], []
    for k, c in enumerate(constraints):
        if is_equality(c):
            r, b = equality_rows(c, kinds, p, t)
            eq_rows.append(r)
            eq_rhs.append(b)
        else:
            act.extend(active_rows(c, kinds, p, t, eps_act, edge=k,
                                   keep=[s for (e, s) in keep if e == k]))
    omega_e = np.vstack(eq_rows) if eq_rows else np.zeros((0, n))
    t_e = np.concatenate(eq_rhs) if eq_rhs else np.zeros(0)
    return omega_e, t_e, ActiveSet(tuple(act), t)
