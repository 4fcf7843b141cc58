"""Kinematic vehicle models and their affine codistribution blocks.

Three planar models are supported:

* ``Unicycle``      state (x, y, theta), controls (forward speed v, turn rate u)
* ``ConstantSpeed`` state (x, y, theta), drift at fixed speed, control u
* ``CarLike``       state (x, y, theta, phi), controls (speed u1, steering rate u2)

For each model the admissible velocities at a state ``s`` are exactly the
``pdot`` with ``omega @ pdot == t`` where ``(omega, t)`` is the model's
kinematic block.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

STEER_LIMIT = math.pi / 2 - 1e-6


class SingularSteering(ValueError):
    """Car steering angle at or beyond +-pi/2 where tan(phi) blows up."""


class NotInDistribution(ValueError):
    """Velocity cannot be produced by any control input."""


@dataclass(frozen=True)
class Unicycle:
    kind = "unicycle"


@dataclass(frozen=True)
class ConstantSpeed:
    v: float
    kind = "constant_speed"

    def __post_init__(self):
        if self.v == 0 or not math.isfinite(self.v):
            raise ValueError("constant-speed vehicle needs a nonzero finite speed")


@dataclass(frozen=True)
class CarLike:
    l: float
    kind = "car"

    def __post_init__(self):
        if not self.l > 0:
            raise ValueError("car wheelbase must be positive")


VehicleKind = Union[Unicycle, ConstantSpeed, CarLike]


@dataclass(frozen=True)
class KinematicBlock:
    omega: np.ndarray
    t: np.ndarray


def state_dim(kind: VehicleKind) -> int:
    return 4 if isinstance(kind, CarLike) else 3


def control_dim(kind: VehicleKind) -> int:
    return 1 if isinstance(kind, ConstantSpeed) else 2


def _check_state(kind: VehicleKind, s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.shape != (state_dim(kind),):
        raise ValueError(f"{kind.kind} state must have length {state_dim(kind)}, got {s.shape}")
    return s


def fields(kind: VehicleKind, s) -> tuple[np.ndarray, list[np.ndarray]]:
    """Drift field ``f0`` and the list of control fields at state ``s``."""
    s = _check_state(kind, s)
    th = s[2]
    c, sn = math.cos(th), math.sin(th)
    if isinstance(kind, Unicycle):
        return np.zeros(3), [np.array([c, sn, 0.0]), np.array([0.0, 0.0, 1.0])]
    if isinstance(kind, ConstantSpeed):
        return np.array([kind.v * c, kind.v * sn, 0.0]), [np.array([0.0, 0.0, 1.0])]
    if isinstance(kind, CarLike):
        phi = s[3]
        if abs(phi) >= STEER_LIMIT:
            raise SingularSteering(f"steering angle {phi} too close to +-pi/2")
        return np.zeros(4), [
            np.array([c, sn, math.tan(phi) / kind.l, 0.0]),
            np.array([0.0, 0.0, 0.0, 1.0]),
        ]
    raise TypeError(f"unknown vehicle kind {kind!r}")


def kinematic_block(kind: VehicleKind, s) -> KinematicBlock:
    """Rows annihilating every control field, with ``omega @ f0 == t``."""
    s = _check_state(kind, s)
    th = s[2]
    c, sn = math.cos(th), math.sin(th)
    if isinstance(kind, Unicycle):
        return KinematicBlock(np.array([[sn, -c, 0.0]]), np.zeros(1))
    if isinstance(kind, ConstantSpeed):
        return KinematicBlock(np.array([[sn, -c, 0.0], [c, sn, 0.0]]), np.array([0.0, kind.v]))
    if isinstance(kind, CarLike):
        phi = s[3]
        omega = np.array([
            [math.sin(th + phi), -math.cos(th + phi), -kind.l * math.cos(phi), 0.0],
            [sn, -c, 0.0, 0.0],
        ])
        return KinematicBlock(omega, np.zeros(2))
    raise TypeError(f"unknown vehicle kind {kind!r}")


def control_covectors(kind: VehicleKind, s) -> np.ndarray:
    """Rows ``r_k`` with ``r_k @ pdot == u_k`` for any admissible ``pdot``.

    These are the channels a speed-tracking equality pins to a reference.
    """
    s = _check_state(kind, s)
    c, sn = math.cos(s[2]), math.sin(s[2])
    if isinstance(kind, Unicycle):
        return np.array([[c, sn, 0.0], [0.0, 0.0, 1.0]])
    if isinstance(kind, ConstantSpeed):
        return np.array([[0.0, 0.0, 1.0]])
    if isinstance(kind, CarLike):
        return np.array([[c, sn, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]])
    raise TypeError(f"unknown vehicle kind {kind!r}")


def controls_from_velocity(kind: VehicleKind, s, pdot, tol: float = 1e-9) -> np.ndarray:
    """Least-squares control inputs reproducing ``pdot``.

    Raises :class:`NotInDistribution` if the best fit misses by more than ``tol``
    (scaled by ``1 + |pdot|``).
    """
    pdot = np.asarray(pdot, dtype=float)
    f0, fs = fields(kind, s)
    if pdot.shape != f0.shape:
        raise ValueError(f"pdot must have length {f0.shape[0]}")
    g = np.column_stack(fs)
    # control fields are linearly independent for every supported kind
    u = np.linalg.solve(g.T @ g, g.T @ (pdot - f0))
    resid = float(np.max(np.abs(f0 + g @ u - pdot)))
    if resid > tol * (1.0 + float(np.max(np.abs(pdot)))):
        raise NotInDistribution(f"velocity misses the admissible set by {resid:.3e}")
    return u


@dataclass(frozen=True)
class CompositeState:
    """Stacked state of several vehicles with per-vehicle offsets."""

    offsets: tuple[int, ...]
    p: np.ndarray

    @classmethod
    def from_states(cls, kinds: Sequence[VehicleKind], states) -> "CompositeState":
        parts = [_check_state(k, s) for k, s in zip(kinds, states)]
        if len(parts) != len(kinds):
            raise ValueError("kinds and states must align")
        return cls(offsets_for(kinds), np.concatenate(parts) if parts else np.zeros(0))

    def vehicle(self, i: int) -> np.ndarray:
        end = self.offsets[i + 1] if i + 1 < len(self.offsets) else self.p.shape[0]
        return self.p[self.offsets[i]:end]

    def __len__(self):
        return len(self.offsets)


def offsets_for(kinds: Sequence[VehicleKind]) -> tuple[int, ...]:
    return _offsets(tuple(kinds))


@functools.lru_cache(maxsize=64)
def _offsets(kinds: tuple) -> tuple[int, ...]:
    out, k = [], 0
    for kind in kinds:
        out.append(k)
        k += state_dim(kind)
    return tuple(out)


def stack_kinematics(kinds: Sequence[VehicleKind], states) -> tuple[np.ndarray, np.ndarray]:
    """Block-diagonal placement of each vehicle's block in composite coordinates."""
    if len(kinds) != len(states):
        raise ValueError("kinds and states must align")
    blocks = [kinematic_block(k, s) for k, s in zip(kinds, states)]
    n = sum(state_dim(k) for k in kinds)
    rows = sum(b.omega.shape[0] for b in blocks)
    omega = np.zeros((rows, n))
    t = np.zeros(rows)
    r = c = 0
    for b in blocks:
        m, w = b.omega.shape
        omega[r:r + m, c:c + w] = b.omega
        t[r:r + m] = b.t
        r += m
        c += w
    return omega, t
