"""Ready-made scenarios: the three-unicycle leader/follower group, the
car-led pair, and a deliberately infeasible constant-speed case."""
from __future__ import annotations

import math

from . import constraints as cons
from .references import Constant, Cosine, Sinusoid
from .sim import Scenario
from .vehicles import CarLike, ConstantSpeed, Unicycle


def _facing(x, y, tx, ty):
    return math.atan2(ty - y, tx - x)


def three_unicycles(duration: float = 20.0, step: float = 1e-3, **kw) -> Scenario:
    """Leader tracks ``v = 2 sin t``, ``u = 2 cos 2t``; two followers keep it
    within 1..2 m and inside a 0.4 rad visibility cone."""
    f2 = (-1.5, 0.5)
    f3 = (-1.5, -0.5)
    initial = [
        [0.0, 0.0, 0.0],
        [f2[0], f2[1], _facing(*f2, 0.0, 0.0)],
        [f3[0], f3[1], _facing(*f3, 0.0, 0.0)],
    ]
    constraints = [
        cons.SpeedTrack(0, (Sinusoid(2.0, 1.0), Cosine(2.0, 2.0))),
        cons.DistanceBand(0, 1, 1.0, 2.0),
        cons.DistanceBand(0, 2, 1.0, 2.0),
        cons.Visibility(0, 1, 0.4),
        cons.Visibility(0, 2, 0.4),
    ]
    opts = dict(duration=duration, step=step, integrator="rk4", eps_act=1e-6, margin=0.05,
                bound=10.0, policy="hold", projection=True)
    opts.update(kw)
    return Scenario([Unicycle(), Unicycle(), Unicycle()], initial, constraints, **opts)


def car_and_unicycle(duration: float = 20.0, step: float = 1e-3, **kw) -> Scenario:
    """Car (wheelbase 0.5 m) tracks ``u1 = 2 sin t``, ``u2 = 2 cos 2t``; a
    unicycle keeps it within 1..1.1 m and a 0.05 rad cone."""
    initial = [[0.0, 0.0, 0.0, 0.0], [-1.05, 0.0, 0.0]]
    constraints = [
        cons.SpeedTrack(0, (Sinusoid(2.0, 1.0), Cosine(2.0, 2.0))),
        cons.DistanceBand(0, 1, 1.0, 1.1),
        cons.Visibility(0, 1, 0.05),
    ]
    opts = dict(duration=duration, step=step, integrator="rk4", eps_act=1e-6, margin=0.05,
                bound=10.0, policy="hold", projection=True)
    opts.update(kw)
    return Scenario([CarLike(0.5), Unicycle()], initial, constraints, **opts)


def pinned_constant_speed(v: float = 1.0) -> Scenario:
    """A constant-speed vehicle whose x and y rates are both forced to zero.

    The kinematic rows demand forward speed ``v``, so no velocity exists.
    """
    constraints = [cons.RateEq(0, 0, Constant(0.0)), cons.RateEq(0, 1, Constant(0.0))]
    return Scenario([ConstantSpeed(v)], [[0.0, 0.0, 0.0]], constraints, duration=0.0)
