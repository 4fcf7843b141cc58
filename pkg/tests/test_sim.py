import math

import numpy as np
import pytest

from coordfeas import constraints as cons
from coordfeas import feasibility as feas
from coordfeas import sim
from coordfeas.scenarios import car_and_unicycle, pinned_constant_speed, three_unicycles
from coordfeas.vehicles import ConstantSpeed, Unicycle

U2 = [Unicycle(), Unicycle()]


def test_validate_examples():
    assert sim.validate(three_unicycles()) == []
    bad = sim.Scenario(U2, [[3, 0, 0], [0, 0, 0]], [cons.DistanceEq(0, 1, 1.0)])
    assert any("equality not met at t=0" in e for e in sim.validate(bad))
    assert any("step" in e for e in sim.validate(three_unicycles(step=0.0)))


def test_validate_catches_violated_inequality_and_bad_settings():
    s = sim.Scenario(U2, [[3, 0, 0], [0, 0, 0]], [cons.DistanceBand(0, 1, 1.0, 2.0)])
    assert any("violated" in e for e in sim.validate(s))
    s = three_unicycles(integrator="midpoint")
    assert any("integrator" in e for e in sim.validate(s))
    s = sim.Scenario(U2, [[1, 0, 0]], [])
    assert sim.validate(s)
    with pytest.raises(ValueError):
        sim.run(s)


def test_euler_step_moves_forward():
    s = sim.Scenario([Unicycle()], [[0, 0, 0]], [], duration=0.1, step=0.1, integrator="euler",
                     cruise=[1.0, 0.0])
    lg = sim.run(s)
    assert lg.ok and len(lg.times) == 2
    np.testing.assert_allclose(lg.states[-1], [0.1, 0, 0], atol=1e-15)


def test_zero_duration_single_record():
    lg = sim.run(three_unicycles(duration=0.0))
    assert lg.ok and lg.times == [0.0] and len(lg.states) == 1


def test_distance_drift_per_step_rk4(rng):
    for _ in range(3):
        w = rng.uniform(-1, 1, size=3)
        s = sim.Scenario(U2, [[1, 0, 0.3], [0, 0, -0.4]], [cons.DistanceEq(0, 1, 1.0)], duration=0.05,
                         step=1e-3, cruise=list(w), policy="cruise")
        lg = sim.run(s)
        d = [math.hypot(p[0] - p[3], p[1] - p[4]) for p in lg.states]
        assert max(abs(b - a) for a, b in zip(d, d[1:])) <= 1e-8


def test_projection_examples():
    s = sim.Scenario(U2, [[1, 0, 0], [0, 0, 0]], [cons.DistanceEq(0, 1, 1.0)])
    p = np.array([1.0, 0, 0, 0, 0, 0])
    np.testing.assert_array_equal(sim.project_equalities(s, p), p)
    # half-squared-distance residual 1e-6 means |a| = sqrt(1 + 2e-6)
    q = np.array([math.sqrt(1 + 2e-6), 0, 0, 0, 0, 0])
    r = sim.project_equalities(s, q)
    assert abs(cons.residuals(s.constraints[0], U2, r)[0][1]) <= 1e-12
    assert np.linalg.norm(r - q) <= 2e-6


def test_projection_diverges_on_contradiction():
    s = sim.Scenario(U2, [[1, 0, 0], [0, 0, 0]],
                     [cons.DistanceEq(0, 1, 1.0), cons.DistanceEq(0, 1, 2.0)])
    with pytest.raises(sim.ProjectionDiverged):
        sim.project_equalities(s, np.array([1.5, 0, 0, 0, 0, 0]))


def test_activation_event_and_strategy_change():
    lg = sim.run(three_unicycles(duration=1.0))
    assert lg.ok
    first = [e for e in lg.events if e.kind == "activate"]
    assert first and first[0].side in ("upper", "lower", "single")
    assert len(set(lg.strategies)) > 1


def test_leader_controls_track_references():
    lg = sim.run(three_unicycles(duration=0.5))
    for t, u in zip(lg.times, lg.controls):
        assert abs(u[0][0] - 2 * math.sin(t)) <= 1e-9
        assert abs(u[0][1] - 2 * math.cos(2 * t)) <= 1e-9


def test_short_car_run_respects_bounds():
    lg = sim.run(car_and_unicycle(duration=1.0))
    assert lg.ok
    for p in lg.states:
        d = math.hypot(p[0] - p[4], p[1] - p[5])
        assert 1 - 1e-3 <= d <= 1.1 + 1e-3


def test_pinned_run_stops_immediately():
    lg = sim.run(pinned_constant_speed())
    assert lg.status == feas.EQUALITY_INCONSISTENT and lg.times == []


def test_tree_mode_run():
    s = three_unicycles(duration=0.5, tree={0: None, 1: 0, 2: 0})
    lg = sim.run(s)
    assert lg.ok and len(lg.times) == 501
    for p in lg.states:
        for o in (3, 6):
            assert 1 - 1e-3 <= math.hypot(p[o] - p[0], p[o + 1] - p[1]) <= 2 + 1e-3


def test_runs_are_repeatable():
    a = sim.run(three_unicycles(duration=0.3))
    b = sim.run(three_unicycles(duration=0.3))
    assert all(np.array_equal(x, y) for x, y in zip(a.states, b.states))
    assert [e.t for e in a.events] == [e.t for e in b.events]


def test_constant_speed_cannot_stop():
    s = sim.Scenario([ConstantSpeed(1.0)], [[0, 0, 0]], [], duration=0.01, step=1e-3)
    lg = sim.run(s)
    assert lg.ok
    assert lg.states[-1][0] == pytest.approx(0.01, rel=1e-9)
