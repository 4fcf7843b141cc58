import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coordfeas import constraints as cons
from coordfeas import feasibility as feas
from coordfeas.references import Constant, Cosine, Sinusoid
from coordfeas.scenarios import pinned_constant_speed, three_unicycles
from coordfeas.vehicles import ConstantSpeed, Unicycle

U2 = [Unicycle(), Unicycle()]
P2 = np.array([1.0, 0.0, 0.3, 0.0, 0.0, -0.2])


def family_for(kinds, constraints, p, t=0.0):
    omega, rhs = feas.equality_system(kinds, constraints, p, t)
    return feas.motion_family(omega, rhs)


def test_two_unicycles_distance_kappa():
    fam = family_for(U2, [cons.DistanceEq(0, 1, 1.0)], P2)
    assert fam.kappa == 3
    assert not fam.k_bar.any()


def test_constant_speed_pair_kappa():
    kinds = [ConstantSpeed(1.0), Unicycle()]
    fam = family_for(kinds, [cons.DistanceEq(0, 1, 1.0)], P2)
    assert fam.kappa == 2
    assert np.linalg.norm(fam.k_bar) > 0.5
    omega, rhs = feas.equality_system(kinds, [cons.DistanceEq(0, 1, 1.0)], P2, 0.0)
    assert np.max(np.abs(omega @ fam.k_bar - rhs)) < 1e-12


def test_pinned_constant_speed_is_inconsistent():
    s = pinned_constant_speed()
    omega, rhs = feas.equality_system(s.kinds, s.constraints, s.initial_state(), 0.0)
    assert omega.shape == (4, 3)
    with pytest.raises(feas.EqualityInconsistent):
        feas.motion_family(omega, rhs)
    rep = feas.check(s.kinds, s.constraints, s.initial_state())
    assert rep.status == feas.EQUALITY_INCONSISTENT
    assert rep.diagnostics["rank_augmented"] > rep.diagnostics["rank"]


def test_empty_active_set_uses_policy():
    fam = family_for(U2, [cons.DistanceEq(0, 1, 1.0)], P2)
    sel = feas.select_weights(fam)
    assert sel.strategy == feas.UNCONSTRAINED and not sel.weights.any()
    sel = feas.select_weights(fam, cruise=[1.0, 2.0, 3.0])
    np.testing.assert_allclose(sel.weights, [1, 2, 3])
    sel = feas.select_weights(fam, cruise=lambda f: np.ones(f.kappa))
    np.testing.assert_allclose(sel.pdot, fam.velocity(np.ones(3)))
    with pytest.raises(ValueError):
        feas.select_weights(fam, cruise=[1.0])


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def test_heading_band_upper_active():
    # family spanned by the turn-only vectors and the joint translation
    ab1, ab2 = 1.0, 1.0
    k1 = [0, 0, 1, 0, 0, 0]
    k2 = [0, 0, 0, 0, 0, 1]
    k3 = [ab2, 0, 0, ab1, 0, 0]
    fam = feas.MotionFamily(np.zeros(6), np.column_stack([_unit(k1), _unit(k2), _unit(k3)]), 3, 3)
    row = np.array([[0, 0, 1, 0, 0, -1]], dtype=float)
    for w1 in (-0.1, -3.0):
        assert (row @ fam.velocity([w1, 0, 0]))[0] < 0
    for w2 in (0.1, 3.0):
        assert (row @ fam.velocity([0, w2, 0]))[0] < 0
    sel = feas.select_weights(fam, row, margin=0.1)
    assert sel.strategy == feas.SINGLE_VECTOR and sel.index == 1
    assert sel.weights[0] < 0
    sel = feas.select_weights(fam, row, margin=0.1, bound=10, base=[5.0, 0.0, 0.0])
    assert (row @ sel.pdot)[0] <= -0.1 + 1e-12


def test_orthogonal_row_has_no_direction():
    fam = feas.MotionFamily(np.zeros(3), np.array([[1.0], [0.0], [0.0]]), 2, 2)
    with pytest.raises(feas.NoFeasibleDirection):
        feas.select_weights(fam, np.array([[0.0, 1.0, 0.0]]), margin=0.1)
    # zero margin: standing still is acceptable
    sel = feas.select_weights(fam, np.array([[0.0, 1.0, 0.0]]))
    assert sel.strategy == feas.SINGLE_VECTOR


def test_combo_program_when_no_single_vector_works():
    # two rows, each needing a different basis vector to decrease
    basis = np.eye(2)
    fam = feas.MotionFamily(np.zeros(2), basis, 0, 0)
    rows = np.array([[1.0, 0.0], [0.0, 1.0]])
    sel = feas.select_weights(fam, rows, margin=0.5)
    assert sel.strategy == feas.COMBO_PROGRAM
    assert np.all(rows @ sel.pdot <= -0.5 + 1e-9)
    np.testing.assert_allclose(sel.weights, [-0.5, -0.5], atol=1e-6)
    with pytest.raises(feas.NoFeasibleDirection):
        feas.select_weights(fam, rows, margin=0.5, combo=False)


def test_scenario_initial_state_is_feasible():
    s = three_unicycles()
    rep = feas.check(s.kinds, s.constraints, s.initial_state(), 0.0, s.options())
    assert rep.feasible
    assert rep.diagnostics["equality_rows"] == 2
    d = rep.to_dict()
    assert d["status"] == "Feasible" and d["family"]["kappa"] == rep.family.kappa


def test_unconstrained_pair_kappa_four():
    rep = feas.check(U2, [], P2)
    assert rep.feasible and rep.family.kappa == 4


def test_leader_at_rest_allows_follower_rest():
    parent = {0: None, 1: 0}
    reps = feas.check_leader_follower(parent, U2, [cons.DistanceEq(0, 1, 1.0)], P2,
                                      root_pdot=np.zeros(3))
    assert [v for v, _ in reps] == [0, 1]
    omega, rhs, *_ = feas.local_system(U2, [cons.DistanceEq(0, 1, 1.0)], P2, 0.0, 1, 0,
                                       np.zeros(3), cons.EPS_ACT)
    # zero follower velocity solves the local system
    assert np.max(np.abs(rhs)) == 0.0
    assert reps[1][1].feasible


def test_chain_order_and_dimensions():
    kinds = [Unicycle()] * 3
    p = np.array([0, 0, 0, -1, 0, 0, -2, 0, 0.1])
    cs = [cons.DistanceEq(0, 1, 1.0), cons.DistanceEq(1, 2, 1.0)]
    reps = feas.check_leader_follower({0: None, 1: 0, 2: 1}, kinds, cs, p)
    assert [v for v, _ in reps] == [0, 1, 2]
    for v, rep in reps[1:]:
        assert rep.diagnostics["rows"] == 2
        assert rep.diagnostics["rank"] == 2
        assert rep.family.kappa == 1


def test_constant_speed_follower_perpendicular_is_singular():
    # follower heading is perpendicular to the leader offset: <a, b_j> = 0
    kinds = [Unicycle(), ConstantSpeed(1.0)]
    p = np.array([1.0, 0.0, 0.0, 0.0, 0.0, math.pi / 2])
    reps = feas.check_leader_follower({0: None, 1: 0}, kinds, [cons.DistanceEq(0, 1, 1.0)], p,
                                      root_pdot=np.zeros(3))
    rep = reps[1][1]
    assert rep.diagnostics["singular"]
    assert rep.diagnostics["rank"] < rep.diagnostics["rows"]


def test_topological_order_errors():
    with pytest.raises(ValueError):
        feas.topological_order({0: None, 1: None}, 2)
    with pytest.raises(ValueError):
        feas.topological_order({0: 1, 1: 0}, 2)


def test_check_is_deterministic():
    s = three_unicycles()
    a = feas.check(s.kinds, s.constraints, s.initial_state(), 0.7, s.options())
    b = feas.check(s.kinds, s.constraints, s.initial_state(), 0.7, s.options())
    assert a.to_dict() == b.to_dict()


EXTRA = [
    cons.DistanceEq(0, 1, 1.0),
    cons.HeadingEq(0, 1, 0.5),
    cons.RateEq(0, 2, Constant(0.0)),
    cons.SpeedTrack(1, (Sinusoid(1.0),), (0,)),
]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(range(len(EXTRA))), unique=True, max_size=4),
       st.floats(-3, 3), st.floats(-3, 3))
def test_adding_equalities_never_grows_the_family(idx, th1, th2):
    p = np.array([1.0, 0.2, th1, -0.3, 0.1, th2])
    chosen = [EXTRA[k] for k in idx]
    prev = family_for(U2, [], p).kappa
    for k in range(1, len(chosen) + 1):
        try:
            kappa = family_for(U2, chosen[:k], p).kappa
        except feas.EqualityInconsistent:
            return
        assert kappa <= prev
        prev = kappa
