import math

import numpy as np
import pytest

from coordfeas.vehicles import (
    CarLike, ConstantSpeed, NotInDistribution, SingularSteering, Unicycle, control_covectors,
    control_dim, controls_from_velocity, fields, kinematic_block, stack_kinematics, state_dim,
)

from conftest import KINDS, random_vehicle_state


def test_state_dims():
    assert state_dim(Unicycle()) == 3
    assert state_dim(CarLike(0.5)) == 4
    assert state_dim(ConstantSpeed(2)) == 3
    assert [control_dim(k) for k in KINDS] == [2, 1, 2]


def test_invalid_parameters():
    with pytest.raises(ValueError):
        ConstantSpeed(0)
    with pytest.raises(ValueError):
        CarLike(-1)


def test_field_examples():
    f0, fs = fields(ConstantSpeed(2), [0, 0, 0])
    np.testing.assert_allclose(f0, [2, 0, 0])
    assert len(fs) == 1
    np.testing.assert_allclose(fs[0], [0, 0, 1])
    _, fs = fields(Unicycle(), [0, 0, math.pi / 2])
    np.testing.assert_allclose(fs[0], [0, 1, 0], atol=1e-16)
    np.testing.assert_allclose(fs[1], [0, 0, 1])
    _, fs = fields(CarLike(1), [0, 0, 0, math.pi / 4])
    np.testing.assert_allclose(fs[0], [1, 0, 1, 0], atol=1e-15)


def test_steering_singularity():
    with pytest.raises(SingularSteering):
        fields(CarLike(1), [0, 0, 0, math.pi / 2])


def test_kinematic_block_examples():
    b = kinematic_block(Unicycle(), [0, 0, 0])
    np.testing.assert_allclose(b.omega, [[0, -1, 0]])
    np.testing.assert_allclose(b.t, [0])
    b = kinematic_block(ConstantSpeed(2), [0, 0, math.pi / 2])
    np.testing.assert_allclose(b.omega, [[1, 0, 0], [0, 1, 0]], atol=1e-16)
    np.testing.assert_allclose(b.t, [0, 2])
    b = kinematic_block(CarLike(1), [0, 0, 0, 0])
    np.testing.assert_allclose(b.omega, [[0, -1, -1, 0], [0, -1, 0, 0]])
    np.testing.assert_allclose(b.t, [0, 0])


def test_wrong_state_length():
    with pytest.raises(ValueError):
        kinematic_block(CarLike(1), [0, 0, 0])


@pytest.mark.parametrize("kind", KINDS, ids=lambda k: k.kind)
def test_annihilation_random(kind, rng):
    for _ in range(200):
        s = random_vehicle_state(kind, rng)
        f0, fs = fields(kind, s)
        b = kinematic_block(kind, s)
        for f in fs:
            assert np.max(np.abs(b.omega @ f)) <= 1e-12
        assert np.max(np.abs(b.omega @ f0 - b.t)) <= 1e-12


@pytest.mark.parametrize("kind", KINDS, ids=lambda k: k.kind)
def test_block_rank_is_state_minus_controls(kind, rng):
    s = random_vehicle_state(kind, rng)
    b = kinematic_block(kind, s)
    assert np.linalg.matrix_rank(b.omega) == state_dim(kind) - control_dim(kind)


def test_controls_examples():
    np.testing.assert_allclose(controls_from_velocity(Unicycle(), [0, 0, 0], [2, 0, 0.5]), [2, 0.5])
    np.testing.assert_allclose(controls_from_velocity(ConstantSpeed(1), [0, 0, 0], [1, 0, -3]), [-3])
    with pytest.raises(NotInDistribution):
        controls_from_velocity(Unicycle(), [0, 0, 0], [0, 1, 0])


@pytest.mark.parametrize("kind", KINDS, ids=lambda k: k.kind)
def test_controls_round_trip(kind, rng):
    for _ in range(100):
        s = random_vehicle_state(kind, rng)
        u = rng.normal(size=control_dim(kind))
        f0, fs = fields(kind, s)
        pdot = f0 + sum(ui * f for ui, f in zip(u, fs))
        np.testing.assert_allclose(controls_from_velocity(kind, s, pdot), u, atol=1e-10)
        # the covectors read the same controls off the velocity
        np.testing.assert_allclose(control_covectors(kind, s) @ pdot,
                                   u if kind.kind != "constant_speed" else u, atol=1e-10)


def test_stack_examples():
    omega, t = stack_kinematics([Unicycle(), Unicycle()], [[0, 0, 0], [1, 1, 0]])
    np.testing.assert_allclose(omega, [[0, -1, 0, 0, 0, 0], [0, 0, 0, 0, -1, 0]])
    np.testing.assert_allclose(t, [0, 0])
    omega, t = stack_kinematics([Unicycle(), ConstantSpeed(2)], [[0, 0, 0], [1, 1, 0]])
    assert omega.shape == (3, 6)
    np.testing.assert_allclose(t, [0, 0, 2])
    omega, _ = stack_kinematics([Unicycle(), CarLike(0.5)], [[0, 0, 0], [1, 1, 0, 0.2]])
    assert omega.shape == (3, 7)
