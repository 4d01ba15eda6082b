import math

import numpy as np
import pytest

from boqc.angles import (
    DyadicAngle,
    PrecisionMismatchError,
    add,
    all_angles,
    correct_angle,
    to_radians,
)


def test_add_examples():
    assert add(DyadicAngle(3, 4), DyadicAngle(5, 4)) == DyadicAngle(8, 4)
    assert add(DyadicAngle(0, 4), DyadicAngle(7, 4)) == DyadicAngle(7, 4)
    assert add(DyadicAngle(12, 4), DyadicAngle(12, 4)) == DyadicAngle(8, 4)


def test_add_rejects_mixed_precision():
    with pytest.raises(PrecisionMismatchError):
        add(DyadicAngle(1, 3), DyadicAngle(1, 4))
    with pytest.raises(PrecisionMismatchError):
        DyadicAngle(1, 3) - DyadicAngle(1, 4)


def test_correct_angle_examples():
    assert correct_angle(DyadicAngle(3, 4), 1, 0) == DyadicAngle(13, 4)
    assert correct_angle(DyadicAngle(3, 4), 0, 1) == DyadicAngle(11, 4)
    assert correct_angle(DyadicAngle(5, 4), 0, 0) == DyadicAngle(5, 4)


def test_to_radians_examples():
    assert to_radians(DyadicAngle(0, 4)) == 0.0
    assert to_radians(DyadicAngle(8, 4)) == pytest.approx(math.pi)
    assert to_radians(DyadicAngle(4, 4)) == pytest.approx(math.pi / 2)


@pytest.mark.parametrize("b", [1, 2, 3, 4, 6])
def test_ring_laws(b):
    angles = list(all_angles(b))
    zero = DyadicAngle.zero(b)
    for a in angles:
        assert a + zero == a
        assert -(-a) == a
        assert a + (-a) == zero
    rng = np.random.default_rng(b)
    for _ in range(60):
        x, y, z = (angles[int(rng.integers(len(angles)))] for _ in range(3))
        assert (x + y) + z == x + (y + z)
        assert x + y == y + x


@pytest.mark.parametrize("b", [1, 2, 4, 6])
def test_add_of_uniform_is_uniform(b):
    # exhaustive: for fixed c, k -> k+c permutes the index set
    for c in range(1 << b):
        seen = {(DyadicAngle(k, b) + DyadicAngle(c, b)).k for k in range(1 << b)}
        assert seen == set(range(1 << b))


@pytest.mark.parametrize("b", [1, 2, 3, 4, 5, 6])
def test_phase_sum_vanishes(b):
    # the dephasing property the one-time pad relies on
    total = sum(np.exp(1j * to_radians(a)) for a in all_angles(b))
    assert abs(total) < 1e-12


def test_correct_angle_involution():
    for b in (2, 4):
        for k in range(1 << b):
            theta = DyadicAngle(k, b)
            for sx in (0, 1):
                assert correct_angle(correct_angle(theta, sx, 0), sx, 0) == theta


def test_absorption_order_is_immaterial():
    # (-1)^sx theta + sz*pi is the same whether X or Z is absorbed first
    for k in range(16):
        theta = DyadicAngle(k, 4)
        via_x_first = correct_angle(correct_angle(theta, 1, 0), 0, 1)
        via_z_first = correct_angle(correct_angle(theta, 0, 1), 1, 0)
        assert via_x_first == via_z_first == correct_angle(theta, 1, 1)


def test_json_roundtrip():
    a = DyadicAngle(5, 3)
    assert DyadicAngle.from_json(a.to_json()) == a
    assert a.to_json() == {"k": 5, "b": 3}


def test_normalization_mod_2pi():
    assert DyadicAngle(17, 4).k == 1
    assert DyadicAngle(-1, 4).k == 15
