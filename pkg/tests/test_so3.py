"""Unit tests for rotation-matrix algebra."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from daecf import so3
from daecf.errors import GimbalLockWarning, SingularInput


def random_rotation(rng):
    """Uniform-ish random rotation from three Euler draws."""
    roll = rng.uniform(-np.pi, np.pi)
    pitch = rng.uniform(-np.pi / 2, np.pi / 2)
    yaw = rng.uniform(-np.pi, np.pi)
    return so3.from_euler(roll, pitch, yaw)


class TestSkew:
    def test_zero_vector(self):
        assert_allclose(so3.skew([0, 0, 0]), np.zeros((3, 3)))

    def test_unit_z(self):
        expected = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 0]], dtype=float)
        assert_allclose(so3.skew([0, 0, 1]), expected)

    def test_123_pattern(self):
        expected = np.array([[0, -3, 2], [3, 0, -1], [-2, 1, 0]], dtype=float)
        assert_allclose(so3.skew([1, 2, 3]), expected)

    def test_antisymmetric_zero_diagonal(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            m = so3.skew(rng.normal(size=3))
            assert_allclose(m.T, -m)
            assert_allclose(np.diag(m), 0.0)

    def test_cross_product_equivalence_bulk(self):
        # skew(w) @ v == w x v over a large random sample
        rng = np.random.default_rng(42)
        for _ in range(1000):
            w = rng.normal(size=3) * 10.0 ** rng.integers(-3, 4)
            v = rng.normal(size=3)
            assert_allclose(so3.skew(w) @ v, np.cross(w, v), atol=1e-12, rtol=1e-12)

    @given(
        st.lists(st.floats(-1e3, 1e3), min_size=6, max_size=6).map(np.asarray)
    )
    def test_cross_product_equivalence_property(self, wv):
        w, v = wv[:3], wv[3:]
        assert_allclose(so3.skew(w) @ v, np.cross(w, v), atol=1e-9)


# Reference projection of the perturbed Rz(30 deg) below, computed
# independently with a 60-digit symmetric eigendecomposition of A^T A.
_PERTURBED_RZ30 = np.array(
    [
        [0.8670254037844386, -0.499, 0.001],
        [0.501, 0.8670254037844386, 0.001],
        [0.001, 0.001, 1.001],
    ]
)
_PERTURBED_RZ30_PROJECVAL = np.array(
    [
        [0.86627492581090291, -0.49956746564728287, 0.00031650918707849765],
        [0.49956753245192341, 0.86627492581090291, -0.00018284203867849601],
        [-0.00018284203867849601, 0.00031650918707849765, 0.99999993319535946],
    ]
)


class TestOrthogonalize:
    def test_identity_fixed_point(self):
        assert_allclose(so3.orthogonalize(np.eye(3)), np.eye(3), atol=1e-15)

    def test_pure_scale_removed(self):
        assert_allclose(so3.orthogonalize(1.001 * np.eye(3)), np.eye(3), atol=1e-12)

    def test_perturbed_rz30_extended_precision_reference(self):
        r = so3.orthogonalize(_PERTURBED_RZ30)
        assert_allclose(r, _PERTURBED_RZ30_PROJECVAL, atol=1e-13)
        assert_allclose(r.T @ r, np.eye(3), atol=1e-9)
        assert np.linalg.norm(r - so3.rot_z(np.pi / 6)) < 3e-3

    def test_orthogonal_input_reproduced(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            q = random_rotation(rng)
            assert_allclose(so3.orthogonalize(q), q, atol=1e-12)

    def test_idempotent(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            x = random_rotation(rng) + rng.normal(scale=0.05, size=(3, 3))
            once = so3.orthogonalize(x)
            twice = so3.orthogonalize(once)
            assert_allclose(twice, once, atol=1e-12)

    def test_left_equivariance(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            q = random_rotation(rng)
            x = random_rotation(rng) + rng.normal(scale=0.05, size=(3, 3))
            assert_allclose(
                so3.orthogonalize(q @ x), q @ so3.orthogonalize(x), atol=1e-11
            )

    def test_result_is_rotation(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            x = random_rotation(rng) + rng.normal(scale=0.1, size=(3, 3))
            r = so3.orthogonalize(x)
            assert_allclose(r.T @ r, np.eye(3), atol=1e-9)
            assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-9)

    def test_singular_input_raises(self):
        bad = np.zeros((3, 3))
        bad[0, 0] = 1.0
        with pytest.raises(SingularInput):
            so3.orthogonalize(bad)

    def test_rank_two_raises(self):
        a = np.outer([1.0, 0, 0], [1.0, 0, 0]) + np.outer([0, 1.0, 0], [0, 1.0, 0])
        with pytest.raises(SingularInput):
            so3.orthogonalize(a)


class TestEuler:
    def test_identity(self):
        e = so3.to_euler(np.eye(3))
        assert e == (0.0, 0.0, 0.0)

    def test_single_axis_roll(self):
        e = so3.to_euler(so3.rot_x(0.3))
        assert_allclose([e.roll, e.pitch, e.yaw], [0.3, 0.0, 0.0], atol=1e-12)

    def test_from_euler_identity(self):
        assert_allclose(so3.from_euler(0, 0, 0), np.eye(3))

    def test_half_turn_about_x(self):
        assert_allclose(so3.from_euler(np.pi, 0, 0), np.diag([1.0, -1.0, -1.0]),
                        atol=1e-12)

    def test_angle_round_trip(self):
        m = so3.from_euler(0.1, 0.2, 0.3)
        assert_allclose(so3.to_euler(m), (0.1, 0.2, 0.3), atol=1e-12)

    def test_matrix_round_trip_random(self):
        rng = np.random.default_rng(23)
        for _ in range(200):
            r = random_rotation(rng)
            e = so3.to_euler(r)
            assert_allclose(so3.from_euler(*e), r, atol=1e-9)

    def test_reconstruction_matches_convention(self):
        # R must factor as Rz(yaw) @ Ry(pitch) @ Rx(roll)
        rng = np.random.default_rng(29)
        r = random_rotation(rng)
        e = so3.to_euler(r)
        rebuilt = so3.rot_z(e.yaw) @ so3.rot_y(e.pitch) @ so3.rot_x(e.roll)
        assert_allclose(rebuilt, r, atol=1e-9)

    @given(
        st.floats(-3.1, 3.1),
        st.floats(-1.4, 1.4),
        st.floats(-3.1, 3.1),
    )
    @settings(max_examples=200)
    def test_euler_round_trip_property(self, roll, pitch, yaw):
        e = so3.to_euler(so3.from_euler(roll, pitch, yaw))
        assert_allclose([e.roll, e.pitch, e.yaw], [roll, pitch, yaw], atol=1e-9)

    def test_pitch_range(self):
        rng = np.random.default_rng(31)
        for _ in range(100):
            e = so3.to_euler(random_rotation(rng))
            assert -np.pi / 2 <= e.pitch <= np.pi / 2
            assert -np.pi < e.roll <= np.pi
            assert -np.pi < e.yaw <= np.pi

    def test_gimbal_lock_warns_and_zeroes_roll(self):
        r = so3.from_euler(0.4, np.pi / 2, 0.2)
        with pytest.warns(GimbalLockWarning):
            e = so3.to_euler(r)
        assert e.roll == 0.0
        # in-plane angle is absorbed into yaw; matrix still reconstructs
        assert_allclose(so3.from_euler(*e), r, atol=1e-9)

    def test_gimbal_lock_negative_pitch(self):
        r = so3.from_euler(-0.3, -np.pi / 2, 0.7)
        with pytest.warns(GimbalLockWarning):
            e = so3.to_euler(r)
        assert e.roll == 0.0
        assert_allclose(so3.from_euler(*e), r, atol=1e-9)


class TestRotationAngle:
    def test_identical(self):
        r = so3.from_euler(0.1, -0.5, 1.0)
        assert so3.rotation_angle(r, r) == pytest.approx(0.0, abs=1e-7)

    def test_known_angle(self):
        assert so3.rotation_angle(np.eye(3), so3.rot_z(0.25)) == pytest.approx(
            0.25, abs=1e-12
        )
