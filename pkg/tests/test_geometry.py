import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybrid_servo.errors import BehindCameraError, InvalidDepthError, SingularDepthError
from hybrid_servo.geometry import (RgbdIntrinsics, Transform, back_project, compose, look_at,
                                   omega_matrix, project, projection_jacobian, transform_point)

from conftest import random_transform

finite = st.floats(-5, 5, allow_nan=False)


def test_omega_principal_configuration(intr):
    np.testing.assert_array_equal(omega_matrix(intr, 1.0), [[500, 0, 320], [0, 400, 240], [0, 0, 1]])
    np.testing.assert_array_equal(omega_matrix(intr, 2.0), [[250, 0, 160], [0, 200, 120], [0, 0, 1]])


def test_omega_skewed_pixels():
    c = RgbdIntrinsics(500, 400, 320, 240, skew_angle=np.pi / 3)
    assert omega_matrix(c, 1.0)[0, 1] == pytest.approx(288.675, abs=1e-3)


def test_omega_zero_depth(intr):
    with pytest.raises(SingularDepthError):
        omega_matrix(intr, 0.0)


@pytest.mark.parametrize("x, y", [
    ((0, 0, 1), (320, 240, 1)),
    ((0.1, 0.2, 1), (370, 320, 1)),
    ((0.1, 0.2, 2), (345, 280, 2)),
])
def test_project_examples(intr, x, y):
    np.testing.assert_allclose(project(intr, x), y, atol=1e-12)
    np.testing.assert_allclose(back_project(intr, y), x, atol=1e-12)


def test_project_equals_omega_product(intr, rng):
    for x in rng.uniform([-1, -1, 0.1], [1, 1, 3], (20, 3)):
        np.testing.assert_allclose(project(intr, x), omega_matrix(intr, x[2]) @ x, rtol=1e-13)


def test_project_rejects_points_behind(intr):
    with pytest.raises(BehindCameraError):
        project(intr, (0.0, 0.0, -0.5))
    with pytest.raises(BehindCameraError):
        project(intr, (0.0, 0.0, 0.0))


def test_back_project_rejects_bad_depth(intr):
    with pytest.raises(InvalidDepthError):
        back_project(intr, (320, 240, 0))


def test_round_trip_many_points(rng):
    c = RgbdIntrinsics(610, 580, 300, 250, skew_angle=1.45, mu=1.3)
    x = rng.uniform([-2, -2, 0.05], [2, 2, 5], (1000, 3))
    assert np.max(np.abs(back_project(c, project(c, x)) - x)) < 1e-10


def test_projection_jacobian_matches_finite_difference(intr, rng):
    x = np.array([0.1, -0.2, 1.3])
    h = 1e-6
    fd = np.column_stack([(project(intr, x + h * e) - project(intr, x - h * e)) / (2 * h) for e in np.eye(3)])
    np.testing.assert_allclose(projection_jacobian(intr, x), fd, rtol=1e-7, atol=1e-6)


@pytest.mark.parametrize("field, value", [("fku", 0), ("fkv", -1), ("mu", 0), ("skew_angle", np.pi)])
def test_intrinsics_validation(field, value):
    kw = dict(fku=500, fkv=500, u0=320, v0=240)
    kw[field] = value
    with pytest.raises(ValueError):
        RgbdIntrinsics(**kw)


def test_compose_identity_and_inverse(rng):
    T = random_transform(rng)
    assert compose(Transform.identity(), T) == T
    I = compose(T, T.inverse())
    np.testing.assert_allclose(I.matrix, np.eye(4), atol=1e-12)


def test_compose_matches_dense_product(rng):
    a, b, c = (random_transform(rng) for _ in range(3))
    np.testing.assert_allclose((a @ b @ c).matrix, a.matrix @ b.matrix @ c.matrix, atol=1e-12)


def test_transform_point_examples(rng):
    x = rng.standard_normal(3)
    np.testing.assert_array_equal(transform_point(Transform.identity(), x), x)
    np.testing.assert_array_equal(transform_point(Transform.from_translation((0, 0, 1)), np.zeros(3)), [0, 0, 1])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.tuples(finite, finite, finite))
def test_transform_point_matches_homogeneous(seed, x):
    T = random_transform(np.random.default_rng(seed))
    expected = (T.matrix @ np.array([*x, 1.0]))[:3]
    np.testing.assert_allclose(transform_point(T, x), expected, atol=1e-12)


def test_transform_rejects_reflection():
    with pytest.raises(ValueError):
        Transform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


def test_transform_is_orthonormal(rng):
    R = random_transform(rng).rotation
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)


def test_look_at_points_optical_axis():
    T = look_at((1.0, 2.0, 0.5), (1.0, 3.0, 0.5))
    np.testing.assert_allclose(T.rotation[:, 2], [0, 1, 0], atol=1e-15)
    # the target lands on the optical axis
    p = transform_point(T.inverse(), (1.0, 3.0, 0.5))
    np.testing.assert_allclose(p, [0, 0, 1], atol=1e-15)
