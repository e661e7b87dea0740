"""Rigid transforms and the depth-parameterized RGBD camera model.

An RGBD measurement of a point is the triple ``(u, v, d)``: two pixel
coordinates and the sensor depth ``d = mu * z``. With the camera-frame point
``x = (x, y, z)`` it is produced by a depth-dependent 3x3 matrix::

    y = Omega(z) @ x

    Omega(z) = [[fku/z, fku*cot(skew)/z,      u0/z],
                [    0, fkv/(z*sin(skew)),    v0/z],
                [    0,                 0,      mu]]

Points and features are plain ``numpy`` arrays of shape ``(3,)`` (or
``(N, 3)`` where noted). Units are meters, radians and pixels.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError, InvalidDepthError, SingularDepthError

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class RgbdIntrinsics:
    """Scalar intrinsics of an RGBD camera.

    ``fku``/``fkv`` are focal length times pixel density (pixels),
    ``skew_angle`` the angle between the pixel axes, ``(u0, v0)`` the
    principal point and ``mu`` the depth scale of the range sensor.
    """

    fku: float
    fkv: float
    u0: float
    v0: float
    skew_angle: float = np.pi / 2
    mu: float = 1.0

    def __post_init__(self):
        for name in ("fku", "fkv", "u0", "v0", "skew_angle", "mu"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.fku > 0 and self.fkv > 0):
            raise ValueError("fku and fkv must be positive")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not 0 < self.skew_angle < np.pi:
            raise ValueError("skew_angle must lie in (0, pi)")

    @property
    def cot(self):
        # exact zero for rectangular pixels; cos(pi/2) is 6e-17 in floating point
        if self.skew_angle == np.pi / 2:
            return 0.0
        return np.cos(self.skew_angle) / np.sin(self.skew_angle)

    def pinhole_matrix(self):
        """Upper-triangular K with ``z * (u, v, 1) = K @ x``."""
        return np.array([
            [self.fku, self.fku * self.cot, self.u0],
            [0.0, self.fkv / np.sin(self.skew_angle), self.v0],
            [0.0, 0.0, 1.0],
        ])

    def scaled(self, **factors):
        """Copy with selected fields multiplied by the given factors."""
        values = {k: getattr(self, k) for k in ("fku", "fkv", "u0", "v0", "skew_angle", "mu")}
        for k, f in factors.items():
            values[k] = values[k] * f
        return RgbdIntrinsics(**values)


def omega_matrix(intr, z):
    z = float(z)
    if z == 0.0:
        raise SingularDepthError("Omega is undefined at zero depth")
    s = np.sin(intr.skew_angle)
    return np.array([
        [intr.fku / z, intr.fku * intr.cot / z, intr.u0 / z],
        [0.0, intr.fkv / (z * s), intr.v0 / z],
        [0.0, 0.0, intr.mu],
    ])


def project(intr, x_c):
    """Image feature ``(u, v, d)`` of a camera-frame point (or ``(N, 3)`` points)."""
    x_c = np.asarray(x_c, dtype=float)
    z = x_c[..., 2]
    if np.any(z <= 0):
        raise BehindCameraError(f"point behind camera (z={np.min(z):.6g})")
    x, y = x_c[..., 0], x_c[..., 1]
    s = np.sin(intr.skew_angle)
    u = intr.fku * (x + intr.cot * y) / z + intr.u0
    v = intr.fkv * y / (z * s) + intr.v0
    d = intr.mu * z
    return np.stack([u, v, d], axis=-1)


def back_project(intr, y):
    """Camera-frame point of an image feature; inverse of :func:`project`."""
    y = np.asarray(y, dtype=float)
    d = y[..., 2]
    if np.any(d <= 0):
        raise InvalidDepthError(f"non-positive depth {np.min(d):.6g}")
    z = d / intr.mu
    yc = (y[..., 1] - intr.v0) * z * np.sin(intr.skew_angle) / intr.fkv
    xc = (y[..., 0] - intr.u0) * z / intr.fku - intr.cot * yc
    return np.stack([xc, yc, z], axis=-1)


def projection_jacobian(intr, x_c):
    """d(project)/d(x_c) at a camera-frame point, 3x3."""
    x, y, z = np.asarray(x_c, dtype=float)
    s = np.sin(intr.skew_angle)
    return np.array([
        [intr.fku / z, intr.fku * intr.cot / z, -intr.fku * (x + intr.cot * y) / z**2],
        [0.0, intr.fkv / (s * z), -intr.fkv * y / (s * z**2)],
        [0.0, 0.0, intr.mu],
    ])


def skew(w):
    return np.array([
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ])


def _orthonormalize(R):
    U, _, Vt = np.linalg.svd(R)
    Rn = U @ Vt
    if np.linalg.det(Rn) < 0:
        U[:, -1] *= -1
        Rn = U @ Vt
    return Rn


@dataclass(frozen=True, eq=False)
class Transform:
    """Rigid transform ``x_to = R @ x_from + t``.

    Named ``T_a_b`` in the code when it maps frame-b coordinates into frame a.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-6) or np.linalg.det(R) < 0:
            raise ValueError("rotation is not a proper orthonormal matrix")
        if np.max(np.abs(R.T @ R - np.eye(3))) > _ORTHO_TOL:
            R = _orthonormalize(R)
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def from_translation(cls, t):
        return cls(np.eye(3), t)

    @property
    def matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def inverse(self):
        Rt = self.rotation.T
        return Transform(Rt, -Rt @ self.translation)

    def __matmul__(self, other):
        return compose(self, other)

    def __eq__(self, other):
        if not isinstance(other, Transform):
            return NotImplemented
        return (np.array_equal(self.rotation, other.rotation)
                and np.array_equal(self.translation, other.translation))

    def __repr__(self):
        return f"Transform(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def compose(a, b):
    """``a`` after ``b``: the 4x4 product ``a.matrix @ b.matrix``."""
    return Transform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def transform_point(T, x):
    """Apply ``T`` to a point (or ``(N, 3)`` points)."""
    x = np.asarray(x, dtype=float)
    return x @ T.rotation.T + T.translation


def rotation_about(axis, angle):
    """Rodrigues rotation matrix."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    K = skew(axis)
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K


def look_at(eye, target, up=(0.0, 0.0, 1.0)):
    """Camera pose whose optical (+z) axis points from ``eye`` to ``target``.

    Returns ``T_world_camera``. Image ``v`` grows along ``-up``.
    """
    eye = np.asarray(eye, dtype=float)
    z = np.asarray(target, dtype=float) - eye
    z /= np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, dtype=float))
    if np.linalg.norm(x) < 1e-9:
        raise ValueError("viewing direction parallel to up vector")
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return Transform(np.column_stack([x, y, z]), eye)
