"""Target motions in the base frame and desired image trajectories."""

from dataclasses import dataclass, field

import numpy as np

from ..controller import DesiredImageState

_KINDS = ("circle", "rectangle", "static")


def _plane_axes(normal):
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    # e2 is the projection of world z onto the plane when possible, so the
    # motion reads as "sideways then up" for a vertical plane
    up = np.array([0.0, 0.0, 1.0])
    if abs(n @ up) > 0.99:
        up = np.array([0.0, 1.0, 0.0])
    e2 = up - (up @ n) * n
    e2 /= np.linalg.norm(e2)
    e1 = np.cross(e2, n)
    return e1, e2


@dataclass(frozen=True, eq=False)
class TargetMotion:
    """Fruit-center motion plus rigid feature offsets.

    ``circle`` moves on ``center + radius (cos wt e1 + sin wt e2)``.
    ``rectangle`` travels a rounded rectangle (``width`` along e1, ``height``
    along e2) at constant ``speed``, starting at the midpoint of the +e1 side
    and moving towards +e2. ``corner_radius=None`` means 10% of the shorter
    side. ``static`` stays at ``center``.
    """

    kind: str = "circle"
    center: tuple = (0.0, 0.0, 0.0)
    normal: tuple = (1.0, 0.0, 0.0)
    radius: float = 0.05
    angular_rate: float = 0.5
    width: float = 0.2
    height: float = 0.1
    speed: float = 0.02
    corner_radius: float = None
    offsets: np.ndarray = field(default_factory=lambda: np.zeros((1, 3)))

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown target motion {self.kind!r}")
        object.__setattr__(self, "center", np.array(self.center, dtype=float).reshape(3))
        off = np.atleast_2d(np.array(self.offsets, dtype=float))
        if off.shape[1] != 3:
            raise ValueError("feature offsets must be (k, 3)")
        object.__setattr__(self, "offsets", off)
        e1, e2 = _plane_axes(self.normal)
        object.__setattr__(self, "e1", e1)
        object.__setattr__(self, "e2", e2)
        if self.kind == "rectangle":
            rc = 0.1 * min(self.width, self.height) if self.corner_radius is None else self.corner_radius
            if not 0 < rc <= 0.5 * min(self.width, self.height):
                raise ValueError("corner radius must lie in (0, min(width, height)/2]")
            if self.speed <= 0:
                raise ValueError("rectangle speed must be positive")
            object.__setattr__(self, "corner_radius", float(rc))
            object.__setattr__(self, "_segments", _rounded_rectangle(self.width, self.height, rc))
        if self.kind == "circle" and self.radius < 0:
            raise ValueError("circle radius must be non-negative")

    @property
    def k(self):
        return self.offsets.shape[0]

    def perimeter(self):
        return self._segments[-1][1] + self._segments[-1][2]


def _rounded_rectangle(w, h, rc):
    """Segments ``(kind, s_start, length, data)`` in plane coordinates."""
    a, b = w / 2, h / 2
    segs = []
    s = 0.0

    def line(p0, p1):
        nonlocal s
        p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
        L = np.linalg.norm(p1 - p0)
        segs.append(("line", s, L, (p0, (p1 - p0) / L)))
        s += L

    def arc(c, phi0):
        nonlocal s
        L = 0.5 * np.pi * rc
        segs.append(("arc", s, L, (np.asarray(c, float), phi0)))
        s += L

    line((a, 0), (a, b - rc))
    arc((a - rc, b - rc), 0.0)
    line((a - rc, b), (-a + rc, b))
    arc((-a + rc, b - rc), 0.5 * np.pi)
    line((-a, b - rc), (-a, -b + rc))
    arc((-a + rc, -b + rc), np.pi)
    line((-a + rc, -b), (a - rc, -b))
    arc((a - rc, -b + rc), 1.5 * np.pi)
    line((a, -b + rc), (a, 0))
    return segs


def _rectangle_state(motion, t):
    segs = motion._segments
    L = segs[-1][1] + segs[-1][2]
    v = motion.speed
    s = (v * t) % L
    for kind, s0, length, data in segs:
        if s < s0 + length or (kind, s0) == segs[-1][:2]:
            break
    ds = s - s0
    if kind == "line":
        p0, u = data
        return p0 + ds * u, v * u, np.zeros(2)
    c, phi0 = data
    rc = motion.corner_radius
    phi = phi0 + ds / rc
    radial = np.array([np.cos(phi), np.sin(phi)])
    tangent = np.array([-np.sin(phi), np.cos(phi)])
    return c + rc * radial, v * tangent, -(v * v / rc) * radial


def target_position(motion, t):
    """Base-frame positions, velocities and accelerations of the features, each (k, 3)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    e1, e2 = motion.e1, motion.e2
    if motion.kind == "static":
        p = motion.center
        v = a = np.zeros(3)
    elif motion.kind == "circle":
        r, w = motion.radius, motion.angular_rate
        c, s = np.cos(w * t), np.sin(w * t)
        p = motion.center + r * (c * e1 + s * e2)
        v = r * w * (-s * e1 + c * e2)
        a = -r * w * w * (c * e1 + s * e2)
    else:
        p2, v2, a2 = _rectangle_state(motion, t)
        P = np.column_stack([e1, e2])
        p = motion.center + P @ p2
        v = P @ v2
        a = P @ a2
    k = motion.k
    return motion.offsets + p, np.tile(v, (k, 1)), np.tile(a, (k, 1))


@dataclass(frozen=True, eq=False)
class DesiredTrajectory:
    """Cylindrical spiral in (u, v, d) space around the depth axis.

    Per feature ``y_d = anchor + (R cos wt, R sin wt, pitch w t / 2pi)``.
    """

    anchor: np.ndarray
    radius: float = 30.0
    pitch: float = 0.05
    angular_rate: float = 0.5

    def __post_init__(self):
        a = np.atleast_2d(np.array(self.anchor, dtype=float))
        if a.shape[1] != 3:
            raise ValueError("spiral anchor must be (k, 3)")
        object.__setattr__(self, "anchor", a)

    @property
    def k(self):
        return self.anchor.shape[0]


def desired_state(traj, t):
    if t < 0:
        raise ValueError("t must be non-negative")
    R, w, p = traj.radius, traj.angular_rate, traj.pitch
    c, s = np.cos(w * t), np.sin(w * t)
    rate = p * w / (2 * np.pi)
    off = np.array([R * c, R * s, rate * t])
    vel = np.array([-R * w * s, R * w * c, rate])
    acc = np.array([-R * w * w * c, -R * w * w * s, 0.0])
    k = traj.k
    return DesiredImageState((traj.anchor + off).ravel(), np.tile(vel, k), np.tile(acc, k))
