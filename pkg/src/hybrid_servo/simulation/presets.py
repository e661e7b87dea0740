"""Default closed-loop scene: arm, camera rig, target and desired spiral.

Every placement that depends on the arm is derived from the start pose so a
scene stays consistent when the arm or ``q0`` changes:

* the target center sits ``standoff`` metres along the eye-in-hand optical
  axis, and the target plane faces that camera;
* the fixed camera sits at ``center + fixed_offset`` looking at the center;
* the spiral anchor is chosen so that ``y_d(0) = y(0) + shift``.
"""

import numpy as np

from .. import robot
from ..controller import GainSpec
from ..geometry import RgbdIntrinsics, Transform, look_at
from ..rig import HybridRig
from .scenarios import DesiredTrajectory, TargetMotion, target_position
from .world import SimulationSetup, observe

DEFAULT_Q0 = {"elbow3": (0.0, 0.6, -0.6), "planar2": (0.5, 0.5), "pendulum": (0.3,), "ur5": (0.0, -1.2, 1.2, -1.6, -1.57, 0.0)}

# (fku, fkv, u0, v0, skew angle in degrees, mu)
EIH_INTRINSICS = (500.0, 500.0, 320.0, 240.0, 90.0, 1.0)
FIXED_INTRINSICS = (600.0, 590.0, 315.0, 245.0, 89.5, 1.02)
# eye-in-hand camera pose in the end-effector frame (rotation rows); optical
# axis along the end-effector x axis
EIH_ROTATION = ((0.0, 0.0, 1.0), (0.0, -1.0, 0.0), (1.0, 0.0, 0.0))
EIH_TRANSLATION = (0.0, 0.03, 0.0)
FIXED_OFFSET = (0.2, -0.9, 0.4)


def intrinsics(values):
    """``RgbdIntrinsics`` from ``(fku, fkv, u0, v0, skew_deg, mu)``."""
    fku, fkv, u0, v0, skew, mu = (float(v) for v in values)
    return RgbdIntrinsics(fku, fkv, u0, v0, skew_angle=np.deg2rad(skew), mu=mu)


def feature_offsets(k, spacing, motion_axes):
    """``k`` points on a circle of radius ``spacing`` in the target plane
    (a single feature sits at the center)."""
    if k < 1:
        raise ValueError("at least one feature is required")
    if k == 1:
        return np.zeros((1, 3))
    e1, e2 = motion_axes
    ang = 2 * np.pi * np.arange(k) / k
    return spacing * (np.outer(np.cos(ang), e1) + np.outer(np.sin(ang), e2))


def eih_camera_pose(model, q, T_ee_eih):
    """Base-frame pose of the eye-in-hand camera at ``q``."""
    return robot.forward_kinematics(model, q) @ T_ee_eih


def build_scene(robot_model="elbow3", q0=None, qdot0=None, *,
                eih_intrinsics=EIH_INTRINSICS, eih_rotation=EIH_ROTATION, eih_translation=EIH_TRANSLATION,
                fixed_intrinsics=FIXED_INTRINSICS, fixed_position=None, fixed_look_at=None, fixed_up=(0.0, 0.0, 1.0),
                kind="circle", center=None, standoff=0.4, normal=None, radius=0.05, rate=0.5,
                width=0.2, height=0.1, speed=0.02, corner_radius=None, features=1, feature_spacing=0.015,
                anchor=None, shift=(90.0, -40.0, 0.0), spiral_radius=30.0, pitch=0.05, spiral_rate=0.5,
                gains=None, **setup_kwargs):
    """A :class:`SimulationSetup` for the default scene; any piece can be overridden.

    ``robot_model`` is a preset name or a :class:`robot.RobotModel`.
    ``setup_kwargs`` go straight to :class:`SimulationSetup` (dt, T, seed, ...).
    """
    if isinstance(robot_model, str):
        if robot_model not in robot.PRESETS:
            raise ValueError(f"unknown robot preset {robot_model!r}")
        name, model = robot_model, robot.PRESETS[robot_model]()
    else:
        name, model = None, robot_model
    if q0 is None:
        if name not in DEFAULT_Q0:
            raise ValueError("q0 is required for a custom robot")
        q0 = DEFAULT_Q0[name]
    q0 = np.asarray(q0, dtype=float)

    T_ee_eih = Transform(np.asarray(eih_rotation, dtype=float), eih_translation)
    cam = eih_camera_pose(model, q0, T_ee_eih)
    axis = cam.rotation[:, 2]
    c = cam.translation + standoff * axis if center is None else np.asarray(center, dtype=float)
    plane_normal = axis if normal is None else normal
    eye = c + np.asarray(FIXED_OFFSET) if fixed_position is None else np.asarray(fixed_position, dtype=float)
    T_base_fixed = look_at(eye, c if fixed_look_at is None else fixed_look_at, fixed_up)
    rig = HybridRig(intrinsics(eih_intrinsics), intrinsics(fixed_intrinsics), T_ee_eih.inverse(), T_base_fixed)

    probe = TargetMotion("static", center=c, normal=plane_normal)
    motion = TargetMotion(kind, center=c, normal=plane_normal, radius=radius, angular_rate=rate,
                          width=width, height=height, speed=speed, corner_radius=corner_radius,
                          offsets=feature_offsets(features, feature_spacing, (probe.e1, probe.e2)))

    if anchor is None:
        x_B, v_B, _ = target_position(motion, 0.0)
        y0 = observe(rig, model, q0, np.zeros(model.n), x_B, v_B).y
        anchor = y0 + np.asarray(shift, dtype=float) - np.array([spiral_radius, 0.0, 0.0])
    desired = DesiredTrajectory(anchor, radius=spiral_radius, pitch=pitch, angular_rate=spiral_rate)
    return SimulationSetup(model, rig, motion, desired, GainSpec() if gains is None else gains,
                           q0, qdot0, **setup_kwargs)
