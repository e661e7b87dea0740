"""Hybrid eye-in-hand / fixed RGBD rig: image Jacobians and their regressors.

Frame names: ``B`` robot base, ``E`` end effector (last D-H frame), ``e``
eye-in-hand camera, ``f`` fixed camera. ``T_eih_ee`` maps E coordinates into
the eye-in-hand camera, ``T_base_fixed`` maps fixed-camera coordinates into
the base.

For one feature the eye-in-hand image velocity splits as::

    ydot = Q(q) qdot + J(q) ydot_fixed

Both products are linear in constant lumped camera parameters. With ``K``
the pinhole matrix of a camera::

    A   = mu_e K_e R_eE                       (3x3)
    G   = [R_Bf K_f^-1 / mu_f | t_Bf]         (3x4)
    Dbar(y) = [[1/d, 0, -u/d], [0, 1/d, -v/d], [0, 0, 1]]

    Q phi = Dbar(y) A (X3(q, phi) G ybar_f + x4(q, phi))
    J phi = Dbar(y) A R_EB(q) G[:, :3] E(y_f) phi

where ``ybar_f = (u d, v d, d, 1)`` of the fixed-camera feature,
``X3 = -R_EB sum_j phi_j [z_j]x`` and ``x4 = R_EB sum_j phi_j (z_j x o_j)``
come from the known D-H chain, and ``E(y) = [[d, 0, u], [0, d, v], [0, 0, 1]]``.

Lumped parameter layouts (row-major, ``r`` is the output row of ``A``):

* ``theta_k`` (p1 = 117): ``r*39 + a*12 + b*4 + c`` holds ``A[r,a] G[b,c]``
  and ``r*39 + 36 + a`` holds ``A[r,a]``.
* ``theta_m`` (p2 = 81): ``r*27 + a*9 + b*3 + c`` holds ``A[r,a] G[b,c]``
  for ``c < 3``.

The regressors use the measured eye-in-hand features ``y`` (through
``Dbar``) besides ``y_fixed``, ``q`` and ``phi``; ``u``, ``v`` and the sensor
depth are measurable, the unknown depth scale is absorbed into ``A``.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels as kern
from . import robot
from .errors import DegenerateProjectionError, DimensionError, SingularDepthError, VisibilityError
from .geometry import (RgbdIntrinsics, Transform, back_project, omega_matrix, project,
                       projection_jacobian, transform_point)

P1 = 117
P2 = 81
_ROW_K = 39
_ROW_M = 27
DEFAULT_DAMPING = 1e-4


@dataclass(frozen=True)
class HybridRig:
    """True camera intrinsics and mounting transforms of the plant."""

    eih_intr: RgbdIntrinsics
    fixed_intr: RgbdIntrinsics
    T_eih_ee: Transform
    T_base_fixed: Transform


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """Measurements of ``k`` features, each ``(u, v, d)``, arrays of shape (k, 3).

    ``y`` is the eye-in-hand image, ``y_fixed`` the fixed-camera image.
    Rates are exact in simulation unless a measurement model says otherwise.
    """

    y: np.ndarray
    y_fixed: np.ndarray
    y_dot: np.ndarray
    y_fixed_dot: np.ndarray

    @property
    def k(self):
        return self.y.shape[0]

    def stacked(self):
        """``(y, y_fixed, y_dot, y_fixed_dot)`` as flat 3k-vectors."""
        return (self.y.ravel(), self.y_fixed.ravel(), self.y_dot.ravel(), self.y_fixed_dot.ravel())


def _rows(v):
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        if v.size % 3:
            raise DimensionError(f"stacked feature vector length {v.size} is not a multiple of 3")
        v = v.reshape(-1, 3)
    return v


# --- projection matrices -----------------------------------------------------

def projection_matrix(intr, T_cam_X, z):
    """``Omega(z) [R | t]``: maps homogeneous X-frame points to image features
    for points at camera depth ``z``."""
    if z == 0:
        raise SingularDepthError("projection matrix undefined at zero depth")
    Rt = np.hstack([T_cam_X.rotation, T_cam_X.translation[:, None]])
    return omega_matrix(intr, z) @ Rt


def pseudo_inverse(M, tol=1e-9):
    """Minimum-norm right inverse of a full-row-rank 3x4 matrix."""
    M = np.asarray(M, dtype=float)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s[-1] <= tol:
        raise DegenerateProjectionError(f"projection matrix is rank deficient (sigma_min={s[-1]:.3g})")
    return Vt.T @ np.diag(1.0 / s) @ U.T


# --- shared kinematic pieces -------------------------------------------------

@dataclass(frozen=True)
class _ArmPose:
    R_EB: np.ndarray      # rotation base -> EE
    t_BE: np.ndarray      # EE origin in base
    R_BE: np.ndarray
    z: np.ndarray         # (n, 3) joint axes
    o: np.ndarray         # (n, 3) joint anchors


def _arm_pose(chain, q):
    T = robot.frames(chain, q)
    R_BE = T[-1, :3, :3]
    return _ArmPose(R_BE.T.copy(), T[-1, :3, 3].copy(), R_BE.copy(),
                    T[:-1, :3, 2].copy(), T[:-1, :3, 3].copy())


class KinematicRegressor:
    """Regressor signals for one measurement instant.

    Builds the signal tensors once so that the regressor for any ``phi``,
    and the estimated matrices ``Qhat`` and ``Jhat``, are cheap.

    ``source`` selects which camera supplies the target point: ``"fixed"``
    (hybrid rig) or ``"eih"`` (eye-in-hand only, static-target assumption).
    """

    def __init__(self, chain, y, y_fixed, q, source="fixed"):
        y = np.ascontiguousarray(_rows(y))
        if np.any(y[:, 2] <= 0):
            raise VisibilityError("non-positive eye-in-hand depth", camera="eih")
        self.k = y.shape[0]
        self.n = chain.n
        q = np.asarray(q, dtype=float)
        if source == "fixed":
            yf = np.ascontiguousarray(_rows(y_fixed))
            if yf.shape != y.shape:
                raise DimensionError("eye-in-hand and fixed feature counts differ")
            self.D, self.Z, self.E, self.R_EB = kern.kinematic_signals(chain.dh, q, y, yf, False)
        elif source == "eih":
            self.D, self.Z, _, self.R_EB = kern.kinematic_signals(chain.dh, q, y, y, True)
            self.E = None
        else:
            raise ValueError(f"unknown source {source!r}")

    # Property 1 -------------------------------------------------------------
    def Y(self, phi):
        """(3k, p1) regressor of ``Q @ phi``."""
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (self.n,):
            raise DimensionError(f"phi must have shape ({self.n},)")
        return kern.regressor_k(self.D, self.Z, phi)

    def Q_hat(self, theta_k):
        return kern.q_hat(self.D, self.Z, _check_len(theta_k, P1, "theta_k"))

    # Property 2 -------------------------------------------------------------
    def W(self, phi):
        """(3k, p2) regressor of ``J @ phi``."""
        if self.E is None:
            raise ValueError("eye-in-hand-only regressor has no fixed-camera term")
        phi = np.asarray(phi, dtype=float).ravel()
        if phi.shape != (3 * self.k,):
            raise DimensionError(f"phi must have length {3 * self.k}")
        return kern.regressor_m(self.D, self.E, self.R_EB, phi)

    def J_hat(self, theta_m):
        """Block-diagonal (3k, 3k) estimate of ``J``."""
        theta_m = _check_len(theta_m, P2, "theta_m")
        Th = theta_m.reshape(3, _ROW_M)
        # w[a*9+b*3+c] = R_EB[a,b] (E phi)_c is linear in phi
        Wsig = np.einsum("ab,fcd->fabcd", self.R_EB, self.E).reshape(self.k, _ROW_M, 3)
        blocks = np.einsum("frs,sj,fjd->frd", self.D, Th, Wsig)
        J = np.zeros((3 * self.k, 3 * self.k))
        for f in range(self.k):
            J[3 * f:3 * f + 3, 3 * f:3 * f + 3] = blocks[f]
        return J


def _check_len(v, n, name):
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise DimensionError(f"{name} must have shape ({n},), got {v.shape}")
    return v


def kinematic_regressor_Y(chain, y, y_fixed, q, phi):
    """``Y`` with ``Y @ theta_k = Q @ phi`` (3k x 117)."""
    return KinematicRegressor(chain, y, y_fixed, q).Y(phi)


def kinematic_regressor_W(chain, y, y_fixed, q, phi):
    """``W`` with ``W @ theta_m = J @ phi`` (3k x 81)."""
    return KinematicRegressor(chain, y, y_fixed, q).W(phi)


def eih_regressor_Y(chain, y, q, phi):
    """Eye-in-hand-only regressor of ``Q @ phi`` (target assumed static)."""
    return KinematicRegressor(chain, y, None, q, source="eih").Y(phi)


# --- ground truth (oracle side) ---------------------------------------------

def _camera_blocks(rig):
    Ke = rig.eih_intr.pinhole_matrix()
    Kf = rig.fixed_intr.pinhole_matrix()
    A = rig.eih_intr.mu * Ke @ rig.T_eih_ee.rotation
    Gf = np.hstack([rig.T_base_fixed.rotation @ np.linalg.inv(Kf) / rig.fixed_intr.mu,
                    rig.T_base_fixed.translation[:, None]])
    T_ee_eih = rig.T_eih_ee.inverse()
    Ge = np.hstack([T_ee_eih.rotation @ np.linalg.inv(Ke) / rig.eih_intr.mu,
                    T_ee_eih.translation[:, None]])
    return A, Gf, Ge


def _pack_k(A, G):
    head = np.einsum("ra,bc->rabc", A, G).reshape(3, 36)
    return np.hstack([head, A]).ravel()


def true_theta_k(rig, model=None):
    """Ground-truth ``theta_k``; for oracles and diagnostics only."""
    A, Gf, _ = _camera_blocks(rig)
    return _pack_k(A, Gf)


def true_theta_m(rig, model=None):
    A, Gf, _ = _camera_blocks(rig)
    return np.einsum("ra,bc->rabc", A, Gf[:, :3]).ravel()


def true_theta_k_eih(rig, model=None):
    """Ground truth of the eye-in-hand-only parameterization."""
    A, _, Ge = _camera_blocks(rig)
    return _pack_k(A, Ge)


def estimated_products(Y, W, theta_hat_k, theta_hat_m):
    """``(Qhat phi, Jhat phi)`` from regressors already evaluated at ``phi``."""
    Y = np.asarray(Y)
    W = np.asarray(W)
    if Y.shape[1] != np.size(theta_hat_k) or W.shape[1] != np.size(theta_hat_m):
        raise DimensionError("estimate length does not match regressor width")
    return Y @ theta_hat_k, W @ theta_hat_m


def estimated_jacobian_pinv(Q_hat, damping=DEFAULT_DAMPING):
    """Damped least-squares inverse ``Q^T (Q Q^T + rho^2 I)^-1``.

    Evaluated in the equivalent ``(Q^T Q + rho^2 I)^-1 Q^T`` form when Q is
    tall, which keeps the solve well conditioned.
    """
    Q = np.asarray(Q_hat, dtype=float)
    m, n = Q.shape
    r2 = damping * damping
    if m >= n:
        return np.linalg.solve(Q.T @ Q + r2 * np.eye(n), Q.T)
    return Q.T @ np.linalg.solve(Q @ Q.T + r2 * np.eye(m), np.eye(m))


# --- true Jacobians (plant side) ----------------------------------------------

def feature_points_base(rig, y_fixed):
    """Base-frame points of fixed-camera features (k, 3)."""
    x_f = back_project(rig.fixed_intr, _rows(y_fixed))
    return transform_point(rig.T_base_fixed, x_f)


def image_jacobians(rig, chain, q, y_fixed):
    """True ``Q`` (3k x n) and block-diagonal ``J`` (3k x 3k).

    Derived directly from the measurement chain, independent of the
    regressor parameterization.
    """
    chain = chain.chain if isinstance(chain, robot.RobotModel) else chain
    y_fixed = _rows(y_fixed)
    k = y_fixed.shape[0]
    pose = _arm_pose(chain, np.asarray(q, dtype=float))
    x_f = back_project(rig.fixed_intr, y_fixed)
    x_B = transform_point(rig.T_base_fixed, x_f)
    R_eE = rig.T_eih_ee.rotation
    R_Bf = rig.T_base_fixed.rotation
    x_E = (x_B - pose.t_BE) @ pose.R_BE
    x_e = transform_point(rig.T_eih_ee, x_E)
    Q = np.zeros((3 * k, chain.n))
    J = np.zeros((3 * k, 3 * k))
    for f in range(k):
        if x_e[f, 2] <= 0:
            raise VisibilityError(f"feature {f} behind eye-in-hand camera",
                                  camera="eih", feature=f, depth=x_e[f, 2])
        Dp = projection_jacobian(rig.eih_intr, x_e[f])
        # moving joint j rotates the EE about z_j through o_j; the point is
        # fixed in the base, so it moves by -omega x (x_B - o_j) in EE terms
        dxE = -pose.R_EB @ np.cross(pose.z, x_B[f] - pose.o).T
        Q[3 * f:3 * f + 3] = Dp @ R_eE @ dxE
        Df = projection_jacobian(rig.fixed_intr, x_f[f])
        J[3 * f:3 * f + 3, 3 * f:3 * f + 3] = Dp @ R_eE @ pose.R_EB @ R_Bf @ np.linalg.inv(Df)
    return Q, J


def eih_features(rig, chain, q, x_B):
    """Eye-in-hand features and camera-frame points for base-frame points."""
    pose = _arm_pose(chain, np.asarray(q, dtype=float))
    x_E = (np.atleast_2d(x_B) - pose.t_BE) @ pose.R_BE
    x_e = transform_point(rig.T_eih_ee, x_E)
    return project(rig.eih_intr, x_e), x_e
