"""Adaptive hybrid visual-servoing tracking controller.

Per control tick::

    ydot_r  = yd_dot - lam (y - y_d) - Jhat ydot_fixed
    qr_dot  = Qhat^+ ydot_r
    s       = qdot - qr_dot
    tau     = Y_d(q, qdot, qr_dot, qr_ddot) th_d - Qhat^T K1 dy - K2 s

and the estimates follow::

    th_d' = -Psi_d^-1 Y_d^T s
    th_k' = +Psi_k^-1 Y_k^T K1 dy,   Y_k = Y(y_fixed, q, qdot)
    th_m' = +Psi_m^-1 W(q, ydot_fixed)^T K1 dy

The controller only ever sees measured signals, the desired trajectory, the
known kinematic chain and its own estimates.
"""

from dataclasses import dataclass, field

import numpy as np

from . import robot
from .errors import DimensionError
from .rig import DEFAULT_DAMPING, P1, P2, KinematicRegressor, estimated_jacobian_pinv


def _spd(M, name, size):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape == (1, 1) and size != 1:
        M = M[0, 0] * np.eye(size)
    if M.ndim == 1 or M.shape == (1, size) and size != 1:
        M = np.diag(M.ravel())
    if M.shape != (size, size):
        raise DimensionError(f"{name} must be {size}x{size}, got {M.shape}")
    if np.max(np.abs(M - M.T)) > 1e-12:
        raise ValueError(f"{name} must be symmetric")
    if np.min(np.linalg.eigvalsh(M)) <= 0:
        raise ValueError(f"{name} must be positive definite")
    M = M.copy()
    M.setflags(write=False)
    return M


@dataclass(frozen=True, eq=False)
class ControllerGains:
    """``lam`` (1/s), image gain ``K1`` (3k x 3k), joint gain ``K2`` (n x n) and
    adaptation gains ``Psi_d``, ``Psi_k``, ``Psi_m``. Scalars, diagonals or
    full matrices are accepted."""

    lam: float
    K1: np.ndarray
    K2: np.ndarray
    Psi_d: np.ndarray
    Psi_k: np.ndarray
    Psi_m: np.ndarray
    n: int = field(default=None)
    k: int = field(default=None)

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        n, k = self.n, self.k
        if n is None or k is None:
            raise ValueError("gains need the joint count n and feature count k")
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "K1", _spd(self.K1, "K1", 3 * k))
        object.__setattr__(self, "K2", _spd(self.K2, "K2", n))
        object.__setattr__(self, "Psi_d", _spd(self.Psi_d, "Psi_d", robot.PARAMS_PER_LINK * n))
        object.__setattr__(self, "Psi_k", _spd(self.Psi_k, "Psi_k", P1))
        object.__setattr__(self, "Psi_m", _spd(self.Psi_m, "Psi_m", P2))
        for name in ("Psi_d", "Psi_k", "Psi_m"):
            object.__setattr__(self, name + "_inv", np.linalg.inv(getattr(self, name)))


@dataclass(frozen=True, eq=False)
class AdaptiveState:
    theta_k: np.ndarray
    theta_m: np.ndarray
    theta_d: np.ndarray

    def __post_init__(self):
        for name in ("theta_k", "theta_m", "theta_d"):
            v = np.array(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} has non-finite entries")
            v.setflags(write=False)
            object.__setattr__(self, name, v)


@dataclass(frozen=True, eq=False)
class DesiredImageState:
    """Stacked desired features and their first two time derivatives."""

    y_d: np.ndarray
    y_d_dot: np.ndarray
    y_d_ddot: np.ndarray


@dataclass(eq=False)
class ControllerOutput:
    tau: np.ndarray
    s_q: np.ndarray
    qr_dot: np.ndarray
    qr_ddot: np.ndarray
    yr_dot: np.ndarray
    dy: np.ndarray
    Q_hat: np.ndarray
    Y_d: np.ndarray
    Y_k: np.ndarray
    W: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)


def regressor_scaled_gain(regressors, K1, scale, ridge=0.1):
    """``scale (S + ridge tr(S)/p I)`` with ``S = sum_i R_i^T K1 R_i``.

    Built from regressors evaluated at unit signals. Adaptation then acts
    roughly uniformly in image space whatever the scaling of individual
    parameters, which keeps the loop gain bounded by about
    ``|phi|^2 / scale``.
    """
    S = sum(R.T @ K1 @ R for R in regressors)
    p = S.shape[0]
    P = scale * (S + ridge * np.trace(S) / p * np.eye(p))
    return 0.5 * (P + P.T)


def magnitude_scaled_gain(theta, scale):
    """``scale I / max|theta|^2``.

    A single rate for every entry. Scaling entries by their own magnitude
    would give the many near-zero dynamic parameters (products of inertia,
    COM offsets) enormous rates.
    """
    m = float(np.max(np.abs(np.asarray(theta, dtype=float))))
    return (scale / (m * m if m > 0 else 1.0)) * np.eye(np.size(theta))


@dataclass(frozen=True, eq=False)
class GainSpec:
    """Gains in user form, resolved into matrices once the controller has its
    initial estimates and first measurement.

    ``k1``/``k2`` are scalars, per-axis weights (``k1`` takes one weight per
    ``u, v, d`` and repeats it per feature) or full matrices. With
    ``psi_scaling="normalized"`` the ``psi_*`` scalars scale
    :func:`magnitude_scaled_gain` (dynamics) and :func:`regressor_scaled_gain`
    (kinematics); with ``"none"`` they are used as matrices directly.
    """

    lam: float = 25.0
    k1: object = (1e-4, 1e-4, 1.0)
    k2: object = 10.0
    psi_d: object = 100.0
    psi_k: object = 0.03
    psi_m: object = 1.0
    psi_scaling: str = "normalized"
    psi_ridge: float = 0.1

    def __post_init__(self):
        if self.psi_scaling not in ("normalized", "none"):
            raise ValueError("psi_scaling must be 'normalized' or 'none'")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.psi_scaling == "normalized":
            for name in ("psi_d", "psi_k", "psi_m"):
                v = getattr(self, name)
                if np.ndim(v) != 0 or not v > 0:
                    raise ValueError(f"{name} must be a positive scalar with normalized scaling")
            if not self.psi_ridge > 0:
                raise ValueError("psi_ridge must be positive")

    def image_gain(self, k):
        K1 = np.asarray(self.k1, dtype=float)
        if K1.ndim == 1 and K1.size == 3:
            K1 = np.diag(np.tile(K1, k))
        return _spd(K1, "K1", 3 * k)

    def resolve(self, n, k, initial=None, k_regressors=None, m_regressors=None):
        K1 = self.image_gain(k)
        if self.psi_scaling == "none":
            return ControllerGains(self.lam, K1, self.k2, self.psi_d, self.psi_k, self.psi_m, n=n, k=k)
        return ControllerGains(
            self.lam, K1, self.k2,
            magnitude_scaled_gain(initial.theta_d, self.psi_d),
            regressor_scaled_gain(k_regressors, K1, self.psi_k, self.psi_ridge),
            # theta_m is frozen without fixed-camera signals; any SPD value will do
            (regressor_scaled_gain(m_regressors, K1, self.psi_m, self.psi_ridge)
             if m_regressors is not None else self.psi_m * np.eye(P2)),
            n=n, k=k)


# --- control law pieces --------------------------------------------------------

def reference_image_velocity(y, y_d, y_d_dot, J_hat_ydot_fixed, lam):
    """``yd_dot - lam (y - y_d) - Jhat ydot_fixed``.

    ``J_hat_ydot_fixed`` is ``W(q, ydot_fixed) @ theta_m``; pass zeros to
    drop the fixed-camera compensation.
    """
    return np.asarray(y_d_dot) - lam * (np.asarray(y) - np.asarray(y_d)) - np.asarray(J_hat_ydot_fixed)


def joint_reference_velocity(Q_hat_pinv, yr_dot):
    return Q_hat_pinv @ yr_dot


class ReferenceAccelerationFilter:
    """Backward difference of ``qr_dot`` through a first-order low-pass.

    ``time_constant`` defaults to ``10 dt``; zero gives the raw difference.
    The first sample yields zero.
    """

    def __init__(self, dt, time_constant=None):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.dt = float(dt)
        self.time_constant = 10 * self.dt if time_constant is None else float(time_constant)
        self.alpha = self.dt / (self.time_constant + self.dt)
        self._prev = None
        self._value = None

    def reset(self):
        self._prev = None
        self._value = None

    def peek(self, qr_dot):
        """Filter output for ``qr_dot`` without committing the sample."""
        if self._prev is None:
            return np.zeros_like(qr_dot)
        raw = (qr_dot - self._prev) / self.dt
        return self._value + self.alpha * (raw - self._value)

    def update(self, qr_dot):
        qr_dot = np.asarray(qr_dot, dtype=float)
        out = self.peek(qr_dot)
        self._prev = qr_dot.copy()
        self._value = out
        return out


def sliding_vector(qdot, qr_dot):
    return np.asarray(qdot) - np.asarray(qr_dot)


def control_torque(Y_d, theta_d, Q_hat, K1, K2, dy, s_q):
    return Y_d @ theta_d - Q_hat.T @ (K1 @ dy) - K2 @ s_q


def adapt(state, Y_d, Y_k, W, K1, dy, s_q, gains, dt):
    """One explicit-Euler step of the three adaptive laws.

    ``W=None`` freezes ``theta_m`` (eye-in-hand-only operation).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    e = K1 @ dy
    th_d = state.theta_d - dt * (gains.Psi_d_inv @ (Y_d.T @ s_q))
    th_k = state.theta_k + dt * (gains.Psi_k_inv @ (Y_k.T @ e))
    th_m = state.theta_m if W is None else state.theta_m + dt * (gains.Psi_m_inv @ (W.T @ e))
    return AdaptiveState(th_k, th_m, th_d)


# --- controller object ----------------------------------------------------------

class HybridServoController:
    """Stateful controller: owns the estimates and the ``qr_ddot`` filter.

    ``mode="hybrid"`` is the proposed scheme. ``mode="eih"`` is the
    eye-in-hand-only reference: no ``Jhat ydot_fixed`` compensation, no
    ``theta_m`` adaptation, and ``Qhat`` parameterized from the eye-in-hand
    features alone.
    """

    def __init__(self, chain, gains, initial, dt, mode="hybrid", damping=DEFAULT_DAMPING,
                 filter_time_constant=None):
        if mode not in ("hybrid", "eih"):
            raise ValueError(f"unknown controller mode {mode!r}")
        if isinstance(chain, robot.RobotModel):
            raise TypeError("controller takes a KinematicChain; dynamic parameters are unknown to it")
        self.chain = chain
        self.gains = gains
        self.state = initial
        self.dt = float(dt)
        self.mode = mode
        self.damping = damping
        self.filter = ReferenceAccelerationFilter(dt, filter_time_constant)

    def compute(self, q, qdot, features, desired):
        """Control output for the current measurements. Does not mutate state."""
        y, y_fixed, _, y_fixed_dot = features.stacked()
        g = self.gains
        st = self.state
        if self.mode == "hybrid":
            reg = KinematicRegressor(self.chain, y, y_fixed, q)
            W = reg.W(y_fixed_dot)
            jhat_yf = W @ st.theta_m
        else:
            reg = KinematicRegressor(self.chain, y, None, q, source="eih")
            W = None
            jhat_yf = np.zeros_like(y)
        dy = y - desired.y_d
        yr_dot = reference_image_velocity(y, desired.y_d, desired.y_d_dot, jhat_yf, g.lam)
        Q_hat = reg.Q_hat(st.theta_k)
        qr_dot = joint_reference_velocity(estimated_jacobian_pinv(Q_hat, self.damping), yr_dot)
        qr_ddot = self.filter.peek(qr_dot)
        s = sliding_vector(qdot, qr_dot)
        Y_d = robot.dynamic_regressor(self.chain, q, qdot, qr_dot, qr_ddot)
        tau = control_torque(Y_d, st.theta_d, Q_hat, g.K1, g.K2, dy, s)
        Y_k = reg.Y(np.asarray(qdot, dtype=float))
        return ControllerOutput(tau=tau, s_q=s, qr_dot=qr_dot, qr_ddot=qr_ddot, yr_dot=yr_dot,
                                dy=dy, Q_hat=Q_hat, Y_d=Y_d, Y_k=Y_k, W=W)

    def commit(self, out):
        """Accept ``out`` as applied: advance the filter and the estimates."""
        self.filter.update(out.qr_dot)
        self.state = adapt(self.state, out.Y_d, out.Y_k, out.W, self.gains.K1, out.dy, out.s_q,
                           self.gains, self.dt)

    def step(self, q, qdot, features, desired):
        out = self.compute(q, qdot, features, desired)
        self.commit(out)
        return out


__all__ = [
    "AdaptiveState", "ControllerGains", "ControllerOutput", "DesiredImageState", "GainSpec",
    "HybridServoController", "ReferenceAccelerationFilter", "adapt", "control_torque",
    "joint_reference_velocity", "magnitude_scaled_gain",
    "reference_image_velocity", "regressor_scaled_gain", "sliding_vector",
]
