"""Serial-manipulator kinematics and rigid-body dynamics.

The equation of motion is written with a skew-symmetric Coriolis matrix::

    H(q) qdd + (1/2 Hdot(q) + C(q, qd)) qd + g(q) = tau,   psi^T C psi = 0

``1/2 Hdot + C`` equals the usual Christoffel-symbol matrix, so ``C`` here is
its skew-symmetric part. Only revolute joints with standard D-H parameters
are supported; friction is not modeled.

The dynamic regressor is linear in ten parameters per link (mass, first
moment ``m*c`` and the inertia about the link-frame origin, all in link
coordinates), so ``p3 = 10 n``. It is not reduced to a minimal base set:
unidentifiable columns simply stay zero or dependent.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import SingularInertiaError
from .geometry import Transform

PARAMS_PER_LINK = 10
_COND_LIMIT = 1e12


def _frozen(a, shape=None):
    a = np.array(a, dtype=float)
    if shape is not None:
        a = a.reshape(shape)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class KinematicChain:
    """D-H rows ``(a, alpha, d, theta_offset)`` and the gravity vector.

    This is everything a controller may know about the arm: the dynamic
    regressor depends on it alone.
    """

    dh: np.ndarray
    gravity: np.ndarray = (0.0, 0.0, -9.81)

    def __post_init__(self):
        dh = np.array(self.dh, dtype=float)
        if dh.ndim != 2 or dh.shape[1] != 4:
            raise ValueError("dh must be an (n, 4) array of (a, alpha, d, theta_offset)")
        if dh.shape[0] < 1:
            raise ValueError("need at least one joint")
        object.__setattr__(self, "dh", _frozen(dh))
        object.__setattr__(self, "gravity", _frozen(self.gravity, (3,)))

    @property
    def n(self):
        return self.dh.shape[0]

    @property
    def p3(self):
        return PARAMS_PER_LINK * self.n


@dataclass(frozen=True, eq=False)
class RobotModel:
    """Kinematic chain plus per-link mass, COM (link frame, m) and COM inertia."""

    chain: KinematicChain
    mass: np.ndarray
    com: np.ndarray
    inertia: np.ndarray

    def __post_init__(self):
        n = self.chain.n
        mass = _frozen(self.mass, (n,))
        com = _frozen(self.com, (n, 3))
        inertia = _frozen(self.inertia, (n, 3, 3))
        if np.any(mass <= 0):
            raise ValueError("link masses must be positive")
        for i, I in enumerate(inertia):
            if np.max(np.abs(I - I.T)) > 1e-12:
                raise ValueError(f"inertia of link {i} is not symmetric")
            if np.min(np.linalg.eigvalsh(I)) < -1e-12:
                raise ValueError(f"inertia of link {i} is not positive semidefinite")
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "com", com)
        object.__setattr__(self, "inertia", inertia)

    @property
    def n(self):
        return self.chain.n

    @property
    def dh(self):
        return self.chain.dh

    @property
    def gravity(self):
        return self.chain.gravity

    def with_gravity(self, gravity):
        return RobotModel(KinematicChain(self.chain.dh, gravity), self.mass, self.com, self.inertia)

    def scaled_masses(self, factor):
        """Same geometry with every mass and inertia scaled by ``factor``."""
        return RobotModel(self.chain, self.mass * factor, self.com, self.inertia * factor)

    def _args(self):
        return self.chain.dh, self.chain.gravity, self.mass, self.com, self.inertia


def _chain(model):
    return model.chain if isinstance(model, RobotModel) else model


def _vec(x, n, name):
    x = np.ascontiguousarray(x, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {x.shape}")
    return x


def frames(model, q):
    """All D-H frames ``T_base_i`` as an (n+1, 4, 4) array (index 0 is the base)."""
    chain = _chain(model)
    return K.dh_frames(chain.dh, _vec(q, chain.n, "q"))


def forward_kinematics(model, q):
    """End-effector pose in the base frame, ``T_base_ee``."""
    return Transform.from_matrix(frames(model, q)[-1])


def joint_axes(model, q):
    """Joint axes ``z_j`` and their anchor points ``o_j`` in base coordinates, (n, 3) each."""
    T = frames(model, q)
    return T[:-1, :3, 2].copy(), T[:-1, :3, 3].copy()


def inertia_matrix(model, q):
    dh, _, mass, com, inertia = model._args()
    return K.mass_matrix(dh, _vec(q, model.n, "q"), mass, com, inertia)


def inertia_gradient(model, q):
    """``dH/dq_k`` stacked along the first axis, (n, n, n)."""
    Hb, dHb, _ = K.dynamics_basis(model.dh, _vec(q, model.n, "q"), model.gravity)
    return np.tensordot(true_theta_d(model), dHb, axes=1)


def inertia_derivative(model, q, qdot):
    """Time derivative of ``H`` along the velocity ``qdot``."""
    return np.tensordot(_vec(qdot, model.n, "qdot"), inertia_gradient(model, q), axes=1)


def christoffel_matrix(model, q, qdot):
    """``1/2 Hdot + C``: the Christoffel-symbol Coriolis/centrifugal matrix."""
    return K.christoffel_matrix(inertia_gradient(model, q), _vec(qdot, model.n, "qdot"))


def coriolis_matrix(model, q, qdot):
    """Skew-symmetric ``C`` such that the velocity term is ``(1/2 Hdot + C) qdot``."""
    Cs = christoffel_matrix(model, q, qdot)
    return 0.5 * (Cs - Cs.T)


def gravity_vector(model, q):
    dh, g, mass, com, inertia = model._args()
    q = _vec(q, model.n, "q")
    return K.rnea(dh, q, np.zeros(model.n), np.zeros(model.n), g, mass, com, inertia)


def potential_energy(model, q):
    T = frames(model, q)
    U = 0.0
    for i in range(model.n):
        p = T[i + 1, :3, :3] @ model.com[i] + T[i + 1, :3, 3]
        U -= model.mass[i] * model.gravity @ p
    return U


def kinetic_energy(model, q, qdot):
    qdot = _vec(qdot, model.n, "qdot")
    return 0.5 * qdot @ inertia_matrix(model, q) @ qdot


def inverse_dynamics(model, q, qdot, qddot):
    """``tau = H qddot + (1/2 Hdot + C) qdot + g`` by recursive Newton-Euler."""
    dh, g, mass, com, inertia = model._args()
    n = model.n
    return K.rnea(dh, _vec(q, n, "q"), _vec(qdot, n, "qdot"), _vec(qddot, n, "qddot"),
                  g, mass, com, inertia)


def forward_dynamics(model, q, qdot, tau):
    """Joint acceleration produced by ``tau``.

    Raises SingularInertiaError when ``cond(H) > 1e12``.
    """
    dh, g, mass, com, inertia = model._args()
    n = model.n
    q = _vec(q, n, "q")
    H = K.mass_matrix(dh, q, mass, com, inertia)
    if np.linalg.cond(H) > _COND_LIMIT:
        raise SingularInertiaError("inertia matrix is numerically singular")
    qdd, _ = K.forward_dynamics(dh, q, _vec(qdot, n, "qdot"), _vec(tau, n, "tau"),
                                g, mass, com, inertia)
    return qdd


def rk4_step(model, q, qdot, tau, dt):
    """Advance the plant one step with ``tau`` held constant."""
    dh, g, mass, com, inertia = model._args()
    n = model.n
    return K.rk4_step(dh, _vec(q, n, "q"), _vec(qdot, n, "qdot"), _vec(tau, n, "tau"),
                      float(dt), g, mass, com, inertia)


def dynamic_regressor(structure, q, qdot, qr_dot, qr_ddot):
    """``Y_d`` (n x 10n) with ``Y_d @ theta_d = H qr_ddot + (1/2 Hdot + C) qr_dot + g``.

    ``structure`` is a KinematicChain (or a RobotModel, whose dynamic
    parameters are ignored).
    """
    chain = _chain(structure)
    n = chain.n
    return K.regressor(chain.dh, chain.gravity, _vec(q, n, "q"), _vec(qdot, n, "qdot"),
                       _vec(qr_dot, n, "qr_dot"), _vec(qr_ddot, n, "qr_ddot"))


def link_parameters(mass, com, inertia_com):
    """Ten lumped parameters of one link from its physical description."""
    c = np.asarray(com, dtype=float)
    I = np.asarray(inertia_com, dtype=float) + mass * (c @ c * np.eye(3) - np.outer(c, c))
    return np.array([mass, *(mass * c),
                     I[0, 0], I[0, 1], I[0, 2], I[1, 1], I[1, 2], I[2, 2]])


def true_theta_d(model):
    """Ground-truth dynamic parameter vector (length ``10 n``).

    Reserved for oracles and diagnostics; controllers never see it.
    """
    return np.concatenate([link_parameters(model.mass[i], model.com[i], model.inertia[i])
                           for i in range(model.n)])


# --- presets ---------------------------------------------------------------

def _rod_inertia(mass, length, axis, radius=0.03):
    """COM inertia of a solid cylinder along link-frame ``axis`` (0, 1 or 2)."""
    I = np.full(3, mass * (3 * radius**2 + length**2) / 12)
    I[axis] = 0.5 * mass * radius**2
    return np.diag(I)


def planar_2dof(l1=1.0, l2=1.0, m1=1.0, m2=1.0, point_mass=True, gravity=(0.0, -9.81, 0.0)):
    """Planar two-link arm in the x-y plane; gravity along -y by default.

    With ``point_mass`` the link masses sit at the distal joints (the
    textbook two-link model), otherwise each link is a uniform rod.
    """
    chain = KinematicChain([[l1, 0, 0, 0], [l2, 0, 0, 0]], gravity)
    if point_mass:
        com = np.zeros((2, 3))
        inertia = np.zeros((2, 3, 3))
    else:
        com = [[-l1 / 2, 0, 0], [-l2 / 2, 0, 0]]
        inertia = [_rod_inertia(m1, l1, 0), _rod_inertia(m2, l2, 0)]
    return RobotModel(chain, [m1, m2], com, inertia)


def pendulum(length=1.0, m=1.0, g=9.81):
    """Single point-mass pendulum hanging straight down at ``q = 0``."""
    chain = KinematicChain([[length, 0, 0, -np.pi / 2]], (0.0, -g, 0.0))
    return RobotModel(chain, [m], np.zeros((1, 3)), np.zeros((1, 3, 3)))


def elbow_3dof():
    """Yaw-pitch-pitch arm (0.3 m column, two 0.4 m links) used by the closed-loop scenarios."""
    chain = KinematicChain([
        [0.0, np.pi / 2, 0.3, 0.0],
        [0.4, 0.0, 0.0, 0.0],
        [0.4, 0.0, 0.0, 0.0],
    ])
    mass = [3.0, 2.0, 1.2]
    com = [[0.0, -0.15, 0.0], [-0.2, 0.0, 0.0], [-0.18, 0.0, 0.0]]
    inertia = [_rod_inertia(3.0, 0.3, 1, 0.05), _rod_inertia(2.0, 0.4, 0), _rod_inertia(1.2, 0.4, 0)]
    return RobotModel(chain, mass, com, inertia)


def ur5():
    """UR5 kinematics with approximate link inertias (kinematic checks only)."""
    chain = KinematicChain([
        [0.0, np.pi / 2, 0.089159, 0.0],
        [-0.425, 0.0, 0.0, 0.0],
        [-0.39225, 0.0, 0.0, 0.0],
        [0.0, np.pi / 2, 0.10915, 0.0],
        [0.0, -np.pi / 2, 0.09465, 0.0],
        [0.0, 0.0, 0.0823, 0.0],
    ])
    mass = [3.7, 8.393, 2.275, 1.219, 1.219, 0.1879]
    com = [[0, -0.02561, 0.00193], [0.2125, 0, 0.11336], [0.15, 0, 0.0265],
           [0, -0.0018, 0.01634], [0, 0.0018, 0.01634], [0, 0, -0.001159]]
    inertia = [np.diag([0.0102, 0.0102, 0.00666]), np.diag([0.2269, 0.2269, 0.0151]),
               np.diag([0.0494, 0.0494, 0.004095]), np.diag([0.1111, 0.1111, 0.21942]) * 0.0196,
               np.diag([0.1111, 0.1111, 0.21942]) * 0.0196, np.diag([0.0171, 0.0171, 0.033]) * 0.0196]
    return RobotModel(chain, mass, com, inertia)


PRESETS = {
    "planar2": planar_2dof,
    "pendulum": pendulum,
    "elbow3": elbow_3dof,
    "ur5": ur5,
}
