"""Closed-loop world: measurement model, tick ordering and the run loop.

One tick at time ``t``::

    observe -> desired_state -> controller -> record -> adapt -> RK4 plant -> t += dt

The target moves analytically, so "advancing" it is evaluating its motion
at the next tick. The Lyapunov value is evaluated here with the true
parameters; the controller never sees them.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .. import _kernels as kern
from .. import robot
from ..controller import AdaptiveState, ControllerGains, GainSpec, HybridServoController
from ..errors import ServoError, VisibilityError
from ..geometry import RgbdIntrinsics, Transform, rotation_about
from ..rig import (DEFAULT_DAMPING, FeatureSet, HybridRig, KinematicRegressor, true_theta_k,
                   true_theta_k_eih, true_theta_m)
from .metrics import DEFAULT_LYAPUNOV_C
from .scenarios import DesiredTrajectory, TargetMotion, desired_state, target_position
from .trace import TraceLog, column_names

PERTURBATION_MODES = ("lumped", "physical")
RATE_SOURCES = ("exact", "difference")


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Additive Gaussian measurement noise (pixels and depth units)."""

    pixel_sigma: float = 0.0
    depth_sigma: float = 0.0

    def __post_init__(self):
        if self.pixel_sigma < 0 or self.depth_sigma < 0:
            raise ValueError("noise standard deviations must be non-negative")

    @property
    def active(self):
        return self.pixel_sigma > 0 or self.depth_sigma > 0

    def sample(self, rng, shape):
        sig = np.array([self.pixel_sigma, self.pixel_sigma, self.depth_sigma])
        return rng.standard_normal(shape) * sig


@dataclass(frozen=True, eq=False)
class SimulationSetup:
    """Everything needed for one deterministic closed-loop run."""

    model: robot.RobotModel
    rig: HybridRig
    motion: TargetMotion
    desired: DesiredTrajectory
    gains: object
    q0: np.ndarray
    qdot0: np.ndarray = None
    dt: float = 1e-3
    T: float = 30.0
    seed: int = 0
    delta: float = 0.5
    perturbation: str = "physical"
    initial: AdaptiveState = None
    noise: NoiseModel = field(default_factory=NoiseModel)
    rates: str = "exact"
    mode: str = "hybrid"
    damping: float = DEFAULT_DAMPING
    filter_time_constant: float = None
    lyapunov_c: float = DEFAULT_LYAPUNOV_C
    divergence_limit: float = 1e4
    log_stride: int = 1
    log_estimates: bool = False

    def __post_init__(self):
        n = self.model.n
        object.__setattr__(self, "q0", np.array(self.q0, dtype=float).reshape(n))
        qd = np.zeros(n) if self.qdot0 is None else np.array(self.qdot0, dtype=float).reshape(n)
        object.__setattr__(self, "qdot0", qd)
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.T < 0:
            raise ValueError("T must be non-negative")
        if self.delta < 0 or self.delta >= 1:
            raise ValueError("delta must lie in [0, 1)")
        if self.perturbation not in PERTURBATION_MODES:
            raise ValueError(f"perturbation must be one of {PERTURBATION_MODES}")
        if self.rates not in RATE_SOURCES:
            raise ValueError(f"rates must be one of {RATE_SOURCES}")
        if self.mode not in ("hybrid", "eih"):
            raise ValueError("mode must be 'hybrid' or 'eih'")
        if self.motion.k != self.desired.k:
            raise ValueError("feature count differs between target and desired trajectory")
        if isinstance(self.gains, ControllerGains):
            if self.gains.k != self.motion.k or self.gains.n != n:
                raise ValueError("gain dimensions do not match the robot and feature count")
        elif isinstance(self.gains, GainSpec):
            self.gains.image_gain(self.motion.k)
        else:
            raise TypeError("gains must be ControllerGains or GainSpec")
        if self.log_stride < 1:
            raise ValueError("log_stride must be >= 1")

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))

    def with_(self, **changes):
        return replace(self, **changes)


# --- measurement -----------------------------------------------------------------

def _intr_vector(c):
    return np.array([c.fku, c.fkv, c.u0, c.v0, c.cot, np.sin(c.skew_angle), c.mu])


class _RigArrays:
    """Flat arrays of a rig for the compiled measurement kernel."""

    def __init__(self, rig):
        T_fB = rig.T_base_fixed.inverse()
        self.R_eE = np.ascontiguousarray(rig.T_eih_ee.rotation)
        self.t_eE = np.ascontiguousarray(rig.T_eih_ee.translation)
        self.R_fB = np.ascontiguousarray(T_fB.rotation)
        self.t_fB = np.ascontiguousarray(T_fB.translation)
        self.intr_e = _intr_vector(rig.eih_intr)
        self.intr_f = _intr_vector(rig.fixed_intr)


def observe(rig, model, q, qdot, x_B, v_B, t=None, _arrays=None):
    """Exact RGBD features and rates of base-frame points ``x_B`` moving at ``v_B``.

    Rates come from rigid-body kinematics (camera twist from the geometric
    Jacobian), not from the image Jacobians.
    """
    chain = model.chain if isinstance(model, robot.RobotModel) else model
    a = _arrays if _arrays is not None else _RigArrays(rig)
    x_B = np.ascontiguousarray(np.atleast_2d(x_B), dtype=float)
    v_B = np.ascontiguousarray(np.atleast_2d(v_B), dtype=float)
    y, yf, ydot, yfdot, depth = kern.observe_points(
        chain.dh, np.asarray(q, dtype=float), np.asarray(qdot, dtype=float),
        a.R_eE, a.t_eE, a.R_fB, a.t_fB, a.intr_e, a.intr_f, x_B, v_B)
    for col, cam in ((0, "eih"), (1, "fixed")):
        bad = np.nonzero(depth[:, col] <= 0)[0]
        if bad.size:
            f = int(bad[0])
            raise VisibilityError(f"feature {f} has non-positive depth in the {cam} camera",
                                  camera=cam, feature=f, depth=float(depth[f, col]), t=t)
    return FeatureSet(y, yf, ydot, yfdot)


# --- ground truth and initial estimates -----------------------------------------

def true_state(setup):
    """True parameter vectors in the controller's parameterization."""
    th_k = true_theta_k(setup.rig) if setup.mode == "hybrid" else true_theta_k_eih(setup.rig)
    return AdaptiveState(th_k, true_theta_m(setup.rig), robot.true_theta_d(setup.model))


def _perturbed_rig(rig, delta, rng):
    def intr(c):
        f = rng.uniform(1 - delta, 1 + delta, size=5)
        return RgbdIntrinsics(c.fku * f[0], c.fkv * f[1], c.u0 * f[2], c.v0 * f[3], c.skew_angle, c.mu * f[4])

    def pose(T):
        # rotation error angle up to delta rad about a random axis, translation scaled per entry
        axis = rng.standard_normal(3)
        ang = rng.uniform(-delta, delta)
        R = rotation_about(axis, ang) @ T.rotation
        return Transform(R, T.translation * rng.uniform(1 - delta, 1 + delta, size=3))

    return HybridRig(intr(rig.eih_intr), intr(rig.fixed_intr), pose(rig.T_eih_ee), pose(rig.T_base_fixed))


def initial_estimates(setup, rng):
    """Initial estimates for ``setup``: given, or truth perturbed with ``delta``.

    ``lumped`` scales every entry of the true vectors by an independent
    factor in [1-delta, 1+delta]. ``physical`` draws a miscalibrated rig
    instead (intrinsics and translations scaled in the same range, mount
    rotations off by up to ``delta`` rad) and takes its exact parameter
    vectors, so the products inside the lumped vectors stay consistent.
    Dynamic parameters are always perturbed entrywise.
    """
    if setup.initial is not None:
        return setup.initial
    truth = true_state(setup)
    d = setup.delta
    if setup.perturbation == "lumped":
        th_k = truth.theta_k * rng.uniform(1 - d, 1 + d, truth.theta_k.shape)
        th_m = truth.theta_m * rng.uniform(1 - d, 1 + d, truth.theta_m.shape)
    else:
        rig = _perturbed_rig(setup.rig, d, rng) if d > 0 else setup.rig
        th_k = true_theta_k(rig) if setup.mode == "hybrid" else true_theta_k_eih(rig)
        th_m = true_theta_m(rig)
    th_d = truth.theta_d * rng.uniform(1 - d, 1 + d, truth.theta_d.shape)
    return AdaptiveState(th_k, th_m, th_d)


def resolve_gains(setup, initial, features):
    """Concrete gains for the controller from a :class:`GainSpec`, using only
    what the controller itself has at start: its estimates and the first
    measurement."""
    spec = setup.gains
    n, k = setup.model.n, setup.motion.k
    y, yf, _, _ = features.stacked()
    source = "fixed" if setup.mode == "hybrid" else "eih"
    reg = KinematicRegressor(setup.model.chain, y, yf if source == "fixed" else None, setup.q0, source=source)
    k_regs = [reg.Y(e) for e in np.eye(n)]
    m_regs = [reg.W(e) for e in np.eye(3 * k)] if source == "fixed" else None
    return spec.resolve(n, k, initial, k_regs, m_regs)


def lyapunov_value(gains, setup, truth, state, q, s_q, dy):
    """``V = s^T H s / 2 + dy^T K1 dy / 2 + sum dth^T Psi dth / 2``."""
    g = gains
    H = robot.inertia_matrix(setup.model, q)
    V = 0.5 * s_q @ H @ s_q + 0.5 * dy @ g.K1 @ dy
    for est, true, Psi in ((state.theta_d, truth.theta_d, g.Psi_d),
                           (state.theta_k, truth.theta_k, g.Psi_k),
                           (state.theta_m, truth.theta_m, g.Psi_m)):
        e = est - true
        V += 0.5 * e @ Psi @ e
    return float(V)


# --- the loop ----------------------------------------------------------------------

@dataclass(eq=False)
class WorldState:
    t: float
    tick: int
    q: np.ndarray
    qdot: np.ndarray
    features: FeatureSet = None
    prev_measured: tuple = None


class Simulation:
    """Owns the world state, the controller and the RNG streams of one run."""

    def __init__(self, setup):
        self.setup = setup
        est_seq, noise_seq = np.random.SeedSequence(setup.seed).spawn(2)
        self.truth = true_state(setup)
        initial = initial_estimates(setup, np.random.default_rng(est_seq))
        self.noise_rng = np.random.default_rng(noise_seq)
        self._rig_arrays = _RigArrays(setup.rig)
        self.world = WorldState(0.0, 0, setup.q0.copy(), setup.qdot0.copy())
        self._pending = None
        self.gains = setup.gains
        if isinstance(self.gains, GainSpec):
            self._pending = self.measure()
            self.gains = resolve_gains(setup, initial, self._pending)
        self.controller = HybridServoController(
            setup.model.chain, self.gains, initial, setup.dt, mode=setup.mode,
            damping=setup.damping, filter_time_constant=setup.filter_time_constant)
        self.columns = column_names(setup.model.n, setup.motion.k, setup.log_estimates,
                                    (len(initial.theta_k), len(initial.theta_m), len(initial.theta_d)))

    def time_at(self, tick):
        return tick * self.setup.dt

    def measure(self):
        """Feature measurements at the current world state (noise and rate model applied)."""
        if self._pending is not None:
            feats, self._pending = self._pending, None
            return feats
        s, w = self.setup, self.world
        x_B, v_B, _ = target_position(s.motion, w.t)
        feats = observe(s.rig, s.model, w.q, w.qdot, x_B, v_B, t=w.t, _arrays=self._rig_arrays)
        if not s.noise.active and s.rates == "exact":
            return feats
        y, yf = feats.y, feats.y_fixed
        if s.noise.active:
            y = y + s.noise.sample(self.noise_rng, y.shape)
            yf = yf + s.noise.sample(self.noise_rng, yf.shape)
        y_dot, yf_dot = feats.y_dot, feats.y_fixed_dot
        if s.rates == "difference":
            if w.prev_measured is None:
                y_dot, yf_dot = np.zeros_like(y), np.zeros_like(yf)
            else:
                y_dot = (y - w.prev_measured[0]) / s.dt
                yf_dot = (yf - w.prev_measured[1]) / s.dt
        return FeatureSet(y, yf, y_dot, yf_dot)

    def evaluate(self):
        """Controller output and trace record at the current state, no side effects
        beyond the noise stream."""
        s, w = self.setup, self.world
        feats = self.measure()
        des = desired_state(s.desired, w.t)
        out = self.controller.compute(w.q, w.qdot, feats, des)
        st = self.controller.state
        V = lyapunov_value(self.gains, s, self.truth, st, w.q, out.s_q, out.dy)
        y, yf, ydot, yfdot = feats.stacked()
        dydot = ydot - des.y_d_dot
        row = [w.t, *w.q, *w.qdot, *out.tau, *y, *des.y_d, *out.dy, *yf, *ydot, *yfdot, *des.y_d_dot,
               *out.s_q, np.linalg.norm(out.dy), np.linalg.norm(dydot), np.linalg.norm(out.s_q), V]
        if s.log_estimates:
            row += [*st.theta_k, *st.theta_m, *st.theta_d]
        return feats, out, row

    def advance(self, feats, out):
        s, w = self.setup, self.world
        self.controller.commit(out)
        q, qd = robot.rk4_step(s.model, w.q, w.qdot, out.tau, s.dt)
        self.world = WorldState(self.time_at(w.tick + 1), w.tick + 1, q, qd, feats,
                                (feats.y, feats.y_fixed))

    def step(self):
        feats, out, row = self.evaluate()
        self.advance(feats, out)
        return row

    def run(self):
        s = self.setup
        rows = []
        meta = {"status": "complete", "dt": repr(s.dt), "n": s.model.n, "k": s.motion.k,
                "mode": s.mode, "seed": s.seed, "stride": s.log_stride}
        N = s.n_steps
        try:
            for i in range(N + 1):
                feats, out, row = self.evaluate()
                if i % s.log_stride == 0:
                    rows.append(row)
                if not np.all(np.isfinite(row)):
                    raise FloatingPointError("non-finite value in closed loop")
                dyn = np.linalg.norm(out.dy)
                if dyn > s.divergence_limit:
                    meta["status"] = "diverged"
                    meta["error"] = f"t={self.world.t:.6g}: image error norm {dyn:.6g} exceeds limit"
                    break
                if i < N:
                    self.advance(feats, out)
        except (ServoError, FloatingPointError, np.linalg.LinAlgError) as exc:
            meta["status"] = "aborted"
            msg = str(exc)
            if isinstance(exc, VisibilityError) or msg.startswith("t="):
                meta["error"] = msg
            else:
                meta["error"] = f"t={self.world.t:.6g}: {type(exc).__name__}: {msg}"
        meta["records"] = len(rows)
        return TraceLog(self.columns, np.array(rows, dtype=float).reshape(-1, len(self.columns)), meta)


def step(sim):
    """Advance ``sim`` by one tick; returns the record of the tick just taken."""
    return sim.step()


def run(setup):
    return Simulation(setup).run()
