"""Quick property suite bundled with the package (``hybrid-servo selftest``).

Each check is a reduced version of a test in the repository test suite,
small enough to run in seconds on an installed package.
"""

import time

import numpy as np

from .. import robot
from ..rig import KinematicRegressor, image_jacobians, true_theta_k, true_theta_m
from ..simulation import Simulation, TraceLog, build_scene, observe


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def check_regressors(rng, samples=50):
    setup = build_scene(T=0.0)
    model, rig = setup.model, setup.rig
    th_k, th_m, th_d = true_theta_k(rig), true_theta_m(rig), robot.true_theta_d(model)
    worst = 0.0
    for _ in range(samples):
        q = setup.q0 + rng.uniform(-0.3, 0.3, model.n)
        x = setup.motion.center + rng.uniform(-0.05, 0.05, 3)
        f = observe(rig, model, q, np.zeros(model.n), x, np.zeros(3))
        y, yf = f.y.ravel(), f.y_fixed.ravel()
        Q, J = image_jacobians(rig, model.chain, q, f.y_fixed)
        reg = KinematicRegressor(model.chain, y, yf, q)
        phi_q, phi_f = rng.standard_normal(model.n), rng.standard_normal(3)
        qd, qrd, qrdd = (rng.standard_normal(model.n) for _ in range(3))
        tau = (robot.inertia_matrix(model, q) @ qrdd + robot.christoffel_matrix(model, q, qd) @ qrd
               + robot.gravity_vector(model, q))
        worst = max(worst, _rel(reg.Y(phi_q) @ th_k, Q @ phi_q), _rel(reg.W(phi_f) @ th_m, J @ phi_f),
                    _rel(robot.dynamic_regressor(model.chain, q, qd, qrd, qrdd) @ th_d, tau))
    return worst < 1e-9, f"max relative error {worst:.2e}"


def check_skew(rng, samples=200):
    model = robot.elbow_3dof()
    worst = 0.0
    for _ in range(samples):
        q, qd, psi = (rng.standard_normal(3) for _ in range(3))
        worst = max(worst, abs(psi @ robot.coriolis_matrix(model, q, qd) @ psi))
    return worst < 1e-12, f"max |psi^T C psi| {worst:.2e}"


def check_energy(_rng):
    model = robot.elbow_3dof().with_gravity((0.0, 0.0, 0.0))
    q, qd = np.array([0.1, 0.5, -0.4]), np.array([0.8, -0.5, 1.0])
    E0 = robot.kinetic_energy(model, q, qd)
    for _ in range(1000):
        q, qd = robot.rk4_step(model, q, qd, np.zeros(3), 1e-3)
    drift = abs(robot.kinetic_energy(model, q, qd) - E0) / E0
    return drift < 1e-6, f"relative drift over 1 s {drift:.2e}"


def check_determinism(_rng):
    setup = build_scene(T=0.2, seed=3)
    a, b = Simulation(setup).run().to_csv(), Simulation(setup).run().to_csv()
    same = a == b and TraceLog.from_csv(a).to_csv() == a
    return same, "identical traces and bit-exact reload" if same else "traces differ"


CHECKS = {
    "regressor identities": check_regressors,
    "skew symmetry": check_skew,
    "kinetic energy conservation": check_energy,
    "determinism": check_determinism,
}


def selftest(seed=0, out=print):
    """Run every check; returns the number of failures."""
    rng = np.random.default_rng(seed)
    failures = 0
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # a crash is a failed check, keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        failures += not ok
        out(f"{'PASS' if ok else 'FAIL'}  {name}: {detail} ({time.perf_counter() - t0:.1f}s)")
    return failures
