import math

import numpy as np
import pytest

from hybrid_servo import robot
from hybrid_servo.controller import GainSpec
from hybrid_servo.errors import TraceFormatError, VisibilityError
from hybrid_servo.simulation import (BASELINE_LABEL, DesiredTrajectory, NoiseModel, Simulation, TargetMotion,
                                     TraceLog, baseline_setup, build_scene, column_names, desired_state,
                                     lyapunov_violations, metrics, observe, rms, run, settling_time,
                                     target_position)
from hybrid_servo.simulation.presets import DEFAULT_Q0, eih_camera_pose


def hold_scene(**kw):
    """Static target, desired image equal to the start image, exact estimates."""
    args = dict(kind="static", shift=(0.0, 0.0, 0.0), spiral_radius=0.0, pitch=0.0, delta=0.0)
    args.update(kw)
    return build_scene(**args)


# --- target motion and desired trajectory ---------------------------------------------------

def test_circle_phase_zero_and_period():
    m = TargetMotion("circle", center=(1.0, 2.0, 3.0), normal=(1, 0, 0), radius=0.1, angular_rate=0.5)
    p, v, a = target_position(m, 0.0)
    np.testing.assert_allclose(p[0], m.center + 0.1 * m.e1, atol=1e-15)
    np.testing.assert_allclose(v[0], 0.05 * m.e2, atol=1e-15)
    np.testing.assert_allclose(target_position(m, 2 * np.pi / 0.5)[0], p, atol=1e-12)


def test_rectangle_speed_and_smoothness():
    m = TargetMotion("rectangle", normal=(0, 0, 1), width=0.2, height=0.1, speed=0.02)
    h = 1e-6
    T = m.perimeter() / m.speed
    t = np.linspace(h, T - h, 2001)
    prev = None
    for ti in t:
        p, v, _ = target_position(m, ti)
        fd = (target_position(m, ti + h)[0] - target_position(m, ti - h)[0]) / (2 * h)
        # constant speed along the path, velocity consistent with position
        assert np.linalg.norm(fd[0]) == pytest.approx(0.02, abs=1e-9)
        np.testing.assert_allclose(v[0], fd[0], atol=1e-6)
        if prev is not None:
            # C1: no velocity jumps between neighboring samples
            assert np.linalg.norm(v[0] - prev) < 0.02 * (t[1] - t[0]) * m.speed / m.corner_radius * 1.01
        prev = v[0]
    np.testing.assert_allclose(target_position(m, T)[0], target_position(m, 0.0)[0], atol=1e-12)


def test_rectangle_rejects_bad_corner():
    with pytest.raises(ValueError):
        TargetMotion("rectangle", width=0.2, height=0.1, corner_radius=0.06)


def test_features_move_rigidly():
    off = np.array([[0.01, 0, 0], [0, 0.01, 0], [0, 0, 0.01]])
    m = TargetMotion("circle", radius=0.1, offsets=off)
    p, v, _ = target_position(m, 1.3)
    np.testing.assert_allclose(p - p[0], off - off[0], atol=1e-15)
    np.testing.assert_array_equal(v, np.tile(v[0], (3, 1)))


def test_desired_phase_zero():
    tr = DesiredTrajectory([[100.0, 200.0, 0.5]], radius=30.0, pitch=0.05, angular_rate=0.5)
    d = desired_state(tr, 0.0)
    np.testing.assert_allclose(d.y_d, [130.0, 200.0, 0.5])
    np.testing.assert_allclose(d.y_d_dot, [0.0, 15.0, 0.05 * 0.5 / (2 * np.pi)])


def test_desired_derivatives_match_finite_differences(rng):
    tr = DesiredTrajectory([[100.0, 200.0, 0.5], [110.0, 190.0, 0.6]], radius=30.0, pitch=0.05, angular_rate=0.7)
    h = 1e-6
    for t in rng.uniform(0.1, 20, 10):
        d = desired_state(tr, t)
        fd = (desired_state(tr, t + h).y_d - desired_state(tr, t - h).y_d) / (2 * h)
        np.testing.assert_allclose(fd, d.y_d_dot, atol=1e-6)
        fdd = (desired_state(tr, t + h).y_d_dot - desired_state(tr, t - h).y_d_dot) / (2 * h)
        np.testing.assert_allclose(fdd, d.y_d_ddot, atol=1e-6)


def test_zero_radius_spiral_is_depth_ramp():
    tr = DesiredTrajectory([[100.0, 200.0, 0.5]], radius=0.0, pitch=0.1, angular_rate=2.0)
    for t in (0.0, 1.0, 7.5):
        np.testing.assert_allclose(desired_state(tr, t).y_d, [100.0, 200.0, 0.5 + 0.1 * 2.0 * t / (2 * np.pi)])


# --- measurement ---------------------------------------------------------------------------------

def test_feature_on_optical_axis(scene):
    cam = eih_camera_pose(scene.model, scene.q0, scene.rig.T_eih_ee.inverse())
    x = cam.translation + 0.37 * cam.rotation[:, 2]
    f = observe(scene.rig, scene.model, scene.q0, np.zeros(3), x, np.zeros(3))
    c = scene.rig.eih_intr
    np.testing.assert_allclose(f.y[0], [c.u0, c.v0, c.mu * 0.37], atol=1e-9)


def test_observe_is_deterministic(scene):
    args = (scene.rig, scene.model, scene.q0, np.zeros(3), scene.motion.center, np.zeros(3))
    a, b = observe(*args), observe(*args)
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.y_fixed, b.y_fixed)


def test_observe_behind_camera(scene):
    cam = eih_camera_pose(scene.model, scene.q0, scene.rig.T_eih_ee.inverse())
    x = cam.translation - 0.3 * cam.rotation[:, 2]
    with pytest.raises(VisibilityError) as err:
        observe(scene.rig, scene.model, scene.q0, np.zeros(3), x, np.zeros(3), t=1.5)
    assert err.value.camera == "eih" and "t=1.5" in str(err.value)


def test_noise_statistics():
    N = 100_000
    draws = NoiseModel(pixel_sigma=1.0, depth_sigma=0.01).sample(np.random.default_rng(7), (N, 3))
    bound = 3 * np.array([1.0, 1.0, 0.01]) / np.sqrt(N)
    assert np.all(np.abs(draws.mean(axis=0)) < bound)
    np.testing.assert_allclose(draws.std(axis=0), [1.0, 1.0, 0.01], rtol=0.01)


def test_noisy_measurements_are_seeded(scene):
    noisy = scene.with_(noise=NoiseModel(pixel_sigma=1.0), T=0.0)
    a, b = Simulation(noisy).run(), Simulation(noisy).run()
    clean = Simulation(scene).run()
    np.testing.assert_array_equal(a.data, b.data)
    assert np.any(a.get("y") != clean.get("y"))


def test_difference_rates_start_at_zero(scene):
    tr = Simulation(scene.with_(rates="difference", T=0.003)).run()
    np.testing.assert_array_equal(tr.get("y_dot")[0], 0)
    assert np.any(tr.get("y_dot")[1] != 0)


# --- tick ordering and the run loop ------------------------------------------------------------

def _rk4(model, q, qd, tau, h):
    def f(q, qd):
        return qd, robot.forward_dynamics(model, q, qd, tau)

    k1 = f(q, qd)
    k2 = f(q + h / 2 * k1[0], qd + h / 2 * k1[1])
    k3 = f(q + h / 2 * k2[0], qd + h / 2 * k2[1])
    k4 = f(q + h * k3[0], qd + h * k3[1])
    return (q + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
            qd + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]))


def test_one_tick_is_rk4_of_forward_dynamics():
    model = robot.elbow_3dof().with_gravity((0.0, 0.0, 0.0))
    setup = build_scene(model, DEFAULT_Q0["elbow3"], qdot0=(0.1, -0.2, 0.3), T=0.001)
    tr = run(setup)
    q, qd = _rk4(model, tr.get("q")[0], tr.get("qdot")[0], tr.get("tau")[0], setup.dt)
    np.testing.assert_allclose(tr.get("q")[1], q, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(tr.get("qdot")[1], qd, rtol=1e-10, atol=1e-13)


def test_equilibrium_hold():
    tr = run(hold_scene(T=1.0))
    assert tr.status == "complete"
    assert np.max(tr.get("dy_norm")) < 1e-6


def test_same_seed_same_trace(scene):
    setup = scene.with_(T=0.1, seed=11)
    assert run(setup).to_csv() == run(setup).to_csv()
    assert run(setup).to_csv() != run(setup.with_(seed=12)).to_csv()


def test_zero_horizon_single_record(scene):
    tr = run(scene)
    assert len(tr) == 1 and tr.t[0] == 0.0


def test_doubled_dt_halves_records(scene):
    a, b = run(scene.with_(T=0.2, dt=1e-3)), run(scene.with_(T=0.2, dt=2e-3))
    assert len(a) - 1 == 2 * (len(b) - 1)


def test_log_stride_keeps_spacing(scene):
    tr = run(scene.with_(T=0.05, log_stride=10))
    assert len(tr) == 6
    np.testing.assert_allclose(np.diff(tr.t), 0.01, rtol=1e-9)


def test_divergence_stops_run(scene):
    tr = run(scene.with_(T=1.0, divergence_limit=1.0))
    assert tr.status == "diverged" and len(tr) == 1 and "exceeds limit" in tr.meta["error"]


def test_visibility_abort_keeps_partial_trace(scene):
    cam = eih_camera_pose(scene.model, scene.q0, scene.rig.T_eih_ee.inverse())
    axis = cam.rotation[:, 2]
    side = np.cross(axis, [0.0, 0.0, 1.0])
    # a circle in a plane containing the optical axis sweeps behind the camera
    setup = build_scene(normal=side, radius=0.6, rate=3.0, T=3.0)
    tr = run(setup)
    assert tr.status == "aborted"
    assert 1 < len(tr) < setup.n_steps + 1
    assert tr.meta["error"].startswith("t=")


def test_trace_columns(scene):
    tr = run(scene.with_(log_estimates=True))
    assert tr.columns == column_names(3, 1, True, (117, 81, 30))
    assert tr.get("y").shape == (1, 3) and tr.get("theta_k").shape == (1, 117)


def test_setup_validation(scene):
    with pytest.raises(ValueError):
        scene.with_(dt=0.0)
    with pytest.raises(ValueError):
        scene.with_(delta=1.0)
    with pytest.raises(ValueError):
        scene.with_(mode="other")
    with pytest.raises(TypeError):
        scene.with_(gains="fast")


# --- trace files ---------------------------------------------------------------------------------

def test_trace_round_trip(scene):
    tr = run(scene.with_(T=0.01))
    text = tr.to_csv()
    back = TraceLog.from_csv(text)
    np.testing.assert_array_equal(back.data, tr.data)
    assert back.to_csv() == text


@pytest.mark.parametrize("body, record", [
    ("t,a\n0,1\n0.1,2,3\n", 1),
    ("t,a\n0,1\n0.1,x\n", 1),
    ("t,a\n0,1\n0,2\n", 1),
])
def test_malformed_trace(body, record):
    with pytest.raises(TraceFormatError) as err:
        TraceLog.from_csv(body)
    assert err.value.record == record and str(err.value).startswith(f"record {record}:")


def test_trace_without_header():
    with pytest.raises(TraceFormatError):
        TraceLog.from_csv("# status=complete\n")


# --- metrics --------------------------------------------------------------------------------------

def synthetic(t, dy, V=None):
    cols = column_names(1, 1)
    data = np.zeros((len(t), len(cols)))
    data[:, 0] = t
    data[:, cols.index("dy_0")] = dy
    data[:, cols.index("dy_norm")] = np.abs(dy)
    data[:, cols.index("V")] = np.zeros(len(t)) if V is None else V
    return TraceLog(cols, data, {"status": "complete"})


def test_rms_of_constant():
    t = np.arange(100) * 0.01
    m = metrics(synthetic(t, np.full(100, 2.5)))
    assert m["rms_final"] == pytest.approx(2.5)
    assert m["relative_rms_final"] == pytest.approx(1.0) and not m["converged"]


def test_settling_time_of_exponential():
    lam, dt = 2.0, 1e-3
    t = np.arange(0, 5, dt)
    ts = settling_time(t, np.exp(-lam * t))
    assert abs(ts - math.log(20) / lam) <= dt
    assert settling_time(t, np.ones_like(t)) == math.inf
    assert settling_time(t, np.r_[1.0, np.full(len(t) - 1, 0.01)]) == pytest.approx(dt)
    assert settling_time(t, np.linspace(1, 2, len(t))) == math.inf


def test_violation_counts():
    assert lyapunov_violations(np.linspace(5, 1, 50), 0.01, 1.0) == 0
    V = np.array([5.0, 4.0, 4.0 + 0.5e-4, 4.0 + 3e-4])
    assert lyapunov_violations(V, 0.01, 1.0) == 1
    m = metrics(synthetic(np.arange(4) * 0.01, np.ones(4), V), lyapunov_c=1.0)
    assert m["v_violations"] == 1


def test_metrics_converged_and_empty():
    t = np.arange(0, 10, 0.01)
    m = metrics(synthetic(t, np.exp(-3 * t)))
    assert m["converged"] and m["rms_final"] < 1e-3
    assert rms([3.0, 4.0]) == pytest.approx(math.sqrt(12.5))
    with pytest.raises(ValueError):
        metrics(TraceLog(column_names(1, 1), np.zeros((0, len(column_names(1, 1))))))


# --- baseline ------------------------------------------------------------------------------------

def test_baseline_coincides_for_static_target():
    hybrid = build_scene(kind="static", delta=0.0, T=0.0)
    a, b = run(hybrid), run(baseline_setup(hybrid))
    assert b.meta["mode"] == "eih"
    np.testing.assert_allclose(b.get("tau"), a.get("tau"), rtol=1e-8)
    np.testing.assert_allclose(b.get("s_q"), a.get("s_q"), rtol=1e-8)


def test_baseline_is_deterministic():
    setup = baseline_setup(build_scene(T=0.1, seed=4))
    assert run(setup).to_csv() == run(setup).to_csv()
    assert "approximation" in BASELINE_LABEL


def test_default_gains():
    g = GainSpec()
    assert g.lam > 0 and g.psi_scaling == "normalized"
