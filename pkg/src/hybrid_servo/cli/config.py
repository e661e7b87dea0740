"""Run configuration: a flat ``key = value`` text format.

Grammar, one entry per line::

    # comment
    section.name = value

Blank lines and ``#`` comments are ignored. A value is JSON (numbers,
``true``/``false``, ``null``, lists and nested lists); anything that is not
valid JSON is taken as a bare string, so ``scenario.kind = circle`` works
without quotes. ``auto`` asks for the derived default documented in
:data:`SCHEMA`. Keys are case-sensitive, each may appear once, and unknown
keys are rejected.

``robot.preset`` (or ``robot.dh`` plus the link inertial keys) and
``rig.preset`` have no defaults; every other key does.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .. import robot
from ..controller import GainSpec, _spd
from ..errors import ConfigError
from ..rig import P1, P2
from ..simulation.presets import (DEFAULT_Q0, EIH_INTRINSICS, EIH_ROTATION, EIH_TRANSLATION,
                                  FIXED_INTRINSICS, build_scene)
from ..simulation.metrics import DEFAULT_LYAPUNOV_C
from ..simulation.world import NoiseModel

AUTO = "auto"
OUTPUT_ENV = "HYBRID_SERVO_OUT"


# --- value checkers ---------------------------------------------------------------
# Each takes (key, raw value) and returns the canonical JSON-compatible value.

def _fail(key, msg):
    raise ConfigError(msg, field=key)


def _number(key, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(key, f"expected a number, got {v!r}")
    if not math.isfinite(v):
        _fail(key, "must be finite")
    return float(v)


def real(lo=None, hi=None, lo_open=False, hi_open=False):
    def check(key, v):
        x = _number(key, v)
        if lo is not None and (x < lo or (lo_open and x == lo)):
            _fail(key, f"must be {'>' if lo_open else '>='} {lo:g}, got {x:g}")
        if hi is not None and (x > hi or (hi_open and x == hi)):
            _fail(key, f"must be {'<' if hi_open else '<='} {hi:g}, got {x:g}")
        return x
    return check


def integer(lo=None):
    def check(key, v):
        if isinstance(v, bool) or not isinstance(v, int):
            _fail(key, f"expected an integer, got {v!r}")
        if lo is not None and v < lo:
            _fail(key, f"must be >= {lo}, got {v}")
        return int(v)
    return check


def choice(*options):
    def check(key, v):
        if v not in options:
            _fail(key, f"must be one of {', '.join(map(str, options))}; got {v!r}")
        return v
    return check


def boolean(key, v):
    if not isinstance(v, bool):
        _fail(key, f"expected true or false, got {v!r}")
    return v


def text(key, v):
    if not isinstance(v, str) or not v:
        _fail(key, "expected a non-empty string")
    return v


def array(*shape):
    """Nested list of numbers; ``None`` in ``shape`` matches any length."""
    def check(key, v):
        try:
            a = np.array(v, dtype=float)
        except (TypeError, ValueError):
            _fail(key, f"expected a numeric array, got {v!r}")
        if a.ndim != len(shape) or any(s is not None and s != d for s, d in zip(shape, a.shape)):
            want = "x".join("N" if s is None else str(s) for s in shape)
            _fail(key, f"expected shape {want}, got {a.shape}")
        if not np.all(np.isfinite(a)):
            _fail(key, "must be finite")
        return a.tolist()
    return check


def gain(key, v):
    """Scalar, per-axis vector or square matrix; definiteness is checked later."""
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return _number(key, v)
    a = np.array(v, dtype=float) if isinstance(v, list) else None
    if a is None or a.ndim not in (1, 2) or not np.all(np.isfinite(a)):
        _fail(key, "expected a number, a vector or a square matrix")
    return a.tolist()


def auto_or(check):
    def wrapped(key, v):
        return AUTO if v == AUTO else check(key, v)
    return wrapped


def null_or(check):
    def wrapped(key, v):
        return None if v is None else check(key, v)
    return wrapped


# --- schema -------------------------------------------------------------------------

_REQUIRED = object()

# key: (default, checker, description)
SCHEMA = {
    "robot.preset": (None, null_or(choice(*sorted(robot.PRESETS))), "named arm; required unless robot.dh is given"),
    "robot.dh": (None, null_or(array(None, 4)), "D-H rows (a, alpha, d, theta offset)"),
    "robot.mass": (None, null_or(array(None)), "link masses, kg (with robot.dh)"),
    "robot.com": (None, null_or(array(None, 3)), "link COMs in link frames, m (with robot.dh)"),
    "robot.inertia": (None, null_or(array(None, 3, 3)), "COM inertias, kg m^2 (with robot.dh)"),
    "robot.gravity": (AUTO, auto_or(array(3)), "gravity vector; auto keeps the preset's, else (0, 0, -9.81)"),
    "robot.q0": (AUTO, auto_or(array(None)), "start configuration; auto uses the preset default"),
    "robot.qdot0": (AUTO, auto_or(array(None)), "start joint rates; auto is zero"),
    "rig.preset": (_REQUIRED, choice("default"), "camera rig baseline; rig.eih.* and rig.fixed.* override it"),
    "rig.eih.intrinsics": (list(EIH_INTRINSICS), array(6), "fku, fkv, u0, v0, skew angle deg, mu"),
    "rig.eih.rotation": ([list(r) for r in EIH_ROTATION], array(3, 3), "camera orientation in the end-effector frame"),
    "rig.eih.translation": (list(EIH_TRANSLATION), array(3), "camera position in the end-effector frame, m"),
    "rig.fixed.intrinsics": (list(FIXED_INTRINSICS), array(6), "fku, fkv, u0, v0, skew angle deg, mu"),
    "rig.fixed.position": (AUTO, auto_or(array(3)), "fixed camera position; auto is target center + (0.2, -0.9, 0.4)"),
    "rig.fixed.look_at": (AUTO, auto_or(array(3)), "point the fixed camera looks at; auto is the target center"),
    "rig.fixed.up": ([0.0, 0.0, 1.0], array(3), "fixed camera up direction"),
    "scenario.kind": ("circle", choice("circle", "rectangle", "static"), "target motion"),
    "scenario.center": (AUTO, auto_or(array(3)), "motion center; auto is standoff along the eye-in-hand axis at q0"),
    "scenario.standoff": (0.4, real(0, lo_open=True), "distance of the auto center from the eye-in-hand camera, m"),
    "scenario.normal": (AUTO, auto_or(array(3)), "motion plane normal; auto faces the eye-in-hand camera"),
    "scenario.radius": (0.05, real(0), "circle radius, m"),
    "scenario.rate": (0.5, real(), "circle angular rate, rad/s"),
    "scenario.width": (0.2, real(0, lo_open=True), "rectangle width, m"),
    "scenario.height": (0.1, real(0, lo_open=True), "rectangle height, m"),
    "scenario.speed": (0.02, real(0, lo_open=True), "rectangle traversal speed, m/s"),
    "scenario.corner_radius": (AUTO, auto_or(real(0, lo_open=True)), "rectangle corner radius; auto is 10% of the short side"),
    "scenario.features": (1, integer(1), "number of rigidly attached feature points"),
    "scenario.feature_spacing": (0.015, real(0, lo_open=True), "feature distance from the target center, m"),
    "desired.anchor": (AUTO, auto_or(array(None, 3)), "spiral anchor per feature; auto gives y_d(0) = y(0) + shift"),
    "desired.shift": ([90.0, -40.0, 0.0], array(3), "initial offset of the desired trajectory from y(0)"),
    "desired.radius": (30.0, real(0), "spiral radius, px"),
    "desired.pitch": (0.05, real(), "depth advance per revolution"),
    "desired.rate": (0.5, real(), "spiral angular rate, rad/s"),
    "gains.lambda": (GainSpec.lam, real(0, lo_open=True), "image error convergence rate, 1/s"),
    "gains.k1": (list(GainSpec.k1), gain, "image gain: scalar, (u, v, d) weights or 3k x 3k matrix"),
    "gains.k2": (GainSpec.k2, gain, "joint gain: scalar, n weights or n x n matrix"),
    "gains.psi_d": (GainSpec.psi_d, gain, "dynamic adaptation gain"),
    "gains.psi_k": (GainSpec.psi_k, gain, "kinematic (Q) adaptation gain"),
    "gains.psi_m": (GainSpec.psi_m, gain, "fixed-camera (J) adaptation gain"),
    "gains.psi_scaling": (GainSpec.psi_scaling, choice("normalized", "none"), "how psi_* are turned into matrices"),
    "gains.psi_ridge": (GainSpec.psi_ridge, real(0, lo_open=True), "ridge of the normalized kinematic gains"),
    "estimates.delta": (0.5, real(0, 1, hi_open=True), "relative initial-estimate perturbation"),
    "estimates.perturbation": ("physical", choice("physical", "lumped"), "how the perturbation is drawn"),
    "controller.mode": ("hybrid", choice("hybrid", "eih"), "hybrid scheme or eye-in-hand baseline"),
    "controller.damping": (1e-4, real(0), "damped pseudo-inverse regularization"),
    "controller.filter_time_constant": (AUTO, auto_or(real(0)), "qr_ddot filter time constant, s; auto is 10 dt"),
    "sim.dt": (1e-3, real(0, lo_open=True), "tick length, s"),
    "sim.T": (30.0, real(0), "run length, s"),
    "sim.seed": (0, integer(0), "master seed"),
    "sim.rates": ("exact", choice("exact", "difference"), "measured feature rates: exact or backward differences"),
    "sim.divergence_limit": (1e4, real(0, lo_open=True), "|dy| that counts as divergence"),
    "sim.workers": (1, integer(1), "parallel processes for sweeps"),
    "noise.pixel_sigma": (0.0, real(0), "pixel noise standard deviation"),
    "noise.depth_sigma": (0.0, real(0), "depth noise standard deviation"),
    "trace.stride": (1, integer(1), "record every stride-th tick"),
    "trace.estimates": (False, boolean, "log the parameter estimates"),
    "lyapunov.c": (DEFAULT_LYAPUNOV_C, real(0), "allowed V increase per record is c h^2"),
    "output.dir": ("out", text, "output directory (overridden by --out, then $" + OUTPUT_ENV + ")"),
    "output.trace": ("trace.csv", text, "trace file name"),
    "output.summary": ("summary.json", text, "summary file name"),
}


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Validated configuration; ``values`` holds every key of :data:`SCHEMA`."""

    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values

    def with_overrides(self, overrides):
        """New config with ``{key: raw value}`` applied and revalidated."""
        vals = dict(self.values)
        for key, raw in overrides.items():
            vals[key] = _check_entry(key, raw)
        return _validate(vals)


# --- parsing -------------------------------------------------------------------------

def parse_value(raw):
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _check_entry(key, raw, line=None):
    if key not in SCHEMA:
        raise ConfigError(f"unknown key {key!r}", line=line)
    try:
        return SCHEMA[key][1](key, raw)
    except ConfigError as exc:
        if line is None:
            raise
        raise ConfigError(exc.detail, line=line, field=exc.field) from None


def parse_entries(text):
    """``{key: checked value}`` for the lines of ``text``, without cross-field checks."""
    seen = {}
    for no, line in enumerate(text.splitlines(), start=1):
        body = line.strip()
        if not body or body.startswith("#"):
            continue
        key, sep, raw = body.partition("=")
        key = key.strip()
        if not sep or not key or any(c.isspace() for c in key):
            raise ConfigError(f"expected 'key = value', got {body!r}", line=no)
        if not raw.strip():
            raise ConfigError(f"missing value for {key!r}", line=no)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r}", line=no)
        seen[key] = _check_entry(key, parse_value(raw), line=no)
    return seen


def parse_config(text):
    """Parse and fully validate configuration text into a :class:`RunConfig`."""
    entries = parse_entries(text)
    vals = {}
    for key, (default, _, _) in SCHEMA.items():
        if key in entries:
            vals[key] = entries[key]
        elif default is _REQUIRED:
            raise ConfigError("required key is missing", field=key)
        else:
            vals[key] = default
    return _validate(vals)


def default_config(**overrides):
    """The minimal configuration (elbow arm, default rig) plus ``overrides``."""
    cfg = parse_config("robot.preset = elbow3\nrig.preset = default\n")
    return cfg.with_overrides(overrides) if overrides else cfg


def load_config(path):
    with open(path) as f:
        return parse_config(f.read())


def serialize(cfg):
    """Text that :func:`parse_config` maps back to an equal configuration."""
    lines = []
    for key in SCHEMA:
        v = cfg.values[key]
        lines.append(f"{key} = {v if v == AUTO else json.dumps(v)}")
    return "\n".join(lines) + "\n"


# --- cross-field validation ---------------------------------------------------------

def _robot_model(vals):
    if vals["robot.preset"] is not None:
        if vals["robot.dh"] is not None:
            raise ConfigError("give either robot.preset or robot.dh, not both", field="robot.dh")
        model = robot.PRESETS[vals["robot.preset"]]()
    elif vals["robot.dh"] is not None:
        for key in ("robot.mass", "robot.com", "robot.inertia"):
            if vals[key] is None:
                raise ConfigError("required with robot.dh", field=key)
        n = len(vals["robot.dh"])
        for key in ("robot.mass", "robot.com", "robot.inertia"):
            if len(vals[key]) != n:
                raise ConfigError(f"needs one entry per D-H row ({n})", field=key)
        gravity = (0.0, 0.0, -9.81) if vals["robot.gravity"] == AUTO else vals["robot.gravity"]
        try:
            model = robot.RobotModel(robot.KinematicChain(vals["robot.dh"], gravity),
                                     vals["robot.mass"], vals["robot.com"], vals["robot.inertia"])
        except ValueError as exc:
            raise ConfigError(str(exc), field="robot") from None
    else:
        raise ConfigError("required: robot.preset or robot.dh", field="robot.preset")
    if vals["robot.gravity"] != AUTO:
        model = model.with_gravity(vals["robot.gravity"])
    return model


def _check_gain(key, value, size, diag_len=None):
    v = np.asarray(value, dtype=float)
    if v.ndim == 1 and diag_len is not None and v.size == diag_len and diag_len != size:
        v = np.tile(v, size // diag_len)
    try:
        _spd(v, key, size)
    except ValueError as exc:
        raise ConfigError(str(exc).replace(f"{key} ", "", 1), field=key) from None


def _validate(vals):
    model = _robot_model(vals)
    n = model.n
    if vals["robot.q0"] == AUTO and vals["robot.preset"] not in DEFAULT_Q0:
        raise ConfigError("required for a custom robot", field="robot.q0")
    for key in ("robot.q0", "robot.qdot0"):
        if vals[key] != AUTO and len(vals[key]) != n:
            raise ConfigError(f"needs {n} entries", field=key)
    k = vals["scenario.features"]
    if vals["desired.anchor"] != AUTO and len(vals["desired.anchor"]) != k:
        raise ConfigError(f"needs one row per feature ({k})", field="desired.anchor")
    R = np.asarray(vals["rig.eih.rotation"])
    if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-6 or np.linalg.det(R) < 0:
        raise ConfigError("must be a proper rotation matrix", field="rig.eih.rotation")
    if vals["scenario.kind"] == "rectangle" and vals["scenario.corner_radius"] != AUTO:
        if vals["scenario.corner_radius"] > 0.5 * min(vals["scenario.width"], vals["scenario.height"]):
            raise ConfigError("must not exceed half the shorter rectangle side", field="scenario.corner_radius")

    _check_gain("gains.k1", vals["gains.k1"], 3 * k, diag_len=3)
    _check_gain("gains.k2", vals["gains.k2"], n)
    if vals["gains.psi_scaling"] == "normalized":
        for key in ("gains.psi_d", "gains.psi_k", "gains.psi_m"):
            if np.ndim(vals[key]) != 0 or not vals[key] > 0:
                raise ConfigError("must be a positive scalar with normalized scaling", field=key)
    else:
        _check_gain("gains.psi_d", vals["gains.psi_d"], 10 * n)
        _check_gain("gains.psi_k", vals["gains.psi_k"], P1)
        _check_gain("gains.psi_m", vals["gains.psi_m"], P2)
    return RunConfig(vals)


# --- building a simulation -------------------------------------------------------------

def _opt(v):
    return None if v == AUTO else v


def gain_spec(cfg):
    v = cfg.values
    return GainSpec(lam=v["gains.lambda"], k1=v["gains.k1"], k2=v["gains.k2"], psi_d=v["gains.psi_d"],
                    psi_k=v["gains.psi_k"], psi_m=v["gains.psi_m"], psi_scaling=v["gains.psi_scaling"],
                    psi_ridge=v["gains.psi_ridge"])


def build_setup(cfg):
    """The :class:`SimulationSetup` described by ``cfg``."""
    v = cfg.values
    model = _robot_model(v)
    q0 = DEFAULT_Q0[v["robot.preset"]] if v["robot.q0"] == AUTO else v["robot.q0"]
    return build_scene(
        model, q0, _opt(v["robot.qdot0"]),
        eih_intrinsics=v["rig.eih.intrinsics"], eih_rotation=v["rig.eih.rotation"],
        eih_translation=v["rig.eih.translation"], fixed_intrinsics=v["rig.fixed.intrinsics"],
        fixed_position=_opt(v["rig.fixed.position"]), fixed_look_at=_opt(v["rig.fixed.look_at"]),
        fixed_up=v["rig.fixed.up"], kind=v["scenario.kind"], center=_opt(v["scenario.center"]),
        standoff=v["scenario.standoff"], normal=_opt(v["scenario.normal"]), radius=v["scenario.radius"],
        rate=v["scenario.rate"], width=v["scenario.width"], height=v["scenario.height"],
        speed=v["scenario.speed"], corner_radius=_opt(v["scenario.corner_radius"]),
        features=v["scenario.features"], feature_spacing=v["scenario.feature_spacing"],
        anchor=_opt(v["desired.anchor"]), shift=v["desired.shift"], spiral_radius=v["desired.radius"],
        pitch=v["desired.pitch"], spiral_rate=v["desired.rate"], gains=gain_spec(cfg),
        dt=v["sim.dt"], T=v["sim.T"], seed=v["sim.seed"], delta=v["estimates.delta"],
        perturbation=v["estimates.perturbation"],
        noise=NoiseModel(v["noise.pixel_sigma"], v["noise.depth_sigma"]), rates=v["sim.rates"],
        mode=v["controller.mode"], damping=v["controller.damping"],
        filter_time_constant=_opt(v["controller.filter_time_constant"]),
        lyapunov_c=v["lyapunov.c"], divergence_limit=v["sim.divergence_limit"],
        log_stride=v["trace.stride"], log_estimates=v["trace.estimates"])
