"""CLI verbs: run, sweep, plot and selftest."""

import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ..errors import ServoError
from ..simulation import BASELINE_LABEL, TraceLog, metrics, run
from .config import OUTPUT_ENV, build_setup, load_config

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAILED = 2

HYBRID_LABEL = "hybrid eye-in-hand / fixed-camera adaptive controller"


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return _jsonable(x.item())
    return x


def write_json(path, obj):
    with open(path, "w", newline="\n") as f:
        json.dump(_jsonable(obj), f, indent=2, sort_keys=True, allow_nan=False)
        f.write("\n")


def output_dir(cfg, cli_out=None):
    """``--out`` wins over the environment variable, which wins over the config."""
    return cli_out or os.environ.get(OUTPUT_ENV) or cfg["output.dir"]


def apply_overrides(cfg, seed=None, scenario=None, sets=()):
    from .config import parse_value

    raw = {}
    for item in sets:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects key=value, got {item!r}")
        raw[key.strip()] = parse_value(value)
    if seed is not None:
        raw["sim.seed"] = seed
    if scenario is not None:
        raw["scenario.kind"] = scenario
    return cfg.with_overrides(raw) if raw else cfg


def run_summary(cfg, trace):
    """Metrics plus run identification; exactly what ``summary.json`` holds."""
    summary = metrics(trace, lyapunov_c=cfg["lyapunov.c"])
    summary["seed"] = cfg["sim.seed"]
    summary["scenario"] = cfg["scenario.kind"]
    summary["controller"] = HYBRID_LABEL if cfg["controller.mode"] == "hybrid" else BASELINE_LABEL
    if "error" in trace.meta:
        summary["error"] = trace.meta["error"]
    return summary


def exit_code(summary):
    return EXIT_OK if summary["converged"] else EXIT_FAILED


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


def cmd_run(config_path, out=None, seed=None, scenario=None, sets=()):
    """Run one simulation; write the trace and summary. Returns the exit code."""
    try:
        cfg = apply_overrides(load_config(config_path), seed, scenario, sets)
        setup = build_setup(cfg)
        trace = run(setup)
        summary = run_summary(cfg, trace)
        d = output_dir(cfg, out)
        os.makedirs(d, exist_ok=True)
        trace.save(os.path.join(d, cfg["output.trace"]))
        write_json(os.path.join(d, cfg["output.summary"]), summary)
    except (OSError, ValueError, ServoError) as exc:
        _err(exc)
        return EXIT_ERROR
    if summary["status"] != "complete":
        print(f"{summary['status']}: {summary.get('error', '')}", file=sys.stderr)
    print(f"{summary['status']}, rms_final={summary['rms_final']:.6g}, "
          f"relative={summary['relative_rms_final']:.6g}, converged={summary['converged']}")
    return exit_code(summary)


def _sweep_one(cfg, seed):
    cfg = cfg.with_overrides({"sim.seed": seed})
    try:
        trace = run(build_setup(cfg))
        return run_summary(cfg, trace), trace.to_csv()
    except (ValueError, ServoError, ArithmeticError) as exc:
        return {"seed": seed, "status": "error", "error": f"{type(exc).__name__}: {exc}",
                "converged": False}, None


def sweep_report(summaries):
    ok = [s for s in summaries if s["status"] != "error"]
    rel = np.array([s["relative_rms_final"] for s in ok], dtype=float)
    conv = sum(s["converged"] for s in summaries)
    report = {
        "runs": len(summaries),
        "converged": conv,
        "convergence_fraction": conv / len(summaries),
        "failed_runs": [s["seed"] for s in summaries if s["status"] == "error"],
        "per_run": summaries,
    }
    if len(rel):
        report["relative_rms_final"] = {"mean": float(np.mean(rel)), "median": float(np.median(rel)),
                                        "max": float(np.max(rel)), "min": float(np.min(rel))}
    return report


def cmd_sweep(config_path, n_seeds, out=None, seed=None, scenario=None, sets=(), workers=None):
    """``n_seeds`` runs with seeds ``master, master + 1, ...``; writes an aggregate report.

    Each run's trace goes to ``runs/seed_<s>.csv``. Returns 0 when every run
    converged, 2 otherwise, 1 on a setup error.
    """
    try:
        if n_seeds < 1:
            raise ValueError("--seeds must be >= 1")
        cfg = apply_overrides(load_config(config_path), seed, scenario, sets)
        build_setup(cfg)
        d = output_dir(cfg, out)
        os.makedirs(os.path.join(d, "runs"), exist_ok=True)
    except (OSError, ValueError, ServoError) as exc:
        _err(exc)
        return EXIT_ERROR
    master = cfg["sim.seed"]
    seeds = [master + i for i in range(n_seeds)]
    workers = workers or cfg["sim.workers"]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, [cfg] * n_seeds, seeds))
    else:
        results = [_sweep_one(cfg, s) for s in seeds]
    # single writer: all files are written here, in seed order
    for s, (summary, csv) in zip(seeds, results):
        if csv is not None:
            with open(os.path.join(d, "runs", f"seed_{s}.csv"), "w", newline="\n") as f:
                f.write(csv)
    report = sweep_report([r[0] for r in results])
    write_json(os.path.join(d, "sweep.json"), report)
    for s in report["per_run"]:
        rel = s.get("relative_rms_final")
        print(f"seed {s['seed']}: {s['status']}"
              + (f", relative rms {rel:.4g}" if rel is not None else f", {s.get('error', '')}"))
    print(f"converged {report['converged']}/{report['runs']}")
    return EXIT_OK if report["converged"] == report["runs"] else EXIT_FAILED


def cmd_plot(trace_path, out=None):
    from .plots import write_plots

    try:
        trace = TraceLog.load(trace_path)
        d = out or os.environ.get(OUTPUT_ENV) or os.path.dirname(os.path.abspath(trace_path))
        os.makedirs(d, exist_ok=True)
        paths = write_plots(trace, d)
    except (OSError, ValueError, ServoError) as exc:
        _err(exc)
        return EXIT_ERROR
    for p in paths:
        print(p)
    return EXIT_OK
