"""Vector plots of a trace.

Output is byte-stable: figures are built without pyplot, SVG ids come from
a fixed hash salt and the date stamp is omitted.
"""

import os

import matplotlib

matplotlib.use("Agg")

from matplotlib import rc_context  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from ..simulation import BASELINE_LABEL  # noqa: E402

PLOT_FILES = ("image_trajectories.svg", "image_errors.svg", "torques.svg", "lyapunov.svg")
_RC = {"svg.hashsalt": "hybrid-servo", "svg.fonttype": "path", "figure.dpi": 100}
_AXES = ("u", "v", "d")


def _style(trace):
    # a single record still shows up as a marker
    return {"marker": "." if len(trace) == 1 else None, "linewidth": 1.0}


def _title(trace, what):
    suffix = f" ({BASELINE_LABEL})" if trace.meta.get("mode") == "eih" else ""
    return what + suffix


def _k(trace):
    return len([c for c in trace.columns if c.startswith("y_d_") and c[4:].isdigit()]) // 3


def image_trajectories(trace):
    fig = Figure(figsize=(10, 4.5))
    ax_uv, ax_d = fig.subplots(1, 2)
    y, yd = trace.get("y"), trace.get("y_d")
    st = _style(trace)
    for f in range(_k(trace)):
        u, v, d = 3 * f, 3 * f + 1, 3 * f + 2
        ax_uv.plot(y[:, u], y[:, v], label=f"feature {f}", **st)
        ax_uv.plot(yd[:, u], yd[:, v], linestyle="--", label=f"desired {f}", **st)
        ax_d.plot(trace.t, y[:, d], label=f"feature {f}", **st)
        ax_d.plot(trace.t, yd[:, d], linestyle="--", label=f"desired {f}", **st)
    ax_uv.set_xlabel("u [px]")
    ax_uv.set_ylabel("v [px]")
    ax_uv.invert_yaxis()
    ax_uv.legend(fontsize="small")
    ax_d.set_xlabel("t [s]")
    ax_d.set_ylabel("d")
    fig.suptitle(_title(trace, "Eye-in-hand image trajectories"))
    return fig


def image_errors(trace):
    fig = Figure(figsize=(8, 4.5))
    ax = fig.subplots()
    dy = trace.get("dy")
    st = _style(trace)
    for j in range(dy.shape[1]):
        ax.plot(trace.t, dy[:, j], label=f"{_AXES[j % 3]}{j // 3}", **st)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("image error")
    ax.legend(fontsize="small", ncol=3)
    ax.set_title(_title(trace, "Image error components"))
    return fig


def torques(trace):
    fig = Figure(figsize=(8, 4.5))
    ax = fig.subplots()
    tau = trace.get("tau")
    st = _style(trace)
    for i in range(tau.shape[1]):
        ax.plot(trace.t, tau[:, i], label=f"joint {i + 1}", **st)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("torque [N m]")
    ax.legend(fontsize="small")
    ax.set_title(_title(trace, "Joint torques"))
    return fig


def lyapunov(trace):
    fig = Figure(figsize=(8, 4.5))
    ax = fig.subplots()
    V = trace.get("V")
    ax.plot(trace.t, V, **_style(trace))
    if len(V) > 1 and V.min() > 0 and V.max() / V.min() > 100:
        ax.set_yscale("log")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("V")
    ax.set_title(_title(trace, "Lyapunov candidate (true parameters)"))
    return fig


def write_plots(trace, out_dir):
    """Write the four SVGs into ``out_dir``; returns their paths."""
    paths = []
    with rc_context(_RC):
        for name, build in zip(PLOT_FILES, (image_trajectories, image_errors, torques, lyapunov)):
            path = os.path.join(out_dir, name)
            build(trace).savefig(path, format="svg", metadata={"Date": None})
            paths.append(path)
    return paths
