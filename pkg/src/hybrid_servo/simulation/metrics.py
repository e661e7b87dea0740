"""Summary statistics of a closed-loop trace.

* ``rms_final``: RMS of ``|dy|`` over the last 20% of the records.
* ``settling_time``: first time after which ``|dy|`` stays within 5% of its
  initial value (``inf`` if it never settles).
* ``peak_torque``: largest absolute joint torque.
* ``v_violations``: ticks with ``V[k+1] > V[k] + c h^2`` for record spacing ``h``.
* ``dydot_decreasing``: RMS of ``|dy_dot|`` over the last 20% is below its
  RMS over the first 20%.
* ``converged``: run completed and ``rms_final < tolerance * |dy(0)|``.
"""

import math

import numpy as np

FINAL_FRACTION = 0.2
SETTLING_BAND = 0.05
CONVERGENCE_TOLERANCE = 0.01
# V is dominated by the parameter-error terms (~1e10 in the default scene),
# whose float64 rounding alone is a few 1e-6 per record; c h^2 must clear
# that at h = 5e-4, which 100 does with margin
DEFAULT_LYAPUNOV_C = 100.0


def _tail(x, fraction=FINAL_FRACTION):
    m = max(1, int(math.ceil(fraction * len(x))))
    return x[-m:]


def _head(x, fraction=FINAL_FRACTION):
    m = max(1, int(math.ceil(fraction * len(x))))
    return x[:m]


def rms(x):
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.mean(x * x)))


def settling_time(t, err, band=SETTLING_BAND):
    """Earliest ``t[k]`` with ``err[j] <= band * err[0]`` for every ``j >= k``."""
    err = np.asarray(err, dtype=float)
    outside = np.nonzero(err > band * err[0])[0]
    if outside.size == 0:
        return float(t[0])
    last = outside[-1]
    return float(t[last + 1]) if last + 1 < len(t) else math.inf


def lyapunov_violations(V, h, c):
    V = np.asarray(V, dtype=float)
    if len(V) < 2:
        return 0
    return int(np.count_nonzero(np.diff(V) > c * h * h))


def metrics(trace, lyapunov_c=DEFAULT_LYAPUNOV_C, tolerance=CONVERGENCE_TOLERANCE):
    if len(trace) == 0:
        raise ValueError("metrics of an empty trace")
    t = trace.t
    dy = trace.get("dy_norm")
    dyd = trace.get("dydot_norm")
    h = float(t[1] - t[0]) if len(t) > 1 else 0.0
    init = float(dy[0])
    final = rms(_tail(dy))
    summary = {
        "status": trace.status,
        "records": len(trace),
        "t_end": float(t[-1]),
        "initial_error": init,
        "final_error": float(dy[-1]),
        "rms_final": final,
        "relative_rms_final": final / init if init > 0 else (0.0 if final == 0 else math.inf),
        "settling_time": settling_time(t, dy),
        "peak_torque": float(np.max(np.abs(trace.get("tau")))),
        "v_violations": lyapunov_violations(trace.get("V"), h, lyapunov_c),
        "dydot_decreasing": bool(rms(_tail(dyd)) < rms(_head(dyd))) if len(t) > 1 else False,
    }
    summary["converged"] = bool(summary["status"] == "complete"
                                and final <= tolerance * init)
    return summary
