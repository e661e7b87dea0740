"""Eye-in-hand-only reference controller.

It keeps the structure of the hybrid law but drops everything that needs
the fixed camera: no ``Jhat ydot_fixed`` feed-forward, no ``theta_m``
adaptation, and ``Qhat`` is parameterized from eye-in-hand features alone.
It approximates a published eye-in-hand scheme whose exact equations are not
reproduced here, and is labelled as such in every output.
"""

from ..controller import HybridServoController, control_torque
from ..rig import DEFAULT_DAMPING

LABEL = "eye-in-hand baseline (approximation)"


def baseline_controller(chain, gains, initial, dt, damping=DEFAULT_DAMPING, filter_time_constant=None):
    """Stateful baseline controller; ``initial.theta_k`` must use the eye-in-hand layout."""
    return HybridServoController(chain, gains, initial, dt, mode="eih", damping=damping,
                                 filter_time_constant=filter_time_constant)


def baseline_torque(Y_d, theta_d, Q_hat, K1, K2, dy, s_q):
    """Same torque law as the hybrid scheme; the two differ only upstream, in
    how ``qr_dot`` and ``Qhat`` are formed."""
    return control_torque(Y_d, theta_d, Q_hat, K1, K2, dy, s_q)


def baseline_setup(setup):
    """``setup`` run with the baseline controller instead of the hybrid one."""
    return setup.with_(mode="eih")
