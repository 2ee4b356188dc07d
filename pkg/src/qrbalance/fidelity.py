"""Werner-state fidelity under depolarizing storage and entanglement swapping."""

import math

import numpy as np

from qrbalance.errors import ParameterError


def fidelity_decay(age_rounds: float, tau_round_s: float, t_c_s: float, F0: float) -> float:
    """Fidelity of a Werner pair stored for ``age_rounds`` rounds of length ``tau_round_s``."""
    if not 0.25 <= F0 <= 1.0:
        raise ParameterError(f"F0 must lie in [0.25, 1], got {F0!r}")
    if age_rounds < 0:
        raise ParameterError(f"age must be >= 0, got {age_rounds!r}")
    if t_c_s <= 0:
        raise ParameterError(f"t_c must be > 0, got {t_c_s!r}")
    if math.isinf(t_c_s):
        return F0
    return 0.25 + (F0 - 0.25) * math.exp(-age_rounds * tau_round_s / t_c_s)


def decay_after(wait_s, t_c_s: float, F0: float):
    """Continuous-time decay; accepts scalars or numpy arrays of waits in seconds."""
    return 0.25 + (F0 - 0.25) * np.exp(-np.asarray(wait_s) / t_c_s)


def swap_fidelity(f1: float, f2: float) -> float:
    return f1 * f2 + (1.0 - f1) * (1.0 - f2) / 3.0
