"""Closed-form rate, mismatch, age and fidelity bounds under the balancing rule."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from qrbalance.fidelity import swap_fidelity
from qrbalance.link import LinkParams, round_time


def eta(p_l: float, p_r: float) -> float:
    """Per-memory matched throughput of a balanced repeater, ``p_l p_r / (p_l + p_r)``."""
    return p_l * p_r / (p_l + p_r)


def expected_banks(N: float, p_l: float, p_r: float) -> tuple[float, float]:
    """Approximate stationary (left, right) bank sizes, ignoring the mismatch correction."""
    s = p_l + p_r
    return p_r * N / s, p_l * N / s


def matched_bound_general(p_l: float, p_r: float, E_n_left: float, E_n_right: float, E_abs_alpha: float) -> float:
    return 0.5 * (p_l * E_n_left + p_r * E_n_right - max(p_l, p_r) * E_abs_alpha)


def variance_bound_general(p_l: float, p_r: float, E_n_left: float, E_n_right: float) -> float:
    return p_l * (1.0 - p_l) * E_n_left + p_r * (1.0 - p_r) * E_n_right


def variance_bound(N: float, p_l: float, p_r: float) -> float:
    """Upper bound on Var[alpha] with the approximate bank sizes substituted."""
    return eta(p_l, p_r) * (2.0 - p_r - p_l) * N


def lemma2_bound(N: float, p_l: float, p_r: float) -> float:
    """Lower bound on E[M] per round. Can be negative (vacuous) for very small N."""
    e = eta(p_l, p_r)
    return 0.5 * (2.0 * e * N - max(p_l, p_r) * math.sqrt(variance_bound(N, p_l, p_r)))


def std_rate(N: int, left: LinkParams, right: LinkParams) -> tuple[float, float]:
    """Standard-repeater rate ``N / E[cycle]`` and its lower bound ``eta N / tau_round``."""
    p_l, p_r = left.success_prob, right.success_prob
    exact = N / (left.trip_time_s / p_l + right.trip_time_s / p_r)
    return exact, eta(p_l, p_r) * N / round_time(left, right)


def age_bound(N: float, p_l: float, p_r: float) -> float:
    """Bound on the mean age (in rounds) of stored entanglements."""
    return math.sqrt(variance_bound(N, p_l, p_r)) / (eta(p_l, p_r) * N)


def fidelity_bounds(N: float, p_l: float, p_r: float, tau_round_s: float, t_c_s: float, F0: float) -> tuple[float, float]:
    """(stored-fidelity bound, swapped-fidelity bound)."""
    decay = 0.0 if math.isinf(t_c_s) else age_bound(N, p_l, p_r) * tau_round_s / t_c_s
    b_f = 0.25 + (F0 - 0.25) * math.exp(-decay)
    return b_f, swap_fidelity(F0, b_f)


@dataclass(frozen=True)
class BoundsReport:
    N: int
    p_l: float
    p_r: float
    tau_round_s: float
    eta: float
    expected_n_left: float
    expected_n_right: float
    matched_lower_bound: float
    vacuous: bool
    rate_lower_bound_per_s: float
    std_rate_per_s: float
    std_rate_lower_bound_per_s: float
    var_alpha_upper: float
    age_bound: float
    fidelity_bound: float
    swap_fidelity_bound: float

    def record(self) -> dict:
        return asdict(self)


def bounds_report(N: int, left: LinkParams, right: LinkParams, t_c_s: float = 1e-3, F0: float = 1.0) -> BoundsReport:
    p_l, p_r = left.success_prob, right.success_prob
    tau = round_time(left, right)
    n_l, n_r = expected_banks(N, p_l, p_r)
    m = lemma2_bound(N, p_l, p_r)
    std_exact, std_lb = std_rate(N, left, right)
    b_f, b_swap = fidelity_bounds(N, p_l, p_r, tau, t_c_s, F0)
    return BoundsReport(
        N=N,
        p_l=p_l,
        p_r=p_r,
        tau_round_s=tau,
        eta=eta(p_l, p_r),
        expected_n_left=n_l,
        expected_n_right=n_r,
        matched_lower_bound=m,
        vacuous=m <= 0,
        rate_lower_bound_per_s=m / tau,
        std_rate_per_s=std_exact,
        std_rate_lower_bound_per_s=std_lb,
        var_alpha_upper=variance_bound(N, p_l, p_r),
        age_bound=age_bound(N, p_l, p_r),
        fidelity_bound=b_f,
        swap_fidelity_bound=b_swap,
    )
