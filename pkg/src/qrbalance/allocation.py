"""Memory-allocation policies for a repeater with two memory banks.

Sign convention throughout: ``alpha > 0`` means unmatched entanglements sit
in the left bank, ``alpha < 0`` in the right bank. Bank sizes include the
memories that already hold stored entanglements.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from qrbalance.errors import ParameterError


class PolicyKind(str, enum.Enum):
    OPTIMAL = "optimal"
    EQUAL = "equal"
    PROPORTIONAL = "proportional"
    # the cutoff is only defined on top of the optimal rule
    HARD_CUTOFF = "hard_cutoff"

    @classmethod
    def parse(cls, name: "str | PolicyKind") -> "PolicyKind":
        if isinstance(name, PolicyKind):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            valid = ", ".join(p.value for p in cls)
            raise ParameterError(f"unknown policy {name!r}; expected one of: {valid}") from None

    @property
    def is_dynamic(self) -> bool:
        return self in (PolicyKind.OPTIMAL, PolicyKind.HARD_CUTOFF)


@dataclass(frozen=True)
class Allocation:
    n_left: int
    n_right: int

    @property
    def total(self) -> int:
        return self.n_left + self.n_right


@dataclass(frozen=True)
class CutoffThresholds:
    alpha_plus_thr: float
    alpha_minus_thr: float


def _check_total(N: int) -> None:
    if N < 2:
        raise ParameterError(f"need at least 2 memories, got N={N}")


def _clamp(value: int, lo: int, hi: int) -> int:
    return max(lo, min(hi, value))


def _floor(x: float) -> int:
    # bank sizes that are integers on paper can land a few ulps low
    return math.floor(x + 1e-9)


def optimal_right_unrounded(N: float, p_l: float, p_r: float, alpha: int) -> float:
    """Right-bank size that zeroes E[alpha(t+1) | alpha(t)], before flooring."""
    g = p_l if alpha >= 0 else p_r
    return p_l / (p_l + p_r) * (N + alpha * (1.0 - g) / p_l)


def allocate_optimal(N: int, p_l: float, p_r: float, alpha: int) -> Allocation:
    _check_total(N)
    n_right = _clamp(_floor(optimal_right_unrounded(N, p_l, p_r, alpha)), 1, N - 1)
    return Allocation(N - n_right, n_right)


def allocate_equal(N: int) -> Allocation:
    _check_total(N)
    # odd N: the extra memory goes left
    return Allocation(N - N // 2, N // 2)


def allocate_proportional(N: int, p_l: float, p_r: float) -> Allocation:
    _check_total(N)
    n_right = _clamp(_floor(N * (p_l / (p_l + p_r))), 1, N - 1)
    return Allocation(N - n_right, n_right)


def cutoff_thresholds(N: int, p_l: float, p_r: float) -> CutoffThresholds:
    _check_total(N)
    return CutoffThresholds(alpha_plus_thr=p_r * N / (p_r + 1.0), alpha_minus_thr=p_l * N / (p_l + 1.0))


def apply_hard_cutoff(alpha: int, thr: CutoffThresholds) -> tuple[int, int]:
    """Clip the stored surplus to the violation threshold.

    Returns ``(alpha_clipped, dropped)``. The caller decides which stored
    entanglements go; the engines drop the oldest.
    """
    if alpha > 0 and alpha > thr.alpha_plus_thr:
        kept = math.floor(thr.alpha_plus_thr)
        return kept, alpha - kept
    if alpha < 0 and -alpha > thr.alpha_minus_thr:
        kept = math.floor(thr.alpha_minus_thr)
        return -kept, -alpha - kept
    return alpha, 0


def is_violating(alloc: Allocation, alpha: int) -> bool:
    """True when a bank is smaller than the stored entanglements it must hold."""
    if alpha < 0:
        return alloc.n_right < -alpha
    if alpha > 0:
        return alloc.n_left < alpha
    return False


def violates_zero_mean(N: int, p_l: float, p_r: float, alpha: int) -> bool:
    """True when the zero-mean right-bank size cannot be realised within [1, N-1]."""
    x = optimal_right_unrounded(N, p_l, p_r, alpha)
    return x < 1.0 or x > N - 1.0


def zero_mean_residual(N: int, p_l: float, p_r: float, alpha: int, n_right: float) -> float:
    """E[alpha(t+1) | alpha(t)] for a (possibly fractional) right-bank size."""
    n_left = N - n_right
    return alpha + p_l * (n_left - alpha * (alpha >= 0)) - p_r * (n_right + alpha * (alpha < 0))


def policy_allocation(policy: PolicyKind, N: int, p_l: float, p_r: float, alpha: int) -> Allocation:
    if policy.is_dynamic:
        return allocate_optimal(N, p_l, p_r, alpha)
    if policy is PolicyKind.EQUAL:
        return allocate_equal(N)
    return allocate_proportional(N, p_l, p_r)


@dataclass(frozen=True)
class BankPlan:
    """Allocation actually used in a round, after accommodating stored pairs."""

    bank_left: int
    bank_right: int
    free_left: int
    free_right: int
    violated: bool


def plan_banks(
    policy: PolicyKind, N: int, p_l: float, p_r: float, stored_left: int, stored_right: int
) -> BankPlan:
    """Bank sizes and free memories for a node holding stored entanglements on both sides.

    A single repeater only ever stores on one side. In a chain a repeater can
    hold entanglements on both sides that wait for a third link; those
    ``min(stored_left, stored_right)`` pairs are set aside and the policy
    splits the remaining memories using the local mismatch. If the policy
    asks for a bank smaller than what it already stores, the bank grows to
    fit and the round is flagged as violating.
    """
    if stored_left < 0 or stored_right < 0 or stored_left + stored_right > N:
        raise ParameterError(f"invalid occupancy ({stored_left}, {stored_right}) for N={N}")
    shared = min(stored_left, stored_right)
    alpha = stored_left - stored_right
    violated = False
    if policy.is_dynamic:
        n_avail = N - 2 * shared
        x = optimal_right_unrounded(n_avail, p_l, p_r, alpha)
        if n_avail >= 2:
            violated = x < 1.0 or x > n_avail - 1.0
            right = _clamp(_floor(x), 1, n_avail - 1)
        else:
            right = _clamp(_floor(x), 0, n_avail)
        bank_right = right + shared
        bank_left = N - bank_right
    else:
        fixed = allocate_equal(N) if policy is PolicyKind.EQUAL else allocate_proportional(N, p_l, p_r)
        bank_left, bank_right = fixed.n_left, fixed.n_right
    if bank_left < stored_left:
        violated = True
        bank_left, bank_right = stored_left, N - stored_left
    elif bank_right < stored_right:
        violated = True
        bank_left, bank_right = N - stored_right, stored_right
    return BankPlan(bank_left, bank_right, bank_left - stored_left, bank_right - stored_right, violated)


@dataclass(frozen=True)
class PolicyTable:
    """Per-alpha lookup of the single-repeater policy, shared by simulator and oracle.

    Arrays are indexed by ``alpha + offset`` with ``offset = N - 1``.
    ``clip`` is the alpha that survives the hard cutoff (identity otherwise);
    ``free_left``/``free_right``/``bank_*``/``violated`` describe the round
    that starts from the clipped alpha.
    """

    N: int
    p_l: float
    p_r: float
    policy: PolicyKind
    clip: np.ndarray
    bank_left: np.ndarray
    bank_right: np.ndarray
    free_left: np.ndarray
    free_right: np.ndarray
    violated: np.ndarray

    @property
    def offset(self) -> int:
        return self.N - 1

    @property
    def alphas(self) -> np.ndarray:
        return np.arange(-(self.N - 1), self.N)


def policy_table(policy: "PolicyKind | str", N: int, p_l: float, p_r: float) -> PolicyTable:
    policy = PolicyKind.parse(policy)
    _check_total(N)
    size = 2 * N - 1
    clip = np.empty(size, dtype=np.int64)
    cols = {k: np.empty(size, dtype=np.int64) for k in ("bank_left", "bank_right", "free_left", "free_right")}
    violated = np.zeros(size, dtype=np.bool_)
    thr = cutoff_thresholds(N, p_l, p_r) if policy is PolicyKind.HARD_CUTOFF else None
    for i, alpha in enumerate(range(-(N - 1), N)):
        a = apply_hard_cutoff(alpha, thr)[0] if thr is not None else alpha
        clip[i] = a
        plan = plan_banks(policy, N, p_l, p_r, max(a, 0), max(-a, 0))
        cols["bank_left"][i] = plan.bank_left
        cols["bank_right"][i] = plan.bank_right
        cols["free_left"][i] = plan.free_left
        cols["free_right"][i] = plan.free_right
        violated[i] = plan.violated
    return PolicyTable(N=N, p_l=p_l, p_r=p_r, policy=policy, clip=clip, violated=violated, **cols)
