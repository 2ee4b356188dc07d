"""Exact stationary analysis of the mismatch chain for small memory counts.

The chain state is alpha at the start of a round. Each row of the transition
matrix is the law of ``alpha' = clip(alpha) + X_l - X_r`` with the binomial
trial counts the policy assigns to the clipped state, so the matrix is built
from binomial pmfs directly and never touches the simulator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats
from scipy.sparse.csgraph import connected_components

from qrbalance.allocation import PolicyKind, PolicyTable, policy_table
from qrbalance.errors import ParameterError

MAX_ORACLE_N = 16


@dataclass(frozen=True)
class AlphaChain:
    N: int
    p_l: float
    p_r: float
    policy: PolicyKind
    states: np.ndarray
    transition: np.ndarray
    stationary: np.ndarray
    table: PolicyTable
    # recurrent classes found among the states reachable from alpha = 0
    n_recurrent_classes: int = 1

    def pmf(self) -> dict:
        return {int(a): float(p) for a, p in zip(self.states, self.stationary)}


def _binom_pmf(n: int, p: float) -> np.ndarray:
    return stats.binom.pmf(np.arange(n + 1), n, p)


def _reachable(P: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(P.shape[0], dtype=bool)
    stack = [start]
    seen[start] = True
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(P[i] > 0):
            if not seen[j]:
                seen[j] = True
                stack.append(j)
    return seen


def solve_stationary(P: np.ndarray, tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """Stationary vector of an irreducible row-stochastic matrix."""
    n = P.shape[0]
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = linalg.solve(A, b)
        if np.all(np.isfinite(pi)) and np.max(np.abs(pi @ P - pi)) < 1e-10:
            pi = np.clip(pi, 0.0, None)
            return pi / pi.sum()
    except linalg.LinAlgError:
        pass
    pi = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = pi @ P
        if np.max(np.abs(nxt - pi)) < tol:
            return nxt / nxt.sum()
        pi = nxt
    raise RuntimeError("power iteration did not converge")


def _full_matrix(table: PolicyTable) -> np.ndarray:
    N = table.N
    size = 2 * N - 1
    off = N - 1
    P = np.zeros((size, size))
    for i in range(size):
        a = int(table.clip[i])
        pl = _binom_pmf(int(table.free_left[i]), table.p_l)
        pr = _binom_pmf(int(table.free_right[i]), table.p_r)
        # law of X_l - X_r: convolve X_l with the reversed law of X_r
        diff = np.convolve(pl, pr[::-1])
        lo = a - (pr.size - 1)
        for k, prob in enumerate(diff):
            P[i, lo + k + off] += prob
    return P


def build_chain(N: int, p_l: float, p_r: float, policy: "PolicyKind | str") -> AlphaChain:
    if N > MAX_ORACLE_N:
        raise ParameterError(f"oracle limited to N <= {MAX_ORACLE_N}, got {N}")
    table = policy_table(policy, N, p_l, p_r)
    P = _full_matrix(table)
    keep = _reachable(P, N - 1)
    sub = P[np.ix_(keep, keep)]
    states = table.alphas[keep]
    # recurrent classes are strongly connected components with no outgoing mass
    n_comp, labels = connected_components(sub > 0, directed=True, connection="strong")
    closed = [c for c in range(n_comp) if not np.any(sub[np.ix_(labels == c, labels != c)] > 0)]
    zero_label = labels[int(np.flatnonzero(states == 0)[0])]
    target = zero_label if zero_label in closed else closed[0]
    members = labels == target
    pi = np.zeros(len(states))
    pi[members] = solve_stationary(sub[np.ix_(members, members)])
    return AlphaChain(N, p_l, p_r, table.policy, states, sub, pi, table, n_recurrent_classes=len(closed))


@dataclass(frozen=True)
class StationaryStats:
    E_abs_alpha: float
    Var_alpha: float
    E_alpha: float
    E_matched: float
    E_x_left: float
    E_x_right: float
    E_n_left: float
    E_n_right: float
    # E[|alpha|; alpha >= 0] and E[|alpha|; alpha < 0] on the post-cutoff alpha
    E_abs_alpha_pos: float
    E_abs_alpha_neg: float
    violation_prob: float
    drops_per_round: float


def _expected_min(pl: np.ndarray, pr: np.ndarray, left_stored: int, right_stored: int) -> float:
    left = np.arange(pl.size) + left_stored
    right = np.arange(pr.size) + right_stored
    return float(pl @ np.minimum.outer(left, right) @ pr)


def stationary_stats(chain: AlphaChain) -> StationaryStats:
    """Exact stationary moments of alpha and the exact mean matched count per round."""
    tb = chain.table
    off = tb.offset
    pi = chain.stationary
    a = chain.states.astype(float)
    e_m = e_xl = e_xr = e_nl = e_nr = pos = neg = viol = drops = 0.0
    for alpha, w in zip(chain.states, pi):
        if w == 0.0:
            continue
        i = int(alpha) + off
        c = int(tb.clip[i])
        fl, fr = int(tb.free_left[i]), int(tb.free_right[i])
        pl, pr = _binom_pmf(fl, chain.p_l), _binom_pmf(fr, chain.p_r)
        e_m += w * _expected_min(pl, pr, max(c, 0), max(-c, 0))
        e_xl += w * chain.p_l * fl
        e_xr += w * chain.p_r * fr
        e_nl += w * tb.bank_left[i]
        e_nr += w * tb.bank_right[i]
        pos += w * max(c, 0)
        neg += w * max(-c, 0)
        viol += w * bool(tb.violated[i])
        drops += w * (abs(int(alpha)) - abs(c))
    mean = float(pi @ a)
    return StationaryStats(
        E_abs_alpha=float(pi @ np.abs(a)),
        Var_alpha=float(pi @ (a - mean) ** 2),
        E_alpha=mean,
        E_matched=e_m,
        E_x_left=e_xl,
        E_x_right=e_xr,
        E_n_left=e_nl,
        E_n_right=e_nr,
        E_abs_alpha_pos=pos,
        E_abs_alpha_neg=neg,
        violation_prob=viol,
        drops_per_round=drops,
    )


def matched_from_banks(stats_: StationaryStats, p_l: float, p_r: float) -> float:
    """E[M] rebuilt from bank sizes and the signed mismatch split."""
    return 0.5 * (p_l * stats_.E_n_left + p_r * stats_.E_n_right - (p_l * stats_.E_abs_alpha_pos + p_r * stats_.E_abs_alpha_neg))


def l1_distance(pmf_a: dict, pmf_b: dict) -> float:
    keys = set(pmf_a) | set(pmf_b)
    return math.fsum(abs(pmf_a.get(k, 0.0) - pmf_b.get(k, 0.0)) for k in keys)
