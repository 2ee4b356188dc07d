"""Two-repeater chain Q1 - R1 - R2 - Q2 under a greedy synchronous protocol.

Every round all three links attempt generation at once. A link's attempt
count is the smaller of the free memories its two endpoints offer; the
surplus on the larger side sits idle. End-to-end entanglements complete only
when all three links hold an entanglement, oldest first on each link.
Repeaters split memories with the same policy as the single repeater, using
their local pool sizes; end nodes devote all N memories to their one link.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from qrbalance.allocation import PolicyKind, plan_banks
from qrbalance.engine import CHUNK_ROUNDS, DEFAULT_BATCHES, BatchAccumulator, SimSummary, default_warmup
from qrbalance.errors import InvariantViolation, ParameterError
from qrbalance.fidelity import decay_after, fidelity_decay, swap_fidelity
from qrbalance.link import LinkParams, make_link
from qrbalance.stochastics import binomial_cdf_table, binomial_from_uniform, geometric_attempts, make_stream


@dataclass(frozen=True)
class ChainConfig:
    distances_km: tuple
    N: int
    policy: PolicyKind = PolicyKind.OPTIMAL
    F0: float = 1.0
    t_c_s: float = 1e-3
    attenuation_db_per_km: float = 0.15
    light_speed_km_per_s: float = 2.0e5

    def __post_init__(self):
        object.__setattr__(self, "policy", PolicyKind.parse(self.policy))
        object.__setattr__(self, "distances_km", tuple(float(d) for d in self.distances_km))
        if len(self.distances_km) != 3 or min(self.distances_km) <= 0:
            raise ParameterError(f"need three positive link distances, got {self.distances_km}")
        if self.N < 2:
            raise ParameterError(f"N must be >= 2, got {self.N}")
        if self.policy is PolicyKind.HARD_CUTOFF:
            raise ParameterError("hard cutoff is not defined for the chain")

    @property
    def links(self) -> tuple:
        return tuple(make_link(d, self.attenuation_db_per_km, self.light_speed_km_per_s) for d in self.distances_km)

    @property
    def probs(self) -> tuple:
        return tuple(link.success_prob for link in self.links)

    @property
    def tau_round(self) -> float:
        return max(link.trip_time_s for link in self.links)

    @property
    def decay_per_round(self) -> float:
        return 0.0 if math.isinf(self.t_c_s) else self.tau_round / self.t_c_s


@dataclass(frozen=True)
class ChainState:
    # per-link ages in rounds, oldest first
    pools: tuple = ((), (), ())
    round_index: int = 0


@dataclass(frozen=True)
class ChainRoundOutcome:
    attempts: tuple
    generated: tuple
    idle: tuple
    completions: int
    fidelities: tuple
    violated: bool


@dataclass(frozen=True)
class RepeaterPlanTable:
    """Free-memory offers of one repeater for every (left pool, right pool) occupancy."""

    free_left: np.ndarray
    free_right: np.ndarray
    violated: np.ndarray


def repeater_plan_table(policy: PolicyKind, N: int, p_left: float, p_right: float) -> RepeaterPlanTable:
    fl = np.zeros((N + 1, N + 1), dtype=np.int64)
    fr = np.zeros((N + 1, N + 1), dtype=np.int64)
    viol = np.zeros((N + 1, N + 1), dtype=np.bool_)
    for sl in range(N + 1):
        for sr in range(N + 1 - sl):
            plan = plan_banks(policy, N, p_left, p_right, sl, sr)
            fl[sl, sr], fr[sl, sr], viol[sl, sr] = plan.free_left, plan.free_right, plan.violated
    return RepeaterPlanTable(fl, fr, viol)


def _plans(cfg: ChainConfig):
    p1, p2, p3 = cfg.probs
    return repeater_plan_table(cfg.policy, cfg.N, p1, p2), repeater_plan_table(cfg.policy, cfg.N, p2, p3)


def chain_step(state: ChainState, cfg: ChainConfig, rng: np.random.Generator, plans=None):
    """Advance the chain one round. Returns ``(next_state, outcome)``."""
    r1, r2 = plans if plans is not None else _plans(cfg)
    N = cfg.N
    pools = [list(p) for p in state.pools]
    s1, s2, s3 = (len(p) for p in pools)
    if s1 + s2 > N or s2 + s3 > N:
        raise InvariantViolation(f"repeater occupancy exceeds N: pools {s1, s2, s3}")
    offers = (
        (N - s1, int(r1.free_left[s1, s2])),
        (int(r1.free_right[s1, s2]), int(r2.free_left[s2, s3])),
        (int(r2.free_right[s2, s3]), N - s3),
    )
    attempts = tuple(min(a, b) for a, b in offers)
    idle = tuple(abs(a - b) for a, b in offers)
    u = rng.random(3)
    gen = tuple(binomial_from_uniform(n, p, x) for n, p, x in zip(attempts, cfg.probs, u))
    for pool, g in zip(pools, gen):
        pool.extend([0] * g)
    m = min(len(p) for p in pools)
    fids = []
    for j in range(m):
        f = [fidelity_decay(p[j], cfg.tau_round, cfg.t_c_s, cfg.F0) for p in pools]
        fids.append(swap_fidelity(swap_fidelity(f[0], f[1]), f[2]))
    nxt = tuple(tuple(a + 1 for a in p[m:]) for p in pools)
    outcome = ChainRoundOutcome(
        attempts=attempts,
        generated=gen,
        idle=idle,
        completions=m,
        fidelities=tuple(fids),
        violated=bool(r1.violated[s1, s2] or r2.violated[s2, s3]),
    )
    return ChainState(nxt, state.round_index + 1), outcome


@numba.njit(cache=True)
def _chain_chunk(us, t0, heads, sizes, births, fl1, fr1, v1, fl2, fr2, v2, cdf1, cdf2, cdf3, decay, F0,
                 out_m, out_fid, out_idle, out_viol, out_sizes):
    N = fl1.shape[0] - 1
    cap = births.shape[1]
    for i in range(us.shape[0]):
        t = t0 + i
        s1 = sizes[0]
        s2 = sizes[1]
        s3 = sizes[2]
        out_sizes[i, 0] = s1
        out_sizes[i, 1] = s2
        out_sizes[i, 2] = s3
        o1a = N - s1
        o1b = fl1[s1, s2]
        o2a = fr1[s1, s2]
        o2b = fl2[s2, s3]
        o3a = fr2[s2, s3]
        o3b = N - s3
        out_viol[i] = v1[s1, s2] or v2[s2, s3]
        out_idle[i] = abs(o1a - o1b) + abs(o2a - o2b) + abs(o3a - o3b)
        att0 = min(o1a, o1b)
        att1 = min(o2a, o2b)
        att2 = min(o3a, o3b)
        for link in range(3):
            if link == 0:
                row = cdf1[att0]
            elif link == 1:
                row = cdf2[att1]
            else:
                row = cdf3[att2]
            x = 0
            while row[x] <= us[i, link]:
                x += 1
            for j in range(x):
                births[link, (heads[link] + sizes[link] + j) % cap] = t
            sizes[link] += x
        m = min(sizes[0], min(sizes[1], sizes[2]))
        fsum = 0.0
        for j in range(m):
            f = np.empty(3)
            for link in range(3):
                age = t - births[link, (heads[link] + j) % cap]
                f[link] = 0.25 + (F0 - 0.25) * np.exp(-age * decay)
            g = f[0] * f[1] + (1.0 - f[0]) * (1.0 - f[1]) / 3.0
            fsum += g * f[2] + (1.0 - g) * (1.0 - f[2]) / 3.0
        for link in range(3):
            heads[link] = (heads[link] + m) % cap
            sizes[link] -= m
        out_m[i] = m
        out_fid[i] = fsum


def chain_trace(cfg: ChainConfig, rounds: int, seed: int, replication: int = 0, stream: str = "chain") -> dict:
    return _ChainKernel(cfg, make_stream(seed, stream, replication)).advance(rounds)


class _ChainKernel:
    def __init__(self, cfg: ChainConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.plans = _plans(cfg)
        self.cdfs = tuple(binomial_cdf_table(cfg.N, p) for p in cfg.probs)
        self.heads = np.zeros(3, dtype=np.int64)
        self.sizes = np.zeros(3, dtype=np.int64)
        self.births = np.zeros((3, cfg.N + 1), dtype=np.int64)
        self.t = 0

    def advance(self, k: int) -> dict:
        us = self.rng.random((k, 3))
        out = {
            "completions": np.empty(k, np.int64),
            "fid_sum": np.empty(k, np.float64),
            "idle": np.empty(k, np.int64),
            "violated": np.empty(k, np.bool_),
            "pool_sizes": np.empty((k, 3), np.int64),
        }
        r1, r2 = self.plans
        _chain_chunk(us, self.t, self.heads, self.sizes, self.births, r1.free_left, r1.free_right, r1.violated,
                     r2.free_left, r2.free_right, r2.violated, *self.cdfs, self.cfg.decay_per_round, self.cfg.F0,
                     out["completions"], out["fid_sum"], out["idle"], out["violated"], out["pool_sizes"])
        self.t += k
        return out


def run_chain(cfg: ChainConfig, rounds: int, warmup: int | None = None, seed: int = 0, *,
              replication: int = 0, batches: int = DEFAULT_BATCHES, stream: str = "chain") -> SimSummary:
    warmup = default_warmup(rounds) if warmup is None else warmup
    if not rounds > warmup >= 0:
        raise ParameterError(f"need rounds > warmup >= 0, got rounds={rounds}, warmup={warmup}")
    sim = _ChainKernel(cfg, make_stream(seed, stream, replication))
    acc = BatchAccumulator(rounds - warmup, batches)
    done = 0
    while done < rounds:
        k = min(CHUNK_ROUNDS, rounds - done)
        out = sim.advance(k)
        lo = max(0, warmup - done)
        done += k
        if lo < k:
            acc.add({name: out[name][lo:] for name in ("completions", "fid_sum", "idle", "violated")})
    tau = cfg.tau_round
    m, se_m = acc.mean_se("completions")
    fid, se_fid = acc.ratio_se("fid_sum", "completions")
    return SimSummary(
        scenario="chain",
        policy=cfg.policy.value,
        N=cfg.N,
        rounds=rounds,
        warmup=warmup,
        seed=seed,
        tau_round_s=tau,
        mean_matched_per_round=m,
        se_matched=se_m,
        rate_per_s=m / tau,
        se_rate=se_m / tau,
        mean_swap_fidelity=fid,
        se_swap_fidelity=se_fid,
        violation_fraction=acc.mean_se("violated")[0],
        idle_per_round=acc.mean_se("idle")[0],
    )


def standard_chain_cycles(cfg: ChainConfig, n_pairs: int, rng: np.random.Generator):
    """Cycle time and the two outer-link waits for the sequential baseline chain."""
    (l1, l2, l3), (p1, p2, p3) = cfg.links, cfg.probs
    t1 = geometric_attempts(p1, rng, size=n_pairs) * l1.trip_time_s
    t3 = geometric_attempts(p3, rng, size=n_pairs) * l3.trip_time_s
    t2 = geometric_attempts(p2, rng, size=n_pairs) * l2.trip_time_s
    cycle = np.maximum(t1, t3) + t2
    return cycle, cycle - t1, cycle - t3


def chain_standard(cfg: ChainConfig, n_pairs: int, seed: int = 0, *, replication: int = 0) -> SimSummary:
    """Outer links first (in parallel), then the middle link, then both swaps."""
    if n_pairs < 2:
        raise ParameterError(f"n_pairs must be >= 2, got {n_pairs}")
    rng = make_stream(seed, "chain-standard", replication)
    cycle, w1, w3 = standard_chain_cycles(cfg, n_pairs, rng)
    f1 = decay_after(w1, cfg.t_c_s, cfg.F0)
    f3 = decay_after(w3, cfg.t_c_s, cfg.F0)
    fids = swap_fidelity(swap_fidelity(f1, cfg.F0), f3)
    mean_c = float(cycle.mean())
    se_c = float(cycle.std(ddof=1) / math.sqrt(n_pairs))
    rate = cfg.N / mean_c
    return SimSummary(
        scenario="chain",
        policy="standard",
        N=cfg.N,
        rounds=n_pairs,
        warmup=0,
        seed=seed,
        tau_round_s=cfg.tau_round,
        rate_per_s=rate,
        se_rate=rate * se_c / mean_c,
        mean_swap_fidelity=float(fids.mean()),
        se_swap_fidelity=float(fids.std(ddof=1) / math.sqrt(n_pairs)),
        mean_cycle_time_s=mean_c,
        se_cycle_time_s=se_c,
        mean_wait_s=float(np.concatenate([w1, w3]).mean()),
    )
