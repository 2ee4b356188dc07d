"""Round-based simulation of the balanced repeater and the standard baseline.

Each round has two phases: every free memory in the left (right) bank makes
one attempt toward the left (right) node, then stored and fresh
entanglements from opposite banks are paired oldest-first and swapped.
Unmatched entanglements stay stored and age by one round per round.

:func:`step_round` is a readable reference for one round;
:func:`run` drives the compiled kernel for long runs. Both consume the same
uniforms in the same order, so they produce identical trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from qrbalance.allocation import PolicyKind, PolicyTable, policy_table
from qrbalance.errors import InvariantViolation, ParameterError
from qrbalance.fidelity import decay_after, fidelity_decay, swap_fidelity
from qrbalance.link import LinkParams, make_link, round_time
from qrbalance.stochastics import binomial_cdf_table, binomial_from_uniform, geometric_attempts, make_stream

CHUNK_ROUNDS = 1 << 16
DEFAULT_BATCHES = 64


@dataclass(frozen=True)
class RepeaterConfig:
    N: int
    left: LinkParams
    right: LinkParams
    t_c_s: float = 1e-3
    F0: float = 1.0
    policy: PolicyKind = PolicyKind.OPTIMAL
    # standard baseline only: which side each memory links first
    std_left_first: bool = True

    def __post_init__(self):
        object.__setattr__(self, "policy", PolicyKind.parse(self.policy))
        if self.N < 1:
            raise ParameterError(f"N must be >= 1, got {self.N}")
        if not 0.25 <= self.F0 <= 1.0:
            raise ParameterError(f"F0 must lie in [0.25, 1], got {self.F0}")
        if not self.t_c_s > 0:
            raise ParameterError(f"t_c must be > 0, got {self.t_c_s}")

    @classmethod
    def from_distances(
        cls,
        N: int,
        d_left_km: float,
        d_right_km: float,
        *,
        t_c_s: float = 1e-3,
        F0: float = 1.0,
        policy: "PolicyKind | str" = PolicyKind.OPTIMAL,
        attenuation_db_per_km: float = 0.15,
        light_speed_km_per_s: float = 2.0e5,
        std_left_first: bool = True,
    ) -> "RepeaterConfig":
        return cls(
            N=N,
            left=make_link(d_left_km, attenuation_db_per_km, light_speed_km_per_s),
            right=make_link(d_right_km, attenuation_db_per_km, light_speed_km_per_s),
            t_c_s=t_c_s,
            F0=F0,
            policy=PolicyKind.parse(policy),
            std_left_first=std_left_first,
        )

    @property
    def p_l(self) -> float:
        return self.left.success_prob

    @property
    def p_r(self) -> float:
        return self.right.success_prob

    @property
    def tau_round(self) -> float:
        return round_time(self.left, self.right)

    @property
    def decay_per_round(self) -> float:
        """``tau_round / t_c``; zero for infinite coherence time."""
        return 0.0 if math.isinf(self.t_c_s) else self.tau_round / self.t_c_s

    def table(self) -> PolicyTable:
        return policy_table(self.policy, self.N, self.p_l, self.p_r)


@dataclass(frozen=True)
class RoundState:
    alpha: int = 0
    # ages in rounds, oldest first; all on the side given by sign(alpha)
    unmatched_ages: tuple = ()
    round_index: int = 0

    def check(self, N: int) -> None:
        if len(self.unmatched_ages) != abs(self.alpha):
            raise InvariantViolation(f"queue length {len(self.unmatched_ages)} != |alpha| = {abs(self.alpha)}")
        if abs(self.alpha) > N - 1:
            raise InvariantViolation(f"|alpha| = {abs(self.alpha)} exceeds N - 1 = {N - 1}")
        ages = self.unmatched_ages
        if any(a < 1 for a in ages) or any(ages[i] < ages[i + 1] for i in range(len(ages) - 1)):
            raise InvariantViolation(f"queue ages not positive and nonincreasing: {ages}")


@dataclass(frozen=True)
class RoundOutcome:
    x_left: int
    x_right: int
    matched: int
    swapped_fidelities: tuple
    dropped: int
    violated: bool
    alpha_before: int
    alpha_after: int
    # ages of the stored member of each matched pair, 0 for fresh-fresh pairs
    matched_ages: tuple = ()


@dataclass
class SimSummary:
    scenario: str
    policy: str
    N: int
    rounds: int
    warmup: int
    seed: int
    tau_round_s: float = math.nan
    mean_matched_per_round: float = math.nan
    se_matched: float = math.nan
    rate_per_s: float = math.nan
    se_rate: float = math.nan
    mean_abs_alpha: float = math.nan
    se_abs_alpha: float = math.nan
    mean_alpha: float = math.nan
    se_alpha: float = math.nan
    var_alpha: float = math.nan
    mean_swap_fidelity: float = math.nan
    se_swap_fidelity: float = math.nan
    mean_age: float = math.nan
    se_age: float = math.nan
    violation_fraction: float = math.nan
    drops_per_round: float = math.nan
    mean_cycle_time_s: float = math.nan
    se_cycle_time_s: float = math.nan
    mean_wait_s: float = math.nan
    idle_per_round: float = math.nan
    empirical_alpha_pmf: dict = field(default_factory=dict)

    def record(self) -> dict:
        """Flat scalar fields, for tabular output."""
        return {k: (v.item() if isinstance(v, np.generic) else v)
                for k, v in self.__dict__.items() if k != "empirical_alpha_pmf"}


# --------------------------------------------------------------------------
# reference round


def sample_generation(free_left: int, free_right: int, p_l: float, p_r: float, rng: np.random.Generator):
    if free_left < 0 or free_right < 0:
        raise InvariantViolation(f"negative free memory count ({free_left}, {free_right})")
    u = rng.random(2)
    return binomial_from_uniform(free_left, p_l, u[0]), binomial_from_uniform(free_right, p_r, u[1])


def step_round(state: RoundState, cfg: RepeaterConfig, rng: np.random.Generator, table: PolicyTable | None = None):
    """Advance one round. Returns ``(next_state, outcome)``."""
    table = table if table is not None else cfg.table()
    idx = state.alpha + table.offset
    alpha = int(table.clip[idx])
    dropped = abs(state.alpha) - abs(alpha)
    queue = list(state.unmatched_ages[dropped:])  # the cutoff drops the oldest

    x_left, x_right = sample_generation(int(table.free_left[idx]), int(table.free_right[idx]), cfg.p_l, cfg.p_r, rng)
    left_avail = x_left + max(alpha, 0)
    right_avail = x_right + max(-alpha, 0)
    matched = min(left_avail, right_avail)
    n_stored = min(abs(alpha), matched)

    fresh = swap_fidelity(cfg.F0, cfg.F0)
    ages = tuple(queue[:n_stored]) + (0,) * (matched - n_stored)
    fids = tuple(
        swap_fidelity(fidelity_decay(a, cfg.tau_round, cfg.t_c_s, cfg.F0), cfg.F0) if a else fresh for a in ages
    )

    alpha_next = alpha + x_left - x_right
    survivors = [a + 1 for a in queue[n_stored:]]
    survivors += [1] * (abs(alpha_next) - len(survivors))
    nxt = RoundState(alpha_next, tuple(survivors), state.round_index + 1)
    outcome = RoundOutcome(
        x_left=x_left,
        x_right=x_right,
        matched=matched,
        swapped_fidelities=fids,
        dropped=dropped,
        violated=bool(table.violated[idx]),
        alpha_before=state.alpha,
        alpha_after=alpha_next,
        matched_ages=ages,
    )
    return nxt, outcome


# --------------------------------------------------------------------------
# compiled kernel


@numba.njit(cache=True)
def _run_chunk(
    us,
    t0,
    state,
    births,
    clip,
    free_left,
    free_right,
    violated,
    cdf_left,
    cdf_right,
    decay,
    F0,
    out_alpha,
    out_xl,
    out_xr,
    out_matched,
    out_dropped,
    out_violated,
    out_fid,
    out_age,
):
    # state = [alpha, head]; births is a ring buffer of round indices, oldest at head
    cap = births.shape[0]
    offset = (clip.shape[0] - 1) // 2
    fresh = F0 * F0 + (1.0 - F0) * (1.0 - F0) / 3.0
    alpha = state[0]
    head = state[1]
    for i in range(us.shape[0]):
        t = t0 + i
        idx = alpha + offset
        out_alpha[i] = alpha
        a = clip[idx]
        drop = abs(alpha) - abs(a)
        head = (head + drop) % cap
        out_dropped[i] = drop
        out_violated[i] = violated[idx]

        fl = free_left[idx]
        row = cdf_left[fl]
        xl = 0
        while row[xl] <= us[i, 0]:
            xl += 1
        row = cdf_right[free_right[idx]]
        xr = 0
        while row[xr] <= us[i, 1]:
            xr += 1

        stored = abs(a)
        la = xl + (a if a > 0 else 0)
        ra = xr + (-a if a < 0 else 0)
        m = la if la < ra else ra
        ns = stored if stored < m else m
        fsum = (m - ns) * fresh
        asum = 0
        for j in range(ns):
            age = t - births[(head + j) % cap]
            f = 0.25 + (F0 - 0.25) * np.exp(-age * decay)
            fsum += f * F0 + (1.0 - f) * (1.0 - F0) / 3.0
            asum += age
        head = (head + ns) % cap
        stored -= ns

        nxt = a + xl - xr
        for j in range(abs(nxt) - stored):
            births[(head + stored + j) % cap] = t
        alpha = nxt
        out_xl[i] = xl
        out_xr[i] = xr
        out_matched[i] = m
        out_fid[i] = fsum
        out_age[i] = asum
    state[0] = alpha
    state[1] = head


class _KernelRun:
    """Chunked driver around :func:`_run_chunk` for one configuration and stream."""

    def __init__(self, cfg: RepeaterConfig, rng: np.random.Generator, table: PolicyTable | None = None):
        self.cfg = cfg
        self.rng = rng
        self.table = table if table is not None else cfg.table()
        N = cfg.N
        self.cdf_left = binomial_cdf_table(N, cfg.p_l)
        self.cdf_right = binomial_cdf_table(N, cfg.p_r)
        self.state = np.zeros(2, dtype=np.int64)
        self.births = np.zeros(max(N, 1), dtype=np.int64)
        self.t = 0

    def advance(self, k: int) -> dict:
        us = self.rng.random((k, 2))
        out = {
            "alpha": np.empty(k, np.int64),
            "x_left": np.empty(k, np.int64),
            "x_right": np.empty(k, np.int64),
            "matched": np.empty(k, np.int64),
            "dropped": np.empty(k, np.int64),
            "violated": np.empty(k, np.bool_),
            "fid_sum": np.empty(k, np.float64),
            "age_sum": np.empty(k, np.int64),
        }
        tb = self.table
        _run_chunk(
            us,
            self.t,
            self.state,
            self.births,
            tb.clip,
            tb.free_left,
            tb.free_right,
            tb.violated,
            self.cdf_left,
            self.cdf_right,
            self.cfg.decay_per_round,
            self.cfg.F0,
            out["alpha"],
            out["x_left"],
            out["x_right"],
            out["matched"],
            out["dropped"],
            out["violated"],
            out["fid_sum"],
            out["age_sum"],
        )
        self.t += k
        return out


def simulate_trace(cfg: RepeaterConfig, rounds: int, seed: int, replication: int = 0, stream: str = "repeater") -> dict:
    """Per-round arrays (alpha at round start, draws, matches, drops, fidelity and age sums)."""
    return _KernelRun(cfg, make_stream(seed, stream, replication)).advance(rounds)


def default_warmup(rounds: int) -> int:
    return max(rounds // 10, min(1000, rounds // 2))


class BatchAccumulator:
    """Sums per-round series into equal-length batches for batch-means standard errors."""

    def __init__(self, n: int, batches: int):
        self.n = n
        self.batches = max(2, min(batches, n))
        self.sums: dict[str, np.ndarray] = {}
        self.seen = 0

    def add(self, series: dict) -> None:
        k = len(next(iter(series.values())))
        pos = np.arange(self.seen, self.seen + k)
        bidx = pos * self.batches // self.n
        for name, values in series.items():
            acc = self.sums.setdefault(name, np.zeros(self.batches))
            acc += np.bincount(bidx, weights=np.asarray(values, dtype=np.float64), minlength=self.batches)
        self.seen += k

    def sizes(self) -> np.ndarray:
        edges = (np.arange(self.batches + 1) * self.n + self.batches - 1) // self.batches
        return np.diff(edges).astype(np.float64)

    def mean_se(self, name: str) -> tuple[float, float]:
        sums = self.sums[name]
        size = self.sizes()
        mean = sums.sum() / size.sum()
        means = sums / size
        return mean, float(np.std(means, ddof=1) / math.sqrt(self.batches))

    def ratio_se(self, num: str, den: str) -> tuple[float, float]:
        a, b = self.sums[num], self.sums[den]
        if b.sum() == 0:
            return math.nan, math.nan
        ratio = a.sum() / b.sum()
        keep = b > 0
        if keep.sum() < 2:
            return float(ratio), math.nan
        # linearised ratio estimator over batches
        resid = (a[keep] - ratio * b[keep]) / b[keep].mean()
        return float(ratio), float(np.std(resid, ddof=1) / math.sqrt(keep.sum()))


def run(
    cfg: RepeaterConfig,
    rounds: int,
    warmup: int | None = None,
    seed: int = 0,
    *,
    replication: int = 0,
    batches: int = DEFAULT_BATCHES,
    stream: str = "repeater",
) -> SimSummary:
    """Monte Carlo estimate of the stationary rate, mismatch and fidelity.

    The random stream is keyed by ``(seed, stream, replication)``. Runs that
    share all three see the same uniforms (common random numbers), which
    suits policy comparisons; give unrelated experiments distinct ``stream``
    names when their errors must be independent.
    """
    if cfg.N < 2:
        raise ParameterError("the balanced repeater needs N >= 2")
    warmup = default_warmup(rounds) if warmup is None else warmup
    if not rounds > warmup >= 0:
        raise ParameterError(f"need rounds > warmup >= 0, got rounds={rounds}, warmup={warmup}")
    sim = _KernelRun(cfg, make_stream(seed, stream, replication))
    n = rounds - warmup
    acc = BatchAccumulator(n, batches)
    hist = np.zeros(2 * cfg.N - 1, dtype=np.int64)
    done = 0
    while done < rounds:
        k = min(CHUNK_ROUNDS, rounds - done)
        out = sim.advance(k)
        lo = max(0, warmup - done)
        done += k
        if lo >= k:
            continue
        a = out["alpha"][lo:]
        hist += np.bincount(a + cfg.N - 1, minlength=hist.size)
        acc.add(
            {
                "matched": out["matched"][lo:],
                "abs_alpha": np.abs(a),
                "alpha": a,
                "alpha_sq": a.astype(np.float64) ** 2,
                "fid_sum": out["fid_sum"][lo:],
                "age_sum": out["age_sum"][lo:],
                "violated": out["violated"][lo:],
                "dropped": out["dropped"][lo:],
            }
        )

    tau = cfg.tau_round
    m, se_m = acc.mean_se("matched")
    abs_a, se_abs = acc.mean_se("abs_alpha")
    mean_a, se_a = acc.mean_se("alpha")
    fid, se_fid = acc.ratio_se("fid_sum", "matched")
    age, se_age = acc.ratio_se("age_sum", "matched")
    pmf = {int(alpha): float(c / n) for alpha, c in zip(range(-(cfg.N - 1), cfg.N), hist) if c}
    return SimSummary(
        scenario="single",
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
        mean_abs_alpha=abs_a,
        se_abs_alpha=se_abs,
        mean_alpha=mean_a,
        se_alpha=se_a,
        var_alpha=acc.mean_se("alpha_sq")[0] - mean_a**2,
        mean_swap_fidelity=fid,
        se_swap_fidelity=se_fid,
        mean_age=age,
        se_age=se_age,
        violation_fraction=acc.mean_se("violated")[0],
        drops_per_round=acc.mean_se("dropped")[0],
        empirical_alpha_pmf=pmf,
    )


# --------------------------------------------------------------------------
# standard repeater baseline


def standard_cycles(cfg: RepeaterConfig, n_pairs: int, rng: np.random.Generator):
    """Cycle times and first-link waits (seconds) for ``n_pairs`` sequential link-then-link cycles."""
    g_l = geometric_attempts(cfg.p_l, rng, size=n_pairs)
    g_r = geometric_attempts(cfg.p_r, rng, size=n_pairs)
    t_l = g_l * cfg.left.trip_time_s
    t_r = g_r * cfg.right.trip_time_s
    # the first link waits while the second side is being attempted
    wait = t_r if cfg.std_left_first else t_l
    return t_l + t_r, wait


def run_standard(cfg: RepeaterConfig, n_pairs: int, seed: int = 0, *, replication: int = 0) -> SimSummary:
    """Each memory links to one side, stores it, then links to the other side and swaps."""
    if n_pairs < 1:
        raise ParameterError(f"n_pairs must be >= 1, got {n_pairs}")
    rng = make_stream(seed, "standard", replication)
    cycle, wait = standard_cycles(cfg, n_pairs, rng)
    fids = swap_fidelity(decay_after(wait, cfg.t_c_s, cfg.F0), cfg.F0)
    mean_c = float(cycle.mean())
    se_c = float(cycle.std(ddof=1) / math.sqrt(n_pairs)) if n_pairs > 1 else math.nan
    rate = cfg.N / mean_c
    return SimSummary(
        scenario="standard",
        policy="standard",
        N=cfg.N,
        rounds=n_pairs,
        warmup=0,
        seed=seed,
        tau_round_s=cfg.tau_round,
        rate_per_s=rate,
        se_rate=rate * se_c / mean_c,
        mean_swap_fidelity=float(fids.mean()),
        se_swap_fidelity=float(fids.std(ddof=1) / math.sqrt(n_pairs)) if n_pairs > 1 else math.nan,
        mean_cycle_time_s=mean_c,
        se_cycle_time_s=se_c,
        mean_wait_s=float(wait.mean()),
    )
