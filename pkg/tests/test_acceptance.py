"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run alone with ``pytest tests/test_acceptance.py -v`` (lines appear in the
terminal summary) or ``python tests/test_acceptance.py`` (lines go to stdout).
Tolerances are fixed; the master seed is the suite-wide SEED.
"""

import functools
import math
import sys
import time
from pathlib import Path

import numpy as np
from hypothesis import HealthCheck, given, settings, strategies as st
from scipy import stats

sys.path.insert(0, str(Path(__file__).parent))

from checks import check_round  # noqa: E402
from conftest import ACCEPTANCE_LINES, P10, P20, P30, P40, SEED  # noqa: E402
from oracles import binom_pmf  # noqa: E402
from qrbalance.allocation import PolicyKind  # noqa: E402
from qrbalance.bounds import eta, fidelity_bounds, lemma2_bound, std_rate  # noqa: E402
from qrbalance.chain import ChainConfig, chain_standard, chain_trace, run_chain  # noqa: E402
from qrbalance.engine import (  # noqa: E402
    BatchAccumulator,
    RepeaterConfig,
    RoundState,
    default_warmup,
    run,
    run_standard,
    simulate_trace,
    step_round,
)
from qrbalance.oracle import build_chain, l1_distance, stationary_stats  # noqa: E402
from qrbalance.stochastics import binomial_cdf_table, make_stream  # noqa: E402

ROUNDS = 2_000_000
ORACLE_ROUNDS = 10_000_000
STD_CYCLES = 1_000_000
PROPERTY_CASES = 10_000
Z = 3.0


def report(number, passed, detail):
    line = f"CRITERION {number} {'PASS' if passed else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


@functools.lru_cache(maxsize=None)
def single(N, d_l, d_r, policy="optimal", t_c=1e-3, rounds=ROUNDS, stream="repeater"):
    cfg = RepeaterConfig.from_distances(N, d_l, d_r, t_c_s=t_c, policy=policy)
    return run(cfg, rounds, seed=SEED, stream=stream)


@functools.lru_cache(maxsize=None)
def standard(N, d_l, d_r, t_c=1e-3, cycles=STD_CYCLES):
    return run_standard(RepeaterConfig.from_distances(N, d_l, d_r, t_c_s=t_c), cycles, SEED)


def std_exact(N, d_l, d_r):
    cfg = RepeaterConfig.from_distances(N, d_l, d_r)
    return std_rate(N, cfg.left, cfg.right)[0]


def separated(a, se_a, b, se_b):
    """a exceeds b by more than Z combined standard errors."""
    return a - b > Z * math.hypot(se_a, se_b)


# ---------------------------------------------------------------------------


def test_criterion_1_oracle_equivalence():
    start = time.perf_counter()
    fails, worst_l1, worst_z = [], 0.0, 0.0
    for d_l, d_r in [(20, 30), (20, 40), (10, 30)]:
        for N in (2, 4, 6, 8, 10, 12):
            for policy in ("optimal", "equal", "proportional", "hard_cutoff"):
                # one lane per point: 72 independent checks, not one shared stream checked 72 times
                s = single(N, d_l, d_r, policy, rounds=ORACLE_ROUNDS, stream=f"oracle/{d_l}-{d_r}/N{N}/{policy}")
                cfg = RepeaterConfig.from_distances(N, d_l, d_r)
                exact = stationary_stats(ch := build_chain(N, cfg.p_l, cfg.p_r, policy))
                l1 = l1_distance(ch.pmf(), s.empirical_alpha_pmf)
                z = abs(s.mean_matched_per_round - exact.E_matched) / s.se_matched
                worst_l1, worst_z = max(worst_l1, l1), max(worst_z, z)
                if not (l1 < 0.01 and z <= Z):
                    fails.append(f"{policy} N={N} ({d_l},{d_r}) L1={l1:.4f} z={z:.2f}")
    minutes = (time.perf_counter() - start) / 60
    ok = not fails and minutes < 10
    report(1, ok, f"72 points, worst L1={worst_l1:.4f} (<0.01), worst |dE[M]|/SE={worst_z:.2f} (<=3), "
                  f"{minutes:.1f} min" + (f"; failing: {fails}" if fails else ""))
    assert ok


def test_criterion_2_lemma2_dominance():
    fails, ratios = [], {}
    for d_l, d_r in [(20, 30), (10, 30)]:
        cfg = RepeaterConfig.from_distances(2, d_l, d_r)
        for N in (8, 16, 32, 64, 128):
            s = single(N, d_l, d_r)
            bound = lemma2_bound(N, cfg.p_l, cfg.p_r)
            if s.mean_matched_per_round < bound - Z * s.se_matched:
                fails.append(f"sim N={N} ({d_l},{d_r})")
            if N == 128:
                ratios[(d_l, d_r)] = bound / s.mean_matched_per_round
        for N in range(2, 13):
            exact = stationary_stats(build_chain(N, cfg.p_l, cfg.p_r, "optimal")).E_matched
            if not exact >= lemma2_bound(N, cfg.p_l, cfg.p_r):
                fails.append(f"exact N={N} ({d_l},{d_r})")
    tight = all(r >= 0.9 for r in ratios.values())
    ok = not fails and tight
    report(2, ok, "bound <= sim + 3SE for N=8..128 and <= exact for N<=12; bound/sim at N=128: "
                  + ", ".join(f"{k}: {v:.3f}" for k, v in ratios.items()) + (f"; failing: {fails}" if fails else ""))
    assert ok


def test_criterion_3_symmetric_identity():
    fails, worst = [], 0.0
    for d in (20, 30):
        for N in (8, 32, 128):
            cfg = RepeaterConfig.from_distances(N, d, d)
            n = ROUNDS
            warm = default_warmup(n)
            tr = simulate_trace(cfg, n, SEED, replication=1)
            a = np.abs(tr["alpha"][warm:])
            m = tr["matched"][warm:]
            # paired per-round difference, so its batch-means SE covers both estimates
            acc = BatchAccumulator(n - warm, 64)
            acc.add({"diff": m - 0.5 * cfg.p_l * (N - a)})
            diff, se = acc.mean_se("diff")
            z = abs(diff) / se
            worst = max(worst, z)
            if z > Z:
                fails.append(f"d={d} N={N} z={z:.2f}")
    ok = not fails
    report(3, ok, f"E[M] vs p(N-E|alpha|)/2 at p_l=p_r, 6 points, worst z={worst:.2f} (<=3)"
                  + (f"; failing: {fails}" if fails else ""))
    assert ok


def test_criterion_4_standard_closed_form():
    fails, worst = [], 0.0
    for d_l, d_r in [(20, 30), (20, 40), (10, 30)]:
        for N in (1, 16):
            s = standard(N, d_l, d_r)
            cfg = RepeaterConfig.from_distances(N, d_l, d_r)
            expected = cfg.left.trip_time_s / cfg.p_l + cfg.right.trip_time_s / cfg.p_r
            rel = abs(s.mean_cycle_time_s / expected - 1)
            worst = max(worst, rel)
            lower = eta(cfg.p_l, cfg.p_r) * N / cfg.tau_round
            if rel >= 0.01 or s.rate_per_s < lower - Z * s.se_rate:
                fails.append(f"N={N} ({d_l},{d_r})")
    ok = not fails
    report(4, ok, f"cycle mean within {worst:.4%} of closed form (<1%), R_std >= eta N/tau_round"
                  + (f"; failing: {fails}" if fails else ""))
    assert ok


def test_criterion_5_fidelity_bound():
    fails, margin = [], math.inf
    for d_r in (30, 40):
        for t_c in (1e-3, 1e-2):
            for N in (8, 16, 32, 64, 128):
                s = single(N, 20, d_r, t_c=t_c)
                cfg = RepeaterConfig.from_distances(N, 20, d_r, t_c_s=t_c)
                bound = fidelity_bounds(N, cfg.p_l, cfg.p_r, cfg.tau_round, t_c, 1.0)[1]
                margin = min(margin, s.mean_swap_fidelity - bound)
                if s.mean_swap_fidelity < bound - Z * s.se_swap_fidelity:
                    fails.append(f"N={N} d_r={d_r} t_c={t_c}")
    ok = not fails
    report(5, ok, f"E[F_swap] >= bound - 3SE on 20 points, smallest margin {margin:.4f}"
                  + (f"; failing: {fails}" if fails else ""))
    assert ok


def test_criterion_6_orderings():
    fails, notes = [], []
    for N in (16, 64):
        r = {p: single(N, 20, 40, p) for p in ("optimal", "equal", "proportional")}
        std = standard(N, 20, 40)
        f = {p: (s.mean_swap_fidelity, s.se_swap_fidelity) for p, s in r.items()}
        f["standard"] = (std.mean_swap_fidelity, std.se_swap_fidelity)
        for hi, lo in [("optimal", "proportional"), ("proportional", "standard"), ("proportional", "equal")]:
            if not separated(*f[hi], *f[lo]):
                fails.append(f"N={N} fidelity {hi}>{lo}")
        r_std = std_exact(N, 20, 40)
        gap = {p: ((r_std - s.rate_per_s) / r_std, s.se_rate / r_std) for p, s in r.items()}
        for hi, lo in [("equal", "proportional"), ("proportional", "optimal")]:
            if not separated(*gap[hi], *gap[lo]):
                fails.append(f"N={N} gap {hi}>{lo}")
        notes.append(f"N={N}: F opt/prop/eq/std = " + "/".join(f"{f[p][0]:.3f}" for p in ("optimal", "proportional", "equal", "standard"))
                     + ", gap eq/prop/opt = " + "/".join(f"{gap[p][0]:.3f}" for p in ("equal", "proportional", "optimal")))
    ok = not fails
    report(6, ok, "; ".join(notes) + (f"; failing: {fails}" if fails else ""))
    assert ok


def test_criterion_7_hard_cutoff_shape():
    small_rate, small_fid, large_rate, large_fid, ratios = [], [], [], [], {}
    for N in list(range(2, 10)) + [16, 32, 64]:
        opt, hc = single(N, 20, 40, "optimal"), single(N, 20, 40, "hard_cutoff")
        ratio = hc.rate_per_s / opt.rate_per_s
        ratios[N] = ratio
        d_f = hc.mean_swap_fidelity - opt.mean_swap_fidelity
        se_f = math.hypot(hc.se_swap_fidelity, opt.se_swap_fidelity)
        if N < 10:
            if not ratio < 0.5:
                small_rate.append(N)
            if not d_f > Z * se_f:
                small_fid.append(N)
        else:
            if not abs(ratio - 1) < 0.05:
                large_rate.append(N)
            if not d_f >= -Z * se_f:
                large_fid.append(N)
    clauses = {
        "N<10 rate<0.5x": small_rate,
        "N<10 fidelity higher": small_fid,
        "N>=16 rate within 5%": large_rate,
        "N>=16 fidelity not lower": large_fid,
    }
    ok = not any(clauses.values())
    detail = ", ".join(f"{k}: {'ok' if not v else 'fails at N=' + str(v)}" for k, v in clauses.items())
    report(7, ok, detail + "; rate ratio hc/opt " + " ".join(f"N{n}={r:.2f}" for n, r in ratios.items()))
    assert ok


def _drift_residual(N, d_l, d_r, rounds, replication):
    """Per-round E[alpha(t+1) | alpha(t)] over non-violating rounds of the optimal policy."""
    cfg = RepeaterConfig.from_distances(N, d_l, d_r)
    tb = cfg.table()
    tr = simulate_trace(cfg, rounds + 1, SEED, replication=replication)
    a = tr["alpha"]
    i = a[:-1] + tb.offset
    ok = ~tb.violated[i]
    cond_mean = a[:-1] + cfg.p_l * tb.free_left[i] - cfg.p_r * tb.free_right[i]
    return cfg, cond_mean[ok], (a[1:] - cond_mean)[ok]


def test_criterion_8_zero_mean_drift():
    fails, notes = [], []
    for d_l, d_r in [(20, 30), (20, 40), (10, 30)]:
        for N in (8, 32, 128):
            cfg, r, _ = _drift_residual(N, d_l, d_r, 1_000_000, replication=2)
            bound = max(cfg.p_l, cfg.p_r) + cfg.p_l
            if not abs(r.mean()) <= bound:
                fails.append(f"time-average N={N} ({d_l},{d_r})")
        # stationary average at N=128: long run past warmup
        cfg, r, mart = _drift_residual(128, d_l, d_r, ORACLE_ROUNDS, replication=3)
        r = r[default_warmup(ORACLE_ROUNDS):]
        if not abs(r.mean()) <= 0.05:
            fails.append(f"stationary N=128 ({d_l},{d_r}) = {r.mean():.3f}")
        notes.append(f"({d_l},{d_r}) E_pi[r]={r.mean():.3f}, martingale part {mart.mean():+.4f}")
    ok = not fails
    report(8, ok, "time averages within max(p_l,p_r)+p_l; " + "; ".join(notes)
                  + (f"; failing: {fails}" if fails else ""))
    assert ok


def test_criterion_9_chain():
    fails, notes = [], []
    for N in (16, 64):
        cfg = ChainConfig((20, 30, 20), N)
        opt = run_chain(cfg, ROUNDS, seed=SEED)
        eq = run_chain(ChainConfig((20, 30, 20), N, "equal"), ROUNDS, seed=SEED)
        std = chain_standard(cfg, STD_CYCLES, SEED)
        if not separated(opt.mean_swap_fidelity, opt.se_swap_fidelity, eq.mean_swap_fidelity, eq.se_swap_fidelity):
            fails.append(f"N={N} fidelity optimal>equal")
        if not separated(opt.mean_swap_fidelity, opt.se_swap_fidelity, std.mean_swap_fidelity, std.se_swap_fidelity):
            fails.append(f"N={N} fidelity optimal>standard")
        chain_gap = (std.rate_per_s - opt.rate_per_s) / std.rate_per_s
        r_std = std_exact(N, 20, 30)
        single_gap = (r_std - single(N, 20, 30).rate_per_s) / r_std
        if not chain_gap > single_gap:
            fails.append(f"N={N} gap chain {chain_gap:.3f} <= single {single_gap:.3f}")
        notes.append(f"N={N}: F opt/eq/std = {opt.mean_swap_fidelity:.3f}/{eq.mean_swap_fidelity:.3f}/"
                     f"{std.mean_swap_fidelity:.3f}, gap chain/single = {chain_gap:.3f}/{single_gap:.3f}")
    ok = not fails
    report(9, ok, "; ".join(notes) + (f"; failing: {fails}" if fails else ""))
    assert ok


# ---- criterion 10: randomized invariant suite


@st.composite
def repeater_cases(draw):
    N = draw(st.integers(2, 24))
    cfg = RepeaterConfig.from_distances(
        N, draw(st.floats(1, 80)), draw(st.floats(1, 80)),
        t_c_s=draw(st.sampled_from([1e-4, 1e-3, 1e-2])),
        F0=draw(st.sampled_from([1.0, 0.95, 0.8])),
        policy=draw(st.sampled_from(list(PolicyKind))),
    )
    return cfg, draw(st.integers(0, 2**63 - 1))


PROPERTY_SETTINGS = settings(
    max_examples=PROPERTY_CASES, deadline=None, derandomize=True, database=None,
    suppress_health_check=list(HealthCheck),
)


def _count_cases(prop):
    count = [0]

    def wrapped(case):
        count[0] += 1
        prop(case)

    given(repeater_cases())(PROPERTY_SETTINGS(wrapped))()
    return count[0]


def _conservation_and_fifo(case):
    cfg, seed = case
    rng, table, state = make_stream(seed, "acceptance"), cfg.table(), RoundState()
    for _ in range(25):
        nxt, out = step_round(state, cfg, rng, table)
        check_round(state, nxt, out, cfg)
        state = nxt


def _determinism(case):
    cfg, seed = case
    a, b = simulate_trace(cfg, 200, seed), simulate_trace(cfg, 200, seed)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    if cfg.N >= 2 and cfg.policy is not PolicyKind.HARD_CUTOFF:
        ch = ChainConfig((cfg.left.distance_km, 30.0, cfg.right.distance_km), cfg.N, cfg.policy)
        x, y = chain_trace(ch, 100, seed), chain_trace(ch, 100, seed)
        assert all(np.array_equal(x[k], y[k]) for k in x)


_gof_pvalues = []
_gof_calls = [0]


def _gof(case):
    cfg, _ = case
    n, p = cfg.N, cfg.p_l
    # hypothesis repeats simple seeds; a per-case lane keeps the samples independent
    _gof_calls[0] += 1
    u = make_stream(SEED, "gof", _gof_calls[0]).random(4000)
    draws = np.searchsorted(binomial_cdf_table(n, p)[n], u, side="right")
    expected = np.array([binom_pmf(n, p, k) for k in range(n + 1)]) * u.size
    counts = np.bincount(draws, minlength=n + 1)
    # merge cells until each expects at least 5
    obs, exp, acc_o, acc_e = [], [], 0, 0.0
    for o, e in zip(counts, expected):
        acc_o, acc_e = acc_o + o, acc_e + e
        if acc_e >= 5:
            obs.append(acc_o)
            exp.append(acc_e)
            acc_o, acc_e = 0, 0.0
    if acc_e > 0 and exp:
        obs[-1] += acc_o
        exp[-1] += acc_e
    if len(exp) >= 2:
        _gof_pvalues.append(stats.chisquare(obs, np.array(exp) * sum(obs) / sum(exp)).pvalue)


def test_criterion_10_invariant_suite():
    results = {}
    for name, prop in [("conservation+FIFO", _conservation_and_fifo), ("determinism", _determinism)]:
        try:
            results[name] = (_count_cases(prop), True)
        except AssertionError:
            results[name] = (PROPERTY_CASES, False)
    _gof_pvalues.clear()
    _gof_calls[0] = 0
    n_cases = _count_cases(_gof)
    pv = np.array(_gof_pvalues)
    # Bonferroni over all cases at family level 1e-4, plus a combined uniformity check
    combined = stats.combine_pvalues(pv, method="fisher").pvalue
    gof_ok = pv.min() > 1e-4 / pv.size and combined > 1e-4
    results["RNG GOF"] = (n_cases, gof_ok)
    ok = all(good and n >= PROPERTY_CASES for n, good in results.values())
    report(10, ok, ", ".join(f"{k}: {n} cases {'ok' if good else 'FAILED'}" for k, (n, good) in results.items())
                   + f"; GOF min p={pv.min():.2e} over {pv.size} tests, Fisher combined p={combined:.3f}")
    assert ok


if __name__ == "__main__":
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_criterion_")]
    tests.sort(key=lambda f: int(f.__name__.split("_")[2]))
    failed = 0
    for t in tests:
        try:
            t()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
