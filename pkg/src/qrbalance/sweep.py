"""Run an :class:`ExperimentSpec` over its grid and write tabular results."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from qrbalance import __version__
from qrbalance.bounds import bounds_report
from qrbalance.chain import ChainConfig, chain_standard, run_chain
from qrbalance.config import STANDARD, ExperimentSpec, GridPoint
from qrbalance.engine import RepeaterConfig, SimSummary, run, run_standard
from qrbalance.stochastics import generator_info

ID_COLUMNS = [
    "row_type", "replication", "scenario", "policy", "N", "d1_km", "d2_km", "d3_km",
    "t_c_s", "F0", "sigma_db_per_km", "c_km_per_s", "p1", "p2", "p3", "rounds", "warmup", "seed",
]
METRIC_COLUMNS = [
    "tau_round_s", "mean_matched_per_round", "se_matched", "rate_per_s", "se_rate",
    "mean_abs_alpha", "se_abs_alpha", "mean_alpha", "se_alpha", "var_alpha",
    "mean_swap_fidelity", "se_swap_fidelity", "mean_age", "se_age", "violation_fraction",
    "drops_per_round", "mean_cycle_time_s", "se_cycle_time_s", "mean_wait_s", "idle_per_round",
]
COMPARE_COLUMNS = ["std_rate_per_s", "rel_gap_to_std"]
BOUND_COLUMNS = [
    "eta", "matched_lower_bound", "bound_vacuous", "rate_lower_bound_per_s", "std_rate_lower_bound_per_s",
    "var_alpha_upper", "age_bound", "fidelity_bound", "swap_fidelity_bound",
]
COLUMNS = ID_COLUMNS + METRIC_COLUMNS + COMPARE_COLUMNS + BOUND_COLUMNS
# pooled as sqrt(mean(se_i^2) / R) in aggregate rows
SE_COLUMNS = [c for c in METRIC_COLUMNS if c.startswith("se_")]


def _clean(value):
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _repeater_cfg(point: GridPoint, policy: str) -> RepeaterConfig:
    d_l, d_r = point.distances
    return RepeaterConfig.from_distances(
        point.N, d_l, d_r, t_c_s=point.t_c, F0=point.F0,
        policy="optimal" if policy == STANDARD else policy,
        attenuation_db_per_km=point.sigma, light_speed_km_per_s=point.c,
    )


def _chain_cfg(point: GridPoint, policy: str) -> ChainConfig:
    return ChainConfig(point.distances, point.N, "optimal" if policy == STANDARD else policy,
                       F0=point.F0, t_c_s=point.t_c, attenuation_db_per_km=point.sigma,
                       light_speed_km_per_s=point.c)


def _simulate(spec: ExperimentSpec, point: GridPoint, policy: str, rep: int) -> SimSummary:
    if spec.scenario == "chain":
        cfg = _chain_cfg(point, policy)
        if policy == STANDARD:
            return chain_standard(cfg, spec.rounds, spec.seed, replication=rep)
        return run_chain(cfg, spec.rounds, spec.warmup, spec.seed, replication=rep)
    cfg = _repeater_cfg(point, policy)
    if policy == STANDARD:
        return run_standard(cfg, spec.rounds, spec.seed, replication=rep)
    return run(cfg, spec.rounds, spec.warmup, spec.seed, replication=rep)


def _point_context(spec: ExperimentSpec, point: GridPoint) -> dict:
    """Columns shared by every row of one grid point: parameters, reference rate and bounds."""
    d = list(point.distances) + [None] * (3 - len(point.distances))
    ctx = {
        "scenario": spec.scenario, "N": point.N, "d1_km": d[0], "d2_km": d[1], "d3_km": d[2],
        "t_c_s": point.t_c, "F0": point.F0, "sigma_db_per_km": point.sigma, "c_km_per_s": point.c,
        "seed": spec.seed,
    }
    if spec.scenario == "chain":
        cfg = _chain_cfg(point, STANDARD)
        probs = list(cfg.probs)
        # no closed form for the sequential chain; use a simulated reference
        ctx["std_rate_per_s"] = chain_standard(cfg, max(spec.rounds, 2), spec.seed, replication=0).rate_per_s
    else:
        cfg = _repeater_cfg(point, STANDARD)
        probs = [cfg.p_l, cfg.p_r, None]
        rep = bounds_report(point.N, cfg.left, cfg.right, point.t_c, point.F0)
        ctx["std_rate_per_s"] = rep.std_rate_per_s
        if point.N >= 2:
            ctx.update({k: getattr(rep, k) for k in BOUND_COLUMNS if k != "bound_vacuous"})
            ctx["bound_vacuous"] = rep.vacuous
    ctx["p1"], ctx["p2"], ctx["p3"] = probs
    return ctx


def _task(args):
    spec, point, policy, rep = args
    return _simulate(spec, point, policy, rep)


def _row(ctx: dict, summary: SimSummary, row_type: str, rep) -> dict:
    row = dict.fromkeys(COLUMNS)
    row.update(ctx)
    rec = summary.record()
    row.update({k: rec[k] for k in METRIC_COLUMNS})
    row.update(row_type=row_type, replication=rep, policy=summary.policy, rounds=summary.rounds, warmup=summary.warmup)
    std = row.get("std_rate_per_s")
    if std and rec["rate_per_s"] is not None and math.isfinite(rec["rate_per_s"]):
        row["rel_gap_to_std"] = (std - rec["rate_per_s"]) / std
    return {k: _clean(v) for k, v in row.items()}


def _aggregate(rows: list) -> dict:
    agg = dict(rows[0])
    agg["row_type"] = "aggregate"
    agg["replication"] = None
    R = len(rows)
    for col in METRIC_COLUMNS + ["rel_gap_to_std"]:
        vals = [r[col] for r in rows if r[col] is not None]
        if len(vals) != R:
            agg[col] = None
        elif col in SE_COLUMNS:
            agg[col] = math.sqrt(sum(v * v for v in vals) / R / R)
        else:
            agg[col] = math.fsum(vals) / R
    if agg["rate_per_s"] is not None and agg.get("std_rate_per_s"):
        agg["rel_gap_to_std"] = (agg["std_rate_per_s"] - agg["rate_per_s"]) / agg["std_rate_per_s"]
    return agg


def run_sweep(spec: ExperimentSpec, workers: int = 1) -> list:
    """One row per (grid point, policy, replication) plus one aggregate row per (grid point, policy).

    Rows come back in grid order regardless of how work is scheduled.
    """
    points = spec.points()
    tasks = [(spec, pt, pol, rep) for pt in points for pol in spec.policies for rep in range(spec.replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_task, tasks))
    else:
        summaries = [_task(t) for t in tasks]
    contexts = {i: _point_context(spec, pt) for i, pt in enumerate(points)}
    rows = []
    it = iter(summaries)
    for i, _ in enumerate(points):
        for _pol in spec.policies:
            reps = [_row(contexts[i], next(it), "replication", r) for r in range(spec.replications)]
            rows.extend(reps)
            rows.append(_aggregate(reps))
    return rows


def metadata(spec: ExperimentSpec) -> dict:
    return {
        "effective_config": spec.to_dict(),
        "seed": spec.seed,
        "generator": generator_info(),
        "code_version": f"qrbalance {__version__}",
    }


def format_csv(rows: list, meta: dict, columns=COLUMNS) -> str:
    buf = io.StringIO()
    buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})
    return buf.getvalue()


def format_json(rows: list, meta: dict) -> str:
    return json.dumps({"metadata": meta, "rows": rows}, indent=1, sort_keys=False) + "\n"


def read_csv(text: str) -> tuple:
    """Inverse of :func:`format_csv`: ``(metadata, rows)`` with numeric fields parsed."""
    first, _, body = text.partition("\n")
    if not first.startswith("# "):
        raise ValueError("missing metadata header line")
    meta = json.loads(first[2:])
    rows = []
    for raw in csv.DictReader(io.StringIO(body)):
        row = {}
        for k, v in raw.items():
            if v == "":
                row[k] = None
            elif v in ("True", "False"):
                row[k] = v == "True"
            else:
                try:
                    row[k] = int(v)
                except ValueError:
                    try:
                        row[k] = float(v)
                    except ValueError:
                        row[k] = v
        rows.append(row)
    return meta, rows


def write_output(text: str, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path
