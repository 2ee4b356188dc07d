"""Command-line entry point: ``qrbalance <subcommand> [--config PATH] [overrides]``.

Exit codes: 0 on success, 2 for configuration or parameter errors, 3 when a
runtime invariant check fails, 1 when the output cannot be written.
"""

from __future__ import annotations

import argparse
import sys

from qrbalance.bounds import bounds_report
from qrbalance.config import STANDARD, ExperimentSpec, load_config, validate_spec
from qrbalance.errors import ConfigError, InvariantViolation, ParameterError
from qrbalance.link import make_link, round_time
from qrbalance.oracle import build_chain, stationary_stats
from qrbalance.sweep import format_csv, format_json, metadata, run_sweep, write_output

SUBCOMMAND_SCENARIO = {
    "simulate": "single",
    "standard": "standard",
    "chain": "chain",
    "bounds": "single",
    "oracle": "single",
    "sweep": None,
}

BOUNDS_COLUMNS = [
    "N", "d1_km", "d2_km", "t_c_s", "F0", "p1", "p2", "tau_round_s", "eta",
    "expected_n_left", "expected_n_right", "matched_lower_bound", "vacuous",
    "rate_lower_bound_per_s", "std_rate_per_s", "std_rate_lower_bound_per_s",
    "var_alpha_upper", "age_bound", "fidelity_bound", "swap_fidelity_bound",
]
ORACLE_COLUMNS = [
    "policy", "N", "d1_km", "d2_km", "p1", "p2", "tau_round_s", "n_states", "n_recurrent_classes",
    "E_abs_alpha", "Var_alpha", "E_alpha", "E_matched", "rate_per_s", "violation_prob", "drops_per_round",
]


def _distance_tuple(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated kilometres, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML experiment file")
    common.add_argument("--seed", type=int)
    common.add_argument("--rounds", type=int, help="rounds (or cycles for standard baselines)")
    common.add_argument("--warmup", type=int)
    common.add_argument("--replications", type=int)
    common.add_argument("--out", metavar="PATH", help="output file (stdout if absent)")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--workers", type=int, default=1)
    grid = common.add_argument_group("inline grid (overrides the config file)")
    grid.add_argument("--N", type=int, nargs="+", dest="N")
    grid.add_argument("--distances", type=_distance_tuple, nargs="+", metavar="D1,D2[,D3]")
    grid.add_argument("--policy", nargs="+", dest="policies")
    grid.add_argument("--tc", type=float, nargs="+", dest="t_c", help="coherence time(s) in seconds")
    grid.add_argument("--F0", type=float, nargs="+", dest="F0")
    grid.add_argument("--sigma", type=float, help="attenuation in dB/km")
    grid.add_argument("--c", type=float, help="light speed in fibre, km/s")

    parser = argparse.ArgumentParser(prog="qrbalance", description="Balanced multiplexed repeater simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "single repeater under one or more allocation policies",
        "standard": "sequential (non-multiplexed) baseline repeater",
        "bounds": "closed-form bounds only, no simulation",
        "oracle": "exact stationary analysis for small N",
        "chain": "two-repeater chain",
        "sweep": "run whatever scenario the config file names",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return parser


def resolve_spec(args: argparse.Namespace) -> ExperimentSpec:
    """Merge config file and inline flags into one validated spec."""
    wanted = SUBCOMMAND_SCENARIO[args.command]
    if args.config:
        raw = load_config(args.config).to_dict()
        if wanted and raw["scenario"] != wanted and not (args.command == "bounds" and raw["scenario"] == STANDARD):
            raise ConfigError(f"config is for scenario {raw['scenario']!r}, but '{args.command}' needs {wanted!r}", "scenario")
    elif args.command == "sweep":
        raise ConfigError("sweep needs --config", "config")
    else:
        raw = {"scenario": wanted, "grid": {}}
    if args.command == "bounds" and raw["scenario"] == STANDARD:
        raw["scenario"] = "single"
        raw["policies"] = ["optimal"]
    grid = dict(raw.get("grid") or {})
    for key in ("N", "distances", "t_c", "F0", "sigma", "c"):
        value = getattr(args, key)
        if value is not None:
            grid[key] = value
    raw["grid"] = grid
    for key in ("seed", "rounds", "warmup", "replications", "policies"):
        value = getattr(args, key)
        if value is not None:
            raw[key] = value
    if args.out:
        raw["output"] = args.out
    if args.command == "standard":
        raw["policies"] = [STANDARD]
    if args.command == "oracle" and "standard" in raw.get("policies", []):
        raise ConfigError("the oracle has no standard-repeater model", "policies")
    return validate_spec(raw)


def bounds_rows(spec: ExperimentSpec) -> list:
    rows = []
    for pt in spec.points():
        left, right = (make_link(d, pt.sigma, pt.c) for d in pt.distances)
        rec = bounds_report(pt.N, left, right, pt.t_c, pt.F0).record()
        rec.update(d1_km=pt.distances[0], d2_km=pt.distances[1], t_c_s=pt.t_c, F0=pt.F0, p1=rec.pop("p_l"), p2=rec.pop("p_r"))
        rows.append(rec)
    return rows


def oracle_rows(spec: ExperimentSpec) -> list:
    rows = []
    for pt in spec.points():
        left, right = (make_link(d, pt.sigma, pt.c) for d in pt.distances)
        tau = round_time(left, right)
        for policy in spec.policies:
            chain = build_chain(pt.N, left.success_prob, right.success_prob, policy)
            st = stationary_stats(chain)
            rows.append({
                "policy": policy, "N": pt.N, "d1_km": pt.distances[0], "d2_km": pt.distances[1],
                "p1": left.success_prob, "p2": right.success_prob, "tau_round_s": tau,
                "n_states": int((chain.stationary > 0).sum()), "n_recurrent_classes": chain.n_recurrent_classes,
                "E_abs_alpha": st.E_abs_alpha, "Var_alpha": st.Var_alpha, "E_alpha": st.E_alpha,
                "E_matched": st.E_matched, "rate_per_s": st.E_matched / tau,
                "violation_prob": st.violation_prob, "drops_per_round": st.drops_per_round,
                "alpha_pmf": chain.pmf(),
            })
    return rows


def execute(args: argparse.Namespace) -> str:
    spec = resolve_spec(args)
    fmt = args.format or ("json" if (spec.output or "").endswith(".json") else "csv")
    meta = metadata(spec)
    meta["command"] = args.command
    if args.command == "bounds":
        rows, columns = bounds_rows(spec), BOUNDS_COLUMNS
    elif args.command == "oracle":
        rows, columns = oracle_rows(spec), ORACLE_COLUMNS
    else:
        rows, columns = run_sweep(spec, workers=args.workers), None
    if fmt == "json":
        text = format_json(rows, meta)
    else:
        text = format_csv(rows, meta) if columns is None else format_csv(rows, meta, columns)
    if spec.output:
        write_output(text, spec.output)
        return ""
    return text


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = execute(args)
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1
    if text:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
