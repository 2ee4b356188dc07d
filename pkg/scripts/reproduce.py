"""Regenerate the figure tables from the YAML files in configs/.

    python scripts/reproduce.py                    # every figure, full length
    python scripts/reproduce.py fig7 --rounds 200000 --workers 4

Each figure writes its CSV (metadata header plus one row per replication and
one aggregate row) to the path named in its config, then prints the
aggregate rows as a compact table.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from qrbalance.config import load_config
from qrbalance.sweep import format_csv, metadata, run_sweep, write_output

ROOT = Path(__file__).resolve().parent.parent
FIGURES = {
    "fig4": ("fig4_rates.yaml", ["rate_per_s", "std_rate_per_s", "rel_gap_to_std", "rate_lower_bound_per_s"]),
    "fig5": ("fig5_fidelity.yaml", ["mean_swap_fidelity", "swap_fidelity_bound", "mean_abs_alpha"]),
    "fig6": ("fig6_comparison.yaml", ["rate_per_s", "se_rate", "rel_gap_to_std", "mean_swap_fidelity"]),
    "fig7": ("fig7_hard_cutoff.yaml", ["rate_per_s", "mean_swap_fidelity", "drops_per_round", "violation_fraction"]),
    "fig8": ("fig8_chain.yaml", ["rate_per_s", "rel_gap_to_std", "mean_swap_fidelity"]),
}


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def print_table(rows: list, metrics: list, out=sys.stdout) -> None:
    keys = ["policy", "N", "d1_km", "d2_km", "d3_km", "t_c_s"]
    keys = [k for k in keys if any(r.get(k) is not None for r in rows)]
    header = keys + metrics
    body = [[_fmt(r.get(k)) for k in header] for r in rows if r["row_type"] == "aggregate"]
    widths = [max(len(h), *(len(line[i]) for line in body)) for i, h in enumerate(header)]
    print("  ".join(h.rjust(w) for h, w in zip(header, widths)), file=out)
    for line in body:
        print("  ".join(v.rjust(w) for v, w in zip(line, widths)), file=out)


def reproduce(name: str, rounds=None, workers: int = 1) -> Path:
    config, metrics = FIGURES[name]
    spec = load_config(ROOT / "configs" / config)
    if rounds is not None:
        spec = spec.replace(rounds=rounds, warmup=rounds // 10)
    start = time.perf_counter()
    rows = run_sweep(spec, workers=workers)
    path = write_output(format_csv(rows, metadata(spec)), ROOT / spec.output)
    print(f"== {name}: {len(rows)} rows in {time.perf_counter() - start:.1f} s -> {path.relative_to(ROOT)}")
    print_table(rows, metrics)
    return path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("figures", nargs="*", metavar="FIGURE", help=f"any of {', '.join(FIGURES)} (default: all)")
    parser.add_argument("--rounds", type=int, help="override rounds (warmup becomes rounds/10)")
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args(argv)
    unknown = sorted(set(args.figures) - set(FIGURES))
    if unknown:
        parser.error(f"unknown figure(s): {', '.join(unknown)}")
    for name in args.figures or list(FIGURES):
        reproduce(name, args.rounds, args.workers)
    return 0


if __name__ == "__main__":
    sys.exit(main())
