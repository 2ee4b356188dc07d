"""Experiment configuration: YAML (or JSON) files with strict key checking.

Example::

    scenario: single          # single | standard | chain
    policies: [optimal, equal, proportional, standard]
    grid:
      N: [4, 8, 16]
      distances: [[20, 30]]   # pairs for single/standard, triples for chain
      t_c: [0.001]
      F0: [1.0]
      sigma: 0.15             # dB/km
      c: 2.0e5                # km/s
    rounds: 1000000
    warmup: 100000
    replications: 1
    seed: 1
    output: results/fig4a.csv
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass
from pathlib import Path

import yaml

from qrbalance.allocation import PolicyKind
from qrbalance.errors import ConfigError

SCENARIOS = ("single", "standard", "chain")
STANDARD = "standard"
SCENARIO_POLICIES = {
    "single": {p.value for p in PolicyKind} | {STANDARD},
    "standard": {STANDARD},
    "chain": {PolicyKind.OPTIMAL.value, PolicyKind.EQUAL.value, STANDARD},
}
DEFAULT_POLICIES = {"single": ["optimal"], "standard": [STANDARD], "chain": ["optimal"]}


@dataclass(frozen=True)
class Grid:
    N: tuple
    distances: tuple
    t_c: tuple = (1e-3,)
    F0: tuple = (1.0,)
    sigma: float = 0.15
    c: float = 2.0e5


@dataclass(frozen=True)
class GridPoint:
    N: int
    distances: tuple
    t_c: float
    F0: float
    sigma: float
    c: float


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: str
    grid: Grid
    policies: tuple = ("optimal",)
    rounds: int = 1_000_000
    warmup: "int | None" = None
    replications: int = 1
    seed: int = 0
    output: "str | None" = None

    def points(self) -> list:
        g = self.grid
        return [
            GridPoint(n, d, tc, f0, g.sigma, g.c)
            for d, n, tc, f0 in itertools.product(g.distances, g.N, g.t_c, g.F0)
        ]

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["policies"] = list(self.policies)
        d["grid"] = {
            "N": list(self.grid.N),
            "distances": [list(x) for x in self.grid.distances],
            "t_c": list(self.grid.t_c),
            "F0": list(self.grid.F0),
            "sigma": self.grid.sigma,
            "c": self.grid.c,
        }
        return d

    def replace(self, **changes) -> "ExperimentSpec":
        return validate_spec({**self.to_dict(), **{k: v for k, v in changes.items() if v is not None}})


_TOP_KEYS = {f.name for f in dataclasses.fields(ExperimentSpec)}
_GRID_KEYS = {f.name for f in dataclasses.fields(Grid)}


def _reject_unknown(block: dict, allowed: set, path: str) -> None:
    for key in block:
        if key not in allowed:
            where = f"{path}.{key}" if path else str(key)
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})", where)


def _as_number(item):
    # YAML 1.1 reads exponents without a sign ("2e5") as strings
    if isinstance(item, str):
        try:
            return float(item)
        except ValueError:
            return item
    return item


def _is_number(item) -> bool:
    return not isinstance(item, bool) and isinstance(item, (int, float))


def _number_list(value, path: str, kind=float, positive=True) -> tuple:
    items = value if isinstance(value, (list, tuple)) else [value]
    if not items:
        raise ConfigError("must not be empty", path)
    out = []
    for i, item in enumerate(items):
        item = _as_number(item)
        if not _is_number(item):
            raise ConfigError(f"expected a number, got {item!r}", f"{path}[{i}]")
        if kind is int and item != int(item):
            raise ConfigError(f"expected an integer, got {item!r}", f"{path}[{i}]")
        if positive and not item > 0:
            raise ConfigError(f"must be > 0, got {item!r}", f"{path}[{i}]")
        out.append(kind(item))
    return tuple(out)


def _int(value, path: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"expected an integer >= {minimum}, got {value!r}", path)
    return value


def validate_spec(raw) -> ExperimentSpec:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping")
    _reject_unknown(raw, _TOP_KEYS, "")

    scenario = raw.get("scenario", "single")
    if scenario is None or scenario == "":
        raise ConfigError("missing value; expected one of " + ", ".join(SCENARIOS), "scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; expected one of " + ", ".join(SCENARIOS), "scenario")

    grid_raw = raw.get("grid")
    if not grid_raw:
        raise ConfigError("missing grid block (needs at least N and distances)", "grid")
    if not isinstance(grid_raw, dict):
        raise ConfigError("must be a mapping", "grid")
    _reject_unknown(grid_raw, _GRID_KEYS, "grid")
    for key in ("N", "distances"):
        if key not in grid_raw or grid_raw[key] in (None, []):
            raise ConfigError("missing required field", f"grid.{key}")
    Ns = _number_list(grid_raw["N"], "grid.N", kind=int)
    if min(Ns) < (1 if scenario == "standard" else 2):
        raise ConfigError(f"memory counts too small: {Ns}", "grid.N")
    hops = 3 if scenario == "chain" else 2
    dist_raw = grid_raw["distances"]
    if not isinstance(dist_raw, (list, tuple)) or not dist_raw:
        raise ConfigError("expected a list of distance tuples", "grid.distances")
    if all(_is_number(_as_number(x)) for x in dist_raw):
        dist_raw = [dist_raw]
    distances = []
    for i, d in enumerate(dist_raw):
        tup = _number_list(d, f"grid.distances[{i}]")
        if len(tup) != hops:
            raise ConfigError(f"expected {hops} distances for scenario {scenario!r}, got {len(tup)}", f"grid.distances[{i}]")
        distances.append(tup)
    t_c = _number_list(grid_raw.get("t_c", [1e-3]), "grid.t_c")
    F0 = _number_list(grid_raw.get("F0", [1.0]), "grid.F0")
    for i, f in enumerate(F0):
        if not 0.25 <= f <= 1.0:
            raise ConfigError(f"must lie in [0.25, 1], got {f}", f"grid.F0[{i}]")
    sigma = _as_number(grid_raw.get("sigma", 0.15))
    c = _as_number(grid_raw.get("c", 2.0e5))
    if not _is_number(sigma) or sigma < 0:
        raise ConfigError(f"expected a number >= 0, got {sigma!r}", "grid.sigma")
    if not _is_number(c) or c <= 0:
        raise ConfigError(f"expected a number > 0, got {c!r}", "grid.c")
    grid = Grid(Ns, tuple(distances), t_c, F0, float(sigma), float(c))

    policies = raw.get("policies", DEFAULT_POLICIES[scenario])
    if isinstance(policies, str):
        policies = [policies]
    if not isinstance(policies, (list, tuple)) or not policies:
        raise ConfigError("expected a non-empty list", "policies")
    for i, p in enumerate(policies):
        if p not in SCENARIO_POLICIES[scenario]:
            allowed = ", ".join(sorted(SCENARIO_POLICIES[scenario]))
            raise ConfigError(f"policy {p!r} not valid for scenario {scenario!r} (allowed: {allowed})", f"policies[{i}]")

    rounds = _int(raw.get("rounds", 1_000_000), "rounds", 2)
    warmup = raw.get("warmup")
    if warmup is not None:
        warmup = _int(warmup, "warmup", 0)
        if warmup >= rounds:
            raise ConfigError(f"must be < rounds ({rounds}), got {warmup}", "warmup")
    output = raw.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("expected a path string", "output")
    return ExperimentSpec(
        scenario=scenario,
        grid=grid,
        policies=tuple(policies),
        rounds=rounds,
        warmup=warmup,
        replications=_int(raw.get("replications", 1), "replications", 1),
        seed=_int(raw.get("seed", 0), "seed", 0),
        output=output,
    )


def parse_config(text: str) -> ExperimentSpec:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark is not None else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"parse error: {problem}", where) from exc
    return validate_spec(raw)


def load_config(path) -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from exc
    return parse_config(text)


def dump_config(spec: ExperimentSpec) -> str:
    return yaml.safe_dump(spec.to_dict(), sort_keys=False)
