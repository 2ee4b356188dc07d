"""Seeded random streams and exact samplers.

Streams are numpy ``Generator`` objects over the counter-based Philox4x64
bit generator. A stream is identified by a master seed plus a lane tuple
(experiment id, replication index, purpose tag); lanes are mapped into the
``SeedSequence`` spawn key, so any two lanes get statistically independent
streams and the mapping does not depend on which worker builds them.

The simulation kernels draw uniforms in blocks and invert precomputed
binomial CDF tables, which is exact in distribution up to float rounding of
the CDF.
"""

from __future__ import annotations

import functools
import hashlib
from dataclasses import dataclass

import numba
import numpy as np
from scipy import stats

from qrbalance.errors import ParameterError

GENERATOR_FAMILY = "numpy.random.Philox (4x64-10) seeded by SeedSequence"


def generator_info() -> str:
    return f"{GENERATOR_FAMILY}; numpy {np.__version__}"


def _lane_word(part: "int | str") -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ParameterError(f"lane components must be non-negative, got {part}")
        return int(part)
    digest = hashlib.blake2b(str(part).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class StreamKey:
    master_seed: int
    lane: tuple = ()

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.master_seed & (2**64 - 1), spawn_key=tuple(_lane_word(p) for p in self.lane))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.seed_sequence()))


def make_stream(master_seed: int, *lane: "int | str") -> np.random.Generator:
    return StreamKey(int(master_seed), tuple(lane)).generator()


def binomial(n: int, p: float, stream: np.random.Generator) -> int:
    if n < 0 or not 0.0 <= p <= 1.0:
        raise ParameterError(f"invalid binomial parameters n={n}, p={p}")
    if n == 0 or p == 0.0:
        return 0
    if p == 1.0:
        return n
    return int(stream.binomial(n, p))


def geometric_attempts(p: float, stream: np.random.Generator, size=None):
    """Bernoulli(p) trials up to and including the first success."""
    if not 0.0 < p <= 1.0:
        raise ParameterError(f"success probability must be in (0, 1], got {p}")
    if p == 1.0:
        return 1 if size is None else np.ones(size, dtype=np.int64)
    out = stream.geometric(p, size=size)
    return int(out) if size is None else out


@functools.lru_cache(maxsize=4096)
def binomial_cdf_row(n: int, p: float) -> np.ndarray:
    """``row[k] = P[Binom(n, p) <= k]`` for ``0 <= k <= n``, with ``row[n]`` forced to 1."""
    ks = np.arange(n + 1)
    if p >= 1.0:
        row = np.where(ks < n, 0.0, 1.0)
    elif p <= 0.0:
        row = np.ones(n + 1)
    else:
        row = stats.binom.cdf(ks, n, p)
    row[n] = 1.0
    row.flags.writeable = False
    return row


def binomial_cdf_table(n_max: int, p: float) -> np.ndarray:
    """Rows of :func:`binomial_cdf_row` for ``n = 0..n_max``, right-padded with ones."""
    table = np.ones((n_max + 1, n_max + 1), dtype=np.float64)
    for n in range(n_max + 1):
        table[n, : n + 1] = binomial_cdf_row(n, float(p))
    return table


def binomial_from_uniform(n: int, p: float, u: float) -> int:
    """Inverse-CDF binomial draw; the same rule the compiled kernels use."""
    row = binomial_cdf_row(int(n), float(p))
    return int(np.searchsorted(row, u, side="right"))


@numba.njit(cache=True)
def invert_binomial(table, n, u):
    """Smallest k with CDF(k) > u, for a uniform u in [0, 1)."""
    row = table[n]
    k = 0
    while row[k] <= u:
        k += 1
    return k
