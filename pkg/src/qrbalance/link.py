"""Fiber link parameters: per-attempt success probability and trip time."""

import math
from dataclasses import dataclass

from qrbalance.errors import ParameterError

DEFAULT_ATTENUATION_DB_PER_KM = 0.15
DEFAULT_LIGHT_SPEED_KM_PER_S = 2.0e5


@dataclass(frozen=True)
class LinkParams:
    distance_km: float
    attenuation_db_per_km: float
    light_speed_km_per_s: float
    success_prob: float
    trip_time_s: float


def make_link(
    distance_km: float,
    attenuation_db_per_km: float = DEFAULT_ATTENUATION_DB_PER_KM,
    light_speed_km_per_s: float = DEFAULT_LIGHT_SPEED_KM_PER_S,
) -> LinkParams:
    """Build a link from its length and fiber properties.

    Attenuation is in dB/km, so the success probability of one heralded
    attempt is ``10**(-attenuation * distance / 10)``.
    """
    for name, value in (("distance_km", distance_km), ("light_speed_km_per_s", light_speed_km_per_s)):
        if not math.isfinite(value) or value <= 0:
            raise ParameterError(f"{name} must be finite and > 0, got {value!r}")
    if not math.isfinite(attenuation_db_per_km) or attenuation_db_per_km < 0:
        raise ParameterError(f"attenuation_db_per_km must be finite and >= 0, got {attenuation_db_per_km!r}")
    loss_db = attenuation_db_per_km * distance_km
    return LinkParams(
        distance_km=float(distance_km),
        attenuation_db_per_km=float(attenuation_db_per_km),
        light_speed_km_per_s=float(light_speed_km_per_s),
        success_prob=10.0 ** (-loss_db / 10.0),
        trip_time_s=distance_km / light_speed_km_per_s,
    )


def round_time(left: LinkParams, right: LinkParams) -> float:
    # both sides attempt in parallel; the slower link sets the round length
    return max(left.trip_time_s, right.trip_time_s)
