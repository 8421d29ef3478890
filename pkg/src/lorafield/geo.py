"""Geodesy and the link budget used to decide per-gateway reception."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Mapping

EARTH_RADIUS_M = 6_371_000.0

# SX1276 datasheet, BW 125 kHz.
DEFAULT_SENSITIVITY_DBM = {7: -123.0, 8: -126.0, 9: -129.0, 10: -132.0, 11: -134.5, 12: -137.0}


class LinkValidationError(ValueError):
    pass


@dataclass(frozen=True)
class GeoPoint:
    lat_deg: float
    lon_deg: float
    alt_m: float = 0.0

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat_deg <= 90.0:
            raise LinkValidationError(f"latitude out of range: {self.lat_deg!r}")
        if not -180.0 < self.lon_deg <= 180.0:
            raise LinkValidationError(f"longitude out of range: {self.lon_deg!r}")


@dataclass(frozen=True)
class ChannelModel:
    """Log-distance path loss with log-normal shadowing.

    Defaults are an urban 868 MHz fit at a 1 km reference distance; treat
    them as a starting point, not ground truth.
    """

    ref_distance_m: float = 1000.0
    ref_loss_db: float = 128.95
    exponent: float = 2.32
    shadowing_sigma_db: float = 6.0
    tx_power_dbm: float = 14.0
    antenna_gains_db: float = 0.0
    sensitivity_dbm: Mapping[int, float] = field(default_factory=lambda: dict(DEFAULT_SENSITIVITY_DBM))

    def __post_init__(self) -> None:
        if not self.exponent > 0:
            raise LinkValidationError("path-loss exponent must be > 0")
        if not self.ref_distance_m > 0:
            raise LinkValidationError("reference distance must be > 0")
        if not self.shadowing_sigma_db >= 0:
            raise LinkValidationError("shadowing sigma must be >= 0")
        sfs = sorted(self.sensitivity_dbm)
        levels = [self.sensitivity_dbm[sf] for sf in sfs]
        if any(b >= a for a, b in zip(levels, levels[1:])):
            raise LinkValidationError("sensitivity must strictly decrease with SF")

    def sensitivity(self, sf: int) -> float:
        try:
            return self.sensitivity_dbm[sf]
        except KeyError:
            raise LinkValidationError(f"no sensitivity configured for SF{sf}") from None


@dataclass(frozen=True)
class LinkSample:
    rssi_dbm: float
    margin_db: float
    received: bool


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    phi1, phi2 = math.radians(a.lat_deg), math.radians(b.lat_deg)
    dphi = phi2 - phi1
    dlmb = math.radians(b.lon_deg - a.lon_deg)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def path_loss_db(model: ChannelModel, distance_m: float) -> float:
    if not distance_m > 0:
        raise LinkValidationError(f"distance must be > 0 m, got {distance_m!r}")
    d = max(distance_m, model.ref_distance_m)
    return model.ref_loss_db + 10.0 * model.exponent * math.log10(d / model.ref_distance_m)


def mean_rssi_dbm(model: ChannelModel, distance_m: float, extra_gain_db: float = 0.0) -> float:
    """RSSI before shadowing."""
    return model.tx_power_dbm + model.antenna_gains_db + extra_gain_db - path_loss_db(model, distance_m)


def receive_decision(
    model: ChannelModel,
    sf: int,
    distance_m: float,
    shadow_draw: float,
    extra_gain_db: float = 0.0,
) -> LinkSample:
    """Decide whether one gateway hears one transmission.

    ``shadow_draw`` is the shadowing loss in dB (already scaled by sigma) and
    ``extra_gain_db`` carries per-node antenna offsets.
    """
    threshold = model.sensitivity(sf)
    rssi = mean_rssi_dbm(model, distance_m, extra_gain_db) - shadow_draw
    margin = rssi - threshold
    return LinkSample(rssi, margin, rssi >= threshold)


def reception_probability(model: ChannelModel, sf: int, distance_m: float, extra_gain_db: float = 0.0) -> float:
    """P(received) under the shadowing distribution."""
    margin = mean_rssi_dbm(model, distance_m, extra_gain_db) - model.sensitivity(sf)
    if model.shadowing_sigma_db == 0:
        return 1.0 if margin >= 0 else 0.0
    return NormalDist().cdf(margin / model.shadowing_sigma_db)
