"""LoRa airtime and duty-cycle planning.

Time-on-air follows the Semtech SX127x airtime formula (AN1200.13):

    T_sym      = 2**SF / BW
    n_payload  = 8 + max(ceil((8 PL - 4 SF + 28 + 16 CRC - 20 IH) / (4 (SF - 2 DE))) (CR + 4), 0)
    T_packet   = (n_preamble + 4.25) T_sym + n_payload T_sym

The minimal legal start-to-start interval under a duty cycle ``d`` is
``T_packet / d``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal, Union

SF_RANGE = range(7, 13)
SUPPORTED_BANDWIDTHS = (125_000, 250_000, 500_000)
MAX_PHY_PAYLOAD = 255

# MHDR(1) + DevAddr(4) + FCtrl(1) + FCnt(2) + FPort(1) + MIC(4), no FOpts.
DEFAULT_MAC_OVERHEAD = 13


class PhyValidationError(ValueError):
    """Raised for PHY parameters outside the LoRa operating envelope."""


def _check_sf(sf: int) -> None:
    if isinstance(sf, bool) or not isinstance(sf, int) or sf not in SF_RANGE:
        raise PhyValidationError(f"spreading factor must be an integer in 7..12, got {sf!r}")


@dataclass(frozen=True)
class PhyParams:
    sf: int
    bandwidth_hz: int = 125_000
    coding_rate: int = 1
    preamble_symbols: int = 8
    explicit_header: bool = True
    crc_on: bool = True
    low_data_rate_optimize: Union[bool, Literal["auto"]] = "auto"
    phy_payload_bytes: int = 0

    def __post_init__(self) -> None:
        _check_sf(self.sf)
        if self.bandwidth_hz not in SUPPORTED_BANDWIDTHS:
            raise PhyValidationError(
                f"bandwidth must be one of {SUPPORTED_BANDWIDTHS} Hz, got {self.bandwidth_hz!r}"
            )
        if self.coding_rate not in (1, 2, 3, 4):
            raise PhyValidationError(f"coding rate index must be 1..4 (4/5..4/8), got {self.coding_rate!r}")
        if not isinstance(self.preamble_symbols, int) or self.preamble_symbols < 1:
            raise PhyValidationError(f"preamble must be >= 1 symbol, got {self.preamble_symbols!r}")
        if not isinstance(self.phy_payload_bytes, int) or not 0 <= self.phy_payload_bytes <= MAX_PHY_PAYLOAD:
            raise PhyValidationError(
                f"PHY payload must be 0..{MAX_PHY_PAYLOAD} bytes, got {self.phy_payload_bytes!r}"
            )
        if self.low_data_rate_optimize not in (True, False, "auto"):
            raise PhyValidationError("low_data_rate_optimize must be True, False or 'auto'")

    @property
    def de(self) -> int:
        """Resolved low-data-rate-optimize bit."""
        if self.low_data_rate_optimize == "auto":
            return int(self.sf >= 11 and self.bandwidth_hz == 125_000)
        return int(bool(self.low_data_rate_optimize))

    def with_sf(self, sf: int) -> "PhyParams":
        return replace(self, sf=sf)


@dataclass(frozen=True)
class DutyCyclePolicy:
    duty_cycle: float = 0.01

    def __post_init__(self) -> None:
        if not 0.0 < self.duty_cycle <= 1.0:
            raise PhyValidationError(f"duty cycle must be in (0, 1], got {self.duty_cycle!r}")


@dataclass(frozen=True)
class AppMessageSpec:
    app_payload_bytes: int
    target_interval_s: float
    mac_overhead_bytes: int = DEFAULT_MAC_OVERHEAD

    def __post_init__(self) -> None:
        if self.app_payload_bytes < 0 or self.mac_overhead_bytes < 0:
            raise PhyValidationError("payload and overhead sizes must be >= 0")
        if self.phy_payload_bytes > MAX_PHY_PAYLOAD:
            raise PhyValidationError(
                f"PHY payload {self.phy_payload_bytes} B exceeds {MAX_PHY_PAYLOAD} B"
            )
        if not self.target_interval_s > 0:
            raise PhyValidationError(f"target interval must be positive, got {self.target_interval_s!r}")

    @property
    def phy_payload_bytes(self) -> int:
        return self.app_payload_bytes + self.mac_overhead_bytes


def symbol_duration(sf: int, bandwidth_hz: int) -> float:
    _check_sf(sf)
    if not bandwidth_hz > 0:
        raise PhyValidationError(f"bandwidth must be positive, got {bandwidth_hz!r}")
    return (1 << sf) / bandwidth_hz


def payload_symbol_count(params: PhyParams) -> int:
    ih = 0 if params.explicit_header else 1
    crc = 1 if params.crc_on else 0
    numerator = 8 * params.phy_payload_bytes - 4 * params.sf + 28 + 16 * crc - 20 * ih
    denominator = 4 * (params.sf - 2 * params.de)
    # integer ceil; avoids float rounding on exact multiples
    blocks = -(-numerator // denominator)
    return 8 + max(blocks * (params.coding_rate + 4), 0)


def time_on_air(params: PhyParams) -> float:
    t_sym = symbol_duration(params.sf, params.bandwidth_hz)
    return (params.preamble_symbols + 4.25) * t_sym + payload_symbol_count(params) * t_sym


def min_interval(params: PhyParams, policy: DutyCyclePolicy) -> float:
    return time_on_air(params) / policy.duty_cycle


@dataclass(frozen=True)
class SfOption:
    sf: int
    time_on_air_s: float
    min_interval_s: float
    feasible: bool


@dataclass(frozen=True)
class PlanResult:
    spec: AppMessageSpec
    options: tuple[SfOption, ...]
    chosen_sf: int | None
    smallest_interval_s: float = field(default=0.0)

    @property
    def feasible(self) -> bool:
        return self.chosen_sf is not None

    def option(self, sf: int) -> SfOption:
        for opt in self.options:
            if opt.sf == sf:
                return opt
        raise KeyError(sf)


def plan_spreading_factor(
    spec: AppMessageSpec,
    policy: DutyCyclePolicy,
    base: PhyParams | None = None,
) -> PlanResult:
    """Pick the highest SF whose duty-cycle interval still meets the target.

    Higher SFs buy range at the cost of airtime, so among the feasible SFs the
    slowest one wins. ``base`` supplies the non-SF radio settings (EU868
    uplink defaults when omitted).
    """
    if base is None:
        base = PhyParams(sf=7)
    base = replace(base, phy_payload_bytes=spec.phy_payload_bytes)
    options = []
    for sf in SF_RANGE:
        p = base.with_sf(sf)
        toa = time_on_air(p)
        interval = toa / policy.duty_cycle
        options.append(SfOption(sf, toa, interval, interval <= spec.target_interval_s))
    feasible = [o.sf for o in options if o.feasible]
    chosen = max(feasible) if feasible else None
    smallest = min(o.min_interval_s for o in options)
    return PlanResult(spec, tuple(options), chosen, smallest)


def round_interface(seconds: float) -> float:
    """Round a duration for display (0.01 s)."""
    return round(seconds, 2)
