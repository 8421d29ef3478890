"""Discrete-event uplink simulator: periodic devices, forwarding gateways,
network-server dedup.

Every transmission is evaluated independently at every gateway. Shadowing
draws are a pure function of (seed, device, frame index, gateway), so the
outcome of one link never depends on which other gateways or devices exist.
"""
from __future__ import annotations

import csv
import hashlib
import heapq
import math
from dataclasses import dataclass, field
from statistics import NormalDist

from .fieldlog import FCNT_MODULUS, GatewayReception, UplinkRecord, quantize_ms
from .geo import ChannelModel, GeoPoint, haversine_m, mean_rssi_dbm
from .phy import DEFAULT_MAC_OVERHEAD, DutyCyclePolicy, PhyParams, time_on_air

# thermal noise at 125 kHz plus a 6 dB receiver noise figure
NOISE_FLOOR_DBM = -174.0 + 10 * math.log10(125_000) + 6.0
_STD_NORMAL = NormalDist()


class ScenarioError(ValueError):
    """Invalid scenario configuration; ``problems`` lists every offending key."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class DeviceSpec:
    device_id: str
    app_payload_bytes: int
    interval_s: float
    sf: int
    position: GeoPoint | None = None
    waypoints: tuple[tuple[float, GeoPoint], ...] | None = None
    start_offset_s: float = 0.0
    gain_offset_db: float = 0.0
    bandwidth_hz: int = 125_000
    coding_rate: int = 1

    def phy(self, mac_overhead_bytes: int = DEFAULT_MAC_OVERHEAD) -> PhyParams:
        return PhyParams(sf=self.sf, bandwidth_hz=self.bandwidth_hz, coding_rate=self.coding_rate,
                         phy_payload_bytes=self.app_payload_bytes + mac_overhead_bytes)


@dataclass(frozen=True)
class GatewaySpec:
    gateway_id: str
    position: GeoPoint
    gain_offset_db: float = 0.0


@dataclass(frozen=True)
class Scenario:
    devices: tuple[DeviceSpec, ...]
    gateways: tuple[GatewaySpec, ...]
    channel: ChannelModel = field(default_factory=ChannelModel)
    duty: DutyCyclePolicy = field(default_factory=DutyCyclePolicy)
    duration_s: float = 3600.0
    seed: int = 0
    mac_overhead_bytes: int = DEFAULT_MAC_OVERHEAD
    start_time: float = 0.0
    name: str = "scenario"


@dataclass(frozen=True)
class LinkOutcome:
    gateway_id: str
    received: bool
    rssi_dbm: float


@dataclass(frozen=True)
class GroundTruthEntry:
    device_id: str
    fcnt: int
    tx_time_s: float
    outcomes: tuple[LinkOutcome, ...]

    @property
    def received_by(self) -> tuple[str, ...]:
        return tuple(o.gateway_id for o in self.outcomes if o.received)


def schedule_transmissions(dev: DeviceSpec, duty: DutyCyclePolicy, duration_s: float,
                           mac_overhead_bytes: int = DEFAULT_MAC_OVERHEAD) -> list[tuple[float, int]]:
    """Start times and frame counters for one device within [0, duration_s)."""
    toa = time_on_air(dev.phy(mac_overhead_bytes))
    minimum = toa / duty.duty_cycle
    if dev.interval_s < minimum:
        raise ScenarioError(
            f"device '{dev.device_id}': interval {dev.interval_s} s is below the duty-cycle "
            f"minimum {minimum:.2f} s"
        )
    out = []
    k = 0
    while True:
        t = dev.start_offset_s + k * dev.interval_s
        if t >= duration_s:
            break
        out.append((t, k % FCNT_MODULUS))
        k += 1
    return out


def device_position_at(dev: DeviceSpec, t_s: float) -> GeoPoint:
    if dev.waypoints is None:
        if dev.position is None:
            raise ScenarioError(f"device '{dev.device_id}' has neither position nor waypoints")
        return dev.position
    wps = dev.waypoints
    if not wps:
        raise ScenarioError(f"device '{dev.device_id}': empty waypoint list")
    if t_s <= wps[0][0]:
        return wps[0][1]
    if t_s >= wps[-1][0]:
        return wps[-1][1]
    lo, hi = 0, len(wps) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if wps[mid][0] <= t_s:
            lo = mid
        else:
            hi = mid
    (t0, a), (t1, b) = wps[lo], wps[hi]
    f = (t_s - t0) / (t1 - t0)
    return GeoPoint(a.lat_deg + f * (b.lat_deg - a.lat_deg),
                    a.lon_deg + f * (b.lon_deg - a.lon_deg),
                    a.alt_m + f * (b.alt_m - a.alt_m))


def shadow_draw(seed: int, device_id: str, frame_index: int, gateway_id: str, sigma_db: float) -> float:
    """Zero-mean normal shadowing loss in dB, deterministic in its key."""
    if sigma_db == 0:
        return 0.0
    key = f"{seed}\x1f{device_id}\x1f{frame_index}\x1f{gateway_id}".encode()
    x = int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big") >> 11
    u = (x + 0.5) / (1 << 53)
    return sigma_db * _STD_NORMAL.inv_cdf(u)


def validate_scenario(s: Scenario) -> None:
    problems = []
    if not s.duration_s > 0:
        problems.append("duration_s must be > 0")
    if not s.gateways:
        problems.append("gateways: at least one gateway required")
    for kind, ids in (("device_id", [d.device_id for d in s.devices]),
                      ("gateway_id", [g.gateway_id for g in s.gateways])):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            problems.append(f"duplicate {kind}: {', '.join(dupes)}")
    for d in s.devices:
        if d.waypoints is None and d.position is None:
            problems.append(f"devices.{d.device_id}: position or waypoints required")
        if d.waypoints is not None:
            times = [t for t, _ in d.waypoints]
            if not times:
                problems.append(f"devices.{d.device_id}.waypoints: empty")
            elif any(b <= a for a, b in zip(times, times[1:])):
                problems.append(f"devices.{d.device_id}.waypoints: times must be strictly increasing")
        if d.sf not in s.channel.sensitivity_dbm:
            problems.append(f"devices.{d.device_id}.sf: no sensitivity for SF{d.sf}")
        try:
            phy = d.phy(s.mac_overhead_bytes)
            minimum = time_on_air(phy) / s.duty.duty_cycle
            if d.interval_s < minimum:
                problems.append(
                    f"devices.{d.device_id}.interval_s: {d.interval_s} s below duty-cycle minimum {minimum:.2f} s"
                )
        except ValueError as exc:
            problems.append(f"devices.{d.device_id}: {exc}")
    if problems:
        raise ScenarioError(problems)


def run_scenario(s: Scenario) -> tuple[list[UplinkRecord], list[GroundTruthEntry]]:
    """Simulate every transmission; return the deduplicated uplink log and ground truth."""
    validate_scenario(s)
    gateways = sorted(s.gateways, key=lambda g: g.gateway_id)
    sigma = s.channel.shadowing_sigma_db

    # event queue of (tx_time, device_id, frame_index); one pending event per device
    devices = {d.device_id: d for d in s.devices}
    airtime = {d.device_id: time_on_air(d.phy(s.mac_overhead_bytes)) for d in s.devices}
    def mean_rssi(dev: DeviceSpec, pos: GeoPoint, gw: GatewaySpec) -> float:
        dist = max(haversine_m(pos, gw.position), 1.0)
        return mean_rssi_dbm(s.channel, dist, dev.gain_offset_db + gw.gain_offset_db)

    # fixed devices never move, so their link budgets are computed once
    fixed_rssi = {
        (d.device_id, g.gateway_id): mean_rssi(d, d.position, g)
        for d in s.devices if d.waypoints is None and d.position is not None for g in gateways
    }
    threshold = {d.device_id: s.channel.sensitivity(d.sf) for d in s.devices}
    queue = [(d.start_offset_s, d.device_id, 0) for d in s.devices if d.start_offset_s < s.duration_s]
    heapq.heapify(queue)

    records: list[UplinkRecord] = []
    truth: list[GroundTruthEntry] = []
    while queue:
        t, dev_id, k = heapq.heappop(queue)
        dev = devices[dev_id]
        nxt = dev.start_offset_s + (k + 1) * dev.interval_s
        if nxt < s.duration_s:
            heapq.heappush(queue, (nxt, dev_id, k + 1))

        fcnt = k % FCNT_MODULUS
        pos = device_position_at(dev, t)
        rx_time = quantize_ms(s.start_time + t + airtime[dev_id])
        outcomes = []
        receptions = []
        for gw in gateways:
            mean = fixed_rssi.get((dev_id, gw.gateway_id))
            if mean is None:
                mean = mean_rssi(dev, pos, gw)
            # same arithmetic as geo.receive_decision, without the per-link object
            rssi = mean - shadow_draw(s.seed, dev_id, k, gw.gateway_id, sigma)
            received = rssi >= threshold[dev_id]
            outcomes.append(LinkOutcome(gw.gateway_id, received, rssi))
            if received:
                receptions.append(GatewayReception(
                    gateway_id=gw.gateway_id,
                    rssi_dbm=round(rssi, 1),
                    rx_time=rx_time,
                    snr_db=round(min(rssi - NOISE_FLOOR_DBM, 12.0), 1),
                    gateway_position=gw.position,
                ))
        truth.append(GroundTruthEntry(dev_id, fcnt, t, tuple(outcomes)))
        if receptions:
            records.append(UplinkRecord(
                device_id=dev_id,
                fcnt=fcnt,
                app_payload_bytes=dev.app_payload_bytes,
                sf=dev.sf,
                rx_time=rx_time,
                receptions=tuple(receptions),
                device_position=pos,
            ))
    return records, truth


@dataclass(frozen=True)
class TruthSummary:
    transmissions: int
    delivered: int

    @property
    def loss(self) -> float:
        return 1.0 - self.delivered / self.transmissions if self.transmissions else 0.0


def truth_summary(truth: list[GroundTruthEntry]) -> dict[str, TruthSummary]:
    """Per-device sent/delivered counts, plus the overall total under key ``""``."""
    sent: dict[str, int] = {}
    got: dict[str, int] = {}
    for e in truth:
        sent[e.device_id] = sent.get(e.device_id, 0) + 1
        got[e.device_id] = got.get(e.device_id, 0) + bool(e.received_by)
    out = {d: TruthSummary(sent[d], got[d]) for d in sorted(sent)}
    out[""] = TruthSummary(sum(sent.values()), sum(got.values()))
    return out


def write_ground_truth_csv(truth: list[GroundTruthEntry], sink) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(("device_id", "fcnt", "tx_time_s", "gateway_id", "rssi_dbm", "received"))
    for e in truth:
        for o in e.outcomes:
            writer.writerow((e.device_id, e.fcnt, f"{e.tx_time_s:.3f}", o.gateway_id,
                             f"{o.rssi_dbm:.2f}", int(o.received)))


def read_ground_truth_csv(source) -> list[GroundTruthEntry]:
    rows: dict[tuple[str, int, str], list[LinkOutcome]] = {}
    order = []
    for row in csv.DictReader(source):
        key = (row["device_id"], int(row["fcnt"]), row["tx_time_s"])
        if key not in rows:
            rows[key] = []
            order.append(key)
        rows[key].append(LinkOutcome(row["gateway_id"], row["received"] == "1", float(row["rssi_dbm"])))
    return [GroundTruthEntry(d, f, float(t), tuple(rows[(d, f, t)])) for d, f, t in order]
