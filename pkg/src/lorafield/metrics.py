"""Reliability metrics over an uplink log.

Four families:

* gateway reach: min/mean/max number of gateways hearing each message,
* gateway share: fraction of observed messages each gateway received, with
  its distance to the devices,
* inter-arrival CDF: gaps between received messages binned in units of the
  target interval,
* loss: frame-counter based expected vs received counts.

All aggregations go through :class:`MetricsAccumulator`, a commutative fold
whose partial states can be merged, so results never depend on record order
or on how the log was partitioned.
"""
from __future__ import annotations

import csv
import math
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from statistics import median
from typing import Iterable, Mapping

from .fieldlog import FCNT_MODULUS, GatewayRegistry, UplinkRecord, merge_duplicates
from .geo import GeoPoint, haversine_m

OVERALL = "*"
DEFAULT_GUARD_FRACTION = 0.1
_HALF_FCNT = FCNT_MODULUS // 2


@dataclass(frozen=True)
class ReachRow:
    min: int
    mean: float
    max: int
    messages: int


@dataclass(frozen=True)
class GatewayReachStats:
    per_device: dict[str, ReachRow]
    overall: ReachRow | None

    @property
    def empty(self) -> bool:
        return self.overall is None


@dataclass(frozen=True)
class GatewayShareRow:
    gateway_id: str
    distance_m: float | None
    share: float
    messages: int


@dataclass(frozen=True)
class InterArrivalCdf:
    target_interval_s: float
    bins: tuple[tuple[int, float], ...]
    samples: int = 0

    def fraction_within(self, k: int) -> float:
        """Cumulative fraction of gaps landing in the first ``k`` intervals."""
        best = 0.0
        for idx, frac in self.bins:
            if idx <= k:
                best = frac
        return best


@dataclass(frozen=True)
class LossRow:
    expected: int
    received: int

    @property
    def loss(self) -> float:
        return 1.0 - self.received / self.expected if self.expected else 0.0


@dataclass(frozen=True)
class LossReport:
    per_device: dict[str, LossRow]
    overall: LossRow


@dataclass(frozen=True)
class ReportConfig:
    target_interval_s: float = 30.0
    device_intervals: Mapping[str, float] = field(default_factory=dict)
    guard_fraction: float = DEFAULT_GUARD_FRACTION
    registry: GatewayRegistry | None = None
    expected_counts: Mapping[str, int] | None = None
    merge: bool = True

    def interval_for(self, device_id: str) -> float:
        return self.device_intervals.get(device_id, self.target_interval_s)


@dataclass(frozen=True)
class MetricsReport:
    reach: GatewayReachStats
    share: list[GatewayShareRow]
    interarrival: InterArrivalCdf
    loss: LossReport
    diagnostics: list[str]
    messages: int


class MetricsAccumulator:
    """Partial state for all four metric families.

    ``add`` folds in one record; ``merge`` combines two partial states. Both
    are commutative: the finished metrics only depend on the multiset of
    records seen.
    """

    def __init__(self) -> None:
        self.messages = 0
        self.gateway_hits: Counter[str] = Counter()
        self.gateway_inline: dict[str, list[GeoPoint]] = defaultdict(list)
        # device -> list of (rx_time, fcnt, gateway count)
        self.arrivals: dict[str, list[tuple[float, int, int]]] = defaultdict(list)
        self.device_positions: dict[str, list[GeoPoint]] = defaultdict(list)

    def add(self, rec: UplinkRecord) -> None:
        self.messages += 1
        for r in rec.receptions:
            self.gateway_hits[r.gateway_id] += 1
            if r.gateway_position is not None:
                self.gateway_inline[r.gateway_id].append(r.gateway_position)
        self.arrivals[rec.device_id].append((rec.rx_time, rec.fcnt, len(rec.receptions)))
        if rec.device_position is not None:
            self.device_positions[rec.device_id].append(rec.device_position)

    def update(self, records: Iterable[UplinkRecord]) -> "MetricsAccumulator":
        for rec in records:
            self.add(rec)
        return self

    def merge(self, other: "MetricsAccumulator") -> "MetricsAccumulator":
        out = MetricsAccumulator()
        out.messages = self.messages + other.messages
        out.gateway_hits = self.gateway_hits + other.gateway_hits
        for src in (self, other):
            for k, v in src.gateway_inline.items():
                out.gateway_inline[k].extend(v)
            for k, v in src.arrivals.items():
                out.arrivals[k].extend(v)
            for k, v in src.device_positions.items():
                out.device_positions[k].extend(v)
        return out

    def _sorted_arrivals(self, device_id: str) -> list[tuple[float, int, int]]:
        return sorted(self.arrivals.get(device_id, ()))

    # -- finishers ---------------------------------------------------------

    def reach(self) -> GatewayReachStats:
        per_device = {}
        for dev in sorted(self.arrivals):
            counts = [n for _, _, n in self.arrivals[dev]]
            per_device[dev] = ReachRow(min(counts), sum(counts) / len(counts), max(counts), len(counts))
        if not per_device:
            return GatewayReachStats({}, None)
        rows = per_device.values()
        total = sum(r.messages for r in rows)
        overall = ReachRow(
            min(r.min for r in rows),
            sum(n for a in self.arrivals.values() for _, _, n in a) / total,
            max(r.max for r in rows),
            total,
        )
        return GatewayReachStats(per_device, overall)

    def reference_position(self, device_resolver: Mapping[str, GeoPoint] | None = None) -> GeoPoint | None:
        """Median position of the device set.

        Each device contributes the median of its per-record positions (mobile
        trackers) or its resolver entry (fixed sensors); the set reference is
        the component-wise median over devices.
        """
        refs = []
        for dev in sorted(self.arrivals):
            pts = self.device_positions.get(dev)
            if pts:
                refs.append(_median_point(pts))
            elif device_resolver and dev in device_resolver:
                refs.append(device_resolver[dev])
        return _median_point(refs) if refs else None

    def share(self, registry: GatewayRegistry | None = None) -> tuple[list[GatewayShareRow], list[str]]:
        registry = registry if registry is not None else GatewayRegistry()
        diagnostics = []
        ref = self.reference_position(registry.devices)
        if ref is None and self.messages:
            diagnostics.append("no device position known; gateway distances unavailable")
        rows = []
        for gw in sorted(self.gateway_hits):
            pos = registry.get(gw)
            if pos is None and self.gateway_inline.get(gw):
                pos = _median_point(self.gateway_inline[gw])
            if pos is None:
                diagnostics.append(f"gateway '{gw}': position unknown, distance left blank")
            dist = haversine_m(ref, pos) if (pos is not None and ref is not None) else None
            rows.append(GatewayShareRow(gw, dist, self.gateway_hits[gw] / self.messages, self.gateway_hits[gw]))
        rows.sort(key=lambda r: (r.distance_m is None, r.distance_m or 0.0, r.gateway_id))
        return rows, diagnostics

    def interarrival(self, target_interval_s: float, device_intervals: Mapping[str, float] | None = None,
                     guard_fraction: float = DEFAULT_GUARD_FRACTION) -> InterArrivalCdf:
        if not target_interval_s > 0:
            raise ValueError("target interval must be > 0")
        device_intervals = device_intervals or {}
        bins: Counter[int] = Counter()
        for dev in sorted(self.arrivals):
            period = device_intervals.get(dev, target_interval_s)
            times = [t for t, _, _ in self._sorted_arrivals(dev)]
            for k in interval_bins(times, period, guard_fraction):
                bins[k] += 1
        n = sum(bins.values())
        if not n:
            return InterArrivalCdf(target_interval_s, (), 0)
        out = []
        running = 0
        for k in range(1, max(bins) + 1):
            running += bins.get(k, 0)
            out.append((k, running / n))
        return InterArrivalCdf(target_interval_s, tuple(out), n)

    def loss(self, expected_counts: Mapping[str, int] | None = None) -> tuple[LossReport, list[str]]:
        diagnostics = []
        per_device = {}
        devices = set(self.arrivals) | set(expected_counts or ())
        for dev in sorted(devices):
            fcnts = [f for _, f, _ in self._sorted_arrivals(dev)]
            unrolled = unroll_fcnt(fcnts)
            distinct = len(set(unrolled))
            if distinct != len(unrolled):
                diagnostics.append(f"device '{dev}': {len(unrolled) - distinct} duplicate frame counter(s) counted once")
            if expected_counts is not None:
                expected = expected_counts.get(dev, 0)
                if distinct > expected:
                    diagnostics.append(f"device '{dev}': more frames received than scheduled")
                    expected = distinct
            else:
                expected = max(unrolled) - min(unrolled) + 1 if unrolled else 0
            per_device[dev] = LossRow(expected, distinct)
        overall = LossRow(sum(r.expected for r in per_device.values()),
                          sum(r.received for r in per_device.values()))
        return LossReport(per_device, overall), diagnostics


def _median_point(points: list[GeoPoint]) -> GeoPoint:
    return GeoPoint(median(p.lat_deg for p in points), median(p.lon_deg for p in points),
                    median(p.alt_m for p in points))


def interval_bins(rx_times: list[float], target_interval_s: float,
                  guard_fraction: float = DEFAULT_GUARD_FRACTION) -> list[int]:
    """Bin index for each successive gap of a time-sorted arrival list.

    Gap ``d`` lands in bin ``max(1, ceil((d - guard) / target))``; the guard
    absorbs scheduler jitter so an on-time message always counts as bin 1.
    """
    guard = guard_fraction * target_interval_s
    return [max(1, math.ceil((b - a - guard) / target_interval_s)) for a, b in zip(rx_times, rx_times[1:])]


def unroll_fcnt(fcnts: list[int]) -> list[int]:
    """Undo 16-bit wraparound for a time-ordered frame-counter sequence.

    A step of more than half the counter space in either direction is read as
    crossing the wrap.
    """
    out = []
    prev_raw = prev = None
    for f in fcnts:
        if prev is None:
            cur = f
        else:
            step = f - prev_raw
            if step < -_HALF_FCNT:
                step += FCNT_MODULUS
            elif step > _HALF_FCNT:
                step -= FCNT_MODULUS
            cur = prev + step
        out.append(cur)
        prev_raw, prev = f, cur
    return out


def gateway_reach(records: Iterable[UplinkRecord]) -> GatewayReachStats:
    return MetricsAccumulator().update(records).reach()


def gateway_share(records: Iterable[UplinkRecord], registry: GatewayRegistry | None = None,
                  device_positions: Mapping[str, GeoPoint] | None = None
                  ) -> tuple[list[GatewayShareRow], list[str]]:
    if device_positions:
        registry = GatewayRegistry(registry or {}, {**(registry.devices if registry else {}), **device_positions})
    return MetricsAccumulator().update(records).share(registry)


def interarrival_cdf(records: Iterable[UplinkRecord], target_interval_s: float,
                     guard_fraction: float = DEFAULT_GUARD_FRACTION) -> InterArrivalCdf:
    return MetricsAccumulator().update(records).interarrival(target_interval_s, guard_fraction=guard_fraction)


def loss(records: Iterable[UplinkRecord], expected_counts: Mapping[str, int] | None = None
         ) -> tuple[LossReport, list[str]]:
    return MetricsAccumulator().update(records).loss(expected_counts)


def report(records: Iterable[UplinkRecord], config: ReportConfig | None = None) -> MetricsReport:
    config = config or ReportConfig()
    if config.merge:
        records = merge_duplicates(records)
    acc = MetricsAccumulator().update(records)
    return finish(acc, config)


def finish(acc: MetricsAccumulator, config: ReportConfig) -> MetricsReport:
    share, share_diag = acc.share(config.registry)
    loss_report, loss_diag = acc.loss(config.expected_counts)
    return MetricsReport(
        reach=acc.reach(),
        share=share,
        interarrival=acc.interarrival(config.target_interval_s, config.device_intervals, config.guard_fraction),
        loss=loss_report,
        diagnostics=share_diag + loss_diag,
        messages=acc.messages,
    )


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


def write_report_csvs(rep: MetricsReport, out_dir: str | os.PathLike) -> list[str]:
    """Write reach.csv, gateway_share.csv, interarrival.csv and loss.csv; return their paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    def emit(name, header, rows):
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        paths.append(path)

    reach_rows = [(d, r.min, _fmt(r.mean), r.max) for d, r in rep.reach.per_device.items()]
    if rep.reach.overall is not None:
        o = rep.reach.overall
        reach_rows.append((OVERALL, o.min, _fmt(o.mean), o.max))
    emit("reach.csv", ("device_id", "min", "mean", "max"), reach_rows)
    emit("gateway_share.csv", ("gateway_id", "distance_m", "share"),
         [(r.gateway_id, "" if r.distance_m is None else f"{r.distance_m:.1f}", _fmt(r.share)) for r in rep.share])
    emit("interarrival.csv", ("k", "cumulative_fraction"), [(k, _fmt(f)) for k, f in rep.interarrival.bins])
    loss_rows = [(d, r.expected, r.received, _fmt(r.loss)) for d, r in rep.loss.per_device.items()]
    o = rep.loss.overall
    loss_rows.append((OVERALL, o.expected, o.received, _fmt(o.loss)))
    emit("loss.csv", ("device_id", "expected", "received", "loss"), loss_rows)
    return paths

