"""Uplink log model, JSON-Lines reader/writer and network-server style dedup.

One JSON object per line::

    {"schema_version": 1, "device_id": "tracker-01", "fcnt": 42,
     "rx_time": "2019-07-26T16:00:06.205Z", "sf": 9, "app_payload_bytes": 11,
     "device_position": {"lat": 53.556, "lon": 9.970},            # optional
     "receptions": [{"gateway_id": "gw-dom", "rssi_dbm": -97.5, "snr_db": 7.5,
                     "rx_time": "2019-07-26T16:00:06.205Z",
                     "lat": 53.5561, "lon": 9.9702}]}              # lat/lon optional

``rx_time`` of the record is the earliest gateway timestamp. Times are UTC and
kept internally as float seconds since the Unix epoch, quantized to 1 ms.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from functools import lru_cache
from typing import IO, Iterable, Iterator, Mapping

from .geo import GeoPoint, LinkValidationError, haversine_m

SCHEMA_VERSION = 1
DEDUP_WINDOW_S = 2.0
FCNT_MODULUS = 1 << 16
CSV_HEADER = ("device_id", "fcnt", "rx_time", "sf", "gateway_id", "rssi_dbm", "snr_db", "distance_m")

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_RECORD_KEYS = {"schema_version", "device_id", "fcnt", "rx_time", "sf", "app_payload_bytes",
                "receptions", "device_position"}
_RECEPTION_KEYS = {"gateway_id", "rssi_dbm", "snr_db", "rx_time", "lat", "lon", "alt"}


class LogSchemaError(ValueError):
    pass


def quantize_ms(t: float) -> float:
    return round(t * 1000) / 1000


def format_time(t: float) -> str:
    return _format_ms(round(t * 1000))


@lru_cache(maxsize=8192)
def _format_ms(ms: int) -> str:
    dt = _EPOCH + timedelta(milliseconds=ms)
    return dt.strftime("%Y-%m-%dT%H:%M:%S") + f".{ms % 1000:03d}Z"


def parse_time(value) -> float:
    """ISO-8601 string (UTC if no offset) or numeric epoch seconds."""
    if isinstance(value, bool):
        raise LogSchemaError(f"bad timestamp {value!r}")
    if isinstance(value, (int, float)):
        if not math.isfinite(value):
            raise LogSchemaError(f"bad timestamp {value!r}")
        return quantize_ms(float(value))
    if not isinstance(value, str):
        raise LogSchemaError(f"bad timestamp {value!r}")
    return _parse_iso(value)


@lru_cache(maxsize=8192)
def _parse_iso(value: str) -> float:
    # receptions usually repeat their record's timestamp, so caching pays off
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(text)
    except ValueError:
        # fromisoformat on 3.10 only takes 3- or 6-digit fractions
        raise LogSchemaError(f"bad timestamp {value!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return quantize_ms((dt - _EPOCH).total_seconds())


@dataclass(frozen=True)
class GatewayReception:
    gateway_id: str
    rssi_dbm: float
    rx_time: float
    snr_db: float | None = None
    gateway_position: GeoPoint | None = None

    def __post_init__(self) -> None:
        if not -200.0 <= self.rssi_dbm <= 0.0:
            raise LogSchemaError(f"rssi_dbm {self.rssi_dbm} outside [-200, 0]")


@dataclass(frozen=True)
class UplinkRecord:
    device_id: str
    fcnt: int
    app_payload_bytes: int
    sf: int
    rx_time: float
    receptions: tuple[GatewayReception, ...]
    device_position: GeoPoint | None = None

    def __post_init__(self) -> None:
        if not self.device_id:
            raise LogSchemaError("empty device_id")
        if not 0 <= self.fcnt < FCNT_MODULUS:
            raise LogSchemaError(f"fcnt {self.fcnt} outside 0..65535")
        if not 7 <= self.sf <= 12:
            raise LogSchemaError(f"sf {self.sf} outside 7..12")
        if self.app_payload_bytes < 0:
            raise LogSchemaError("app_payload_bytes < 0")
        if not self.receptions:
            raise LogSchemaError("receptions must be non-empty")
        ids = [r.gateway_id for r in self.receptions]
        if len(set(ids)) != len(ids):
            raise LogSchemaError("duplicate gateway_id within one record")
        if self.rx_time != min(r.rx_time for r in self.receptions):
            raise LogSchemaError("rx_time must equal the earliest reception time")

    @property
    def gateway_ids(self) -> tuple[str, ...]:
        return tuple(r.gateway_id for r in self.receptions)


@dataclass(frozen=True)
class Diagnostic:
    line: int
    reason: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.reason}"


class GatewayRegistry(dict):
    """gateway_id -> GeoPoint. Optional device positions ride along in ``devices``."""

    def __init__(self, gateways: Mapping[str, GeoPoint] | None = None,
                 devices: Mapping[str, GeoPoint] | None = None) -> None:
        super().__init__(gateways or {})
        self.devices: dict[str, GeoPoint] = dict(devices or {})

    @classmethod
    def from_json(cls, data: Mapping) -> "GatewayRegistry":
        """Accept ``{"gateways": {...}, "devices": {...}}`` or a flat gateway map."""
        if "gateways" in data and isinstance(data["gateways"], Mapping):
            gws, devs = data["gateways"], data.get("devices", {})
        else:
            gws, devs = data, {}
        return cls({k: _point(v) for k, v in gws.items()}, {k: _point(v) for k, v in devs.items()})

    @classmethod
    def load(cls, path) -> "GatewayRegistry":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def to_json(self) -> dict:
        return {
            "gateways": {k: _point_json(v) for k, v in sorted(self.items())},
            "devices": {k: _point_json(v) for k, v in sorted(self.devices.items())},
        }


def _point(obj) -> GeoPoint:
    if not isinstance(obj, Mapping):
        raise LogSchemaError(f"position must be an object, got {obj!r}")
    try:
        return _cached_point(float(obj["lat"]), float(obj["lon"]), float(obj.get("alt", 0.0)))
    except KeyError as exc:
        raise LogSchemaError(f"position missing '{exc.args[0]}'") from None
    except (TypeError, ValueError, LinkValidationError) as exc:
        raise LogSchemaError(f"bad position: {exc}") from None


@lru_cache(maxsize=4096)
def _cached_point(lat: float, lon: float, alt: float) -> GeoPoint:
    return GeoPoint(lat, lon, alt)


def _point_json(p: GeoPoint) -> dict:
    out = {"lat": p.lat_deg, "lon": p.lon_deg}
    if p.alt_m:
        out["alt"] = p.alt_m
    return out


def _require(obj: Mapping, key: str, kind, where: str = ""):
    if key not in obj or obj[key] is None:
        raise LogSchemaError(f"missing field '{where}{key}'")
    value = obj[key]
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise LogSchemaError(f"field '{where}{key}' must be an integer")
    elif kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise LogSchemaError(f"field '{where}{key}' must be a number")
        value = float(value)
    elif not isinstance(value, kind):
        raise LogSchemaError(f"field '{where}{key}' has wrong type")
    return value


def record_from_json(obj) -> UplinkRecord:
    if not isinstance(obj, dict):
        raise LogSchemaError("line is not a JSON object")
    unknown = set(obj) - _RECORD_KEYS
    if unknown:
        raise LogSchemaError(f"unknown field(s) {sorted(unknown)}")
    version = obj.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise LogSchemaError(f"unsupported schema_version {version!r}")
    device_id = _require(obj, "device_id", str)
    fcnt = _require(obj, "fcnt", int)
    sf = _require(obj, "sf", int)
    payload = _require(obj, "app_payload_bytes", int)
    rx_time = parse_time(_require(obj, "rx_time", (str, int, float)))
    raw = _require(obj, "receptions", list)
    receptions = []
    for i, item in enumerate(raw):
        where = f"receptions[{i}]."
        if not isinstance(item, dict):
            raise LogSchemaError(f"{where[:-1]} is not an object")
        unknown = set(item) - _RECEPTION_KEYS
        if unknown:
            raise LogSchemaError(f"unknown field(s) {sorted(unknown)} in {where[:-1]}")
        snr = item.get("snr_db")
        if snr is not None:
            snr = _require(item, "snr_db", float, where)
        position = None
        if item.get("lat") is not None or item.get("lon") is not None:
            position = _point(item)
        t = parse_time(item["rx_time"]) if item.get("rx_time") is not None else rx_time
        receptions.append(GatewayReception(
            gateway_id=_require(item, "gateway_id", str, where),
            rssi_dbm=_require(item, "rssi_dbm", float, where),
            rx_time=t,
            snr_db=snr,
            gateway_position=position,
        ))
    dev_pos = obj.get("device_position")
    return UplinkRecord(
        device_id=device_id,
        fcnt=fcnt,
        app_payload_bytes=payload,
        sf=sf,
        rx_time=rx_time,
        receptions=tuple(receptions),
        device_position=_point(dev_pos) if dev_pos is not None else None,
    )


def record_to_json(rec: UplinkRecord) -> dict:
    obj = {
        "schema_version": SCHEMA_VERSION,
        "device_id": rec.device_id,
        "fcnt": rec.fcnt,
        "rx_time": format_time(rec.rx_time),
        "sf": rec.sf,
        "app_payload_bytes": rec.app_payload_bytes,
    }
    if rec.device_position is not None:
        obj["device_position"] = _point_json(rec.device_position)
    recs = []
    for r in rec.receptions:
        item = {"gateway_id": r.gateway_id, "rssi_dbm": r.rssi_dbm, "snr_db": r.snr_db,
                "rx_time": format_time(r.rx_time)}
        if r.gateway_position is not None:
            item.update(_point_json(r.gateway_position))
        recs.append(item)
    obj["receptions"] = recs
    return obj


def iter_log(stream: IO) -> Iterator[UplinkRecord | Diagnostic]:
    """Stream records and per-line diagnostics from a text or byte stream."""
    for lineno, line in enumerate(stream, start=1):
        if isinstance(line, bytes):
            try:
                line = line.decode("utf-8")
            except UnicodeDecodeError:
                yield Diagnostic(lineno, "not valid UTF-8")
                continue
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            yield Diagnostic(lineno, f"invalid JSON: {exc.msg}")
            continue
        try:
            yield record_from_json(obj)
        except (LogSchemaError, LinkValidationError) as exc:
            yield Diagnostic(lineno, str(exc))


def parse_log(stream: IO) -> tuple[list[UplinkRecord], list[Diagnostic]]:
    records: list[UplinkRecord] = []
    diagnostics: list[Diagnostic] = []
    for item in iter_log(stream):
        (diagnostics if isinstance(item, Diagnostic) else records).append(item)
    return records, diagnostics


def write_log(records: Iterable[UplinkRecord], sink: IO[str]) -> None:
    for rec in records:
        sink.write(json.dumps(record_to_json(rec), separators=(",", ":")))
        sink.write("\n")


def dumps_log(records: Iterable[UplinkRecord]) -> str:
    buf = io.StringIO()
    write_log(records, buf)
    return buf.getvalue()


def write_csv(records: Iterable[UplinkRecord], sink: IO[str],
              registry: GatewayRegistry | None = None) -> None:
    """One row per (record, reception). distance_m is blank when either end is unknown."""
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    registry = registry if registry is not None else GatewayRegistry()
    for rec in records:
        dev = rec.device_position or registry.devices.get(rec.device_id)
        for r in rec.receptions:
            gw = r.gateway_position or registry.get(r.gateway_id)
            dist = "" if dev is None or gw is None else f"{haversine_m(dev, gw):.1f}"
            snr = "" if r.snr_db is None else repr(r.snr_db)
            writer.writerow((rec.device_id, rec.fcnt, format_time(r.rx_time), rec.sf,
                             r.gateway_id, repr(r.rssi_dbm), snr, dist))


def _reception_key(r: GatewayReception):
    # strongest first, then a total order so conflicts resolve independent of input order
    return (-r.rssi_dbm, r.rx_time, r.snr_db is None, r.snr_db or 0.0,
            r.gateway_position is None, repr(r.gateway_position))


def _record_key(rec: UplinkRecord):
    return (rec.rx_time, rec.sf, rec.app_payload_bytes, rec.device_position is None,
            repr(rec.device_position), rec.gateway_ids)


def _merge_group(group: list[UplinkRecord]) -> UplinkRecord:
    if len(group) == 1:
        return group[0]
    best: dict[str, GatewayReception] = {}
    for rec in group:
        for r in rec.receptions:
            cur = best.get(r.gateway_id)
            if cur is None or _reception_key(r) < _reception_key(cur):
                best[r.gateway_id] = r
    receptions = tuple(sorted(best.values(), key=lambda r: (r.rx_time, r.gateway_id)))
    base = min(group, key=_record_key)
    return UplinkRecord(
        device_id=base.device_id,
        fcnt=base.fcnt,
        app_payload_bytes=base.app_payload_bytes,
        sf=base.sf,
        rx_time=min(r.rx_time for r in receptions),
        receptions=receptions,
        device_position=base.device_position,
    )


def merge_duplicates(records: Iterable[UplinkRecord], window_s: float = DEDUP_WINDOW_S) -> list[UplinkRecord]:
    """Collapse per-gateway copies of the same uplink.

    Records with equal (device_id, fcnt) chain into one message while each is
    within ``window_s`` of the previous one in time. Output is sorted by
    (rx_time, device_id, fcnt), so the result does not depend on input order.
    """
    ordered = sorted(records, key=lambda r: (r.device_id, r.fcnt, _record_key(r)))
    merged: list[UplinkRecord] = []
    group: list[UplinkRecord] = []
    for rec in ordered:
        if group and (rec.device_id, rec.fcnt) == (group[-1].device_id, group[-1].fcnt) \
                and rec.rx_time - group[-1].rx_time <= window_s:
            group.append(rec)
            continue
        if group:
            merged.append(_merge_group(group))
        group = [rec]
    if group:
        merged.append(_merge_group(group))
    merged.sort(key=lambda r: (r.rx_time, r.device_id, r.fcnt))
    return merged
