"""Scenario files (YAML) and the bundled example scenarios.

Schema, all times in seconds, powers in dB/dBm::

    name: dom_with_gateway          # optional
    seed: 2019                      # required, integer
    duration_s: 14400               # required, > 0
    start_time: "2019-07-26T16:00:00Z"   # optional, UTC; default epoch 0
    mac_overhead_bytes: 13          # optional
    duty: {duty_cycle: 0.01}        # optional
    channel:                        # optional, every key optional
      ref_distance_m: 1000
      ref_loss_db: 128.95
      exponent: 2.32
      shadowing_sigma_db: 6.0
      tx_power_dbm: 14
      antenna_gains_db: 0
      sensitivity_dbm: {7: -123, 8: -126, 9: -129, 10: -132, 11: -134.5, 12: -137}
    gateways:                       # required, non-empty
      - {gateway_id: gw-a, lat: 53.55, lon: 9.97, alt: 0, gain_offset_db: 0}
    devices:                        # required
      - device_id: sensor-01
        sf: 10
        app_payload_bytes: 8
        interval_s: 60
        start_offset_s: 0           # optional
        gain_offset_db: 0           # optional
        bandwidth_hz: 125000        # optional
        coding_rate: 1              # optional, 1..4 for 4/5..4/8
        lat: 53.54                  # fixed position, or ...
        lon: 9.96
        waypoints: [[0, 53.55, 9.97], [600, 53.556, 9.975]]   # ... [t, lat, lon(, alt)]
"""
from __future__ import annotations

import os
from dataclasses import replace
from importlib import resources
from typing import Any, Mapping

import yaml

# libyaml is ~10x faster on waypoint-heavy scenarios; fall back if absent
_Loader = getattr(yaml, "CSafeLoader", yaml.SafeLoader)

from .fieldlog import LogSchemaError, parse_time
from .geo import ChannelModel, GeoPoint, LinkValidationError
from .netsim import DeviceSpec, GatewaySpec, Scenario, ScenarioError, validate_scenario
from .phy import DEFAULT_MAC_OVERHEAD, DutyCyclePolicy, PhyValidationError

BUNDLED = ("dom_with_gateway", "dom_without_gateway", "port")

_TOP = {"name", "description", "seed", "duration_s", "start_time", "mac_overhead_bytes",
        "duty", "channel", "gateways", "devices"}
_CHANNEL = {"ref_distance_m", "ref_loss_db", "exponent", "shadowing_sigma_db", "tx_power_dbm",
            "antenna_gains_db", "sensitivity_dbm"}
_GATEWAY = {"gateway_id", "lat", "lon", "alt", "gain_offset_db"}
_DEVICE = {"device_id", "sf", "app_payload_bytes", "interval_s", "start_offset_s", "gain_offset_db",
           "bandwidth_hz", "coding_rate", "lat", "lon", "alt", "waypoints"}


class _Collector:
    def __init__(self) -> None:
        self.problems: list[str] = []

    def unknown(self, obj: Mapping, allowed: set, where: str) -> None:
        for key in sorted(set(obj) - allowed, key=str):
            self.problems.append(f"{where}{key}: unknown key")

    def get(self, obj: Mapping, key: str, kind, where: str, default: Any = ..., check=None):
        if key not in obj:
            if default is ...:
                self.problems.append(f"{where}{key}: missing required key")
            return None if default is ... else default
        value = obj[key]
        ok = True
        if kind is int:
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif kind is float:
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            value = float(value) if ok else value
        elif kind is not None:
            ok = isinstance(value, kind)
        if ok and check is not None and not check(value):
            ok = False
        if not ok:
            self.problems.append(f"{where}{key}: invalid value {value!r}")
            return None if default is ... else default
        return value


def _point(c: _Collector, obj: Mapping, where: str) -> GeoPoint | None:
    lat = c.get(obj, "lat", float, where)
    lon = c.get(obj, "lon", float, where)
    alt = c.get(obj, "alt", float, where, 0.0)
    if lat is None or lon is None:
        return None
    try:
        return GeoPoint(lat, lon, alt)
    except LinkValidationError as exc:
        c.problems.append(f"{where}lat/lon: {exc}")
        return None


def scenario_from_dict(data: Any) -> Scenario:
    """Build a Scenario, collecting every schema problem before raising."""
    if not isinstance(data, Mapping):
        raise ScenarioError("scenario file must contain a mapping at top level")
    c = _Collector()
    c.unknown(data, _TOP, "")
    seed = c.get(data, "seed", int, "")
    duration = c.get(data, "duration_s", float, "", check=lambda v: v > 0)
    overhead = c.get(data, "mac_overhead_bytes", int, "", DEFAULT_MAC_OVERHEAD, check=lambda v: v >= 0)
    name = c.get(data, "name", str, "", "scenario")
    start_time = 0.0
    if "start_time" in data:
        try:
            start_time = parse_time(data["start_time"])
        except LogSchemaError:
            c.problems.append(f"start_time: invalid value {data['start_time']!r}")

    duty = DutyCyclePolicy()
    duty_raw = c.get(data, "duty", Mapping, "", {})
    if duty_raw:
        c.unknown(duty_raw, {"duty_cycle"}, "duty.")
        dc = c.get(duty_raw, "duty_cycle", float, "duty.", 0.01, check=lambda v: 0 < v <= 1)
        duty = DutyCyclePolicy(dc)

    channel = ChannelModel()
    ch_raw = c.get(data, "channel", Mapping, "", {})
    if ch_raw:
        c.unknown(ch_raw, _CHANNEL, "channel.")
        kwargs = {}
        for key in sorted(_CHANNEL - {"sensitivity_dbm"}):
            if key in ch_raw:
                value = c.get(ch_raw, key, float, "channel.")
                if value is not None:
                    kwargs[key] = value
        if "sensitivity_dbm" in ch_raw:
            sens = ch_raw["sensitivity_dbm"]
            if isinstance(sens, Mapping) and all(
                str(k).isdigit() and isinstance(v, (int, float)) and not isinstance(v, bool)
                for k, v in sens.items()
            ):
                kwargs["sensitivity_dbm"] = {int(k): float(v) for k, v in sens.items()}
            else:
                c.problems.append("channel.sensitivity_dbm: expected {sf: dBm} mapping")
        try:
            channel = ChannelModel(**kwargs)
        except LinkValidationError as exc:
            c.problems.append(f"channel: {exc}")

    gateways = []
    for i, g in enumerate(c.get(data, "gateways", list, "") or []):
        where = f"gateways[{i}]."
        if not isinstance(g, Mapping):
            c.problems.append(f"gateways[{i}]: expected a mapping")
            continue
        c.unknown(g, _GATEWAY, where)
        gid = c.get(g, "gateway_id", str, where)
        pos = _point(c, g, where)
        gain = c.get(g, "gain_offset_db", float, where, 0.0)
        if gid is not None and pos is not None:
            gateways.append(GatewaySpec(gid, pos, gain))

    devices = []
    for i, d in enumerate(c.get(data, "devices", list, "") or []):
        where = f"devices[{i}]."
        if not isinstance(d, Mapping):
            c.problems.append(f"devices[{i}]: expected a mapping")
            continue
        c.unknown(d, _DEVICE, where)
        did = c.get(d, "device_id", str, where)
        fields = dict(
            sf=c.get(d, "sf", int, where, check=lambda v: 7 <= v <= 12),
            app_payload_bytes=c.get(d, "app_payload_bytes", int, where, check=lambda v: v >= 0),
            interval_s=c.get(d, "interval_s", float, where, check=lambda v: v > 0),
            start_offset_s=c.get(d, "start_offset_s", float, where, 0.0, check=lambda v: v >= 0),
            gain_offset_db=c.get(d, "gain_offset_db", float, where, 0.0),
            bandwidth_hz=c.get(d, "bandwidth_hz", int, where, 125_000),
            coding_rate=c.get(d, "coding_rate", int, where, 1),
        )
        position = waypoints = None
        if "waypoints" in d:
            if "lat" in d or "lon" in d:
                c.problems.append(f"{where}waypoints: give either lat/lon or waypoints, not both")
            waypoints = _waypoints(c, d["waypoints"], where)
        else:
            position = _point(c, d, where)
        if did is None or any(v is None for v in fields.values()):
            continue
        devices.append(DeviceSpec(device_id=did, position=position, waypoints=waypoints, **fields))

    if c.problems:
        raise ScenarioError(c.problems)
    scenario = Scenario(
        devices=tuple(devices),
        gateways=tuple(gateways),
        channel=channel,
        duty=duty,
        duration_s=duration,
        seed=seed,
        mac_overhead_bytes=overhead,
        start_time=start_time,
        name=name,
    )
    # cross-field checks: duty-cycle legality, id uniqueness
    try:
        validate_scenario(scenario)
    except (PhyValidationError, LinkValidationError) as exc:
        raise ScenarioError(str(exc)) from None
    return scenario


def _waypoints(c: _Collector, raw, where: str):
    if not isinstance(raw, list) or not raw:
        c.problems.append(f"{where}waypoints: expected a non-empty list of [t, lat, lon]")
        return None
    out = []
    for j, wp in enumerate(raw):
        if (not isinstance(wp, (list, tuple)) or len(wp) not in (3, 4)
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in wp)):
            c.problems.append(f"{where}waypoints[{j}]: expected [t, lat, lon] or [t, lat, lon, alt]")
            return None
        try:
            out.append((float(wp[0]), GeoPoint(*map(float, wp[1:]))))
        except LinkValidationError as exc:
            c.problems.append(f"{where}waypoints[{j}]: {exc}")
            return None
    return tuple(out)


def load_scenario(path: str | os.PathLike) -> Scenario:
    """Load a scenario file. Raises OSError if unreadable, ScenarioError if invalid."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = yaml.load(fh, Loader=_Loader)
        except yaml.YAMLError as exc:
            raise ScenarioError(f"YAML parse error: {exc}") from None
    return scenario_from_dict(data)


def bundled_path(name: str):
    if name not in BUNDLED:
        raise FileNotFoundError(f"no bundled scenario named {name!r}")
    return resources.files("lorafield") / "scenarios" / f"{name}.yaml"


def load_bundled(name: str) -> Scenario:
    with resources.as_file(bundled_path(name)) as p:
        return load_scenario(p)


def resolve_scenario(ref: str) -> Scenario:
    """A path to a scenario file, or the name of a bundled scenario."""
    if os.path.exists(ref) or os.sep in ref or ref.endswith((".yaml", ".yml")):
        return load_scenario(ref)
    return load_bundled(ref)


def with_sigma(s: Scenario, sigma_db: float) -> Scenario:
    return replace(s, channel=replace(s.channel, shadowing_sigma_db=sigma_db))
