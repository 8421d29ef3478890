"""Regenerate the bundled example scenarios.

The layouts are illustrative Hamburg-like geometries, not surveyed gateway
positions:

* dom_with_gateway / dom_without_gateway: body-worn GPS trackers (SF9, 11 B,
  30 s) walking around a fairground in a dense city block, with and without a
  gateway on the event site.
* port: pole-mounted environmental sensors (SF10, 8 B, 60 s) along a
  waterfront, with one elevated gateway ~14 km down the river.

Usage: python scripts/make_scenarios.py [--out src/lorafield/scenarios]
"""
import argparse
import os

import numpy as np
import yaml

DOM_CENTER = (53.5560, 9.9705)
PORT_SITES = [(53.5447, 9.9530), (53.5452, 9.9610), (53.5458, 9.9690),
              (53.5455, 9.9770), (53.5440, 9.9850), (53.5430, 9.9930)]

DOM_CHANNEL = {
    "ref_distance_m": 1000.0,
    "ref_loss_db": 128.95,
    "exponent": 2.9,
    "shadowing_sigma_db": 6.0,
    "tx_power_dbm": 14.0,
    "antenna_gains_db": 0.0,
}
PORT_CHANNEL = {
    "ref_distance_m": 1000.0,
    "ref_loss_db": 128.95,
    "exponent": 2.32,
    "shadowing_sigma_db": 6.0,
    "tx_power_dbm": 14.0,
    "antenna_gains_db": 0.0,
}

DOM_GATEWAYS = [
    {"gateway_id": "gw-dom-site", "lat": 53.5566, "lon": 9.9712, "gain_offset_db": 0.0},
    {"gateway_id": "gw-st-pauli", "lat": 53.5497, "lon": 9.9368, "gain_offset_db": 0.0},
    {"gateway_id": "gw-eimsbuettel", "lat": 53.5805, "lon": 9.9545, "gain_offset_db": 0.0},
    {"gateway_id": "gw-hafencity", "lat": 53.5415, "lon": 10.0080, "gain_offset_db": 0.0},
    {"gateway_id": "gw-altona", "lat": 53.5510, "lon": 9.9160, "gain_offset_db": 2.0},
    {"gateway_id": "gw-barmbek", "lat": 53.5850, "lon": 10.0400, "gain_offset_db": 3.0},
]
PORT_GATEWAYS = [
    {"gateway_id": "gw-landungsbruecken", "lat": 53.5470, "lon": 9.9660, "gain_offset_db": 0.0},
    {"gateway_id": "gw-steinwerder", "lat": 53.5330, "lon": 9.9620, "gain_offset_db": 0.0},
    {"gateway_id": "gw-hafencity", "lat": 53.5415, "lon": 10.0080, "gain_offset_db": 0.0},
    {"gateway_id": "gw-altona", "lat": 53.5510, "lon": 9.9160, "gain_offset_db": 2.0},
    {"gateway_id": "gw-wilhelmsburg", "lat": 53.5000, "lon": 10.0000, "gain_offset_db": 0.0},
    # elevated mast on the river bank, line of sight over water
    {"gateway_id": "gw-elbe-west", "lat": 53.5590, "lon": 9.7600, "gain_offset_db": 9.5},
]


def tracker_waypoints(rng, duration_s, step_s=120.0):
    lat0, lon0 = DOM_CENTER
    lat, lon = lat0 + rng.uniform(-0.001, 0.001), lon0 + rng.uniform(-0.002, 0.002)
    out = []
    t = 0.0
    while t <= duration_s:
        out.append([t, round(lat, 6), round(lon, 6)])
        lat = float(np.clip(lat + rng.normal(0, 0.0005), lat0 - 0.0015, lat0 + 0.0015))
        lon = float(np.clip(lon + rng.normal(0, 0.0008), lon0 - 0.0030, lon0 + 0.0030))
        t += step_s
    return out


def dom(with_site_gateway: bool):
    duration = 4 * 3600.0
    rng = np.random.default_rng(2019)
    devices = []
    for i in range(10):
        devices.append({
            "device_id": f"tracker-{i + 1:02d}",
            "sf": 9,
            "app_payload_bytes": 11,
            "interval_s": 30.0,
            "start_offset_s": round(float(rng.uniform(0, 30)), 3),
            # worn at ~1 m above ground
            "gain_offset_db": -7.0,
            "waypoints": tracker_waypoints(rng, duration),
        })
    gateways = DOM_GATEWAYS if with_site_gateway else DOM_GATEWAYS[1:]
    name = "dom_with_gateway" if with_site_gateway else "dom_without_gateway"
    return {
        "name": name,
        "description": "Illustrative fairground layout; trackers carried by staff. "
                       + ("Includes a gateway on the event site." if with_site_gateway
                          else "Same layout without the on-site gateway."),
        "seed": 2019,
        "duration_s": duration,
        "start_time": "2019-07-26T16:00:00Z",
        "mac_overhead_bytes": 13,
        "duty": {"duty_cycle": 0.01},
        "channel": DOM_CHANNEL,
        "gateways": gateways,
        "devices": devices,
    }


def port():
    rng = np.random.default_rng(509)
    devices = []
    for i, (lat, lon) in enumerate(PORT_SITES):
        devices.append({
            "device_id": f"sensor-{i + 1:02d}",
            "sf": 10,
            "app_payload_bytes": 8,
            "interval_s": 60.0,
            "start_offset_s": round(float(rng.uniform(0, 60)), 3),
            # pole mounted, 5-10 m
            "gain_offset_db": 4.0,
            "lat": lat,
            "lon": lon,
        })
    return {
        "name": "port",
        "description": "Illustrative waterfront layout; environmental sensors on poles, "
                       "one elevated gateway about 14 km down the river.",
        "seed": 509,
        "duration_s": 4 * 3600.0,
        "start_time": "2019-05-10T12:00:00Z",
        "mac_overhead_bytes": 13,
        "duty": {"duty_cycle": 0.01},
        "channel": PORT_CHANNEL,
        "gateways": PORT_GATEWAYS,
        "devices": devices,
    }


class _FlowListDumper(yaml.SafeDumper):
    pass


def _represent_list(dumper, data):
    flow = all(not isinstance(x, (dict, list)) for x in data)
    return dumper.represent_sequence("tag:yaml.org,2002:seq", data, flow_style=flow)


_FlowListDumper.add_representer(list, _represent_list)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "src", "lorafield", "scenarios"))
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    for data in (dom(True), dom(False), port()):
        path = os.path.join(args.out, f"{data['name']}.yaml")
        with open(path, "w", encoding="utf-8") as fh:
            yaml.dump(data, fh, Dumper=_FlowListDumper, sort_keys=False, width=100)
        print(path)


if __name__ == "__main__":
    main()
