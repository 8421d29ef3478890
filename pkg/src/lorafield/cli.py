"""``lorafield`` command line: airtime, plan, simulate, analyze.

Exit codes: 0 success, 1 validation/configuration error, 2 I/O error.
Results go to stdout, diagnostics to stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from typing import Sequence

from . import __version__
from .config import resolve_scenario, with_sigma
from .fieldlog import GatewayRegistry, LogSchemaError, iter_log, Diagnostic, write_log
from .metrics import ReportConfig, report, write_report_csvs
from .netsim import ScenarioError, run_scenario, truth_summary, read_ground_truth_csv, write_ground_truth_csv
from .phy import (AppMessageSpec, DutyCyclePolicy, PhyParams, PhyValidationError, min_interval,
                  plan_spreading_factor, round_interface, time_on_air)

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _phy_from_args(args, payload: int, sf: int) -> PhyParams:
    ldro = {"auto": "auto", "on": True, "off": False}[args.ldro]
    return PhyParams(sf=sf, bandwidth_hz=args.bw, coding_rate=args.cr, preamble_symbols=args.preamble,
                     explicit_header=not args.implicit_header, crc_on=not args.no_crc,
                     low_data_rate_optimize=ldro, phy_payload_bytes=payload)


def cmd_airtime(args) -> int:
    if args.payload < 0 or args.overhead < 0:
        raise PhyValidationError("payload and overhead must be >= 0")
    phy = _phy_from_args(args, args.payload + args.overhead, args.sf)
    policy = DutyCyclePolicy(args.duty)
    toa = time_on_air(phy)
    interval = min_interval(phy, policy)
    print(f"SF{phy.sf} BW{phy.bandwidth_hz // 1000}k CR4/{phy.coding_rate + 4} "
          f"PHY payload {phy.phy_payload_bytes} B")
    print(f"time on air:  {round_interface(toa):.2f} s")
    print(f"min interval: {round_interface(interval):.2f} s at {policy.duty_cycle:.2%} duty cycle")
    print(f"toa_s={round_interface(toa):.2f} min_interval_s={round_interface(interval):.2f}")
    return EXIT_OK


def cmd_plan(args) -> int:
    spec = AppMessageSpec(args.payload, args.target, args.overhead)
    base = _phy_from_args(args, spec.phy_payload_bytes, 7)
    result = plan_spreading_factor(spec, DutyCyclePolicy(args.duty), base)
    print(f"payload {spec.app_payload_bytes} B + {spec.mac_overhead_bytes} B overhead, "
          f"target interval {args.target:g} s, duty cycle {args.duty:.2%}")
    print(f"{'SF':>4} {'toa_s':>8} {'min_interval_s':>15} feasible")
    for o in result.options:
        print(f"{o.sf:>4} {o.time_on_air_s:8.3f} {round_interface(o.min_interval_s):15.2f} "
              f"{'yes' if o.feasible else 'no'}")
    if result.feasible:
        print(f"chosen_sf={result.chosen_sf}")
    else:
        print(f"verdict=infeasible smallest_interval_s={round_interface(result.smallest_interval_s):.2f} at SF7")
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("sf", "toa_s", "min_interval_s", "feasible", "chosen"))
            for o in result.options:
                w.writerow((o.sf, f"{o.time_on_air_s:.6f}", f"{round_interface(o.min_interval_s):.2f}",
                            int(o.feasible), int(o.sf == result.chosen_sf)))
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = resolve_scenario(args.scenario)
    if args.sigma is not None:
        scenario = with_sigma(scenario, args.sigma)
    records, truth = run_scenario(scenario)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "uplink.jsonl"), "w", encoding="utf-8") as fh:
        write_log(records, fh)
    with open(os.path.join(args.out, "ground_truth.csv"), "w", newline="", encoding="utf-8") as fh:
        write_ground_truth_csv(truth, fh)
    registry = GatewayRegistry({g.gateway_id: g.position for g in scenario.gateways},
                               {d.device_id: d.position for d in scenario.devices if d.position is not None})
    with open(os.path.join(args.out, "registry.json"), "w", encoding="utf-8") as fh:
        json.dump(registry.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    total = truth_summary(truth)[""]
    print(f"scenario={scenario.name} transmissions={total.transmissions} records={len(records)} "
          f"loss={total.loss:.4f}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    registry = GatewayRegistry.load(args.registry) if args.registry else None
    records, diags = [], []
    with open(args.log, "rb") as fh:
        for item in iter_log(fh):
            (diags if isinstance(item, Diagnostic) else records).append(item)
    for d in diags:
        _err(f"{args.log}: {d}")
    if not records:
        _err(f"{args.log}: no valid records")
        return EXIT_VALIDATION
    expected = None
    if args.ground_truth:
        with open(args.ground_truth, newline="", encoding="utf-8") as fh:
            summary = truth_summary(read_ground_truth_csv(fh))
        expected = {d: s.transmissions for d, s in summary.items() if d}
    config = ReportConfig(target_interval_s=args.target_interval, guard_fraction=args.guard,
                          registry=registry, expected_counts=expected)
    rep = report(records, config)
    for msg in rep.diagnostics:
        _err(msg)
    write_report_csvs(rep, args.out)
    o = rep.reach.overall
    print(f"messages={rep.messages} skipped_lines={len(diags)}")
    print(f"gateways_per_message min={o.min} mean={o.mean:.2f} max={o.max}")
    if rep.share:
        near = rep.share[0]
        dist = "unknown" if near.distance_m is None else f"{near.distance_m:.0f}"
        print(f"nearest_gateway={near.gateway_id} distance_m={dist} share={near.share:.3f}")
    print(f"first_interval_fraction={rep.interarrival.fraction_within(1):.3f} "
          f"within_2_intervals={rep.interarrival.fraction_within(2):.3f}")
    print(f"loss={rep.loss.overall.loss:.4f} expected={rep.loss.overall.expected} "
          f"received={rep.loss.overall.received}")
    return EXIT_OK


def _add_phy_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bw", type=int, default=125_000, help="bandwidth in Hz (default 125000)")
    p.add_argument("--cr", type=int, default=1, help="coding rate index 1..4 for 4/5..4/8 (default 1)")
    p.add_argument("--preamble", type=int, default=8, help="preamble symbols (default 8)")
    p.add_argument("--overhead", type=int, default=13, help="LoRaWAN MAC overhead bytes (default 13)")
    p.add_argument("--duty", type=float, default=0.01, help="duty cycle fraction (default 0.01)")
    p.add_argument("--ldro", choices=("auto", "on", "off"), default="auto", help="low data rate optimize")
    p.add_argument("--implicit-header", action="store_true")
    p.add_argument("--no-crc", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lorafield", description="LoRaWAN airtime planning, simulation and log analysis")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("airtime", help="time on air and duty-cycle minimal interval")
    p.add_argument("--sf", type=int, required=True)
    p.add_argument("--payload", type=int, required=True, help="application payload bytes")
    _add_phy_flags(p)
    p.set_defaults(func=cmd_airtime)

    p = sub.add_parser("plan", help="choose the highest SF meeting a target interval")
    p.add_argument("--payload", type=int, required=True, help="application payload bytes")
    p.add_argument("--target", type=float, required=True, help="target message interval in seconds")
    p.add_argument("--csv", help="also write the per-SF table to this CSV file")
    _add_phy_flags(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="run a scenario; write uplink log and ground truth")
    p.add_argument("--scenario", required=True, help="scenario YAML file or bundled scenario name")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--sigma", type=float, help="override shadowing sigma in dB")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="compute metric CSVs from an uplink log")
    p.add_argument("--log", required=True, help="JSON-Lines uplink log")
    p.add_argument("--registry", help="gateway/device position registry (JSON)")
    p.add_argument("--target-interval", type=float, default=30.0, help="device message interval in seconds")
    p.add_argument("--guard", type=float, default=0.1, help="inter-arrival guard as a fraction of the interval")
    p.add_argument("--ground-truth", help="simulator ground-truth CSV; switches loss to scheduled counts")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        _err(str(exc))
        return EXIT_VALIDATION
    except ScenarioError as exc:
        _err("invalid scenario:")
        for problem in exc.problems:
            _err(f"  {problem}")
        return EXIT_VALIDATION
    except (PhyValidationError, LogSchemaError, ValueError) as exc:
        _err(f"error: {exc}")
        return EXIT_VALIDATION
    except OSError as exc:
        _err(f"I/O error: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
