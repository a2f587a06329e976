"""Operator command line: serve, simulate, registry, reports, dispatch.

Machine output (tables, CSV) goes to stdout; logs go to stderr. Exit
codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import urllib.error
import urllib.request
from datetime import datetime, timezone

from . import analytics, reports, sim
from .analytics import MissionBook, export_csv, parse_month, render_table
from .config import ServerConfig, parse_server_config
from .geo import GeoPoint
from .httpapi import ApiContext, HttpApiServer
from .records import RECORD_SIZE
from .server import IngestCore, TcpIngestServer, UdpIngestServer
from .store import DeviceEntry, RecordStore, Registry, Transport

CONFIG_ENV_VAR = "RADFLEET_CONFIG"


def log(message: str) -> None:
    print(message, file=sys.stderr)


class CliError(Exception):
    """Runtime failure; maps to exit code 2."""


def parse_time_arg(text: str) -> int:
    """Accept UTC milliseconds or ISO 8601 (naive times are UTC)."""
    if text.isdigit():
        return int(text)
    try:
        dt = datetime.fromisoformat(text)
    except ValueError:
        raise CliError(f"not a timestamp (ms or ISO 8601): {text!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp() * 1000)


def load_config(args) -> ServerConfig:
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV_VAR)
    if path:
        try:
            with open(path, encoding="utf-8") as f:
                return parse_server_config(f.read())
        except OSError as exc:
            raise CliError(f"cannot read config {path}: {exc}") from None
    cfg = ServerConfig()
    if getattr(args, "data_dir", None):
        cfg.data_dir = args.data_dir
    return cfg


def open_offline(cfg: ServerConfig) -> tuple[RecordStore, Registry]:
    store = RecordStore(cfg.data_dir, durable=False)
    registry = Registry(os.path.join(cfg.data_dir, "registry.json"))
    for entry in cfg.devices:
        registry.seed(entry)
    return store, registry


def emit_report(report, as_csv: bool) -> None:
    if as_csv:
        sys.stdout.buffer.write(export_csv(report))
        sys.stdout.buffer.flush()
    else:
        sys.stdout.write(render_table(report))


# -- subcommands ------------------------------------------------------------------


def cmd_serve(args) -> int:
    cfg = load_config(args)
    store = RecordStore(cfg.data_dir, durable=cfg.durable)
    registry = Registry(os.path.join(cfg.data_dir, "registry.json"))
    for entry in cfg.devices:
        registry.seed(entry)
    core = IngestCore(
        store, registry, sms_enabled=cfg.sms_enabled,
        audit_path=os.path.join(cfg.data_dir, "commands.log"))
    ctx = ApiContext(
        core, missions=MissionBook(os.path.join(cfg.data_dir, "missions.json")),
        maintenance=cfg.maintenance, utc_offset_min=cfg.utc_offset_min)
    tcp = TcpIngestServer(core, cfg.host, cfg.tcp_port)
    udp = UdpIngestServer(core, cfg.host, cfg.udp_port)
    http = HttpApiServer(ctx, cfg.host, cfg.http_port)
    tcp.start()
    udp.start()
    http.start()
    log(f"tracker tcp :{tcp.port}  udp :{udp.port}  http :{http.port}  "
        f"data {cfg.data_dir}")
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        log("shutting down")
    finally:
        tcp.stop()
        udp.stop()
        http.stop()
        store.close()
    return 0


def cmd_simulate(args) -> int:
    try:
        with open(args.scenario, encoding="utf-8") as f:
            spec = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot load scenario: {exc}") from None
    config = sim.load_scenario(spec, data_dir=args.data_dir, seed=args.seed)
    if not config.data_dir:
        raise CliError("scenario needs --data-dir (or data_dir in the file)")
    report = sim.run_scenario(config)
    if args.report_csv:
        with open(args.report_csv, "wb") as f:
            f.write(report.to_csv())
    sys.stdout.write(report.summary_text())
    if not report.ok:
        log("oracle failures: " + "; ".join(report.oracle_failures))
        return 2
    return 0


def cmd_device(args) -> int:
    cfg = load_config(args)
    _, registry = open_offline(cfg)
    if args.device_cmd == "add":
        entry = DeviceEntry(imei=args.imei, label=args.label or "",
                            vehicle_class=args.vehicle_class or "",
                            tank_capacity_l=args.tank,
                            speed_limit_kmh=args.speed_limit,
                            created_at_ms=int(time.time() * 1000))
        try:
            registry.add(entry)
        except ValueError as exc:
            raise CliError(str(exc)) from None
        log(f"added {args.imei}")
        return 0
    if args.device_cmd == "disable":
        try:
            registry.set_enabled(args.imei, False)
        except KeyError as exc:
            raise CliError(str(exc)) from None
        log(f"disabled {args.imei}")
        return 0
    # list
    report = analytics.Report(
        "devices", ("imei", "label", "enabled", "class", "tank_l"),
        ("d", "s", "s", "s", "f1"))
    report.rows = [(e.imei, e.label, str(e.enabled).lower(), e.vehicle_class,
                    e.tank_capacity_l) for e in registry.list()]
    emit_report(report, args.csv)
    return 0


def cmd_report(args) -> int:
    cfg = load_config(args)
    store, registry = open_offline(cfg)
    try:
        kind = args.report_kind
        if kind == "daily":
            report = reports.build_daily(
                store, registry, args.vehicle, *parse_month(args.month),
                utc_offset_min=cfg.utc_offset_min)
        elif kind == "monthly":
            report = reports.build_monthly(
                store, registry, args.vehicle, parse_month(args.from_),
                parse_month(args.to), utc_offset_min=cfg.utc_offset_min)
        elif kind == "compare":
            report = reports.build_compare(
                store, registry, args.vehicle, parse_month(args.month_a),
                parse_month(args.month_b), utc_offset_min=cfg.utc_offset_min)
        elif kind == "fuel-by-speed":
            report = reports.build_fuel_by_speed(
                store, registry, args.vehicle,
                parse_time_arg(args.from_) if args.from_ else 0,
                parse_time_arg(args.to) if args.to else 2**63 - 1)
        elif kind == "maintenance":
            report = reports.build_maintenance(store, registry,
                                               cfg.maintenance, args.vehicle)
        elif kind == "mission":
            if not args.from_ or not args.to:
                raise CliError("report mission needs --from and --to")
            report = reports.build_mission_window(
                store, registry, args.vehicle, parse_time_arg(args.from_),
                parse_time_arg(args.to))
        else:  # pragma: no cover - argparse restricts choices
            raise CliError(f"unknown report {kind}")
        emit_report(report, args.csv)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    finally:
        store.close()
    return 0


def cmd_nearest(args) -> int:
    cfg = load_config(args)
    store, registry = open_offline(cfg)
    kwargs = {}
    if args.now:
        now_ms = parse_time_arg(args.now)
        kwargs["now_ms"] = lambda: now_ms
    core = IngestCore(store, registry, sms_enabled=False, **kwargs)
    try:
        out = analytics.nearest_vehicles(
            core.latest_positions(), GeoPoint(args.lat, args.lon),
            limit=args.limit, staleness_max_s=args.staleness)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    finally:
        store.close()
    emit_report(reports.build_nearest(out), args.csv)
    if out["stale"]:
        log(f"{len(out['stale'])} stale vehicle(s) excluded")
    return 0


def cmd_command(args) -> int:
    if args.out:
        parts = args.out.split()
        if len(parts) != 2:
            raise CliError('--out wants "<channel> <value>"')
        text = f"OUT {parts[0]} {parts[1]}"
    elif args.setparam:
        text = f"SETPARAM {args.setparam}"
    else:
        text = "GETGPS"
    payload = json.dumps({"vehicle": args.vehicle, "command": text}).encode()
    url = args.server.rstrip("/") + "/api/commands"
    req = urllib.request.Request(
        url, data=payload, headers={"Content-Type": "application/json"},
        method="POST")
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            body = json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        raise CliError(f"server rejected command: {exc.read().decode()}") from None
    except urllib.error.URLError as exc:
        raise CliError(f"cannot reach server {url}: {exc}") from None
    sys.stdout.write(json.dumps(body, indent=1) + "\n")
    return 0


def cmd_replay(args) -> int:
    cfg = load_config(args)
    store, registry = open_offline(cfg)
    if registry.get(args.imei) is None:
        store.close()
        raise CliError(f"imei {args.imei} is not registered")
    try:
        with open(args.device_buffer_file, "rb") as f:
            blob = f.read()
    except OSError as exc:
        store.close()
        raise CliError(f"cannot read buffer file: {exc}") from None
    usable = len(blob) - len(blob) % RECORD_SIZE
    chunks = [blob[i:i + RECORD_SIZE] for i in range(0, usable, RECORD_SIZE)]
    fresh, dups = store.append_batch(args.imei, chunks,
                                     int(time.time() * 1000), Transport.FILE)
    store.close()
    log(f"loaded {fresh} records ({dups} duplicates skipped) "
        f"from {args.device_buffer_file}")
    return 0


# -- argument wiring ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radfleet",
        description="fleet telemetry desk: tracker simulator, ingest "
                    "server, and reports")
    sub = parser.add_subparsers(dest="cmd", required=True)

    def common(p, data_dir=True):
        p.add_argument("--config", help=f"server config file "
                       f"(or ${CONFIG_ENV_VAR})")
        if data_dir:
            p.add_argument("--data-dir", help="store directory "
                           "(when no config file)")

    p = sub.add_parser("serve", help="run the ingest + API server")
    common(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("simulate", help="run a scenario in virtual time")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--data-dir", default=None)
    p.add_argument("--report-csv", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("device", help="manage the device registry")
    dev = p.add_subparsers(dest="device_cmd", required=True)
    pa = dev.add_parser("add")
    pa.add_argument("--imei", type=int, required=True)
    pa.add_argument("--label", default="")
    pa.add_argument("--class", dest="vehicle_class", default="")
    pa.add_argument("--tank", type=float, default=50.0)
    pa.add_argument("--speed-limit", type=float, default=None)
    common(pa)
    pa.set_defaults(func=cmd_device)
    pl = dev.add_parser("list")
    pl.add_argument("--csv", action="store_true")
    common(pl)
    pl.set_defaults(func=cmd_device)
    pd = dev.add_parser("disable")
    pd.add_argument("--imei", type=int, required=True)
    common(pd)
    pd.set_defaults(func=cmd_device)

    p = sub.add_parser("report", help="produce a report from the store")
    p.add_argument("report_kind", choices=[
        "daily", "monthly", "compare", "fuel-by-speed", "maintenance",
        "mission"])
    p.add_argument("--vehicle", type=int, required=True)
    p.add_argument("--month", help="YYYY-MM (daily)")
    p.add_argument("--from", dest="from_", help="YYYY-MM or timestamp")
    p.add_argument("--to", dest="to", help="YYYY-MM or timestamp")
    p.add_argument("--monthA", dest="month_a", help="YYYY-MM (compare)")
    p.add_argument("--monthB", dest="month_b", help="YYYY-MM (compare)")
    p.add_argument("--csv", action="store_true", help="RFC 4180 to stdout")
    common(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("nearest", help="rank vehicles by distance to a point")
    p.add_argument("--lat", type=float, required=True)
    p.add_argument("--lon", type=float, required=True)
    p.add_argument("--limit", type=int, default=10)
    p.add_argument("--staleness", type=float, default=900.0)
    p.add_argument("--now", help="reference time for staleness "
                   "(for analyzing simulated stores)")
    p.add_argument("--csv", action="store_true")
    common(p)
    p.set_defaults(func=cmd_nearest)

    p = sub.add_parser("command", help="send a command via a running server")
    p.add_argument("--vehicle", type=int, required=True)
    p.add_argument("--server", default="http://127.0.0.1:8080")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--out", help='"<channel> <value>", e.g. "0 1"')
    g.add_argument("--setparam", help="key=value")
    g.add_argument("--getgps", action="store_true")
    p.set_defaults(func=cmd_command)

    p = sub.add_parser("replay", help="load a device buffer dump offline")
    p.add_argument("--device-buffer-file", required=True)
    p.add_argument("--imei", type=int, required=True)
    common(p)
    p.set_defaults(func=cmd_replay)

    return parser


def validate_report_args(args) -> None:
    kind = getattr(args, "report_kind", None)
    if kind == "daily" and not args.month:
        raise SystemExit(_usage("report daily needs --month"))
    if kind == "monthly" and (not args.from_ or not args.to):
        raise SystemExit(_usage("report monthly needs --from and --to"))
    if kind == "compare" and (not args.month_a or not args.month_b):
        raise SystemExit(_usage("report compare needs --monthA and --monthB"))


def _usage(message: str) -> int:
    log(f"usage error: {message}")
    return 1


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        if args.cmd == "report":
            validate_report_args(args)
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    except CliError as exc:
        log(f"error: {exc}")
        return 2
    except KeyboardInterrupt:
        return 2


if __name__ == "__main__":
    sys.exit(main())
