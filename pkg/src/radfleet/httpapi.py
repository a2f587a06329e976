"""HTTP JSON API and server-sent event stream for the operator console.

Single-operator desk tool: no authentication, JSON in and out, and every
report endpoint also serves RFC 4180 CSV via ?format=csv. The stream at
/api/stream emits one JSON object per event as SSE data lines.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional, Sequence
from urllib.parse import parse_qs, urlparse

from . import analytics, reports
from .analytics import (
    MaintenanceItem, MissionBook, MissionOverlap, export_csv,
    nearest_vehicles, parse_month,
)
from .geo import GeoPoint
from .server import IngestCore, NoRoute


class ApiContext:
    """Everything the HTTP layer serves from."""

    def __init__(self, core: IngestCore, *,
                 missions: Optional[MissionBook] = None,
                 maintenance: Sequence[MaintenanceItem] = (),
                 utc_offset_min: int = analytics.DEFAULT_UTC_OFFSET_MIN):
        self.core = core
        self.missions = missions or MissionBook()
        self.maintenance = list(maintenance)
        self.utc_offset_min = utc_offset_min


class ApiError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _int_param(qs: dict, name: str, default=None):
    if name not in qs:
        if default is None:
            raise ApiError(400, f"missing parameter {name!r}")
        return default
    try:
        return int(qs[name][0])
    except ValueError:
        raise ApiError(400, f"parameter {name!r} must be an integer") from None


def _float_param(qs: dict, name: str, default=None):
    if name not in qs:
        if default is None:
            raise ApiError(400, f"missing parameter {name!r}")
        return default
    try:
        return float(qs[name][0])
    except ValueError:
        raise ApiError(400, f"parameter {name!r} must be a number") from None


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    @property
    def ctx(self) -> ApiContext:
        return self.server.ctx  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):  # quiet; logs belong on stderr
        pass

    # -- plumbing -------------------------------------------------------------

    def _send_json(self, payload, code: int = 200) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_csv(self, data: bytes) -> None:
        self.send_response(200)
        self.send_header("Content-Type", "text/csv; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def _send_report(self, report, qs) -> None:
        if qs.get("format", [""])[0] == "csv":
            self._send_csv(export_csv(report))
        else:
            self._send_json(reports.report_json(report))

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length", "0"))
        if length == 0:
            return {}
        try:
            return json.loads(self.rfile.read(length))
        except json.JSONDecodeError:
            raise ApiError(400, "request body is not valid JSON") from None

    # -- dispatch ---------------------------------------------------------------

    def do_GET(self) -> None:
        url = urlparse(self.path)
        qs = parse_qs(url.query)
        try:
            self._route_get(url.path, qs)
        except ApiError as exc:
            self._send_json({"error": str(exc)}, exc.code)
        except (BrokenPipeError, ConnectionResetError):
            pass

    def do_POST(self) -> None:
        url = urlparse(self.path)
        try:
            self._route_post(url.path)
        except ApiError as exc:
            self._send_json({"error": str(exc)}, exc.code)
        except (BrokenPipeError, ConnectionResetError):
            pass

    def do_OPTIONS(self) -> None:
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def _route_get(self, path: str, qs: dict) -> None:
        ctx = self.ctx
        core = ctx.core
        if path == "/api/meta":
            self._send_json({"utc_offset_min": ctx.utc_offset_min,
                             "server_time_ms": core.now_ms()})
            return
        if path == "/api/vehicles":
            self._send_json(core.latest_positions())
            return
        if path.startswith("/api/vehicles/") and path.endswith("/track"):
            imei = self._imei_from_path(path)
            from_ms = _int_param(qs, "from", 0)
            to_ms = _int_param(qs, "to", 2**63 - 1)
            prs = core.query_track(imei, from_ms, to_ms)
            self._send_json([_track_point(pr) for pr in prs])
            return
        if path == "/api/nearest":
            lat = _float_param(qs, "lat")
            lon = _float_param(qs, "lon")
            limit = _int_param(qs, "limit", 10)
            out = nearest_vehicles(core.latest_positions(),
                                   GeoPoint(lat, lon), limit=limit)
            self._send_json(out)
            return
        if path == "/api/reports/daily":
            imei = _int_param(qs, "vehicle")
            year, month = parse_month(self._str_param(qs, "month"))
            report = reports.build_daily(core.store, core.registry, imei,
                                         year, month,
                                         utc_offset_min=ctx.utc_offset_min)
            self._send_report(report, qs)
            return
        if path == "/api/reports/monthly":
            imei = _int_param(qs, "vehicle")
            report = reports.build_monthly(
                core.store, core.registry, imei,
                parse_month(self._str_param(qs, "from")),
                parse_month(self._str_param(qs, "to")),
                utc_offset_min=ctx.utc_offset_min)
            self._send_report(report, qs)
            return
        if path == "/api/reports/compare":
            imei = _int_param(qs, "vehicle")
            report = reports.build_compare(
                core.store, core.registry, imei,
                parse_month(self._str_param(qs, "monthA")),
                parse_month(self._str_param(qs, "monthB")),
                utc_offset_min=ctx.utc_offset_min)
            self._send_report(report, qs)
            return
        if path == "/api/reports/fuel-by-speed":
            imei = _int_param(qs, "vehicle")
            report = reports.build_fuel_by_speed(
                core.store, core.registry, imei,
                _int_param(qs, "from", 0), _int_param(qs, "to", 2**63 - 1))
            self._send_report(report, qs)
            return
        if path == "/api/reports/maintenance":
            imei = _int_param(qs, "vehicle")
            report = reports.build_maintenance(core.store, core.registry,
                                               ctx.maintenance, imei)
            self._send_report(report, qs)
            return
        if path == "/api/missions":
            self._send_json([self._mission_json(m) for m in
                             ctx.missions.missions])
            return
        if path == "/api/commands":
            imei = _int_param(qs, "vehicle", 0) or None
            self._send_json([c.to_json() for c in core.commands_for(imei)])
            return
        if path == "/api/alerts":
            since = _int_param(qs, "since", 0)
            self._send_json(core.alerts(since))
            return
        if path == "/api/stream":
            self._serve_stream(qs)
            return
        raise ApiError(404, f"no such endpoint: {path}")

    def _route_post(self, path: str) -> None:
        ctx = self.ctx
        if path == "/api/commands":
            body = self._read_body()
            imei = int(body.get("vehicle", 0))
            text = body.get("command", "")
            if not imei or not text:
                raise ApiError(400, "need vehicle and command")
            try:
                status = ctx.core.send_command(imei, text)
            except KeyError as exc:
                raise ApiError(404, str(exc)) from None
            except NoRoute as exc:
                raise ApiError(409, str(exc)) from None
            self._send_json(status.to_json(), 201)
            return
        if path == "/api/missions":
            body = self._read_body()
            try:
                mission = ctx.missions.add(
                    int(body["vehicle"]), body.get("driver", ""),
                    body.get("purpose", ""), int(body["start_ms"]),
                    int(body["end_ms"]))
            except KeyError as exc:
                raise ApiError(400, f"missing field {exc}") from None
            except MissionOverlap as exc:
                raise ApiError(409, str(exc)) from None
            except ValueError as exc:
                raise ApiError(400, str(exc)) from None
            self._send_json(self._mission_json(mission), 201)
            return
        raise ApiError(404, f"no such endpoint: {path}")

    # -- helpers ---------------------------------------------------------------

    def _str_param(self, qs: dict, name: str) -> str:
        if name not in qs:
            raise ApiError(400, f"missing parameter {name!r}")
        return qs[name][0]

    def _imei_from_path(self, path: str) -> int:
        try:
            return int(path.split("/")[3])
        except (IndexError, ValueError):
            raise ApiError(400, "bad vehicle id in path") from None

    def _mission_json(self, mission) -> dict:
        ctx = self.ctx
        d = mission.to_json()
        out = reports.build_mission_window(ctx.core.store, ctx.core.registry,
                                           mission.imei, mission.start_ms,
                                           mission.end_ms)
        _, _, km, liters, trips = out.rows[0]
        d.update({"km": km, "liters": liters, "trips": trips})
        return d

    def _serve_stream(self, qs: dict) -> None:
        imei = _int_param(qs, "vehicle", 0) or None
        sub = self.ctx.core.subscribe(imei)
        self.send_response(200)
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Cache-Control", "no-cache")
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        try:
            self.wfile.write(b": stream open\n\n")
            self.wfile.flush()
            while True:
                event = sub.pop(timeout=15.0)
                if sub.dropped:
                    break
                if event is None:
                    self.wfile.write(b": keepalive\n\n")
                else:
                    data = json.dumps(event).encode("utf-8")
                    self.wfile.write(b"data: " + data + b"\n\n")
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError, OSError):
            pass
        finally:
            self.ctx.core.unsubscribe(sub)


def _track_point(pr) -> dict:
    rec = pr.record
    return {"timestamp_ms": rec.timestamp_ms, "lat": rec.lat, "lon": rec.lon,
            "speed_kmh": rec.speed_kmh, "heading": rec.heading,
            "event": _event(rec.event_code), "seq": rec.seq,
            "ignition": rec.ignition, "valid": rec.valid_fix,
            "odometer_m": rec.odometer_m}


def _event(code: int) -> str:
    from .records import EventCode
    try:
        return EventCode(code).name
    except ValueError:
        return f"Event{code}"


class HttpApiServer:
    def __init__(self, ctx: ApiContext, host: str = "0.0.0.0",
                 port: int = 8080):
        class _Server(ThreadingHTTPServer):
            daemon_threads = True
            allow_reuse_address = True

        self._server = _Server((host, port), _Handler)
        self._server.ctx = ctx  # type: ignore[attr-defined]
        self.port = self._server.server_address[1]
        self._thread: Optional[threading.Thread] = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
