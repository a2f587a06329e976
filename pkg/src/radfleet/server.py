"""Ingest service: sessions, dedup + persistence, live event bus, commands.

IngestCore is transport-agnostic and clock-injectable so the simulator can
drive it in virtual time; TcpIngestServer/UdpIngestServer wrap it with real
sockets for the serve command. Per-device ingest is serialized with one
lock per imei; readers see whole 64-byte records only.
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import wire
from .records import decode_record
from .store import PersistedRecord, RecordStore, Registry, Transport

EVENT_BACKLOG_LIMIT = 1000


def real_time_ms() -> int:
    return int(time.time() * 1000)


class IngestError(Exception):
    pass


class NoRoute(IngestError):
    """Device offline and the SMS channel is disabled or unavailable."""


@dataclass
class Session:
    imei: int
    transport: Transport
    opened_at_ms: int


class Subscription:
    """One event-stream subscriber with a bounded backlog.

    A subscriber that falls more than EVENT_BACKLOG_LIMIT events behind is
    disconnected instead of blocking ingest.
    """

    def __init__(self, imei_filter: Optional[int] = None,
                 limit: int = EVENT_BACKLOG_LIMIT):
        self.imei_filter = imei_filter
        self.limit = limit
        self.queue: deque = deque()
        self.dropped = False
        self._cond = threading.Condition()

    def push(self, event: dict) -> None:
        with self._cond:
            if self.dropped:
                return
            if len(self.queue) >= self.limit:
                self.dropped = True
                self.queue.clear()
            else:
                self.queue.append(event)
            self._cond.notify_all()

    def pop(self, timeout: Optional[float] = None) -> Optional[dict]:
        """Next event, or None on timeout/disconnect."""
        with self._cond:
            if not self.queue and not self.dropped:
                self._cond.wait(timeout)
            if self.queue:
                return self.queue.popleft()
            return None


@dataclass
class CommandStatus:
    id: int
    imei: int
    text: str
    status: str                  # queued | delivered | acked | no_route
    history: list[tuple[int, str]] = field(default_factory=list)
    reply: Optional[str] = None

    def to_json(self) -> dict:
        return {"id": self.id, "imei": self.imei, "text": self.text,
                "status": self.status, "reply": self.reply,
                "history": [{"t": t, "status": s} for t, s in self.history]}


class IngestCore:
    """The server brain: validate, dedup, persist, cache, push, relay."""

    def __init__(self, store: RecordStore, registry: Registry, *,
                 now_ms: Callable[[], int] = real_time_ms,
                 sms_enabled: bool = True,
                 audit_path: Optional[str] = None):
        self.store = store
        self.registry = registry
        self.now_ms = now_ms
        self.sms_enabled = sms_enabled
        self.audit_path = audit_path

        self._latest: dict[int, PersistedRecord] = {}
        self._alerts: list[dict] = []
        self._alert_seq = 0
        self._subscribers: list[Subscription] = []
        self._device_locks: dict[int, threading.Lock] = {}
        self._cache_lock = threading.Lock()
        self._live_links: dict[int, Callable[[str], Optional[str]]] = {}
        self._sms_links: dict[int, Callable[[str], Optional[str]]] = {}
        self._commands: dict[int, CommandStatus] = {}
        self._command_seq = 0

        # warm the latest-position cache from what is already on disk
        for imei in self.store.imeis():
            history = self.store.records_by_arrival(imei)
            if history:
                self._latest[imei] = max(
                    history, key=lambda pr: (pr.record.timestamp_ms,
                                             pr.record.seq))

    # -- sessions ---------------------------------------------------------------

    def authenticate(self, frame: wire.Frame,
                     transport: Transport) -> Optional[Session]:
        """Login frames open a session iff the imei is registered+enabled."""
        entry = self.registry.get(frame.imei)
        if entry is None or not entry.enabled:
            return None
        return Session(frame.imei, transport, self.now_ms())

    def ingest(self, session: Session, frame: wire.Frame) -> int:
        """Persist fresh records, then return the count to ack (fresh+dups).

        The store write completes (flushed, fsynced when durable) before
        this returns; callers must not ack earlier.
        """
        if frame.imei != session.imei:
            raise IngestError(
                f"frame imei {frame.imei} does not match session {session.imei}")
        lock = self._device_locks.setdefault(session.imei, threading.Lock())
        received_at = self.now_ms()
        with lock:
            before = self.store.seq_set(session.imei)
            fresh_chunks = [c for c in frame.records
                            if decode_record(c).seq not in before]
            fresh, dups = self.store.append_batch(
                session.imei, list(frame.records), received_at,
                session.transport)
        accepted = fresh + dups
        if fresh:
            self._after_store(session.imei,
                              [decode_record(c) for c in fresh_chunks],
                              received_at, session.transport)
        return accepted

    def _after_store(self, imei, records, received_at, transport) -> None:
        entry = self.registry.get(imei)
        label = entry.label if entry else ""
        with self._cache_lock:
            for rec in records:
                pr = PersistedRecord(rec, received_at, transport)
                cached = self._latest.get(imei)
                if cached is None or (rec.timestamp_ms, rec.seq) > \
                        (cached.record.timestamp_ms, cached.record.seq):
                    self._latest[imei] = pr
                if rec.priority:
                    self._alert_seq += 1
                    self._alerts.append({
                        "id": self._alert_seq, "imei": imei, "label": label,
                        "event": _event_name(rec.event_code),
                        "timestamp_ms": rec.timestamp_ms,
                        "received_at_ms": received_at,
                        "lat": rec.lat, "lon": rec.lon,
                        "speed_kmh": rec.speed_kmh, "seq": rec.seq,
                    })
        for rec in records:
            self._publish({
                "type": "alert" if rec.priority else "position",
                "imei": imei, "label": label,
                "timestamp_ms": rec.timestamp_ms,
                "lat": rec.lat, "lon": rec.lon, "speed_kmh": rec.speed_kmh,
                "heading": rec.heading, "event": _event_name(rec.event_code),
                "seq": rec.seq, "ignition": rec.ignition,
            })

    # -- SMS ingest (panic fallback positions; no seq, so never stored) ----------

    def ingest_position_sms(self, text: str) -> None:
        fields = wire.parse_position_sms(text)
        imei = fields["imei"]
        entry = self.registry.get(imei)
        if entry is None or not entry.enabled:
            return
        self._alert_seq += 1
        with self._cache_lock:
            self._alerts.append({
                "id": self._alert_seq, "imei": imei, "label": entry.label,
                "event": fields["event"], "timestamp_ms": None,
                "received_at_ms": self.now_ms(),
                "lat": fields["lat"], "lon": fields["lon"],
                "speed_kmh": fields["speed_kmh"], "seq": None,
            })
        self._publish({"type": "alert", "imei": imei, "label": entry.label,
                       "event": fields["event"], "lat": fields["lat"],
                       "lon": fields["lon"],
                       "speed_kmh": fields["speed_kmh"], "via": "sms"})

    # -- queries -------------------------------------------------------------------

    def latest_positions(self) -> list[dict]:
        """One snapshot per enabled device (devices without records included)."""
        now = self.now_ms()
        out = []
        for entry in self.registry.list():
            if not entry.enabled:
                continue
            pr = self._latest.get(entry.imei)
            snap = {"imei": entry.imei, "label": entry.label, "last": None,
                    "age_s": None}
            if pr is not None:
                rec = pr.record
                snap["last"] = {
                    "timestamp_ms": rec.timestamp_ms, "lat": rec.lat,
                    "lon": rec.lon, "speed_kmh": rec.speed_kmh,
                    "heading": rec.heading, "ignition": rec.ignition,
                    "event": _event_name(rec.event_code),
                    "odometer_m": rec.odometer_m, "seq": rec.seq,
                    "fuel_level_pct": rec.fuel_level_pct,
                }
                snap["age_s"] = max(0.0, (now - rec.timestamp_ms) / 1000.0)
            out.append(snap)
        return out

    def query_track(self, imei: int, from_ms: Optional[int],
                    to_ms: Optional[int]) -> list[PersistedRecord]:
        return self.store.records_by_time(imei, from_ms, to_ms)

    def alerts(self, since_id: int = 0) -> list[dict]:
        with self._cache_lock:
            return [a for a in self._alerts if a["id"] > since_id]

    # -- event stream -----------------------------------------------------------------

    def subscribe(self, imei_filter: Optional[int] = None) -> Subscription:
        sub = Subscription(imei_filter)
        self._subscribers.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        if sub in self._subscribers:
            self._subscribers.remove(sub)

    def _publish(self, event: dict) -> None:
        for sub in list(self._subscribers):
            if sub.imei_filter is not None and \
                    event.get("imei") != sub.imei_filter:
                continue
            sub.push(event)
            if sub.dropped:
                self._subscribers.remove(sub)

    # -- command relay ------------------------------------------------------------------

    def attach_live_link(self, imei: int,
                         deliver: Callable[[str], Optional[str]]) -> None:
        """Register the per-session command path (GPRS)."""
        self._live_links[imei] = deliver

    def detach_live_link(self, imei: int) -> None:
        self._live_links.pop(imei, None)

    def attach_sms_link(self, imei: int,
                        deliver: Callable[[str], Optional[str]]) -> None:
        """Register the simulated SMS path for a device."""
        self._sms_links[imei] = deliver

    def send_command(self, imei: int, text: str) -> CommandStatus:
        """Queue, deliver (live session first, else SMS), track to acked."""
        if self.registry.get(imei) is None:
            raise KeyError(f"unknown imei {imei}")
        self._command_seq += 1
        status = CommandStatus(self._command_seq, imei, text, "queued")
        self._commands[status.id] = status
        self._set_command_status(status, "queued")

        deliver = self._live_links.get(imei)
        via = "session"
        if deliver is None and self.sms_enabled:
            deliver = self._sms_links.get(imei)
            via = "sms"
        if deliver is None:
            self._set_command_status(status, "no_route")
            raise NoRoute(f"device {imei} offline and no SMS path")

        self._set_command_status(status, "delivered")
        reply = deliver(text)
        if reply is not None:
            status.reply = reply
            self._set_command_status(status, "acked")
        self._publish({"type": "command", "id": status.id, "imei": imei,
                       "text": text, "status": status.status, "via": via,
                       "reply": status.reply})
        return status

    def command_status(self, command_id: int) -> Optional[CommandStatus]:
        return self._commands.get(command_id)

    def commands_for(self, imei: Optional[int] = None) -> list[CommandStatus]:
        out = [c for c in self._commands.values()
               if imei is None or c.imei == imei]
        return sorted(out, key=lambda c: c.id)

    def _set_command_status(self, status: CommandStatus, value: str) -> None:
        status.status = value
        status.history.append((self.now_ms(), value))
        if self.audit_path:
            with open(self.audit_path, "a", encoding="utf-8") as f:
                f.write(json.dumps({"t": self.now_ms(), "command": status.id,
                                    "imei": status.imei, "text": status.text,
                                    "status": value}) + "\n")


def _event_name(code: int) -> str:
    from .records import EventCode
    try:
        return EventCode(code).name
    except ValueError:
        return f"Event{code}"


# -- socket servers ---------------------------------------------------------------


class _TcpHandler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        core: IngestCore = self.server.core  # type: ignore[attr-defined]
        stream = wire.FrameStream()
        session: Optional[Session] = None
        linked_imei: Optional[int] = None
        self.request.settimeout(60.0)
        try:
            while True:
                try:
                    data = self.request.recv(4096)
                except socket.timeout:
                    break
                if not data:
                    break
                try:
                    frames = stream.feed(data)
                except wire.WireError:
                    break  # corrupt stream; no ack, device retransmits
                for frame in frames:
                    if session is None:
                        session = core.authenticate(frame, Transport.TCP)
                        if session is None:
                            self.request.sendall(wire.encode_ack(0))
                            return
                        linked_imei = session.imei
                        sock = self.request

                        def deliver(text: str, _sock=sock) -> Optional[str]:
                            # command down the live TCP link as one SMS-format
                            # line; the reply comes back out-of-band (none here)
                            try:
                                _sock.sendall(("CMD " + text + "\n").encode())
                                return None
                            except OSError:
                                return None

                        core.attach_live_link(session.imei, deliver)
                        self.request.sendall(wire.encode_ack(1))
                        if frame.records:
                            accepted = core.ingest(session, frame)
                            self.request.sendall(wire.encode_ack(accepted))
                    else:
                        accepted = core.ingest(session, frame)
                        self.request.sendall(wire.encode_ack(accepted))
        finally:
            if linked_imei is not None:
                core.detach_live_link(linked_imei)


class TcpIngestServer:
    def __init__(self, core: IngestCore, host: str = "0.0.0.0",
                 port: int = wire.TCP_PORT_DEFAULT):
        class _Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = _Server((host, port), _TcpHandler)
        self._server.core = core  # type: ignore[attr-defined]
        self.port = self._server.server_address[1]
        self._thread: Optional[threading.Thread] = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()


class _UdpHandler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        core: IngestCore = self.server.core  # type: ignore[attr-defined]
        data, sock = self.request
        try:
            frame, _ = wire.decode_frame(data)
        except wire.WireError:
            return  # no ack; sender retransmits
        session = core.authenticate(frame, Transport.UDP)
        if session is None:
            sock.sendto(wire.encode_ack(0), self.client_address)
            return
        if frame.is_login:
            sock.sendto(wire.encode_ack(1), self.client_address)
            return
        accepted = core.ingest(session, frame)
        sock.sendto(wire.encode_ack(accepted), self.client_address)


class UdpIngestServer:
    def __init__(self, core: IngestCore, host: str = "0.0.0.0",
                 port: int = wire.UDP_PORT_DEFAULT):
        class _Server(socketserver.ThreadingUDPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = _Server((host, port), _UdpHandler)
        self._server.core = core  # type: ignore[attr-defined]
        self.port = self._server.server_address[1]
        self._thread: Optional[threading.Thread] = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
