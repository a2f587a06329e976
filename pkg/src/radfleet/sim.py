"""Deterministic scenario engine.

Synthesizes vehicle motion into per-tick sensor frames, models the GSM
network (outages, latency, datagram loss), and drives any number of
trackers against an in-process ingest server on a shared virtual clock.
A scenario is a pure function of (config, seed): stores, reports, and
CSVs come out byte-identical on every run.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional

from . import nmea, wire
from .analytics import Report, export_csv
from .geo import GeoPoint, destination_point, haversine_distance, initial_bearing
from .records import decode_record
from .server import IngestCore, Session
from .store import DeviceEntry, RecordStore, Registry, Transport
from .tracker import (
    OutboundFrame, OutboundSms, SensorFrame, Tracker, TrackerConfig,
)

SIM_SERVER_NUMBER = "+980000000000"
# a long dwell means "engine off" when no explicit ignition windows are given
AUTO_IGNITION_OFF_DWELL_S = 600.0


class OracleViolation(Exception):
    """A scenario-level invariant failed; the message names it."""


@dataclass(frozen=True)
class Waypoint:
    point: GeoPoint
    speed_kmh: float      # commanded speed for the leg ending here
    dwell_s: float = 0.0  # pause on arrival
    until_s: Optional[float] = None  # or: hold position until this scenario time


@dataclass
class RouteScript:
    start: GeoPoint
    waypoints: list[Waypoint] = field(default_factory=list)
    ignition_windows: Optional[list[tuple[float, float]]] = None
    idle_rate_lph: float = 0.8
    per_km_l: float = 0.09
    tank_capacity_l: float = 50.0
    fuel_level_start_pct: float = 100.0
    accel_limit_ms2: float = 2.0
    panic_at_s: tuple[float, ...] = ()
    jamming_windows: tuple[tuple[float, float], ...] = ()
    key_swipes: tuple[tuple[float, int], ...] = ()
    gps_noise_m: float = 0.0

    def __post_init__(self) -> None:
        for w in self.waypoints:
            if w.speed_kmh < 0:
                raise ValueError("waypoint speeds must be >= 0")
        times = [t for t, _ in self.key_swipes] + list(self.panic_at_s)
        if times != sorted(times):
            raise ValueError("event injection times must be monotone")


def generate_trace(route: RouteScript, *, start_ms: int, tick_s: float = 1.0,
                   duration_s: float, seed: int = 0) -> Iterator[SensorFrame]:
    """Frames every tick: great-circle motion at commanded speeds with
    ramped acceleration, synthesized NMEA, fuel, and injected events."""
    rng = random.Random(seed)
    pos = route.start
    speed_ms = 0.0
    heading = 0.0
    leg = 0
    dwell_left = 0.0
    level = route.fuel_level_start_pct
    a_lim = route.accel_limit_ms2
    route_done = not route.waypoints
    panic_times = list(route.panic_at_s)
    swipes = list(route.key_swipes)

    ticks = int(round(duration_s / tick_s))
    for k in range(1, ticks + 1):
        t_s = k * tick_s
        ts = start_ms + int(round(t_s * 1000))
        prev_speed = speed_ms
        prev_heading = heading

        if dwell_left > 0:
            dwell_left = max(0.0, dwell_left - tick_s)
            speed_ms = 0.0
        elif not route_done:
            target = route.waypoints[leg]
            remaining = haversine_distance(pos, target.point)
            if remaining > 0:
                heading = initial_bearing(pos, target.point)
            v_cmd = target.speed_kmh / 3.6
            v_arrive = math.sqrt(max(0.0, 2.0 * a_lim * remaining))
            speed_ms = min(v_cmd, v_arrive, speed_ms + a_lim * tick_s)
            step = speed_ms * tick_s
            if step >= remaining:
                pos = target.point
                dwell_left = target.dwell_s
                if target.until_s is not None:
                    dwell_left = max(dwell_left, target.until_s - t_s)
                if dwell_left > 0:
                    speed_ms = 0.0
                leg += 1
                if leg >= len(route.waypoints):
                    route_done = True
                    speed_ms = 0.0
            elif step > 0:
                pos = destination_point(pos, heading, step)
        else:
            speed_ms = 0.0

        ignition = _ignition_at(route, t_s, route_done, dwell_left)
        speed_kmh = speed_ms * 3.6
        rate_lph = 0.0
        if ignition:
            rate_lph = route.idle_rate_lph + route.per_km_l * speed_kmh
        level = max(0.0, level - rate_lph * tick_s / 3600.0
                    / route.tank_capacity_l * 100.0)

        accel_x = int(round((speed_ms - prev_speed) / tick_s * 101.97))
        dh = (heading - prev_heading + 540.0) % 360.0 - 180.0
        accel_y = int(round(prev_speed * math.radians(dh) / tick_s * 101.97))
        accel = (max(-32000, min(32000, accel_x)),
                 max(-32000, min(32000, accel_y)), 1000)

        gps_pos = pos
        if route.gps_noise_m > 0:
            gps_pos = destination_point(pos, rng.uniform(0, 360),
                                        rng.uniform(0, route.gps_noise_m))
        fix = nmea.Fix(ts, gps_pos.lat, gps_pos.lon, speed_kmh, heading,
                       1200.0, 9, 0.9, True)
        lines = (nmea.serialize_rmc(fix), nmea.serialize_gga(fix))

        panic = False
        while panic_times and panic_times[0] <= t_s:
            panic_times.pop(0)
            panic = True
        key = None
        while swipes and swipes[0][0] <= t_s:
            key = swipes.pop(0)[1]
        jammed = any(f <= t_s < t for f, t in route.jamming_windows)

        yield SensorFrame(
            tick_time_ms=ts, nmea_lines=lines, ignition=ignition,
            accel_mg=accel, fuel_level_pct=level,
            fuel_rate_lph=rate_lph if ignition else 0.0,
            gsm_available=True, gsm_jammed=jammed, driver_key=key,
            panic_button=panic, external_power_v=12.0)


def _ignition_at(route: RouteScript, t_s: float, route_done: bool,
                 dwell_left: float) -> bool:
    if route.ignition_windows is not None:
        return any(f <= t_s < t for f, t in route.ignition_windows)
    if route_done:
        return False
    if dwell_left > AUTO_IGNITION_OFF_DWELL_S:
        return False
    return True


@dataclass
class NetworkModel:
    outage_windows: tuple[tuple[float, float], ...] = ()
    latency_ms_range: tuple[int, int] = (50, 250)
    drop_probability: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        self._rng = random.Random(self.seed ^ 0x5EED)

    def is_up(self, t_s: float) -> bool:
        return not any(f <= t_s < t for f, t in self.outage_windows)

    def latency_ms(self) -> int:
        lo, hi = self.latency_ms_range
        return self._rng.randint(lo, hi)

    def drops(self) -> bool:
        return self.drop_probability > 0 and \
            self._rng.random() < self.drop_probability


@dataclass
class VehicleSpec:
    imei: int
    route: RouteScript
    label: str = ""
    vehicle_class: str = ""
    tank_capacity_l: float = 50.0
    tracker_overrides: dict = field(default_factory=dict)


@dataclass
class ScenarioConfig:
    vehicles: list[VehicleSpec]
    network: NetworkModel = field(default_factory=NetworkModel)
    duration_s: float = 600.0
    tick_s: float = 1.0
    start_ms: int = 1_761_942_600_000  # 2025-11-01T00:00 fleet-local (+03:30)
    seed: int = 0
    data_dir: str = ""
    sms_enabled: bool = True
    commands: list[tuple[float, int, str]] = field(default_factory=list)
    check_oracles: bool = True


@dataclass
class VehicleStats:
    imei: int
    produced: int = 0
    delivered: int = 0
    buffered_end: int = 0
    evicted: int = 0
    max_buffer_bytes: int = 0


@dataclass
class ScenarioReport:
    duration_s: float
    seed: int
    vehicles: list[VehicleStats]
    alert_latencies_ms: list[int]
    duplicate_frames_seen: int
    oracle_failures: list[str]

    @property
    def produced_total(self) -> int:
        return sum(v.produced for v in self.vehicles)

    @property
    def delivered_total(self) -> int:
        return sum(v.delivered for v in self.vehicles)

    def to_report(self) -> Report:
        report = Report(
            "scenario",
            ("imei", "produced", "delivered", "buffered_end", "evicted",
             "max_buffer_bytes"),
            ("d", "d", "d", "d", "d", "d"))
        report.rows = [(v.imei, v.produced, v.delivered, v.buffered_end,
                        v.evicted, v.max_buffer_bytes) for v in self.vehicles]
        return report

    def to_csv(self) -> bytes:
        return export_csv(self.to_report())

    def summary_text(self) -> str:
        lines = [
            f"scenario: {self.duration_s:.0f}s virtual, seed {self.seed}",
            f"records produced: {self.produced_total}",
            f"records delivered: {self.delivered_total}",
            f"records still buffered: "
            f"{sum(v.buffered_end for v in self.vehicles)}",
            f"max buffer occupancy: "
            f"{max((v.max_buffer_bytes for v in self.vehicles), default=0)} B",
            f"duplicate frames ingested: {self.duplicate_frames_seen}",
        ]
        if self.alert_latencies_ms:
            lines.append(
                f"alert latency ms: n={len(self.alert_latencies_ms)} "
                f"mean={sum(self.alert_latencies_ms) / len(self.alert_latencies_ms):.0f} "
                f"max={max(self.alert_latencies_ms)}")
        lines.append("oracles: " + ("ok" if not self.oracle_failures else
                                    "; ".join(self.oracle_failures)))
        return "\n".join(lines) + "\n"

    @property
    def ok(self) -> bool:
        return not self.oracle_failures


class _VirtualClock:
    def __init__(self, start_ms: int):
        self.now_ms = start_ms

    def __call__(self) -> int:
        return self.now_ms


def run_scenario(config: ScenarioConfig) -> ScenarioReport:
    """Tick every tracker round-robin against an in-process server."""
    if not config.data_dir:
        raise ValueError("scenario needs a data_dir for the server store")
    clock = _VirtualClock(config.start_ms)
    store = RecordStore(config.data_dir, durable=False)
    registry = Registry(config.data_dir + "/registry.json")
    core = IngestCore(store, registry, now_ms=clock,
                      sms_enabled=config.sms_enabled)
    net = config.network

    trackers: dict[int, Tracker] = {}
    traces: dict[int, Iterator[SensorFrame]] = {}
    sessions: dict[int, Session] = {}
    stats: dict[int, VehicleStats] = {}
    produced_alert_at: dict[tuple[int, int], int] = {}
    pending_commands: dict[int, list[int]] = {}
    alert_latencies: list[int] = []

    for i, spec in enumerate(sorted(config.vehicles, key=lambda v: v.imei)):
        registry.seed(DeviceEntry(
            imei=spec.imei, label=spec.label or f"vehicle-{spec.imei}",
            vehicle_class=spec.vehicle_class,
            tank_capacity_l=spec.tank_capacity_l))
        overrides = dict(spec.tracker_overrides)
        overrides.setdefault("authorized_numbers", (SIM_SERVER_NUMBER,))
        cfg = TrackerConfig(imei=spec.imei, **overrides)
        trackers[spec.imei] = Tracker(cfg)
        traces[spec.imei] = generate_trace(
            spec.route, start_ms=config.start_ms, tick_s=config.tick_s,
            duration_s=config.duration_s, seed=config.seed * 1000 + i)
        stats[spec.imei] = VehicleStats(imei=spec.imei)
        pending_commands[spec.imei] = []

        def sms_deliver(text: str, imei=spec.imei) -> Optional[str]:
            _enqueue(clock.now_ms + net.latency_ms() * 10, "cmd_to_tracker",
                     imei, text)
            return None

        core.attach_sms_link(spec.imei, sms_deliver)

    queue: list[tuple[int, int, str, int, object]] = []
    queue_seq = 0

    def _enqueue(due_ms: int, kind: str, imei: int, payload) -> None:
        nonlocal queue_seq
        queue_seq += 1
        heapq.heappush(queue, (due_ms, queue_seq, kind, imei, payload))

    def live_deliver_factory(imei: int):
        def deliver(text: str) -> Optional[str]:
            _enqueue(clock.now_ms + net.latency_ms(), "cmd_to_tracker",
                     imei, text)
            return None
        return deliver

    def process_event(kind: str, imei: int, payload) -> None:
        tracker = trackers[imei]
        if kind == "frame_to_server":
            frame, _ = wire.decode_frame(payload)
            if frame.is_login:
                session = core.authenticate(frame, _transport(tracker))
                if session is None:
                    _enqueue(clock.now_ms + net.latency_ms(),
                             "ack_to_tracker", imei, 0)
                    return
                sessions[imei] = session
                core.attach_live_link(imei, live_deliver_factory(imei))
                _enqueue(clock.now_ms + net.latency_ms(),
                         "ack_to_tracker", imei, 1)
                return
            session = sessions.get(imei)
            if session is None:
                session = core.authenticate(wire.Frame(frame.imei, ()),
                                            _transport(tracker))
                if session is None:
                    return
                sessions[imei] = session
            before = store.record_count(imei)
            accepted = core.ingest(session, frame)
            fresh = store.record_count(imei) - before
            stats[imei].delivered += fresh
            received = clock.now_ms
            for chunk in frame.records:
                rec = decode_record(chunk)
                key = (imei, rec.seq)
                if rec.priority and key in produced_alert_at:
                    alert_latencies.append(received - produced_alert_at.pop(key))
            _enqueue(clock.now_ms + net.latency_ms(), "ack_to_tracker",
                     imei, accepted)
        elif kind == "ack_to_tracker":
            tracker.handle_ack(payload)
        elif kind == "cmd_to_tracker":
            reply = tracker.handle_command(payload, origin=SIM_SERVER_NUMBER)
            _enqueue(clock.now_ms + net.latency_ms(), "reply_to_server",
                     imei, reply)
        elif kind == "reply_to_server":
            waiting = pending_commands[imei]
            if waiting:
                cmd_id = waiting.pop(0)
                status = core.command_status(cmd_id)
                if status is not None and payload is not None:
                    status.reply = payload
                    core._set_command_status(status, "acked")
        elif kind == "sms_to_server":
            core.ingest_position_sms(payload)

    commands = sorted(config.commands)
    cmd_i = 0
    ticks = int(round(config.duration_s / config.tick_s))
    imeis = sorted(trackers)

    for k in range(1, ticks + 1):
        t_s = k * config.tick_s
        clock.now_ms = config.start_ms + int(round(t_s * 1000))

        while queue and queue[0][0] <= clock.now_ms:
            _, _, kind, imei, payload = heapq.heappop(queue)
            process_event(kind, imei, payload)

        while cmd_i < len(commands) and commands[cmd_i][0] <= t_s:
            _, imei, text = commands[cmd_i]
            cmd_i += 1
            try:
                status = core.send_command(imei, text)
                if status.status == "delivered":
                    pending_commands[imei].append(status.id)
            except Exception:
                pass  # no_route is a legitimate scenario outcome

        up = net.is_up(t_s)
        for imei in imeis:
            tracker = trackers[imei]
            frame = replace(next(traces[imei]), gsm_available=up)
            result = tracker.step(frame)
            st = stats[imei]
            st.produced += len(result.records)
            for rec in result.records:
                if rec.priority:
                    produced_alert_at[(imei, rec.seq)] = clock.now_ms
            st.max_buffer_bytes = max(st.max_buffer_bytes,
                                      tracker.buffer.occupancy_bytes)
            for item in result.outbound:
                if not up:
                    continue
                if isinstance(item, OutboundFrame):
                    if item.transport == "udp" and net.drops():
                        continue
                    _enqueue(clock.now_ms + net.latency_ms(),
                             "frame_to_server", imei, item.payload)
                elif isinstance(item, OutboundSms):
                    _enqueue(clock.now_ms + net.latency_ms() * 10,
                             "sms_to_server", imei, item.text)

    # settle in-flight traffic at scenario end (virtual time keeps moving)
    while queue:
        due, _, kind, imei, payload = heapq.heappop(queue)
        clock.now_ms = max(clock.now_ms, due)
        process_event(kind, imei, payload)

    for imei in imeis:
        st = stats[imei]
        st.buffered_end = len(trackers[imei].buffer)
        st.evicted = trackers[imei].buffer.evicted_count

    failures = []
    if config.check_oracles:
        for imei in imeis:
            st = stats[imei]
            if st.produced != st.delivered + st.buffered_end + st.evicted:
                failures.append(
                    f"no_loss: imei {imei} produced {st.produced} != "
                    f"delivered {st.delivered} + buffered {st.buffered_end} "
                    f"+ evicted {st.evicted}")
            stored = store.seq_set(imei)
            if len(stored) != st.delivered:
                failures.append(
                    f"dedup: imei {imei} stored {len(stored)} distinct "
                    f"!= delivered {st.delivered}")
            arrival = [pr.record.seq for pr in store.records_by_arrival(imei)]
            if arrival != sorted(arrival):
                failures.append(f"seq_order: imei {imei} arrived out of order")

    store.close()
    report = ScenarioReport(
        duration_s=config.duration_s, seed=config.seed,
        vehicles=[stats[i] for i in imeis],
        alert_latencies_ms=alert_latencies,
        duplicate_frames_seen=store.duplicate_count,
        oracle_failures=failures)
    return report


def _transport(tracker: Tracker) -> Transport:
    return Transport.UDP if tracker.config.transport == "udp" else Transport.TCP


# -- route builders -----------------------------------------------------------


def load_scenario(spec: dict, *, data_dir: Optional[str] = None,
                  seed: Optional[int] = None) -> ScenarioConfig:
    """Build a ScenarioConfig from parsed scenario JSON.

    data_dir and seed given here override the file's values; the network
    seed follows the scenario seed unless the file pins one.
    """
    cfg_seed = seed if seed is not None else int(spec.get("seed", 0))
    net_spec = spec.get("network", {})
    network = NetworkModel(
        outage_windows=tuple((float(f), float(t))
                             for f, t in net_spec.get("outages", [])),
        latency_ms_range=tuple(net_spec.get("latency_ms", (50, 250))),
        drop_probability=float(net_spec.get("drop_probability", 0.0)),
        seed=int(net_spec["seed"]) if "seed" in net_spec else cfg_seed)
    vehicles = [_load_vehicle(v) for v in spec.get("vehicles", [])]
    if not vehicles:
        raise ValueError("scenario has no vehicles")
    return ScenarioConfig(
        vehicles=vehicles,
        network=network,
        duration_s=float(spec.get("duration_s", 600.0)),
        tick_s=float(spec.get("tick_s", 1.0)),
        start_ms=int(spec.get("start_ms", 1_761_942_600_000)),
        seed=cfg_seed,
        data_dir=data_dir or spec.get("data_dir", ""),
        sms_enabled=bool(spec.get("sms_enabled", True)),
        commands=[(float(t), int(imei), str(text))
                  for t, imei, text in spec.get("commands", [])])


def _load_vehicle(v: dict) -> VehicleSpec:
    overrides = dict(v.get("tracker", {}))
    if "zones" in overrides:
        from .config import parse_zone
        overrides["zones"] = tuple(parse_zone(z) for z in overrides["zones"])
    if "authorized_keys" in overrides:
        overrides["authorized_keys"] = frozenset(
            int(k) for k in overrides["authorized_keys"])
    if "authorized_numbers" in overrides:
        overrides["authorized_numbers"] = tuple(overrides["authorized_numbers"])
    return VehicleSpec(
        imei=int(v["imei"]),
        route=_load_route(v["route"]),
        label=v.get("label", ""),
        vehicle_class=v.get("class", ""),
        tank_capacity_l=float(v.get("tank_l", 50.0)),
        tracker_overrides=overrides)


def _load_route(r: dict) -> RouteScript:
    fuel = r.get("fuel", {})
    common = dict(
        idle_rate_lph=float(fuel.get("idle_lph", 0.8)),
        per_km_l=float(fuel.get("per_km_l", 0.09)))
    if "daily_km" in r:
        home = GeoPoint(*r.get("home", (35.70, 51.40)))
        return out_and_back_route(
            home, [float(km) for km in r["daily_km"]],
            speed_kmh=float(r.get("speed_kmh", 100.0)),
            depart_s=float(r.get("depart_s", 5 * 3600)),
            bearing=float(r.get("bearing", 90.0)),
            turn_dwell_s=float(r.get("turn_dwell_s", 60.0)), **common)
    start = GeoPoint(*r["start"])
    waypoints = [
        Waypoint(GeoPoint(w["lat"], w["lon"]), float(w.get("speed_kmh", 50.0)),
                 dwell_s=float(w.get("dwell_s", 0.0)),
                 until_s=w.get("until_s"))
        for w in r.get("waypoints", [])]
    ign = r.get("ignition_windows")
    return RouteScript(
        start=start, waypoints=waypoints,
        ignition_windows=[(float(f), float(t)) for f, t in ign]
        if ign is not None else None,
        tank_capacity_l=float(r.get("tank_l", 50.0)),
        fuel_level_start_pct=float(r.get("fuel_level_pct", 100.0)),
        panic_at_s=tuple(float(t) for t in r.get("panic_at_s", [])),
        jamming_windows=tuple((float(f), float(t))
                              for f, t in r.get("jamming", [])),
        key_swipes=tuple((float(t), int(k))
                         for t, k in r.get("key_swipes", [])),
        gps_noise_m=float(r.get("gps_noise_m", 0.0)), **common)


def out_and_back_route(home: GeoPoint, daily_km: list[float], *,
                       speed_kmh: float = 100.0, depart_s: float = 5 * 3600,
                       bearing: float = 90.0, turn_dwell_s: float = 60.0,
                       idle_rate_lph: float = 0.8,
                       per_km_l: float = 0.09) -> RouteScript:
    """One out-and-back drive per day: day d covers daily_km[d-1].

    The route geometry pins each day's distance exactly, whatever the
    tick size; the fixed departure hour keeps each drive inside its
    fleet-local day.
    """
    waypoints = []
    for day, km in enumerate(daily_km):
        if km <= 0:
            continue
        depart = day * 86_400.0 + depart_s
        out_point = destination_point(home, bearing, km / 2.0 * 1000.0)
        waypoints.append(Waypoint(home, 0.1, until_s=depart))
        waypoints.append(Waypoint(out_point, speed_kmh, dwell_s=turn_dwell_s))
        waypoints.append(Waypoint(home, speed_kmh))
    return RouteScript(start=home, waypoints=waypoints,
                       idle_rate_lph=idle_rate_lph, per_km_l=per_km_l)
