"""Tracker firmware as a deterministic, clock-driven state machine.

Every step consumes one SensorFrame (one tick), updates power and motion
state, detects events, decides whether to record, appends records to the
flash buffer, and only then attempts transmission. Nothing here reads a
wall clock or random source: identical (state, frame, config) histories
produce byte-identical buffers and outbound traffic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from typing import Optional, Union

from . import nmea, wire
from .geo import (
    GeofenceZone, GeoPoint, haversine_distance, membership_events,
    zone_contains,
)
from .nmea import Fix
from .records import (
    RECORD_SIZE, EventCode, TelemetryRecord, build_record, encode_record,
)

BUFFER_CAPACITY_BYTES = 16 * 2**20  # 16 MiB flash
BATTERY_CAPACITY_MAH = 1800.0

# Supply current by mode (mA); active uses the midpoint of the 70-100 mA
# average band. Charger current when external power >= 6 V.
DRAIN_ACTIVE_MA = 85.0
DRAIN_NORMAL_SLEEP_MA = 10.0
DRAIN_DEEP_SLEEP_MA = 3.0
CHARGE_MA = 500.0
EXTERNAL_POWER_MIN_V = 6.0

MG_PER_MS2 = 1000.0 / 9.80665
WAKE_ACCEL_DEVIATION_MG = 50.0


class ClockRegression(ValueError):
    """Frame tick time did not advance."""


class ConfigError(ValueError):
    """Tracker configuration violates a hard limit."""


class PowerMode(Enum):
    ACTIVE = "active"
    IDLE = "idle"
    NORMAL_SLEEP = "normal_sleep"
    DEEP_SLEEP = "deep_sleep"


@dataclass(frozen=True)
class SensorFrame:
    """Everything the firmware can sense during one tick."""

    tick_time_ms: int
    nmea_lines: tuple[str, ...] = ()
    ignition: bool = False
    digital_in: int = 0            # bits 0..3
    analog_in: tuple[int, int] = (0, 0)   # mV
    accel_mg: tuple[int, int, int] = (0, 0, 1000)  # x fwd, y left, z up
    fuel_level_pct: float = 0.0
    fuel_rate_lph: float = 0.0
    can_odometer_m: Optional[int] = None
    gsm_available: bool = True
    gsm_jammed: bool = False
    driver_key: Optional[int] = None
    panic_button: bool = False
    external_power_v: float = 12.0


@dataclass
class TrackerConfig:
    imei: int = 0
    time_trigger_moving_s: float = 60.0
    time_trigger_stationary_s: float = 300.0
    distance_trigger_m: float = 200.0
    angle_trigger_deg: float = 10.0
    speed_limit_kmh: float = 90.0
    moving_speed_kmh: float = 3.0
    zones: tuple[GeofenceZone, ...] = ()
    authorized_keys: frozenset[int] = frozenset()
    authorized_numbers: tuple[str, ...] = ()
    harsh_accel_ms2: float = 2.5
    harsh_brake_ms2: float = 3.0
    harsh_corner_ms2: float = 3.0
    harsh_sustain_s: float = 1.0
    overspeed_sustain_s: float = 10.0
    overspeed_clear_margin_kmh: float = 5.0
    towing_displacement_m: float = 100.0
    towing_accel_mg: float = 100.0
    towing_accel_sustain_s: float = 5.0
    t_normal_sleep_s: float = 300.0
    t_deep_sleep_s: float = 3600.0
    flush_interval_s: float = 60.0
    batch_max: int = 50
    server_host: str = "127.0.0.1"
    server_port: int = wire.TCP_PORT_DEFAULT
    transport: str = "tcp"
    buffer_capacity_bytes: int = BUFFER_CAPACITY_BYTES
    own_number: str = ""

    def __post_init__(self) -> None:
        if len(self.zones) > 150:
            raise ConfigError(f"{len(self.zones)} zones, device limit is 150")
        if len(self.authorized_keys) > 50:
            raise ConfigError(f"{len(self.authorized_keys)} keys, limit is 50")
        if len(self.authorized_numbers) > 8:
            raise ConfigError(f"{len(self.authorized_numbers)} numbers, limit is 8")
        if not 1 <= self.batch_max <= wire.MAX_RECORDS_PER_FRAME:
            raise ConfigError(f"batch_max {self.batch_max} outside 1..255")
        if self.transport not in ("tcp", "udp"):
            raise ConfigError(f"transport must be tcp or udp: {self.transport}")


# SETPARAM-settable fields, name -> coercion
SETTABLE_PARAMS = {
    "time_trigger_moving_s": float,
    "time_trigger_stationary_s": float,
    "distance_trigger_m": float,
    "angle_trigger_deg": float,
    "speed_limit_kmh": float,
    "moving_speed_kmh": float,
    "overspeed_sustain_s": float,
    "overspeed_clear_margin_kmh": float,
    "flush_interval_s": float,
    "t_normal_sleep_s": float,
    "t_deep_sleep_s": float,
    "batch_max": int,
}

# short names accepted over SMS (the unit suffix is implicit on the air)
PARAM_ALIASES = {
    "speed_limit": "speed_limit_kmh",
    "time_trigger_moving": "time_trigger_moving_s",
    "time_trigger_stationary": "time_trigger_stationary_s",
    "distance_trigger": "distance_trigger_m",
    "angle_trigger": "angle_trigger_deg",
    "flush_interval": "flush_interval_s",
    "t_normal": "t_normal_sleep_s",
    "t_deep": "t_deep_sleep_s",
}


class RecordBuffer:
    """Bounded FIFO of encoded 64-byte records with priority-aware eviction.

    Overflow evicts the oldest non-priority record first; priority (alert)
    records are evicted only when nothing else remains. Drain order is
    FIFO by seq and only acknowledged records are removed.
    """

    def __init__(self, capacity_bytes: int = BUFFER_CAPACITY_BYTES):
        if capacity_bytes < RECORD_SIZE:
            raise ValueError("capacity below one record")
        self.capacity_bytes = capacity_bytes
        self._entries: list[tuple[bytes, bool, int]] = []  # (encoded, priority, seq)
        self.evicted_count = 0

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def occupancy_bytes(self) -> int:
        return len(self._entries) * RECORD_SIZE

    @property
    def priority_count(self) -> int:
        return sum(1 for _, prio, _ in self._entries if prio)

    def append(self, encoded: bytes, priority: bool, seq: int) -> None:
        if len(encoded) != RECORD_SIZE:
            raise ValueError(f"record must be {RECORD_SIZE} bytes")
        while (len(self._entries) + 1) * RECORD_SIZE > self.capacity_bytes:
            self._evict_one()
        self._entries.append((encoded, priority, seq))

    def _evict_one(self) -> None:
        for i, (_, prio, _) in enumerate(self._entries):
            if not prio:
                del self._entries[i]
                self.evicted_count += 1
                return
        del self._entries[0]
        self.evicted_count += 1

    def peek(self, n: int) -> list[bytes]:
        return [e[0] for e in self._entries[:n]]

    def drop(self, n: int) -> None:
        del self._entries[:n]

    def save(self, path: str) -> None:
        with open(path, "wb") as f:
            for encoded, _, _ in self._entries:
                f.write(encoded)

    def load(self, path: str) -> None:
        from .records import decode_record
        self._entries.clear()
        with open(path, "rb") as f:
            data = f.read()
        usable = len(data) - len(data) % RECORD_SIZE
        for off in range(0, usable, RECORD_SIZE):
            chunk = data[off:off + RECORD_SIZE]
            rec = decode_record(chunk)
            self._entries.append((chunk, rec.priority, rec.seq))


@dataclass(frozen=True)
class OutboundFrame:
    payload: bytes
    record_count: int
    kind: str           # "login" | "data"
    attempt: int = 1
    transport: str = "tcp"


@dataclass(frozen=True)
class OutboundSms:
    text: str
    sender: str = ""


Outbound = Union[OutboundFrame, OutboundSms]


@dataclass
class StepResult:
    records: list[TelemetryRecord]
    outbound: list[Outbound]
    mode: PowerMode


@dataclass
class _Inflight:
    payload: bytes
    record_count: int
    kind: str
    sent_at_ms: int
    attempts: int


class Tracker:
    """One device instance; drive it with step(frame) once per tick."""

    def __init__(self, config: TrackerConfig, *,
                 battery_mah: float = BATTERY_CAPACITY_MAH,
                 start_mode: PowerMode = PowerMode.ACTIVE):
        self.config = config
        self.mode = start_mode
        self.battery_mah = battery_mah
        self.buffer = RecordBuffer(config.buffer_capacity_bytes)
        self.outputs = 0
        self.seq = 0
        self.odometer_m = 0.0
        self.zone_membership: frozenset[int] = frozenset()
        self.audit: list[str] = []

        self._last_tick_ms: Optional[int] = None
        self._last_fix: Optional[Fix] = None          # last valid fix seen
        self._last_record_fix: Optional[Fix] = None   # fix at last record
        self._last_record_ms: Optional[int] = None
        self._last_activity_ms: Optional[int] = None
        self._baselined_zones = False

        self._prev_ignition = False
        self._prev_panic = False
        self._prev_jammed = False
        self._prev_digital_in = 0
        self._prev_external_v: Optional[float] = None
        self._prev_driver_key: Optional[int] = None

        self._overspeed_held_s = 0.0
        self._overspeed_latched = False
        self._towing_anchor: Optional[Fix] = None
        self._towing_held_s = 0.0
        self._towing_latched = False
        self._harsh_held_s: dict[str, float] = {
            "accel": 0.0, "brake": 0.0, "corner": 0.0}
        self._harsh_latched: dict[str, bool] = {
            "accel": False, "brake": False, "corner": False}

        self.session_open = False
        self._inflight: Optional[_Inflight] = None
        self._last_flush_ms: Optional[int] = None
        self._login_backoff_until = 0

    # -- transport callbacks ------------------------------------------------

    def handle_ack(self, accepted_count: int) -> None:
        """Server acknowledgement for the in-flight frame."""
        inflight = self._inflight
        if inflight is None:
            return
        self._inflight = None
        if inflight.kind == "login":
            self.session_open = accepted_count == 1
            if not self.session_open:
                # rejected registration: retry no sooner than the next flush
                self._login_backoff_until = (self._last_tick_ms or 0) + \
                    int(self.config.flush_interval_s * 1000)
        else:
            self.buffer.drop(min(accepted_count, inflight.record_count))

    def connection_lost(self) -> None:
        self.session_open = False
        self._inflight = None

    # -- command channel ------------------------------------------------------

    def handle_command(self, text: str, origin: Optional[str] = None) -> Optional[str]:
        """Apply a command; origin None means the authenticated GPRS session.

        SMS origins outside the authorized list are ignored (audit only).
        """
        if origin is not None and origin not in self.config.authorized_numbers:
            self.audit.append(f"unauthorized command from {origin}: {text!r}")
            return None
        try:
            cmd = wire.parse_sms_command(text)
        except wire.SmsError as exc:
            self.audit.append(f"bad command {text!r}: {exc}")
            return f"ERR {exc}"
        if isinstance(cmd, wire.GetGps):
            return self._position_report("OnDemand")
        if isinstance(cmd, wire.SetParam):
            key = PARAM_ALIASES.get(cmd.key, cmd.key)
            coerce = SETTABLE_PARAMS.get(key)
            if coerce is None:
                return f"ERR unknown param {cmd.key}"
            try:
                value = coerce(cmd.value)
            except ValueError:
                return f"ERR bad value {cmd.value!r}"
            if isinstance(value, (int, float)) and value < 0:
                return f"ERR bad value {cmd.value!r}"
            setattr(self.config, key, value)
            self.audit.append(f"setparam {key}={value}")
            return f"OK {key}={value}"
        # SetOutput
        if cmd.value:
            self.outputs |= 1 << cmd.channel
        else:
            self.outputs &= ~(1 << cmd.channel)
        self.audit.append(f"out {cmd.channel}={cmd.value}")
        return f"OK OUT {cmd.channel} {cmd.value}"

    def _position_report(self, event_name: str) -> str:
        f = self._last_fix
        ts = f.timestamp_ms if f else (self._last_tick_ms or 0)
        iso = datetime.fromtimestamp(ts // 1000, tz=timezone.utc).strftime(
            "%Y-%m-%dT%H:%M:%SZ")
        return wire.format_position_sms(
            self.config.imei, iso,
            f.lat if f else 0.0, f.lon if f else 0.0,
            f.speed_kmh if f else 0.0, f.heading if f else 0.0, event_name)

    # -- the tick ------------------------------------------------------------

    def step(self, frame: SensorFrame) -> StepResult:
        if self._last_tick_ms is not None and frame.tick_time_ms <= self._last_tick_ms:
            raise ClockRegression(
                f"tick {frame.tick_time_ms} <= previous {self._last_tick_ms}")
        dt_s = 0.0 if self._last_tick_ms is None else \
            (frame.tick_time_ms - self._last_tick_ms) / 1000.0
        self._last_tick_ms = frame.tick_time_ms
        now = frame.tick_time_ms

        powered = self._power_tick(frame, dt_s)
        if not powered:
            # battery flat and no external supply: the device is dark
            self._finish_edges(frame)
            return StepResult([], [], self.mode)

        fix = self._consume_gps(frame)
        events: list[tuple[EventCode, int]] = []  # (code, geofence_id)

        if self._prev_external_v is not None and \
                self._prev_external_v >= EXTERNAL_POWER_MIN_V > frame.external_power_v:
            events.append((EventCode.PowerCutoff, 0))

        events += self._detect_events(frame, fix, dt_s)
        if fix is not None and fix.valid:
            events += self._geofence_events(fix)

        trigger = None
        if fix is not None and fix.valid:
            trigger = self._evaluate_acquisition(fix, now)

        records = self._emit_records(frame, fix, events, trigger, now)
        for rec in records:
            self.buffer.append(encode_record(rec), rec.priority, rec.seq)

        outbound = self._transmit(frame, records, now)
        self._finish_edges(frame)
        return StepResult(records, outbound, self.mode)

    # -- power & sleep ---------------------------------------------------------

    def _power_tick(self, frame: SensorFrame, dt_s: float) -> bool:
        now = frame.tick_time_ms
        moving_accel = self._accel_deviation(frame) > WAKE_ACCEL_DEVIATION_MG
        wake = frame.ignition or frame.panic_button or moving_accel

        if wake and self.mode in (PowerMode.NORMAL_SLEEP, PowerMode.DEEP_SLEEP):
            self.mode = PowerMode.ACTIVE
        if self._last_activity_ms is None or wake or self._is_moving_by_gps():
            self._last_activity_ms = now

        still_s = (now - self._last_activity_ms) / 1000.0
        if not frame.ignition and still_s >= self.config.t_deep_sleep_s:
            self.mode = PowerMode.DEEP_SLEEP
        elif not frame.ignition and still_s >= self.config.t_normal_sleep_s:
            if self.mode is not PowerMode.DEEP_SLEEP:
                self.mode = PowerMode.NORMAL_SLEEP
        elif self.mode in (PowerMode.ACTIVE, PowerMode.IDLE):
            self.mode = PowerMode.IDLE if frame.ignition and \
                not self._is_moving_by_gps() else PowerMode.ACTIVE

        if frame.external_power_v >= EXTERNAL_POWER_MIN_V:
            self.battery_mah = min(BATTERY_CAPACITY_MAH,
                                   self.battery_mah + CHARGE_MA * dt_s / 3600.0)
        else:
            drain = {PowerMode.ACTIVE: DRAIN_ACTIVE_MA,
                     PowerMode.IDLE: DRAIN_ACTIVE_MA,
                     PowerMode.NORMAL_SLEEP: DRAIN_NORMAL_SLEEP_MA,
                     PowerMode.DEEP_SLEEP: DRAIN_DEEP_SLEEP_MA}[self.mode]
            self.battery_mah = max(0.0, self.battery_mah - drain * dt_s / 3600.0)
        return self.battery_mah > 0.0 or \
            frame.external_power_v >= EXTERNAL_POWER_MIN_V

    def _accel_deviation(self, frame: SensorFrame) -> float:
        x, y, z = frame.accel_mg
        return abs(math.sqrt(x * x + y * y + z * z) - 1000.0)

    def _is_moving_by_gps(self) -> bool:
        return self._last_fix is not None and \
            self._last_fix.speed_kmh >= self.config.moving_speed_kmh

    # -- GPS ------------------------------------------------------------------

    def _consume_gps(self, frame: SensorFrame) -> Optional[Fix]:
        if self.mode in (PowerMode.NORMAL_SLEEP, PowerMode.DEEP_SLEEP):
            return None  # GPS is off in both sleep modes
        sentences = []
        for line in frame.nmea_lines:
            try:
                sentences.append(nmea.parse_sentence(line))
            except nmea.NmeaError:
                continue
        if not any(s.type is nmea.SentenceType.RMC for s in sentences):
            return None
        try:
            fix = nmea.fuse_fix(sentences)
        except nmea.NmeaError:
            return None
        if fix.valid:
            if self._last_fix is not None and frame.can_odometer_m is None \
                    and fix.speed_kmh >= self.config.moving_speed_kmh:
                self.odometer_m += haversine_distance(
                    GeoPoint(self._last_fix.lat, self._last_fix.lon),
                    GeoPoint(fix.lat, fix.lon))
            if frame.can_odometer_m is not None:
                self.odometer_m = float(frame.can_odometer_m)
            self._last_fix = fix
        return fix

    # -- event detection --------------------------------------------------------

    def _detect_events(self, frame: SensorFrame, fix: Optional[Fix],
                       dt_s: float) -> list[tuple[EventCode, int]]:
        cfg = self.config
        events: list[tuple[EventCode, int]] = []

        if frame.ignition and not self._prev_ignition:
            events.append((EventCode.IgnitionOn, 0))
            if cfg.authorized_keys and frame.driver_key not in cfg.authorized_keys:
                events.append((EventCode.UnauthorizedDriver, 0))
        elif self._prev_ignition and not frame.ignition:
            events.append((EventCode.IgnitionOff, 0))
            self._towing_anchor = self._last_fix

        if frame.digital_in != self._prev_digital_in:
            events.append((EventCode.IoChange, 0))

        if frame.panic_button and not self._prev_panic:
            events.append((EventCode.Panic, 0))

        if frame.gsm_jammed and not self._prev_jammed:
            events.append((EventCode.JammingDetected, 0))

        # overspeed: must hold for the sustain window, then latches until
        # the speed falls a margin below the limit (no alert flapping)
        speed = fix.speed_kmh if fix is not None and fix.valid else None
        if speed is not None:
            if speed > cfg.speed_limit_kmh:
                self._overspeed_held_s += dt_s if dt_s > 0 else 1.0
                if self._overspeed_held_s >= cfg.overspeed_sustain_s \
                        and not self._overspeed_latched:
                    events.append((EventCode.Overspeed, 0))
                    self._overspeed_latched = True
            else:
                self._overspeed_held_s = 0.0
                if speed < cfg.speed_limit_kmh - cfg.overspeed_clear_margin_kmh:
                    self._overspeed_latched = False

        # towing: ignition off and either dragged beyond the displacement
        # threshold or shaken (sustained acceleration deviation)
        if not frame.ignition:
            dragged = False
            if self._towing_anchor is not None and fix is not None and fix.valid:
                dragged = haversine_distance(
                    GeoPoint(self._towing_anchor.lat, self._towing_anchor.lon),
                    GeoPoint(fix.lat, fix.lon)) > cfg.towing_displacement_m
            if self._accel_deviation(frame) > cfg.towing_accel_mg:
                self._towing_held_s += dt_s if dt_s > 0 else 1.0
            else:
                self._towing_held_s = 0.0
            shaken = self._towing_held_s >= cfg.towing_accel_sustain_s
            if (dragged or shaken) and not self._towing_latched:
                events.append((EventCode.Towing, 0))
                self._towing_latched = True
        else:
            self._towing_latched = False
            self._towing_held_s = 0.0

        events += self._detect_harsh(frame, dt_s)
        return events

    def _detect_harsh(self, frame: SensorFrame,
                      dt_s: float) -> list[tuple[EventCode, int]]:
        cfg = self.config
        x, y, _ = frame.accel_mg
        conds = {
            "accel": (x >= cfg.harsh_accel_ms2 * MG_PER_MS2, EventCode.HarshAccel),
            "brake": (x <= -cfg.harsh_brake_ms2 * MG_PER_MS2, EventCode.HarshBrake),
            "corner": (abs(y) >= cfg.harsh_corner_ms2 * MG_PER_MS2,
                       EventCode.HarshCorner),
        }
        events = []
        for name, (cond, code) in conds.items():
            if cond:
                self._harsh_held_s[name] += dt_s if dt_s > 0 else 1.0
                if self._harsh_held_s[name] >= cfg.harsh_sustain_s \
                        and not self._harsh_latched[name]:
                    events.append((code, 0))
                    self._harsh_latched[name] = True
            else:
                self._harsh_held_s[name] = 0.0
                self._harsh_latched[name] = False
        return events

    def _geofence_events(self, fix: Fix) -> list[tuple[EventCode, int]]:
        if not self.config.zones:
            return []
        p = GeoPoint(fix.lat, fix.lon)
        cur = frozenset(z.id for z in self.config.zones
                        if zone_contains(z, p))
        if not self._baselined_zones:
            self._baselined_zones = True
            self.zone_membership = cur
            return []
        out = []
        for ev in membership_events(self.zone_membership, cur):
            code = EventCode.GeofenceEnter if ev.kind == "enter" else EventCode.GeofenceExit
            out.append((code, ev.zone_id))
        self.zone_membership = cur
        return out

    # -- acquisition -------------------------------------------------------------

    def _evaluate_acquisition(self, fix: Fix, now: int) -> Optional[EventCode]:
        cfg = self.config
        moving = fix.speed_kmh >= cfg.moving_speed_kmh
        if self._last_record_ms is None:
            return EventCode.Periodic
        if moving and self._last_record_fix is not None:
            d_heading = abs(fix.heading - self._last_record_fix.heading) % 360.0
            d_heading = min(d_heading, 360.0 - d_heading)
            if d_heading >= cfg.angle_trigger_deg:
                return EventCode.AngleTrig
            moved = haversine_distance(
                GeoPoint(self._last_record_fix.lat, self._last_record_fix.lon),
                GeoPoint(fix.lat, fix.lon))
            if moved >= cfg.distance_trigger_m:
                return EventCode.DistanceTrig
        window = cfg.time_trigger_moving_s if moving else cfg.time_trigger_stationary_s
        if (now - self._last_record_ms) / 1000.0 >= window:
            return EventCode.Periodic
        return None

    # -- record emission ----------------------------------------------------------

    def _emit_records(self, frame: SensorFrame, fix: Optional[Fix],
                      events: list[tuple[EventCode, int]],
                      trigger: Optional[EventCode],
                      now: int) -> list[TelemetryRecord]:
        codes = list(events)
        if trigger is not None and not codes:
            codes.append((trigger, 0))
        records = []
        for code, zone_id in codes:
            self.seq += 1
            records.append(self._build_record(frame, fix, code, zone_id, now))
        if records:
            self._last_record_ms = now
            if fix is not None and fix.valid:
                self._last_record_fix = fix
        return records

    def _build_record(self, frame: SensorFrame, fix: Optional[Fix],
                      code: EventCode, zone_id: int, now: int) -> TelemetryRecord:
        pos = fix if (fix is not None and fix.valid) else self._last_fix
        offline = not self._can_use_modem(frame)
        battery_mv = int(3000 + 1200 * self.battery_mah / BATTERY_CAPACITY_MAH)
        return build_record(
            timestamp_ms=fix.timestamp_ms if fix is not None and fix.valid else now,
            event_code=code,
            seq=self.seq,
            lat=pos.lat if pos else 0.0,
            lon=pos.lon if pos else 0.0,
            altitude_m=pos.altitude_m if pos else 0.0,
            heading=pos.heading if pos else 0.0,
            speed_kmh=fix.speed_kmh if fix is not None and fix.valid else 0.0,
            satellites=fix.satellites if fix is not None else 0,
            hdop=fix.hdop if fix is not None else 99.9,
            ignition=frame.ignition,
            digital_in=frame.digital_in,
            digital_out=self.outputs,
            analog1_mv=frame.analog_in[0],
            analog2_mv=frame.analog_in[1],
            fuel_level_pct=frame.fuel_level_pct,
            fuel_rate_lph=frame.fuel_rate_lph,
            odometer_m=int(self.odometer_m),
            battery_mv=battery_mv,
            accel_mg=frame.accel_mg,
            geofence_id=zone_id,
            replay=offline)

    # -- transmission ---------------------------------------------------------------

    def _can_use_modem(self, frame: SensorFrame) -> bool:
        if self.mode is PowerMode.DEEP_SLEEP or self.mode is PowerMode.NORMAL_SLEEP:
            return False
        return frame.gsm_available and not frame.gsm_jammed

    def _transmit(self, frame: SensorFrame, new_records: list[TelemetryRecord],
                  now: int) -> list[Outbound]:
        outbound: list[Outbound] = []
        panic_now = any(r.event_code == EventCode.Panic for r in new_records)

        if not self._can_use_modem(frame):
            # link is gone; abandon any in-flight frame (records stay buffered)
            if self._inflight is not None or self.session_open:
                self.connection_lost()
            return outbound

        if panic_now:
            outbound.append(OutboundSms(self._position_report("Panic"),
                                        sender=self.config.own_number))

        if self._inflight is not None:
            waited = (now - self._inflight.sent_at_ms) / 1000.0
            if waited >= wire.RETRANSMIT_TIMEOUT_S:
                if self._inflight.attempts >= wire.MAX_SEND_ATTEMPTS:
                    self.connection_lost()
                else:
                    self._inflight = _Inflight(
                        self._inflight.payload, self._inflight.record_count,
                        self._inflight.kind, now, self._inflight.attempts + 1)
                    outbound.append(OutboundFrame(
                        self._inflight.payload, self._inflight.record_count,
                        self._inflight.kind, self._inflight.attempts,
                        self.config.transport))
            return outbound

        if not self.session_open:
            if now < self._login_backoff_until:
                return outbound
            payload = wire.encode_frame(self.config.imei, [])
            self._inflight = _Inflight(payload, 0, "login", now, 1)
            outbound.append(OutboundFrame(payload, 0, "login", 1,
                                          self.config.transport))
            return outbound

        flush_due = (self.buffer.priority_count > 0
                     or len(self.buffer) >= self.config.batch_max
                     or self._last_flush_ms is None
                     or (now - self._last_flush_ms) / 1000.0
                     >= self.config.flush_interval_s)
        if len(self.buffer) > 0 and flush_due:
            batch = self.buffer.peek(self.config.batch_max)
            payload = wire.encode_frame(self.config.imei, batch)
            self._inflight = _Inflight(payload, len(batch), "data", now, 1)
            self._last_flush_ms = now
            outbound.append(OutboundFrame(payload, len(batch), "data", 1,
                                          self.config.transport))
        return outbound

    def _finish_edges(self, frame: SensorFrame) -> None:
        self._prev_ignition = frame.ignition
        self._prev_panic = frame.panic_button
        self._prev_jammed = frame.gsm_jammed
        self._prev_digital_in = frame.digital_in
        self._prev_external_v = frame.external_power_v
        self._prev_driver_key = frame.driver_key
