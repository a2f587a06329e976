"""The 64-byte telemetry record: one codec for device flash, wire, and store.

Fixed big-endian layout, 64 bytes total:

    offset  size  field
       0      8   timestamp_ms   u64
       8      1   flags          u8   bit0 priority, bit1 buffered-replay
       9      4   lat            i32  degrees * 1e7
      13      4   lon            i32  degrees * 1e7
      17      2   altitude       i16  meters
      19      2   heading        u16  decidegrees 0..3599
      21      2   speed          u16  deci-km/h
      23      1   satellites     u8
      24      1   hdop           u8   * 10 (caps at 25.5)
      25      1   event_code     u8
      26      1   digital_in     u8   bits 0-3 inputs, bit 4 ignition
      27      1   digital_out    u8   bit 0 is the immobilizer line
      28      2   analog1        u16  mV
      30      2   analog2        u16  mV
      32      2   fuel_level     u16  deci-percent
      34      2   fuel_rate      u16  deci-L/h
      36      4   odometer       u32  meters
      40      2   battery        u16  mV
      42      2   accel_x        i16  mg
      44      2   accel_y        i16  mg
      46      2   accel_z        i16  mg
      48      2   geofence_id    u16  0 = none
      50      4   seq            u32
      54     10   reserved       zero on encode, ignored on decode
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from enum import IntEnum

RECORD_SIZE = 64

FLAG_PRIORITY = 0x01
FLAG_REPLAY = 0x02

IGNITION_BIT = 0x10  # within digital_in

_LAYOUT = struct.Struct(">QBiihHHBBBBBHHHHIHhhhHI10s")
assert _LAYOUT.size == RECORD_SIZE


class EventCode(IntEnum):
    Periodic = 0
    DistanceTrig = 1
    AngleTrig = 2
    IgnitionOn = 3
    IgnitionOff = 4
    Overspeed = 5
    Panic = 6
    Towing = 7
    GeofenceEnter = 8
    GeofenceExit = 9
    HarshAccel = 10
    HarshBrake = 11
    HarshCorner = 12
    JammingDetected = 13
    IoChange = 14
    UnauthorizedDriver = 15
    PowerCutoff = 16


# Alert-class codes carry the priority flag and feed the alert stream.
ALERT_CODES = frozenset({
    EventCode.Panic, EventCode.Overspeed, EventCode.Towing,
    EventCode.JammingDetected, EventCode.GeofenceEnter,
    EventCode.GeofenceExit, EventCode.UnauthorizedDriver,
})


class RecordError(ValueError):
    """Record field out of layout range, or bad encoded length."""


class WrongLength(RecordError):
    pass


def _check(name: str, value: int, lo: int, hi: int) -> None:
    if not lo <= value <= hi:
        raise RecordError(f"{name}={value} outside [{lo}, {hi}]")


@dataclass(frozen=True)
class TelemetryRecord:
    """One telemetry epoch in wire units (integers as laid out above)."""

    timestamp_ms: int
    flags: int
    lat_e7: int
    lon_e7: int
    altitude_m: int
    heading_ddeg: int
    speed_dkmh: int
    satellites: int
    hdop_d: int
    event_code: int
    digital_in: int
    digital_out: int
    analog1_mv: int
    analog2_mv: int
    fuel_level_dpct: int
    fuel_rate_dlph: int
    odometer_m: int
    battery_mv: int
    accel_x_mg: int
    accel_y_mg: int
    accel_z_mg: int
    geofence_id: int
    seq: int

    def __post_init__(self) -> None:
        _check("timestamp_ms", self.timestamp_ms, 0, 2**64 - 1)
        _check("flags", self.flags, 0, 255)
        _check("lat_e7", self.lat_e7, -900_000_000, 900_000_000)
        _check("lon_e7", self.lon_e7, -1_800_000_000, 1_800_000_000)
        _check("altitude_m", self.altitude_m, -32768, 32767)
        _check("heading_ddeg", self.heading_ddeg, 0, 3599)
        _check("speed_dkmh", self.speed_dkmh, 0, 65535)
        _check("satellites", self.satellites, 0, 255)
        _check("hdop_d", self.hdop_d, 0, 255)
        _check("event_code", self.event_code, 0, 255)
        _check("digital_in", self.digital_in, 0, 255)
        _check("digital_out", self.digital_out, 0, 255)
        _check("analog1_mv", self.analog1_mv, 0, 65535)
        _check("analog2_mv", self.analog2_mv, 0, 65535)
        _check("fuel_level_dpct", self.fuel_level_dpct, 0, 65535)
        _check("fuel_rate_dlph", self.fuel_rate_dlph, 0, 65535)
        _check("odometer_m", self.odometer_m, 0, 2**32 - 1)
        _check("battery_mv", self.battery_mv, 0, 65535)
        _check("accel_x_mg", self.accel_x_mg, -32768, 32767)
        _check("accel_y_mg", self.accel_y_mg, -32768, 32767)
        _check("accel_z_mg", self.accel_z_mg, -32768, 32767)
        _check("geofence_id", self.geofence_id, 0, 65535)
        _check("seq", self.seq, 0, 2**32 - 1)

    # -- float views ------------------------------------------------------

    @property
    def lat(self) -> float:
        return self.lat_e7 / 1e7

    @property
    def lon(self) -> float:
        return self.lon_e7 / 1e7

    @property
    def heading(self) -> float:
        return self.heading_ddeg / 10.0

    @property
    def speed_kmh(self) -> float:
        return self.speed_dkmh / 10.0

    @property
    def hdop(self) -> float:
        return self.hdop_d / 10.0

    @property
    def fuel_level_pct(self) -> float:
        return self.fuel_level_dpct / 10.0

    @property
    def fuel_rate_lph(self) -> float:
        return self.fuel_rate_dlph / 10.0

    @property
    def priority(self) -> bool:
        return bool(self.flags & FLAG_PRIORITY)

    @property
    def is_replay(self) -> bool:
        return bool(self.flags & FLAG_REPLAY)

    @property
    def ignition(self) -> bool:
        return bool(self.digital_in & IGNITION_BIT)

    @property
    def valid_fix(self) -> bool:
        return self.satellites >= 4

    def with_flags(self, flags: int) -> "TelemetryRecord":
        return replace(self, flags=flags)


def encode_record(r: TelemetryRecord) -> bytes:
    """Record -> exactly 64 bytes (ranges were validated at build time)."""
    return _LAYOUT.pack(
        r.timestamp_ms, r.flags, r.lat_e7, r.lon_e7, r.altitude_m,
        r.heading_ddeg, r.speed_dkmh, r.satellites, r.hdop_d, r.event_code,
        r.digital_in, r.digital_out, r.analog1_mv, r.analog2_mv,
        r.fuel_level_dpct, r.fuel_rate_dlph, r.odometer_m, r.battery_mv,
        r.accel_x_mg, r.accel_y_mg, r.accel_z_mg, r.geofence_id, r.seq,
        b"\x00" * 10)


def decode_record(data: bytes) -> TelemetryRecord:
    """64 bytes -> record. Non-zero reserved bytes are tolerated."""
    if len(data) != RECORD_SIZE:
        raise WrongLength(f"expected {RECORD_SIZE} bytes, got {len(data)}")
    v = _LAYOUT.unpack(data)
    return TelemetryRecord(*v[:-1])


def build_record(*, timestamp_ms: int, event_code: EventCode, seq: int,
                 lat: float = 0.0, lon: float = 0.0, altitude_m: float = 0.0,
                 heading: float = 0.0, speed_kmh: float = 0.0,
                 satellites: int = 0, hdop: float = 99.9,
                 ignition: bool = False, digital_in: int = 0,
                 digital_out: int = 0, analog1_mv: int = 0,
                 analog2_mv: int = 0, fuel_level_pct: float = 0.0,
                 fuel_rate_lph: float = 0.0, odometer_m: int = 0,
                 battery_mv: int = 0, accel_mg: tuple[int, int, int] = (0, 0, 0),
                 geofence_id: int = 0, replay: bool = False) -> TelemetryRecord:
    """Quantize engineering-unit values onto the wire grid.

    This is the single place floats become wire integers; everything
    downstream round-trips exactly.
    """
    flags = 0
    if event_code in ALERT_CODES:
        flags |= FLAG_PRIORITY
    if replay:
        flags |= FLAG_REPLAY
    din = (digital_in & 0x0F) | (IGNITION_BIT if ignition else 0)
    return TelemetryRecord(
        timestamp_ms=timestamp_ms,
        flags=flags,
        lat_e7=int(round(lat * 1e7)),
        lon_e7=int(round(lon * 1e7)),
        altitude_m=max(-32768, min(32767, int(round(altitude_m)))),
        heading_ddeg=int(round((heading % 360.0) * 10.0)) % 3600,
        speed_dkmh=min(65535, int(round(speed_kmh * 10.0))),
        satellites=min(255, satellites),
        hdop_d=min(255, int(round(hdop * 10.0))),
        event_code=int(event_code),
        digital_in=din,
        digital_out=digital_out & 0x0F,
        analog1_mv=min(65535, analog1_mv),
        analog2_mv=min(65535, analog2_mv),
        fuel_level_dpct=min(65535, int(round(fuel_level_pct * 10.0))),
        fuel_rate_dlph=min(65535, int(round(fuel_rate_lph * 10.0))),
        odometer_m=min(2**32 - 1, int(odometer_m)),
        battery_mv=min(65535, battery_mv),
        accel_x_mg=max(-32768, min(32767, accel_mg[0])),
        accel_y_mg=max(-32768, min(32767, accel_mg[1])),
        accel_z_mg=max(-32768, min(32767, accel_mg[2])),
        geofence_id=geofence_id,
        seq=seq)
