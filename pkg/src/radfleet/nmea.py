"""NMEA 0183 sentence parsing, serialization, and per-epoch fix fusion.

Supported sentence types: RMC, GGA, GLL, GSA, GSV, VTG.  (Tracker
datasheets sometimes list "GGL"; no such sentence exists in NMEA 0183,
so it is read as the standard GLL.)
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum

KNOTS_TO_KMH = 1.852

# Defaults used by fuse_fix when no GGA is present in the epoch.
DEFAULT_SATELLITES = 0
DEFAULT_HDOP = 99.9
DEFAULT_ALTITUDE_M = 0.0

# A fix is only usable with four or more satellites in the solution.
MIN_SATELLITES_FOR_VALID = 4


class SentenceType(Enum):
    RMC = "RMC"
    GGA = "GGA"
    GLL = "GLL"
    GSA = "GSA"
    GSV = "GSV"
    VTG = "VTG"


class NmeaError(ValueError):
    """Base class for all NMEA parse/serialize failures."""


class BadFraming(NmeaError):
    """Line is not '$...*HH' framed."""


class BadChecksum(NmeaError):
    """Stated checksum does not match the XOR of the body."""


class UnsupportedType(NmeaError):
    """Sentence type is not one of the six supported types."""


class MalformedField(NmeaError):
    """A field does not parse as its expected shape."""


class NoRmc(NmeaError):
    """fuse_fix needs at least one RMC sentence."""


class OutOfRange(NmeaError):
    """Fix field outside its physical range."""


@dataclass(frozen=True)
class NmeaSentence:
    talker: str
    type: SentenceType
    fields: tuple[str, ...]
    checksum: int


@dataclass(frozen=True)
class Fix:
    """One positioning epoch fused from the sentences sharing a timestamp."""

    timestamp_ms: int
    lat: float
    lon: float
    speed_kmh: float
    heading: float
    altitude_m: float
    satellites: int
    hdop: float
    valid: bool


def compute_checksum(body: str) -> int:
    """XOR-fold the bytes strictly between '$' and '*'."""
    cs = 0
    for b in body.encode("ascii"):
        cs ^= b
    return cs


def parse_sentence(line: str) -> NmeaSentence:
    """Parse one NMEA line into a sentence, verifying the checksum.

    Accepts arbitrary text and raises a typed NmeaError naming the stage
    that failed (framing, checksum, type, field shape); never crashes.
    """
    line = line.strip("\r\n")
    if not line.startswith("$"):
        raise BadFraming("line does not start with '$'")
    star = line.rfind("*")
    if star < 0:
        raise BadFraming("no '*' checksum delimiter")
    body = line[1:star]
    stated = line[star + 1:]
    if len(stated) != 2:
        raise BadFraming("checksum is not two hex digits")
    try:
        stated_cs = int(stated, 16)
    except ValueError:
        raise BadFraming("checksum is not two hex digits") from None
    try:
        actual = compute_checksum(body)
    except UnicodeEncodeError:
        raise BadFraming("non-ASCII bytes in sentence body") from None
    if actual != stated_cs:
        raise BadChecksum(f"stated {stated_cs:02X}, computed {actual:02X}")

    tokens = body.split(",")
    head = tokens[0]
    if len(head) < 5:
        raise MalformedField(f"sentence head too short: {head!r}")
    talker, type_code = head[:2], head[2:]
    try:
        stype = SentenceType(type_code)
    except ValueError:
        raise UnsupportedType(type_code) from None
    return NmeaSentence(talker, stype, tuple(tokens[1:]), actual)


def _parse_coord(token: str, direction: str, is_lat: bool) -> float:
    """'ddmm.mmmmm' + hemisphere -> signed degrees. Empty token -> 0.0."""
    if token == "" and direction == "":
        return 0.0
    dot = token.find(".")
    ipart = token[:dot] if dot >= 0 else token
    if len(ipart) < 3:
        raise MalformedField(f"coordinate too short: {token!r}")
    try:
        degrees = int(ipart[:-2])
        minutes = float(token[len(ipart) - 2:])
    except ValueError:
        raise MalformedField(f"coordinate not numeric: {token!r}") from None
    value = degrees + minutes / 60.0
    if is_lat:
        if direction not in ("N", "S"):
            raise MalformedField(f"bad latitude hemisphere: {direction!r}")
        if direction == "S":
            value = -value
        if not -90.0 <= value <= 90.0:
            raise MalformedField(f"latitude out of range: {value}")
    else:
        if direction not in ("E", "W"):
            raise MalformedField(f"bad longitude hemisphere: {direction!r}")
        if direction == "W":
            value = -value
        if not -180.0 <= value <= 180.0:
            raise MalformedField(f"longitude out of range: {value}")
    return value


def _parse_float(token: str, default: float = 0.0) -> float:
    if token == "":
        return default
    try:
        return float(token)
    except ValueError:
        raise MalformedField(f"not a number: {token!r}") from None


def _parse_int(token: str, default: int = 0) -> int:
    if token == "":
        return default
    try:
        return int(token)
    except ValueError:
        raise MalformedField(f"not an integer: {token!r}") from None


def _parse_rmc_timestamp(time_tok: str, date_tok: str) -> int:
    """hhmmss.sss + ddmmyy -> UTC milliseconds. Two-digit years are 20xx."""
    if time_tok == "" or date_tok == "":
        return 0
    if len(date_tok) != 6 or len(time_tok) < 6:
        raise MalformedField(f"bad RMC time/date: {time_tok!r} {date_tok!r}")
    try:
        hh, mm = int(time_tok[0:2]), int(time_tok[2:4])
        sec = float(time_tok[4:])
        day, mon, yy = int(date_tok[0:2]), int(date_tok[2:4]), int(date_tok[4:6])
        dt = datetime(2000 + yy, mon, day, hh, mm, 0, tzinfo=timezone.utc)
    except ValueError:
        raise MalformedField(f"bad RMC time/date: {time_tok!r} {date_tok!r}") from None
    return int(dt.timestamp() * 1000) + int(round(sec * 1000))


def fuse_fix(sentences: list[NmeaSentence]) -> Fix:
    """Fuse the sentences of one epoch into a Fix.

    Position, speed, and heading come from RMC (speed converted from
    knots); satellites, HDOP, and altitude come from GGA when present,
    otherwise from defaults that mark the solution as poor.
    """
    rmc = next((s for s in sentences if s.type is SentenceType.RMC), None)
    if rmc is None:
        raise NoRmc("epoch contains no RMC sentence")
    gga = next((s for s in sentences if s.type is SentenceType.GGA), None)

    f = list(rmc.fields) + [""] * (12 - len(rmc.fields))
    status = f[1]
    lat = _parse_coord(f[2], f[3], is_lat=True)
    lon = _parse_coord(f[4], f[5], is_lat=False)
    speed_kmh = _parse_float(f[6]) * KNOTS_TO_KMH
    heading = _parse_float(f[7]) % 360.0
    timestamp_ms = _parse_rmc_timestamp(f[0], f[8])

    if gga is not None:
        g = list(gga.fields) + [""] * (14 - len(gga.fields))
        satellites = _parse_int(g[6], DEFAULT_SATELLITES)
        hdop = _parse_float(g[7], DEFAULT_HDOP)
        altitude_m = _parse_float(g[8], DEFAULT_ALTITUDE_M)
    else:
        satellites = DEFAULT_SATELLITES
        hdop = DEFAULT_HDOP
        altitude_m = DEFAULT_ALTITUDE_M

    valid = status == "A" and satellites >= MIN_SATELLITES_FOR_VALID
    return Fix(timestamp_ms, lat, lon, speed_kmh, heading, altitude_m,
               satellites, hdop, valid)


def _format_coord(value: float, is_lat: bool) -> tuple[str, str]:
    if is_lat:
        direction = "N" if value >= 0 else "S"
        deg_width = 2
    else:
        direction = "E" if value >= 0 else "W"
        deg_width = 3
    value = abs(value)
    degrees = int(value)
    minutes = (value - degrees) * 60.0
    # five minute decimals ~= 2e-7 degrees of quantization
    if round(minutes, 5) >= 60.0:
        minutes = 0.0
        degrees += 1
    return f"{degrees:0{deg_width}d}{minutes:08.5f}", direction


def _format_time(timestamp_ms: int) -> tuple[str, str]:
    sec, msec = divmod(timestamp_ms, 1000)
    dt = datetime.fromtimestamp(sec, tz=timezone.utc)
    return (f"{dt.hour:02d}{dt.minute:02d}{dt.second:02d}.{msec:03d}",
            f"{dt.day:02d}{dt.month:02d}{dt.year % 100:02d}")


def _check_fix_range(fix: Fix) -> None:
    if not -90.0 <= fix.lat <= 90.0:
        raise OutOfRange(f"latitude {fix.lat}")
    if not -180.0 <= fix.lon <= 180.0:
        raise OutOfRange(f"longitude {fix.lon}")
    if fix.speed_kmh < 0:
        raise OutOfRange(f"speed {fix.speed_kmh}")
    if fix.timestamp_ms < 0:
        raise OutOfRange(f"timestamp {fix.timestamp_ms}")


def _frame_line(body: str) -> str:
    return f"${body}*{compute_checksum(body):02X}\r\n"


def serialize_rmc(fix: Fix) -> str:
    """Fix -> '$GPRMC,...*HH\\r\\n'. Round-trips position within 1e-5 deg."""
    _check_fix_range(fix)
    time_tok, date_tok = _format_time(fix.timestamp_ms)
    lat_tok, ns = _format_coord(fix.lat, is_lat=True)
    lon_tok, ew = _format_coord(fix.lon, is_lat=False)
    knots = fix.speed_kmh / KNOTS_TO_KMH
    status = "A" if fix.valid else "V"
    body = (f"GPRMC,{time_tok},{status},{lat_tok},{ns},{lon_tok},{ew},"
            f"{knots:05.1f},{fix.heading % 360.0:05.1f},{date_tok},,,A")
    return _frame_line(body)


def serialize_gga(fix: Fix) -> str:
    """Fix -> '$GPGGA,...*HH\\r\\n' carrying satellites, HDOP, altitude."""
    _check_fix_range(fix)
    time_tok, _ = _format_time(fix.timestamp_ms)
    lat_tok, ns = _format_coord(fix.lat, is_lat=True)
    lon_tok, ew = _format_coord(fix.lon, is_lat=False)
    quality = 1 if fix.valid else 0
    body = (f"GPGGA,{time_tok},{lat_tok},{ns},{lon_tok},{ew},{quality},"
            f"{fix.satellites:02d},{fix.hdop:.1f},{fix.altitude_m:.1f},M,0.0,M,,")
    return _frame_line(body)
