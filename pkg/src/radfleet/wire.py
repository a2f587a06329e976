"""Binary frame codec, CRC-16, stream reassembly, and the SMS text grammar.

Frame layout (big-endian):

    magic 0x52 0x31 | version u8 = 1 | imei u64 | record_count u16 |
    record_count x 64-byte records | crc u16

The CRC is CCITT-FALSE (poly 0x1021, init 0xFFFF) over version..last
record byte and is checked before anything else is interpreted. A frame
with zero records is a login frame (15 bytes).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Union

from .records import RECORD_SIZE

FRAME_MAGIC = b"\x52\x31"
ACK_MAGIC = b"\x41\x31"
PROTOCOL_VERSION = 1
FRAME_OVERHEAD = 15  # magic(2) + version(1) + imei(8) + count(2) + crc(2)
MAX_RECORDS_PER_FRAME = 255  # sender-side batching cap

TCP_PORT_DEFAULT = 5027
UDP_PORT_DEFAULT = 5028
RETRANSMIT_TIMEOUT_S = 5.0
MAX_SEND_ATTEMPTS = 5

# CRC-16/CCITT-FALSE table, poly 0x1021
_CRC_TABLE = []
for _i in range(256):
    _c = _i << 8
    for _ in range(8):
        _c = ((_c << 1) ^ 0x1021) & 0xFFFF if _c & 0x8000 else (_c << 1) & 0xFFFF
    _CRC_TABLE.append(_c)


def crc16(data: bytes) -> int:
    """CRC-16/CCITT-FALSE (init 0xFFFF, no reflection, no xorout)."""
    crc = 0xFFFF
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC_TABLE[(crc >> 8) ^ b]
    return crc


assert crc16(b"123456789") == 0x29B1


class WireError(ValueError):
    """Base class for frame decode failures."""


class BadMagic(WireError):
    pass


class BadVersion(WireError):
    pass


class BadCrc(WireError):
    pass


class NeedMoreBytes(WireError):
    """Buffer ends mid-frame; .missing says how many bytes are still needed."""

    def __init__(self, missing: int):
        super().__init__(f"need {missing} more bytes")
        self.missing = missing


@dataclass(frozen=True)
class Frame:
    imei: int
    records: tuple[bytes, ...]  # encoded 64-byte records

    @property
    def is_login(self) -> bool:
        return len(self.records) == 0


@dataclass(frozen=True)
class Ack:
    accepted_count: int


def encode_frame(imei: int, records: list[bytes] = ()) -> bytes:
    """Build a frame; an empty record list builds the 15-byte login frame."""
    if not 0 <= imei < 10**15:
        raise ValueError(f"imei must be a 15-digit decimal identity: {imei}")
    if len(records) > MAX_RECORDS_PER_FRAME:
        raise ValueError(f"at most {MAX_RECORDS_PER_FRAME} records per frame")
    for r in records:
        if len(r) != RECORD_SIZE:
            raise ValueError(f"record must be {RECORD_SIZE} bytes, got {len(r)}")
    body = struct.pack(">BQH", PROTOCOL_VERSION, imei, len(records))
    body += b"".join(records)
    return FRAME_MAGIC + body + struct.pack(">H", crc16(body))


def decode_frame(buf: bytes, offset: int = 0) -> tuple[Frame, int]:
    """Decode one frame at buf[offset:]; returns (frame, bytes consumed).

    Raises NeedMoreBytes with the exact shortfall when the buffer ends
    mid-frame, which is what makes TCP stream reassembly possible.
    """
    avail = len(buf) - offset
    if avail < FRAME_OVERHEAD:
        # cannot even read the header + crc of a login frame yet
        if avail >= 13:
            (count,) = struct.unpack_from(">H", buf, offset + 11)
            raise NeedMoreBytes(FRAME_OVERHEAD + count * RECORD_SIZE - avail)
        raise NeedMoreBytes(FRAME_OVERHEAD - avail)
    if buf[offset:offset + 2] != FRAME_MAGIC:
        raise BadMagic(f"bad frame magic {buf[offset:offset + 2]!r}")
    (count,) = struct.unpack_from(">H", buf, offset + 11)
    total = FRAME_OVERHEAD + count * RECORD_SIZE
    if avail < total:
        raise NeedMoreBytes(total - avail)
    body = bytes(buf[offset + 2:offset + total - 2])
    (stated_crc,) = struct.unpack_from(">H", buf, offset + total - 2)
    if crc16(body) != stated_crc:
        raise BadCrc(f"crc mismatch on {count}-record frame")
    version = body[0]
    if version != PROTOCOL_VERSION:
        raise BadVersion(f"version {version}")
    (imei,) = struct.unpack(">Q", body[1:9])
    records = tuple(body[11 + i * RECORD_SIZE:11 + (i + 1) * RECORD_SIZE]
                    for i in range(count))
    return Frame(imei, records), total


class FrameStream:
    """Reassembles frames from arbitrarily chunked TCP bytes."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[Frame]:
        """Append bytes, return every complete frame now available.

        Raises WireError on corruption; the connection owner should drop
        the link and let the device retransmit.
        """
        self._buf.extend(data)
        frames = []
        while True:
            try:
                frame, consumed = decode_frame(bytes(self._buf))
            except NeedMoreBytes:
                break
            del self._buf[:consumed]
            frames.append(frame)
        return frames

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)


def encode_ack(accepted_count: int) -> bytes:
    return ACK_MAGIC + struct.pack(">H", accepted_count)


def decode_ack(data: bytes) -> Ack:
    if len(data) != 4:
        raise WireError(f"ack must be 4 bytes, got {len(data)}")
    if data[:2] != ACK_MAGIC:
        raise BadMagic(f"bad ack magic {data[:2]!r}")
    return Ack(struct.unpack(">H", data[2:])[0])


# -- SMS text channel ------------------------------------------------------

SMS_MAX_CHARS = 160


class SmsError(ValueError):
    pass


class UnknownVerb(SmsError):
    pass


class BadArgs(SmsError):
    pass


@dataclass(frozen=True)
class GetGps:
    pass


@dataclass(frozen=True)
class SetParam:
    key: str
    value: str


@dataclass(frozen=True)
class SetOutput:
    channel: int
    value: int


Command = Union[GetGps, SetParam, SetOutput]


def parse_sms_command(text: str) -> Command:
    """Grammar: 'GETGPS' | 'SETPARAM <key>=<value>' | 'OUT <0-3> <0|1>'."""
    parts = text.strip().split()
    if not parts:
        raise UnknownVerb("empty command")
    verb = parts[0].upper()
    if verb == "GETGPS":
        if len(parts) != 1:
            raise BadArgs("GETGPS takes no arguments")
        return GetGps()
    if verb == "SETPARAM":
        if len(parts) != 2 or "=" not in parts[1]:
            raise BadArgs("usage: SETPARAM <key>=<value>")
        key, _, value = parts[1].partition("=")
        if not key or not value:
            raise BadArgs("usage: SETPARAM <key>=<value>")
        return SetParam(key, value)
    if verb == "OUT":
        if len(parts) != 3:
            raise BadArgs("usage: OUT <0-3> <0|1>")
        try:
            channel, value = int(parts[1]), int(parts[2])
        except ValueError:
            raise BadArgs("OUT arguments must be integers") from None
        if not 0 <= channel <= 3 or value not in (0, 1):
            raise BadArgs("usage: OUT <0-3> <0|1>")
        return SetOutput(channel, value)
    raise UnknownVerb(verb)


def format_position_sms(imei: int, iso_time: str, lat: float, lon: float,
                        speed_kmh: float, heading: float, event: str) -> str:
    """Position report: POS,<imei>,<iso8601>,<lat>,<lon>,<kmh>,<hdg>,<event>."""
    text = (f"POS,{imei:015d},{iso_time},{lat:.6f},{lon:.6f},"
            f"{speed_kmh:.1f},{int(heading) % 360},{event}")
    if len(text) > SMS_MAX_CHARS:
        raise SmsError(f"position report over {SMS_MAX_CHARS} chars")
    return text


def parse_position_sms(text: str) -> dict:
    """Inverse of format_position_sms; returns a field dict."""
    parts = text.strip().split(",")
    if len(parts) != 8 or parts[0] != "POS":
        raise SmsError(f"not a position report: {text!r}")
    try:
        return {
            "imei": int(parts[1]),
            "time": parts[2],
            "lat": float(parts[3]),
            "lon": float(parts[4]),
            "speed_kmh": float(parts[5]),
            "heading": int(parts[6]),
            "event": parts[7],
        }
    except ValueError:
        raise SmsError(f"malformed position report: {text!r}") from None
