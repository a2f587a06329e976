"""Durable record store and device registry.

Each device gets an append-only log of raw 64-byte records (the wire
codec, verbatim) plus a sidecar index carrying arrival metadata. The log
is the source of truth: a torn tail (crash mid-write) is truncated on
open, and a stale or missing sidecar is rebuilt by rescanning the log.
Acks must only be sent after append_batch returns, which is what makes
a crash between write and ack lose nothing that was acknowledged.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .records import RECORD_SIZE, TelemetryRecord, decode_record


class Transport(Enum):
    TCP = 1
    UDP = 2
    SMS = 3
    FILE = 4


_IDX_ENTRY = struct.Struct(">IIQB")  # seq, offset, received_at_ms, transport


@dataclass(frozen=True)
class PersistedRecord:
    record: TelemetryRecord
    received_at_ms: int
    transport: Transport


@dataclass
class DeviceEntry:
    imei: int
    label: str = ""
    enabled: bool = True
    speed_limit_kmh: Optional[float] = None
    tank_capacity_l: float = 50.0
    vehicle_class: str = ""
    created_at_ms: int = 0

    def to_json(self) -> dict:
        return {
            "imei": self.imei, "label": self.label, "enabled": self.enabled,
            "speed_limit_kmh": self.speed_limit_kmh,
            "tank_capacity_l": self.tank_capacity_l,
            "vehicle_class": self.vehicle_class,
            "created_at_ms": self.created_at_ms,
        }

    @classmethod
    def from_json(cls, d: dict) -> "DeviceEntry":
        return cls(imei=int(d["imei"]), label=d.get("label", ""),
                   enabled=bool(d.get("enabled", True)),
                   speed_limit_kmh=d.get("speed_limit_kmh"),
                   tank_capacity_l=float(d.get("tank_capacity_l", 50.0)),
                   vehicle_class=d.get("vehicle_class", ""),
                   created_at_ms=int(d.get("created_at_ms", 0)))


class Registry:
    """Device registry persisted as a JSON snapshot file."""

    def __init__(self, path: str):
        self.path = path
        self._devices: dict[int, DeviceEntry] = {}
        if os.path.exists(path):
            with open(path, encoding="utf-8") as f:
                for d in json.load(f):
                    entry = DeviceEntry.from_json(d)
                    self._devices[entry.imei] = entry

    def save(self) -> None:
        tmp = self.path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump([e.to_json() for e in self.list()], f, indent=1)
        os.replace(tmp, self.path)

    def add(self, entry: DeviceEntry, *, overwrite: bool = False) -> None:
        if entry.imei in self._devices and not overwrite:
            raise ValueError(f"imei {entry.imei} already registered")
        self._devices[entry.imei] = entry
        self.save()

    def seed(self, entry: DeviceEntry) -> None:
        """Add if absent; existing registry entries win over config seeds."""
        if entry.imei not in self._devices:
            self._devices[entry.imei] = entry
            self.save()

    def get(self, imei: int) -> Optional[DeviceEntry]:
        return self._devices.get(imei)

    def set_enabled(self, imei: int, enabled: bool) -> None:
        entry = self._devices.get(imei)
        if entry is None:
            raise KeyError(f"unknown imei {imei}")
        entry.enabled = enabled
        self.save()

    def list(self) -> list[DeviceEntry]:
        return [self._devices[k] for k in sorted(self._devices)]


@dataclass
class _DeviceLog:
    log_path: str
    idx_path: str
    log_file: object = None
    idx_file: object = None
    seq_bytes: dict[int, bytes] = field(default_factory=dict)
    arrival: list[PersistedRecord] = field(default_factory=list)


class RecordStore:
    """Per-device append-only logs with (imei, seq) dedup.

    durable=True fsyncs after every batch (the serve path); the simulator
    turns it off for speed, which changes nothing about file contents.
    """

    def __init__(self, data_dir: str, *, durable: bool = True):
        self.data_dir = data_dir
        self.durable = durable
        self.duplicate_count = 0
        self.tamper_alerts: list[tuple[int, int]] = []  # (imei, seq)
        self._devices: dict[int, _DeviceLog] = {}
        os.makedirs(data_dir, exist_ok=True)
        for name in sorted(os.listdir(data_dir)):
            if name.endswith(".log") and name[:-4].isdigit():
                self._open_device(int(name[:-4]))

    # -- device log lifecycle -------------------------------------------------

    def _paths(self, imei: int) -> tuple[str, str]:
        return (os.path.join(self.data_dir, f"{imei:015d}.log"),
                os.path.join(self.data_dir, f"{imei:015d}.idx"))

    def _open_device(self, imei: int) -> _DeviceLog:
        dev = self._devices.get(imei)
        if dev is not None:
            return dev
        log_path, idx_path = self._paths(imei)
        dev = _DeviceLog(log_path, idx_path)
        self._devices[imei] = dev

        raw = b""
        if os.path.exists(log_path):
            with open(log_path, "rb") as f:
                raw = f.read()
        usable = len(raw) - len(raw) % RECORD_SIZE
        if usable != len(raw):
            # torn tail from a crash mid-append: the record was never
            # acked, drop it
            with open(log_path, "r+b") as f:
                f.truncate(usable)
            raw = raw[:usable]

        count = usable // RECORD_SIZE
        meta = self._load_sidecar(idx_path, count)
        rebuild = len(meta) != count
        meta = (meta + [(0, Transport.FILE)] * count)[:count]
        for i in range(count):
            chunk = raw[i * RECORD_SIZE:(i + 1) * RECORD_SIZE]
            rec = decode_record(chunk)
            received_at, transport = meta[i]
            if rec.seq not in dev.seq_bytes:
                dev.seq_bytes[rec.seq] = chunk
                dev.arrival.append(PersistedRecord(rec, received_at, transport))
        if rebuild:
            with open(idx_path, "wb") as f:
                for i in range(count):
                    rec = decode_record(raw[i * RECORD_SIZE:(i + 1) * RECORD_SIZE])
                    received_at, transport = meta[i]
                    f.write(_IDX_ENTRY.pack(rec.seq & 0xFFFFFFFF,
                                            (i * RECORD_SIZE) & 0xFFFFFFFF,
                                            received_at, transport.value))
        dev.log_file = open(log_path, "ab")
        dev.idx_file = open(idx_path, "ab")
        return dev

    def _load_sidecar(self, idx_path: str,
                      expected: int) -> list[tuple[int, Transport]]:
        """Sidecar (received_at, transport) pairs; may be shorter than the
        log after a crash, in which case the caller rebuilds it."""
        entries: list[tuple[int, Transport]] = []
        if os.path.exists(idx_path):
            with open(idx_path, "rb") as f:
                data = f.read()
            n = len(data) // _IDX_ENTRY.size
            for i in range(min(n, expected)):
                _, _, received_at, transport = _IDX_ENTRY.unpack_from(
                    data, i * _IDX_ENTRY.size)
                try:
                    entries.append((received_at, Transport(transport)))
                except ValueError:
                    entries.append((received_at, Transport.FILE))
        return entries

    # -- ingest path -------------------------------------------------------------

    def append_batch(self, imei: int, encoded_records: list[bytes],
                     received_at_ms: int,
                     transport: Transport) -> tuple[int, int]:
        """Durably append every fresh (imei, seq); returns (fresh, duplicates).

        The batch is flushed (and fsynced when durable) before returning,
        so the caller may ack immediately after.
        """
        dev = self._open_device(imei)
        fresh = 0
        duplicates = 0
        for chunk in encoded_records:
            rec = decode_record(chunk)
            existing = dev.seq_bytes.get(rec.seq)
            if existing is not None:
                duplicates += 1
                self.duplicate_count += 1
                if existing != chunk:
                    # same identity, different payload: first write wins
                    self.tamper_alerts.append((imei, rec.seq))
                continue
            offset = dev.log_file.tell()
            dev.log_file.write(chunk)
            dev.idx_file.write(_IDX_ENTRY.pack(
                rec.seq & 0xFFFFFFFF, offset & 0xFFFFFFFF,
                received_at_ms, transport.value))
            dev.seq_bytes[rec.seq] = chunk
            dev.arrival.append(PersistedRecord(rec, received_at_ms, transport))
            fresh += 1
        if fresh:
            dev.log_file.flush()
            dev.idx_file.flush()
            if self.durable:
                os.fsync(dev.log_file.fileno())
                os.fsync(dev.idx_file.fileno())
        return fresh, duplicates

    # -- read path ------------------------------------------------------------------

    def imeis(self) -> list[int]:
        return sorted(self._devices)

    def record_count(self, imei: int) -> int:
        dev = self._devices.get(imei)
        return len(dev.arrival) if dev else 0

    def records_by_arrival(self, imei: int) -> list[PersistedRecord]:
        dev = self._devices.get(imei)
        return list(dev.arrival) if dev else []

    def records_by_time(self, imei: int, from_ms: Optional[int] = None,
                        to_ms: Optional[int] = None) -> list[PersistedRecord]:
        """Records with from <= timestamp < to, ordered (timestamp, seq)."""
        out = [pr for pr in self.records_by_arrival(imei)
               if (from_ms is None or pr.record.timestamp_ms >= from_ms)
               and (to_ms is None or pr.record.timestamp_ms < to_ms)]
        out.sort(key=lambda pr: (pr.record.timestamp_ms, pr.record.seq))
        return out

    def seq_set(self, imei: int) -> set[int]:
        dev = self._devices.get(imei)
        return set(dev.seq_bytes) if dev else set()

    def close(self) -> None:
        for dev in self._devices.values():
            if dev.log_file:
                dev.log_file.close()
            if dev.idx_file:
                dev.idx_file.close()
        self._devices.clear()
