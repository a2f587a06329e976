"""Fleet reports derived from stored records.

Every function here is a pure function of its inputs: re-running a report
over the same record snapshot produces byte-identical output. Mileage is
GPS-derived (positions, not the CAN odometer); invalid fixes contribute
no distance and no speed. Day boundaries follow a fleet-local UTC offset.
"""

from __future__ import annotations

import calendar
import io
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional, Sequence

from .geo import GeofenceZone, GeoPoint, haversine_distance, zone_membership
from .records import TelemetryRecord
from .store import DeviceEntry, PersistedRecord

DEFAULT_UTC_OFFSET_MIN = 210  # fleet-local +03:30
MOVING_SPEED_KMH = 3.0
DAY_MS = 86_400_000


class UnorderedInput(ValueError):
    """Records must be time-ordered for segmentation."""


class NoFuelData(ValueError):
    """Neither fuel-rate nor fuel-level channels carry data."""


def _records(prs: Sequence) -> list[TelemetryRecord]:
    """Accept either PersistedRecords or bare TelemetryRecords."""
    return [pr.record if isinstance(pr, PersistedRecord) else pr for pr in prs]


def _valid(records: Sequence[TelemetryRecord]) -> list[TelemetryRecord]:
    return [r for r in records if r.valid_fix]


def _point(r: TelemetryRecord) -> GeoPoint:
    return GeoPoint(r.lat, r.lon)


def records_path_km(records: Sequence[TelemetryRecord]) -> float:
    """GPS mileage over consecutive valid fixes, in km."""
    total = 0.0
    prev = None
    for r in _valid(records):
        if prev is not None:
            total += haversine_distance(_point(prev), _point(r))
        prev = r
    return total / 1000.0


# -- trips and stops ----------------------------------------------------------


@dataclass(frozen=True)
class StopEvent:
    vehicle: int
    location: GeoPoint
    start_ms: int
    duration_s: float


@dataclass
class Trip:
    vehicle: int
    start_ms: int
    end_ms: int
    start: GeoPoint
    end: GeoPoint
    distance_km: float
    fuel_used_l: float
    max_speed_kmh: float
    avg_speed_kmh: float
    route_signature: tuple[int, ...] = ()


@dataclass(frozen=True)
class TripParams:
    stop_speed_kmh: float = 3.0
    min_stop_s: float = 300.0
    ignition_stop_s: float = 60.0
    min_trip_dist_m: float = 200.0
    tank_capacity_l: float = 50.0


def segment_trips(prs: Sequence, params: TripParams = TripParams(), *,
                  vehicle: int = 0,
                  zones: Sequence[GeofenceZone] = ()) -> tuple[list[Trip], list[StopEvent]]:
    """Partition a time-ordered record stream into trips and stops.

    A stop is a maximal quiet span (speed < stop_speed) lasting at least
    min_stop, or containing an ignition-off stretch of at least
    ignition_stop. Trips are the spans in between with enough distance.
    """
    records = _records(prs)
    for a, b in zip(records, records[1:]):
        if b.timestamp_ms < a.timestamp_ms:
            raise UnorderedInput(
                f"timestamp went backwards at seq {b.seq}")
    recs = _valid(records)
    if not recs:
        return [], []

    # quiet spans as index ranges [i, j] plus their wall end time
    spans = []
    i = 0
    while i < len(recs):
        if recs[i].speed_kmh < params.stop_speed_kmh:
            j = i
            while j + 1 < len(recs) and \
                    recs[j + 1].speed_kmh < params.stop_speed_kmh:
                j += 1
            end_ms = recs[j + 1].timestamp_ms if j + 1 < len(recs) \
                else recs[j].timestamp_ms
            spans.append((i, j, end_ms))
            i = j + 1
        else:
            i += 1

    stops = []
    stop_ranges = []
    for i, j, end_ms in spans:
        duration = (end_ms - recs[i].timestamp_ms) / 1000.0
        qualifies = duration >= params.min_stop_s
        if not qualifies:
            off_since = None
            for k in range(i, j + 1):
                if not recs[k].ignition:
                    if off_since is None:
                        off_since = recs[k].timestamp_ms
                    if (end_ms - off_since) / 1000.0 >= params.ignition_stop_s:
                        qualifies = True
                        break
                else:
                    off_since = None
        if qualifies:
            stops.append(StopEvent(vehicle, _point(recs[i]),
                                   recs[i].timestamp_ms, duration))
            stop_ranges.append((i, j))

    trips = []
    bounds = [(-1, -1)] + stop_ranges + [(len(recs), len(recs))]
    for (_, prev_j), (next_i, _) in zip(bounds, bounds[1:]):
        a = max(prev_j, 0)
        b = min(next_i, len(recs) - 1)
        if b <= a:
            continue
        segment = recs[a:b + 1]
        dist_m = records_path_km(segment) * 1000.0
        if dist_m < params.min_trip_dist_m:
            continue
        try:
            fuel, _ = fuel_consumption(segment,
                                       tank_capacity_l=params.tank_capacity_l)
        except NoFuelData:
            fuel = 0.0
        stats = speed_stats(segment)
        trips.append(Trip(
            vehicle=vehicle,
            start_ms=segment[0].timestamp_ms,
            end_ms=segment[-1].timestamp_ms,
            start=_point(segment[0]),
            end=_point(segment[-1]),
            distance_km=round(dist_m / 1000.0, 3),
            fuel_used_l=round(fuel, 3),
            max_speed_kmh=stats["max_kmh"],
            avg_speed_kmh=stats["avg_kmh"],
            route_signature=_route_signature(segment, zones)))
    return trips, stops


def _route_signature(records: Sequence[TelemetryRecord],
                     zones: Sequence[GeofenceZone]) -> tuple[int, ...]:
    if not zones:
        return ()
    signature: list[int] = []
    prev: frozenset[int] = frozenset()
    first = True
    for r in records:
        cur = zone_membership(_point(r), list(zones))
        if first:
            signature.extend(sorted(cur))
            first = False
        else:
            signature.extend(sorted(cur - prev))
        prev = cur
    # collapse immediate revisits
    out: list[int] = []
    for zid in signature:
        if not out or out[-1] != zid:
            out.append(zid)
    return tuple(out)


# -- fuel ---------------------------------------------------------------------

REFUEL_JUMP_PCT = 5.0


def fuel_consumption(prs: Sequence, method: Optional[str] = None, *,
                     tank_capacity_l: float = 50.0) -> tuple[float, int]:
    """Liters consumed plus refuel count over a record span.

    method "rate" integrates fuel_rate over time; "level" sums positive
    level drops scaled by tank capacity, treating any rise above 5
    percentage points as a refuel (excluded from consumption). With no
    method given, rate wins whenever any record carries a rate.
    """
    records = _records(prs)
    if method is None:
        if any(r.fuel_rate_dlph > 0 for r in records):
            method = "rate"
        elif any(r.fuel_level_dpct > 0 for r in records):
            method = "level"
        else:
            raise NoFuelData("no fuel rate or level data in span")
    if method not in ("rate", "level"):
        raise ValueError(f"unknown fuel method: {method}")

    liters = 0.0
    refuels = 0
    if method == "rate":
        for a, b in zip(records, records[1:]):
            dt_h = (b.timestamp_ms - a.timestamp_ms) / 3_600_000.0
            liters += a.fuel_rate_lph * dt_h
        return liters, refuels
    for a, b in zip(records, records[1:]):
        delta = b.fuel_level_pct - a.fuel_level_pct
        if delta < 0:
            liters += -delta * tank_capacity_l / 100.0
        elif delta > REFUEL_JUMP_PCT:
            refuels += 1
    return liters, refuels


# -- calendar helpers -----------------------------------------------------------


def local_day(ts_ms: int, utc_offset_min: int) -> tuple[int, int, int]:
    dt = datetime.fromtimestamp(ts_ms / 1000.0 + utc_offset_min * 60,
                                tz=timezone.utc)
    return dt.year, dt.month, dt.day


def month_window_ms(year: int, month: int, utc_offset_min: int) -> tuple[int, int]:
    """UTC ms window covering the fleet-local month [start, end)."""
    start = int(datetime(year, month, 1, tzinfo=timezone.utc).timestamp()
                * 1000) - utc_offset_min * 60_000
    if month == 12:
        year, month = year + 1, 1
    else:
        month += 1
    end = int(datetime(year, month, 1, tzinfo=timezone.utc).timestamp()
              * 1000) - utc_offset_min * 60_000
    return start, end


def parse_month(text: str) -> tuple[int, int]:
    parts = text.split("-")
    if len(parts) != 2:
        raise ValueError(f"month must be YYYY-MM: {text!r}")
    year, month = int(parts[0]), int(parts[1])
    if not 1 <= month <= 12:
        raise ValueError(f"month out of range: {text!r}")
    return year, month


# -- daily / monthly / comparison -------------------------------------------------


def daily_rows(prs: Sequence, year: int, month: int, *,
               utc_offset_min: int = DEFAULT_UTC_OFFSET_MIN,
               tank_capacity_l: float = 50.0) -> list[dict]:
    """Per-day km and liters for one fleet-local month.

    km sums the legs between a day's consecutive valid fixes; days with
    no records report zero. Fuel uses the same per-day spans.
    """
    records = sorted(_records(prs), key=lambda r: (r.timestamp_ms, r.seq))
    ndays = calendar.monthrange(year, month)[1]
    km = [0.0] * (ndays + 1)
    liters = [0.0] * (ndays + 1)
    by_day: dict[int, list[TelemetryRecord]] = {}
    for r in _valid(records):
        y, m, d = local_day(r.timestamp_ms, utc_offset_min)
        if (y, m) == (year, month):
            by_day.setdefault(d, []).append(r)
    for d, recs in by_day.items():
        km[d] = records_path_km(recs)
        try:
            liters[d], _ = fuel_consumption(recs, tank_capacity_l=tank_capacity_l)
        except NoFuelData:
            liters[d] = 0.0
    return [{"day": d, "km": km[d], "liters": liters[d]}
            for d in range(1, ndays + 1)]


def daily_mileage(prs: Sequence, year: int, month: int, *,
                  utc_offset_min: int = DEFAULT_UTC_OFFSET_MIN) -> list[dict]:
    """The mileage half of the daily report: {day, km} rows."""
    return [{"day": row["day"], "km": row["km"]}
            for row in daily_rows(prs, year, month,
                                  utc_offset_min=utc_offset_min)]


def monthly_report(prs: Sequence, months: Sequence[tuple[int, int]], *,
                   utc_offset_min: int = DEFAULT_UTC_OFFSET_MIN,
                   tank_capacity_l: float = 50.0) -> list[dict]:
    """One row per month; each month is the sum of its daily rows."""
    out = []
    for year, month in months:
        rows = daily_rows(prs, year, month, utc_offset_min=utc_offset_min,
                          tank_capacity_l=tank_capacity_l)
        out.append({"month": f"{year:04d}-{month:02d}",
                    "km": sum(r["km"] for r in rows),
                    "liters": sum(r["liters"] for r in rows)})
    return out


def month_range(from_month: tuple[int, int],
                to_month: tuple[int, int]) -> list[tuple[int, int]]:
    """Inclusive list of (year, month) from from_month to to_month."""
    out = []
    y, m = from_month
    while (y, m) <= to_month:
        out.append((y, m))
        m += 1
        if m > 12:
            y, m = y + 1, 1
    return out


def compare_months(prs: Sequence, month_a: tuple[int, int],
                   month_b: tuple[int, int], *,
                   utc_offset_min: int = DEFAULT_UTC_OFFSET_MIN,
                   tank_capacity_l: float = 50.0) -> list[dict]:
    """Day-of-month aligned comparison; missing days read zero."""
    rows_a = daily_rows(prs, *month_a, utc_offset_min=utc_offset_min,
                        tank_capacity_l=tank_capacity_l)
    rows_b = daily_rows(prs, *month_b, utc_offset_min=utc_offset_min,
                        tank_capacity_l=tank_capacity_l)
    n = max(len(rows_a), len(rows_b))
    out = []
    for d in range(1, n + 1):
        a = rows_a[d - 1] if d <= len(rows_a) else {"km": 0.0, "liters": 0.0}
        b = rows_b[d - 1] if d <= len(rows_b) else {"km": 0.0, "liters": 0.0}
        out.append({"day": d, "km_a": a["km"], "km_b": b["km"],
                    "liters_a": a["liters"], "liters_b": b["liters"]})
    return out


# -- dispatch helpers ---------------------------------------------------------------


def nearest_vehicles(snapshots: Sequence[dict], point: GeoPoint, *,
                     limit: int = 10,
                     staleness_max_s: float = 900.0) -> dict:
    """Rank fresh latest positions by distance to a point.

    Stale fixes (older than staleness_max) are excluded from the ranking
    and listed separately; devices with no position at all are omitted.
    """
    ranked = []
    stale = []
    for snap in snapshots:
        last = snap.get("last")
        if last is None:
            continue
        d = haversine_distance(point, GeoPoint(last["lat"], last["lon"]))
        row = {"imei": snap["imei"], "label": snap.get("label", ""),
               "distance_m": d, "age_s": snap["age_s"],
               "lat": last["lat"], "lon": last["lon"]}
        if snap["age_s"] is not None and snap["age_s"] <= staleness_max_s:
            ranked.append(row)
        else:
            stale.append(row)
    ranked.sort(key=lambda r: (r["distance_m"], r["imei"]))
    stale.sort(key=lambda r: (r["age_s"], r["imei"]))
    return {"ranked": ranked[:limit], "stale": stale}


def speed_stats(prs: Sequence, *,
                moving_speed_kmh: float = MOVING_SPEED_KMH) -> dict:
    """Time-weighted average over moving legs, plus the peak speed."""
    records = _valid(_records(prs))
    weighted = 0.0
    moving_time = 0.0
    max_kmh = 0.0
    for r in records:
        max_kmh = max(max_kmh, r.speed_kmh)
    for a, b in zip(records, records[1:]):
        if a.speed_kmh >= moving_speed_kmh:
            dt = (b.timestamp_ms - a.timestamp_ms) / 1000.0
            weighted += a.speed_kmh * dt
            moving_time += dt
    avg = weighted / moving_time if moving_time > 0 else 0.0
    return {"avg_kmh": avg, "max_kmh": max_kmh}


def overspeed_report(prs: Sequence, limit_kmh: float) -> list[dict]:
    """Contiguous spans with speed above the limit: start, duration, peak."""
    records = _valid(_records(prs))
    violations = []
    i = 0
    while i < len(records):
        if records[i].speed_kmh > limit_kmh:
            j = i
            peak = records[i].speed_kmh
            while j + 1 < len(records) and records[j + 1].speed_kmh > limit_kmh:
                j += 1
                peak = max(peak, records[j].speed_kmh)
            end_ms = records[j + 1].timestamp_ms if j + 1 < len(records) \
                else records[j].timestamp_ms
            violations.append({
                "start_ms": records[i].timestamp_ms,
                "duration_s": (end_ms - records[i].timestamp_ms) / 1000.0,
                "peak_kmh": peak})
            i = j + 1
        else:
            i += 1
    return violations


SPEED_BIN_KMH = 10
SPEED_BIN_TOP = 120


def fuel_by_speed(prs: Sequence, *, tank_capacity_l: float = 50.0,
                  moving_speed_kmh: float = MOVING_SPEED_KMH) -> list[dict]:
    """Distance and fuel binned by speed (10 km/h bins up to 120+).

    Legs are attributed to the bin of their leading record. L/100km is
    omitted for bins with under 1 km (too noisy to report).
    """
    records = _valid(_records(prs))
    rates_present = any(r.fuel_rate_dlph > 0 for r in records)
    nbins = SPEED_BIN_TOP // SPEED_BIN_KMH + 1
    km = [0.0] * nbins
    liters = [0.0] * nbins
    for a, b in zip(records, records[1:]):
        if a.speed_kmh < moving_speed_kmh:
            continue
        bin_i = min(int(a.speed_kmh // SPEED_BIN_KMH), nbins - 1)
        km[bin_i] += haversine_distance(_point(a), _point(b)) / 1000.0
        if rates_present:
            liters[bin_i] += a.fuel_rate_lph * \
                (b.timestamp_ms - a.timestamp_ms) / 3_600_000.0
        else:
            delta = b.fuel_level_pct - a.fuel_level_pct
            if delta < 0:
                liters[bin_i] += -delta * tank_capacity_l / 100.0
    rows = []
    for i in range(nbins):
        label = f"{i * SPEED_BIN_KMH}-{(i + 1) * SPEED_BIN_KMH}" \
            if i < nbins - 1 else f"{SPEED_BIN_TOP}+"
        rows.append({"bin": label, "km": km[i], "liters": liters[i],
                     "l_per_100km": (liters[i] / km[i] * 100.0)
                     if km[i] >= 1.0 else None})
    return rows


def route_fuel_ranking(trips: Sequence[Trip], origin_zone: int,
                       dest_zone: int) -> list[dict]:
    """Routes origin->dest grouped by full signature, thriftiest first."""
    groups: dict[tuple[int, ...], list[Trip]] = {}
    for t in trips:
        sig = t.route_signature
        if sig and sig[0] == origin_zone and sig[-1] == dest_zone \
                and t.distance_km > 0:
            groups.setdefault(sig, []).append(t)
    rows = []
    for sig, members in groups.items():
        per100 = [t.fuel_used_l / t.distance_km * 100.0 for t in members]
        durations = [(t.end_ms - t.start_ms) / 1000.0 for t in members]
        rows.append({"signature": sig, "trips": len(members),
                     "mean_l_per_100km": sum(per100) / len(per100),
                     "mean_duration_s": sum(durations) / len(durations)})
    rows.sort(key=lambda r: (r["mean_l_per_100km"], r["mean_duration_s"],
                             r["signature"]))
    return rows


# -- maintenance ---------------------------------------------------------------------


@dataclass(frozen=True)
class MaintenanceItem:
    name: str
    scope: str            # "*" | "class:<name>" | "imei:<number>"
    interval_km: float
    last_service_odometer_km: float = 0.0
    warn_fraction: float = 0.9

    def __post_init__(self) -> None:
        if self.interval_km <= 0:
            raise ValueError(f"interval must be positive: {self.interval_km}")

    def applies_to(self, entry: DeviceEntry) -> bool:
        if self.scope == "*":
            return True
        kind, _, value = self.scope.partition(":")
        if kind == "class":
            return entry.vehicle_class == value
        if kind == "imei":
            return str(entry.imei) == value
        return False


def maintenance_due(items: Sequence[MaintenanceItem], entry: DeviceEntry,
                    odometer_km: float) -> list[dict]:
    """Item states for one vehicle; per-vehicle items override class items."""
    chosen: dict[str, MaintenanceItem] = {}
    for item in items:
        if not item.applies_to(entry):
            continue
        prev = chosen.get(item.name)
        if prev is None or _scope_rank(item.scope) > _scope_rank(prev.scope):
            chosen[item.name] = item
    rows = []
    for name in sorted(chosen):
        item = chosen[name]
        used = odometer_km - item.last_service_odometer_km
        remaining = item.interval_km - used
        if used >= item.interval_km:
            state = "Due"
        elif used >= item.warn_fraction * item.interval_km:
            state = "Warn"
        else:
            state = "OK"
        rows.append({"name": name, "km_remaining": remaining, "state": state})
    return rows


def _scope_rank(scope: str) -> int:
    if scope.startswith("imei:"):
        return 2
    if scope.startswith("class:"):
        return 1
    return 0


# -- missions -----------------------------------------------------------------------


@dataclass
class Mission:
    id: int
    imei: int
    driver: str
    purpose: str
    start_ms: int
    end_ms: int

    def __post_init__(self) -> None:
        if self.end_ms <= self.start_ms:
            raise ValueError("mission window must have end > start")

    def to_json(self) -> dict:
        return {"id": self.id, "imei": self.imei, "driver": self.driver,
                "purpose": self.purpose, "start_ms": self.start_ms,
                "end_ms": self.end_ms}


class MissionOverlap(ValueError):
    pass


class MissionBook:
    """Missions with per-vehicle non-overlap, persisted as JSON."""

    def __init__(self, path: Optional[str] = None):
        self.path = path
        self.missions: list[Mission] = []
        if path:
            import json
            import os
            if os.path.exists(path):
                with open(path, encoding="utf-8") as f:
                    for d in json.load(f):
                        self.missions.append(Mission(**d))

    def add(self, imei: int, driver: str, purpose: str, start_ms: int,
            end_ms: int) -> Mission:
        for m in self.missions:
            if m.imei == imei and start_ms < m.end_ms and m.start_ms < end_ms:
                raise MissionOverlap(
                    f"window overlaps mission {m.id} for vehicle {imei}")
        mission = Mission(max((m.id for m in self.missions), default=0) + 1,
                          imei, driver, purpose, start_ms, end_ms)
        self.missions.append(mission)
        self._save()
        return mission

    def _save(self) -> None:
        if not self.path:
            return
        import json
        tmp = self.path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump([m.to_json() for m in self.missions], f, indent=1)
        import os
        os.replace(tmp, self.path)


def mission_report(prs: Sequence, *, tank_capacity_l: float = 50.0,
                   trip_params: TripParams = TripParams()) -> dict:
    """Mileage, fuel, and trip count over a mission window's records."""
    records = _records(prs)
    km = records_path_km(records)
    try:
        liters, _ = fuel_consumption(records, tank_capacity_l=tank_capacity_l)
    except NoFuelData:
        liters = 0.0
    trips, _ = segment_trips(records, trip_params)
    return {"km": km, "liters": liters, "trips": len(trips)}


# -- report container + CSV -----------------------------------------------------------


@dataclass
class Report:
    title: str
    columns: tuple[str, ...]
    formats: tuple[str, ...]       # per-column: s | d | f1 | f2 | f3 | iso
    rows: list[tuple] = field(default_factory=list)

    def formatted_rows(self) -> list[list[str]]:
        return [[format_cell(v, f) for v, f in zip(row, self.formats)]
                for row in self.rows]


def format_cell(value, fmt: str) -> str:
    if value is None:
        return ""
    if fmt == "s":
        return str(value)
    if fmt == "d":
        return str(int(value))
    if fmt.startswith("f"):
        return f"{value:.{int(fmt[1:])}f}"
    if fmt == "iso":
        return datetime.fromtimestamp(value / 1000.0, tz=timezone.utc).strftime(
            "%Y-%m-%dT%H:%M:%SZ")
    raise ValueError(f"unknown cell format {fmt!r}")


def _csv_escape(cell: str) -> str:
    if any(c in cell for c in ",\"\r\n"):
        return '"' + cell.replace('"', '""') + '"'
    return cell


def export_csv(report: Report) -> bytes:
    """RFC 4180 CSV: CRLF line ends, header row, UTF-8, '.' decimals."""
    buf = io.StringIO()
    buf.write(",".join(_csv_escape(c) for c in report.columns) + "\r\n")
    for row in report.formatted_rows():
        buf.write(",".join(_csv_escape(c) for c in row) + "\r\n")
    return buf.getvalue().encode("utf-8")


def render_table(report: Report) -> str:
    """Aligned text table carrying exactly the CSV's cells."""
    rows = [list(report.columns)] + report.formatted_rows()
    widths = [max(len(r[i]) for r in rows) for i in range(len(report.columns))]
    lines = []
    for r in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"
