"""Report builders shared by the HTTP API and the CLI.

Each builder reads an immutable store snapshot and returns a Report whose
rows render identically as JSON, CSV, and the CLI table.
"""

from __future__ import annotations

from typing import Optional, Sequence

from . import analytics
from .analytics import (
    MaintenanceItem, Report, TripParams, daily_rows, fuel_by_speed,
    maintenance_due, mission_report, month_range, monthly_report,
)
from .store import DeviceEntry, RecordStore, Registry


def _tank(registry: Registry, imei: int) -> float:
    entry = registry.get(imei)
    return entry.tank_capacity_l if entry else 50.0


def build_daily(store: RecordStore, registry: Registry, imei: int,
                year: int, month: int, *, utc_offset_min: int) -> Report:
    rows = daily_rows(store.records_by_time(imei), year, month,
                      utc_offset_min=utc_offset_min,
                      tank_capacity_l=_tank(registry, imei))
    report = Report(f"daily {year:04d}-{month:02d} for {imei}",
                    ("day", "km", "liters"), ("d", "f3", "f3"))
    report.rows = [(r["day"], r["km"], r["liters"]) for r in rows]
    return report


def build_monthly(store: RecordStore, registry: Registry, imei: int,
                  from_month: tuple[int, int], to_month: tuple[int, int], *,
                  utc_offset_min: int) -> Report:
    rows = monthly_report(store.records_by_time(imei),
                          month_range(from_month, to_month),
                          utc_offset_min=utc_offset_min,
                          tank_capacity_l=_tank(registry, imei))
    report = Report(f"monthly for {imei}", ("month", "km", "liters"),
                    ("s", "f3", "f3"))
    report.rows = [(r["month"], r["km"], r["liters"]) for r in rows]
    return report


def build_compare(store: RecordStore, registry: Registry, imei: int,
                  month_a: tuple[int, int], month_b: tuple[int, int], *,
                  utc_offset_min: int) -> Report:
    rows = analytics.compare_months(store.records_by_time(imei), month_a,
                                    month_b, utc_offset_min=utc_offset_min,
                                    tank_capacity_l=_tank(registry, imei))
    report = Report(f"compare {month_a} vs {month_b} for {imei}",
                    ("day", "km_a", "km_b", "liters_a", "liters_b"),
                    ("d", "f3", "f3", "f3", "f3"))
    report.rows = [(r["day"], r["km_a"], r["km_b"], r["liters_a"],
                    r["liters_b"]) for r in rows]
    return report


def build_fuel_by_speed(store: RecordStore, registry: Registry, imei: int,
                        from_ms: Optional[int],
                        to_ms: Optional[int]) -> Report:
    rows = fuel_by_speed(store.records_by_time(imei, from_ms, to_ms),
                         tank_capacity_l=_tank(registry, imei))
    report = Report(f"fuel by speed for {imei}",
                    ("bin_kmh", "km", "liters", "l_per_100km"),
                    ("s", "f3", "f3", "f2"))
    report.rows = [(r["bin"], r["km"], r["liters"], r["l_per_100km"])
                   for r in rows]
    return report


def vehicle_odometer_km(store: RecordStore, imei: int) -> float:
    """Mileage of record: the newest record's odometer."""
    prs = store.records_by_arrival(imei)
    if not prs:
        return 0.0
    newest = max(prs, key=lambda pr: (pr.record.timestamp_ms, pr.record.seq))
    return newest.record.odometer_m / 1000.0


def build_maintenance(store: RecordStore, registry: Registry,
                      items: Sequence[MaintenanceItem], imei: int) -> Report:
    entry = registry.get(imei) or DeviceEntry(imei=imei)
    odo_km = vehicle_odometer_km(store, imei)
    rows = maintenance_due(items, entry, odo_km)
    report = Report(f"maintenance for {imei} at {odo_km:.1f} km",
                    ("item", "km_remaining", "state"), ("s", "f1", "s"))
    report.rows = [(r["name"], r["km_remaining"], r["state"]) for r in rows]
    return report


def build_mission_window(store: RecordStore, registry: Registry, imei: int,
                         from_ms: int, to_ms: int) -> Report:
    out = mission_report(store.records_by_time(imei, from_ms, to_ms),
                         tank_capacity_l=_tank(registry, imei),
                         trip_params=TripParams(
                             tank_capacity_l=_tank(registry, imei)))
    report = Report(f"mission window for {imei}",
                    ("from", "to", "km", "liters", "trips"),
                    ("iso", "iso", "f3", "f3", "d"))
    report.rows = [(from_ms, to_ms, out["km"], out["liters"], out["trips"])]
    return report


def build_nearest(ranked: dict) -> Report:
    report = Report("nearest vehicles",
                    ("imei", "label", "distance_m", "age_s"),
                    ("d", "s", "f1", "f1"))
    report.rows = [(r["imei"], r["label"], r["distance_m"], r["age_s"])
                   for r in ranked["ranked"]]
    return report


def report_json(report: Report) -> dict:
    return {"title": report.title, "columns": list(report.columns),
            "rows": [list(r) for r in report.rows]}
