"""Acceptance suite: one test per shipping criterion, at pinned tolerances.

Each test prints a single PASS line on success (pytest -s shows them; a
failure prints FAIL before the assertion error).
"""

import math
import os
import random
import time

import pytest

from radfleet import nmea, wire
from radfleet.analytics import daily_mileage, daily_rows, nearest_vehicles
from radfleet.geo import (
    Circle, GeofenceZone, GeoPoint, Rectangle, Triangle, destination_point,
    haversine_distance, zone_contains, zone_transitions,
)
from radfleet.records import (
    RECORD_SIZE, EventCode, build_record, decode_record, encode_record,
)
from radfleet.sim import (
    NetworkModel, RouteScript, ScenarioConfig, VehicleSpec, Waypoint,
    out_and_back_route, run_scenario,
)
from radfleet.store import RecordStore, Transport
from radfleet.tracker import (
    BUFFER_CAPACITY_BYTES, PowerMode, SensorFrame, Tracker, TrackerConfig,
)

HOME = GeoPoint(35.70, 51.40)
MONTH_START_MS = 1_761_942_600_000  # 2025-11-01T00:00 fleet-local (+03:30)
IMEI = 356_000_000_000_001


def ok(name: str, detail: str = "") -> None:
    print(f"ACCEPTANCE {name}: PASS" + (f" ({detail})" if detail else ""))


def fail(name: str, detail: str) -> None:
    print(f"ACCEPTANCE {name}: FAIL ({detail})")
    pytest.fail(f"{name}: {detail}")


# -- 1. scripted-month daily mileage reconstruction -----------------------------------------------------


def survey_month_daily_km() -> list[float]:
    rng = random.Random(7)
    days = [round(rng.uniform(350.0, 900.0), 1) for _ in range(30)]
    days[0] = 577.0
    days[16] = 1071.0
    days[29] = 414.0
    return days


def test_survey_month_daily_mileage_reconstruction(tmp_path):
    name = "daily-mileage-reconstruction"
    daily = survey_month_daily_km()
    config = ScenarioConfig(
        vehicles=[VehicleSpec(
            imei=IMEI, label="survey-truck",
            route=out_and_back_route(HOME, daily, speed_kmh=100.0,
                                     depart_s=4 * 3600))],
        network=NetworkModel(seed=7),
        duration_s=30 * 86_400.0,
        tick_s=30.0,
        start_ms=MONTH_START_MS,
        seed=7,
        data_dir=str(tmp_path / "survey"))
    t0 = time.monotonic()
    report = run_scenario(config)
    elapsed = time.monotonic() - t0
    assert report.ok, report.oracle_failures

    store = RecordStore(config.data_dir, durable=False)
    prs = store.records_by_time(IMEI)
    rows = daily_mileage(prs, 2025, 11, utc_offset_min=210)
    full = daily_rows(prs, 2025, 11, utc_offset_min=210)
    store.close()

    for day, want in ((1, 577.0), (17, 1071.0), (30, 414.0)):
        got = rows[day - 1]["km"]
        if abs(got - want) / want > 0.01:
            fail(name, f"day {day}: {got:.1f} km vs {want} km (>1%)")
    if elapsed >= 60.0:
        fail(name, f"virtual month took {elapsed:.1f}s (>= 60s)")

    # sanity property: with a speed-proportional fuel rate, km and liters
    # correlate positively across the month
    km = [r["km"] for r in full]
    liters = [r["liters"] for r in full]
    n = len(km)
    mk, ml = sum(km) / n, sum(liters) / n
    cov = sum((a - mk) * (b - ml) for a, b in zip(km, liters))
    sk = math.sqrt(sum((a - mk) ** 2 for a in km))
    sl = math.sqrt(sum((b - ml) ** 2 for b in liters))
    corr = cov / (sk * sl)
    assert corr > 0.9
    ok(name, f"577/1071/414 within 1%, {elapsed:.1f}s wall, corr {corr:.3f}")


# -- 2. store-and-forward through a 3-day outage ------------------------------------


def test_store_and_forward_three_day_outage(tmp_path):
    name = "store-and-forward-outage"
    outage_end = 3 * 86_400.0
    config = ScenarioConfig(
        vehicles=[VehicleSpec(
            imei=IMEI, label="remote-truck",
            route=out_and_back_route(HOME, [300.0, 420.0, 260.0, 310.0],
                                     speed_kmh=100.0, depart_s=5 * 3600))],
        network=NetworkModel(outage_windows=((0.0, outage_end),), seed=3),
        duration_s=4 * 86_400.0,
        tick_s=15.0,
        start_ms=MONTH_START_MS,
        seed=3,
        data_dir=str(tmp_path / "outage"))
    report = run_scenario(config)
    v = report.vehicles[0]

    store = RecordStore(config.data_dir, durable=False)
    arrival = [pr.record.seq for pr in store.records_by_arrival(IMEI)]
    distinct = store.seq_set(IMEI)
    store.close()

    if v.delivered != v.produced or v.buffered_end != 0 or v.evicted != 0:
        fail(name, f"produced {v.produced}, delivered {v.delivered}, "
                   f"buffered {v.buffered_end}, evicted {v.evicted}")
    if arrival != sorted(arrival):
        fail(name, "records did not arrive in seq order")
    if len(arrival) != len(distinct):
        fail(name, "duplicates were stored")
    if v.max_buffer_bytes >= 16 * 2**20:
        fail(name, f"buffer peaked at {v.max_buffer_bytes} bytes")
    if v.max_buffer_bytes == 0:
        fail(name, "outage never buffered anything")
    ok(name, f"{v.produced} records, peak buffer {v.max_buffer_bytes} B, "
             f"all delivered in order")


# -- 3. retention arithmetic ---------------------------------------------------------


def test_buffer_retention_arithmetic():
    name = "flash-retention-arithmetic"
    records_120_days = 120 * 86_400 // 60  # default 60 s moving cadence
    assert records_120_days == 172_800
    used = records_120_days * RECORD_SIZE
    assert used == 11_059_200
    if used > BUFFER_CAPACITY_BYTES:
        fail(name, f"{used} B exceeds {BUFFER_CAPACITY_BYTES} B")
    ok(name, f"{used} B of {BUFFER_CAPACITY_BYTES} B")


# -- 4. codec suite -----------------------------------------------------------------


def test_codec_suite():
    name = "codec-suite"
    rng = random.Random(404)

    # NMEA round-trip, 10,000 cases
    for _ in range(10_000):
        fix = nmea.Fix(
            timestamp_ms=rng.randrange(1_500_000_000_000, 1_900_000_000_000),
            lat=rng.uniform(-90, 90), lon=rng.uniform(-180, 180),
            speed_kmh=rng.uniform(0, 250), heading=rng.uniform(0, 360),
            altitude_m=rng.uniform(-100, 5000), satellites=rng.randrange(4, 14),
            hdop=rng.uniform(0.5, 9.9), valid=True)
        back = nmea.fuse_fix([nmea.parse_sentence(nmea.serialize_rmc(fix)),
                              nmea.parse_sentence(nmea.serialize_gga(fix))])
        assert abs(back.lat - fix.lat) <= 1e-5
        assert abs(back.lon - fix.lon) <= 1e-5
        assert abs(back.speed_kmh - fix.speed_kmh) <= 0.2

    # binary record round-trip, 10,000 cases
    from test_records import random_record
    for _ in range(10_000):
        rec = random_record(rng)
        assert decode_record(encode_record(rec)) == rec

    # CRC check value against the independent bitwise oracle
    def crc_bitwise(data: bytes) -> int:
        crc = 0xFFFF
        for byte in data:
            crc ^= byte << 8
            for _ in range(8):
                crc = ((crc << 1) ^ 0x1021) & 0xFFFF if crc & 0x8000 \
                    else (crc << 1) & 0xFFFF
        return crc

    assert wire.crc16(b"123456789") == 0x29B1 == crc_bitwise(b"123456789")

    # exhaustive single-bit corruption of a golden 3-record frame
    records = [encode_record(build_record(
        timestamp_ms=1_700_000_000_000 + i, event_code=EventCode.Periodic,
        seq=i + 1, lat=35.7, lon=51.4)) for i in range(3)]
    golden = wire.encode_frame(IMEI, records)
    for byte_i in range(len(golden)):
        for bit in range(8):
            corrupted = bytearray(golden)
            corrupted[byte_i] ^= 1 << bit
            try:
                wire.decode_frame(bytes(corrupted))
                fail(name, f"bit flip at byte {byte_i} bit {bit} decoded")
            except (wire.BadMagic, wire.NeedMoreBytes):
                assert byte_i < 2 or byte_i in (11, 12)
            except wire.BadCrc:
                pass

    # stream reassembly under arbitrary chunking
    blob = b"".join(wire.encode_frame(IMEI + i, records[:i % 4])
                    for i in range(10))
    for _ in range(50):
        stream = wire.FrameStream()
        got = []
        pos = 0
        while pos < len(blob):
            step = rng.randrange(1, 130)
            got.extend(stream.feed(blob[pos:pos + step]))
            pos += step
        assert [(f.imei, len(f.records)) for f in got] == \
            [(IMEI + i, i % 4) for i in range(10)]
    ok(name, "10k NMEA + 10k record round-trips, bit flips, chunking, CRC")


# -- 5. geofence suite ---------------------------------------------------------------


def test_geofence_suite():
    name = "geofence-suite"
    rng = random.Random(505)

    circle = GeofenceZone(1, Circle(GeoPoint(35.0, 51.0), 2500.0))
    for _ in range(10_000):
        p = GeoPoint(35.0 + rng.uniform(-0.08, 0.08),
                     51.0 + rng.uniform(-0.08, 0.08))
        want = haversine_distance(GeoPoint(35.0, 51.0), p) <= 2500.0
        assert zone_contains(circle, p) == want

    rect = GeofenceZone(2, Rectangle(GeoPoint(34.95, 50.95),
                                     GeoPoint(35.05, 51.10)))
    for _ in range(10_000):
        p = GeoPoint(35.0 + rng.uniform(-0.1, 0.1),
                     51.0 + rng.uniform(-0.15, 0.2))
        want = (34.95 <= p.lat <= 35.05) and (50.95 <= p.lon <= 51.10)
        assert zone_contains(rect, p) == want

    tri = Triangle(GeoPoint(35.00, 51.00), GeoPoint(35.30, 51.05),
                   GeoPoint(35.10, 51.40))
    tri_zone = GeofenceZone(3, tri)
    checked = 0
    for _ in range(10_000):
        p = GeoPoint(rng.uniform(34.9, 35.4), rng.uniform(50.9, 51.5))
        if _tri_edge_distance(tri, p) <= 1e-9:
            continue
        assert zone_contains(tri_zone, p) == _tri_winding(tri, p)
        checked += 1
    assert checked > 9_900

    # enter/exit on a random walk equals the per-step membership diff
    zones = [circle, rect, tri_zone]
    pos = GeoPoint(35.05, 51.05)
    member = {z.id: zone_contains(z, pos) for z in zones}
    prev = pos
    for _ in range(3_000):
        pos = GeoPoint(max(-90, min(90, prev.lat + rng.uniform(-0.03, 0.03))),
                       max(-180, min(180, prev.lon + rng.uniform(-0.03, 0.03))))
        events = zone_transitions(prev, pos, zones)
        expected = []
        for z in zones:
            now_in = zone_contains(z, pos)
            if now_in and not member[z.id]:
                expected.append((z.id, "enter"))
            if member[z.id] and not now_in:
                expected.append((z.id, "exit"))
            member[z.id] = now_in
        expected.sort()
        assert [(e.zone_id, e.kind) for e in events] == expected
        prev = pos
    ok(name, "30k containment points + 3k-step walk agree with oracles")


def _tri_plane(tri):
    anchor_lat = (tri.a.lat + tri.b.lat + tri.c.lat) / 3.0
    anchor_lon = (tri.a.lon + tri.b.lon + tri.c.lon) / 3.0
    k = math.cos(math.radians(anchor_lat))
    return lambda q: ((q.lon - anchor_lon) * k, q.lat - anchor_lat)


def _tri_winding(tri, p) -> bool:
    xy = _tri_plane(tri)
    verts = [xy(tri.a), xy(tri.b), xy(tri.c)]
    px, py = xy(p)
    wn = 0
    for i in range(3):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % 3]
        cross = (x2 - x1) * (py - y1) - (px - x1) * (y2 - y1)
        if y1 <= py:
            if y2 > py and cross > 0:
                wn += 1
        elif y2 <= py and cross < 0:
            wn -= 1
    return wn != 0


def _tri_edge_distance(tri, p) -> float:
    xy = _tri_plane(tri)
    verts = [xy(tri.a), xy(tri.b), xy(tri.c)]
    px, py = xy(p)
    best = float("inf")
    for i in range(3):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % 3]
        dx, dy = x2 - x1, y2 - y1
        t = max(0.0, min(1.0, ((px - x1) * dx + (py - y1) * dy)
                         / (dx * dx + dy * dy)))
        best = min(best, math.hypot(px - (x1 + t * dx), py - (y1 + t * dy)))
    return best


# -- 6. nearest-vehicle ranking --------------------------------------------------------


def test_nearest_vehicle_exhaustive():
    name = "nearest-vehicle-ranking"
    rng = random.Random(606)
    target = GeoPoint(35.0, 51.0)
    for fleet in (1, 2, 3, 7, 25, 100, 1000):
        snaps = []
        for i in range(fleet):
            p = GeoPoint(35.0 + rng.uniform(-0.8, 0.8),
                         51.0 + rng.uniform(-0.8, 0.8))
            snaps.append({"imei": i + 1, "label": f"v{i + 1}",
                          "age_s": rng.uniform(0, 899),
                          "last": {"lat": p.lat, "lon": p.lon}})
        out = nearest_vehicles(snaps, target, limit=fleet)
        brute = sorted(((haversine_distance(
            target, GeoPoint(s["last"]["lat"], s["last"]["lon"])), s["imei"])
            for s in snaps))
        got = [(r["distance_m"], r["imei"]) for r in out["ranked"]]
        if got != brute:
            fail(name, f"fleet {fleet}: ranking diverged from brute force")
    ok(name, "fleets of 1..1000 match the exhaustive sort")


# -- 7. power model ------------------------------------------------------------------


def test_deep_sleep_endurance_600h():
    name = "deep-sleep-endurance"
    tracker = Tracker(TrackerConfig(imei=IMEI))
    base = MONTH_START_MS

    def quiet(hour):
        return SensorFrame(tick_time_ms=base + int(hour * 3_600_000),
                           nmea_lines=(), ignition=False,
                           accel_mg=(0, 0, 1000), gsm_available=False,
                           external_power_v=0.0)

    tracker.step(quiet(0))
    tracker.step(quiet(1))
    assert tracker.mode is PowerMode.DEEP_SLEEP
    start_battery = tracker.battery_mah
    hours = 1
    while tracker.battery_mah > 0:
        hours += 1
        tracker.step(quiet(hours))
        if hours > 800:
            fail(name, "battery never emptied")
    endurance = hours - 1  # hours spent in deep sleep
    if abs(endurance - 600) > 1:
        fail(name, f"endurance {endurance} h, expected 600 +- 1 tick")
    ok(name, f"{start_battery:.0f} mAh / 3 mA -> {endurance} h")


# -- 8. crash safety ------------------------------------------------------------------


class _DyingFile:
    def __init__(self, real, budget):
        self._real = real
        self._budget = budget

    def write(self, data):
        if self._budget <= 0:
            raise OSError("simulated power cut")
        chunk = data[:self._budget]
        self._real.write(chunk)
        self._real.flush()
        self._budget -= len(data)
        if self._budget < 0:
            raise OSError("simulated power cut")
        return len(chunk)

    def __getattr__(self, item):
        return getattr(self._real, item)


def test_crash_safety_20_randomized_kill_points(tmp_path):
    name = "ingest-crash-safety"
    rng = random.Random(808)
    for trial in range(20):
        data_dir = tmp_path / f"kill{trial}"
        store = RecordStore(str(data_dir), durable=False)
        acked: set[int] = set()
        seq = 0
        kill_after = rng.randrange(64, 5000)
        try:
            for batch_i in range(50):
                batch = []
                for _ in range(rng.randrange(1, 7)):
                    seq += 1
                    batch.append(encode_record(build_record(
                        timestamp_ms=1_700_000_000_000 + seq,
                        event_code=EventCode.Periodic, seq=seq,
                        lat=35.7, lon=51.4)))
                dev = store._open_device(IMEI)
                if not isinstance(dev.log_file, _DyingFile):
                    dev.log_file = _DyingFile(dev.log_file, kill_after)
                store.append_batch(IMEI, batch, batch_i, Transport.TCP)
                acked.update(range(seq - len(batch) + 1, seq + 1))
        except OSError:
            pass  # power cut between write and ack
        finally:
            try:
                store.close()
            except OSError:
                pass
        reopened = RecordStore(str(data_dir), durable=False)
        survived = reopened.seq_set(IMEI)
        reopened.close()
        missing = acked - survived
        if missing:
            fail(name, f"trial {trial} lost acked records {sorted(missing)}")
    ok(name, "20 randomized kill points, acked set always intact")


# -- 9. scenario determinism -----------------------------------------------------------


def test_scenario_determinism_byte_identical(tmp_path):
    name = "scenario-determinism"

    def run(tag):
        east = destination_point(HOME, 90.0, 12_000.0)
        config = ScenarioConfig(
            vehicles=[
                VehicleSpec(imei=IMEI, label="a", route=RouteScript(
                    start=HOME,
                    waypoints=[Waypoint(east, 70.0, dwell_s=120.0),
                               Waypoint(HOME, 70.0)],
                    panic_at_s=(333.0,))),
                VehicleSpec(imei=IMEI + 1, label="b",
                            tracker_overrides={"transport": "udp"},
                            route=RouteScript(
                                start=east,
                                waypoints=[Waypoint(HOME, 55.0)])),
            ],
            network=NetworkModel(outage_windows=((600.0, 900.0),),
                                 drop_probability=0.2, seed=12),
            duration_s=2_400.0,
            tick_s=1.0,
            start_ms=MONTH_START_MS,
            seed=12,
            data_dir=str(tmp_path / tag),
            commands=[(400.0, IMEI, "OUT 0 1")])
        report = run_scenario(config)
        files = {}
        for fn in sorted(os.listdir(config.data_dir)):
            with open(os.path.join(config.data_dir, fn), "rb") as f:
                files[fn] = f.read()
        return report.to_csv(), report.summary_text(), files

    csv1, sum1, files1 = run("run1")
    csv2, sum2, files2 = run("run2")
    if csv1 != csv2 or sum1 != sum2:
        fail(name, "scenario report differed between identical runs")
    if set(files1) != set(files2):
        fail(name, f"file sets differ: {set(files1) ^ set(files2)}")
    diff = [fn for fn in files1 if files1[fn] != files2[fn]]
    if diff:
        fail(name, f"files not byte-identical: {diff}")
    ok(name, f"{len(files1)} store files byte-identical across runs")
