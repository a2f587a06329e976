"""HTTP API tests over a live server socket, including the SSE stream."""

import json
import socket
import threading
import urllib.error
import urllib.request

import pytest

from radfleet import wire
from radfleet.analytics import MaintenanceItem, MissionBook
from radfleet.httpapi import ApiContext, HttpApiServer
from radfleet.records import EventCode, build_record, encode_record
from radfleet.server import IngestCore
from radfleet.store import DeviceEntry, RecordStore, Registry, Transport

IMEI = 356_000_000_000_001
BASE = 1_761_942_600_000 + 6 * 3600 * 1000  # inside 2025-11-01 fleet-local


class FakeClock:
    def __init__(self, start=BASE + 3_600_000):
        self.t = start

    def __call__(self):
        return self.t


@pytest.fixture()
def api(tmp_path):
    store = RecordStore(str(tmp_path / "data"), durable=False)
    registry = Registry(str(tmp_path / "registry.json"))
    registry.add(DeviceEntry(imei=IMEI, label="Truck 1", vehicle_class="truck"))
    core = IngestCore(store, registry, now_ms=FakeClock())
    session = core.authenticate(wire.Frame(IMEI, ()), Transport.TCP)
    records = []
    for i in range(60):
        records.append(encode_record(build_record(
            timestamp_ms=BASE + i * 60_000,
            event_code=EventCode.Panic if i == 30 else EventCode.Periodic,
            seq=i + 1, lat=35.70 + i * 0.001, lon=51.40, speed_kmh=60.0,
            heading=0.0, satellites=8, hdop=1.0, ignition=True,
            fuel_rate_lph=8.0, odometer_m=9_500_000 + i * 100)))
    core.ingest(session, wire.Frame(IMEI, tuple(records)))
    ctx = ApiContext(core, missions=MissionBook(str(tmp_path / "missions.json")),
                     maintenance=[MaintenanceItem("engine oil", "*", 10_000.0)])
    server = HttpApiServer(ctx, host="127.0.0.1", port=0)
    server.start()
    yield server, core
    server.stop()


def get_json(server, path):
    with urllib.request.urlopen(
            f"http://127.0.0.1:{server.port}{path}", timeout=5) as resp:
        return json.loads(resp.read())


def post_json(server, path, payload):
    req = urllib.request.Request(
        f"http://127.0.0.1:{server.port}{path}",
        data=json.dumps(payload).encode(),
        headers={"Content-Type": "application/json"}, method="POST")
    with urllib.request.urlopen(req, timeout=5) as resp:
        return json.loads(resp.read()), resp.status


def test_vehicles_endpoint(api):
    server, _ = api
    vehicles = get_json(server, "/api/vehicles")
    assert len(vehicles) == 1
    assert vehicles[0]["imei"] == IMEI
    assert vehicles[0]["last"]["seq"] == 60


def test_track_endpoint_window(api):
    server, _ = api
    row = get_json(server, f"/api/vehicles/{IMEI}/track"
                           f"?from={BASE}&to={BASE + 5 * 60_000}")
    assert [p["seq"] for p in row] == [1, 2, 3, 4, 5]
    assert row[0]["lat"] == pytest.approx(35.70)


def test_nearest_endpoint(api):
    server, _ = api
    out = get_json(server, "/api/nearest?lat=35.70&lon=51.40&limit=5")
    assert len(out["ranked"]) == 1
    assert out["ranked"][0]["imei"] == IMEI


def test_daily_report_json_and_csv(api):
    server, _ = api
    out = get_json(server, f"/api/reports/daily?vehicle={IMEI}&month=2025-11")
    assert out["columns"] == ["day", "km", "liters"]
    assert len(out["rows"]) == 30
    day1 = out["rows"][0]
    assert day1[0] == 1 and day1[1] == pytest.approx(6.56, rel=0.02)
    url = (f"http://127.0.0.1:{server.port}/api/reports/daily"
           f"?vehicle={IMEI}&month=2025-11&format=csv")
    with urllib.request.urlopen(url, timeout=5) as resp:
        body = resp.read()
        assert resp.headers["Content-Type"].startswith("text/csv")
    assert body.startswith(b"day,km,liters\r\n1,")


def test_monthly_and_compare_reports(api):
    server, _ = api
    monthly = get_json(server, f"/api/reports/monthly?vehicle={IMEI}"
                               f"&from=2025-10&to=2025-11")
    assert [r[0] for r in monthly["rows"]] == ["2025-10", "2025-11"]
    compare = get_json(server, f"/api/reports/compare?vehicle={IMEI}"
                               f"&monthA=2025-10&monthB=2025-11")
    assert len(compare["rows"]) == 31
    assert compare["rows"][0][2] == monthly["rows"][1][1] == pytest.approx(
        compare["rows"][0][2])


def test_maintenance_report(api):
    server, _ = api
    out = get_json(server, f"/api/reports/maintenance?vehicle={IMEI}")
    assert out["rows"][0][0] == "engine oil"
    assert out["rows"][0][2] == "Warn"  # odometer 9.5k of a 10k interval


def test_fuel_by_speed_report(api):
    server, _ = api
    out = get_json(server, f"/api/reports/fuel-by-speed?vehicle={IMEI}")
    by_bin = dict((r[0], r) for r in out["rows"])
    assert by_bin["60-70"][1] > 0


def test_alerts_endpoint(api):
    server, _ = api
    alerts = get_json(server, "/api/alerts")
    assert len(alerts) == 1 and alerts[0]["event"] == "Panic"
    assert get_json(server, f"/api/alerts?since={alerts[0]['id']}") == []


def test_missions_create_list_overlap(api):
    server, _ = api
    created, status = post_json(server, "/api/missions", {
        "vehicle": IMEI, "driver": "d1", "purpose": "supply",
        "start_ms": BASE, "end_ms": BASE + 3_600_000})
    assert status == 201
    assert created["km"] == pytest.approx(6.56, rel=0.02)
    assert created["trips"] == 1
    listed = get_json(server, "/api/missions")
    assert len(listed) == 1
    with pytest.raises(urllib.error.HTTPError) as exc:
        post_json(server, "/api/missions", {
            "vehicle": IMEI, "driver": "d1", "purpose": "overlap",
            "start_ms": BASE + 60_000, "end_ms": BASE + 120_000})
    assert exc.value.code == 409


def test_command_endpoint_acked_via_live_link(api):
    server, core = api
    core.attach_live_link(IMEI, lambda text: f"OK {text}")
    created, status = post_json(server, "/api/commands",
                                {"vehicle": IMEI, "command": "OUT 0 1"})
    assert status == 201
    assert created["status"] == "acked"
    listed = get_json(server, f"/api/commands?vehicle={IMEI}")
    assert listed[-1]["id"] == created["id"]


def test_command_endpoint_no_route(api):
    server, core = api
    core.sms_enabled = False
    with pytest.raises(urllib.error.HTTPError) as exc:
        post_json(server, "/api/commands",
                  {"vehicle": IMEI, "command": "OUT 0 1"})
    assert exc.value.code == 409


def test_unknown_endpoint_404(api):
    server, _ = api
    with pytest.raises(urllib.error.HTTPError) as exc:
        get_json(server, "/api/nope")
    assert exc.value.code == 404


def read_sse_events(sock, count, timeout=5.0):
    sock.settimeout(timeout)
    buf = b""
    events = []
    while len(events) < count:
        buf += sock.recv(4096)
        while b"\n\n" in buf:
            chunk, buf = buf.split(b"\n\n", 1)
            for line in chunk.splitlines():
                if line.startswith(b"data: "):
                    events.append(json.loads(line[6:]))
    return events


def test_sse_stream_pushes_ingested_records(api):
    server, core = api
    sock = socket.create_connection(("127.0.0.1", server.port), timeout=5)
    sock.sendall(b"GET /api/stream HTTP/1.1\r\nHost: x\r\n\r\n")
    # wait for headers + the open comment
    header = b""
    while b"\r\n\r\n" not in header:
        header += sock.recv(1024)
    assert b"text/event-stream" in header

    session = core.authenticate(wire.Frame(IMEI, ()), Transport.TCP)

    def push():
        rec = encode_record(build_record(
            timestamp_ms=BASE + 7_000_000, event_code=EventCode.Periodic,
            seq=1000, lat=35.9, lon=51.5, speed_kmh=50.0, satellites=8))
        core.ingest(session, wire.Frame(IMEI, (rec,)))

    threading.Thread(target=push).start()
    events = read_sse_events(sock, 1)
    assert events[0]["type"] == "position"
    assert events[0]["seq"] == 1000
    sock.close()
