"""Geodesy and geofence tests against independent brute-force oracles."""

import math
import random

import pytest

from radfleet.geo import (
    EARTH_RADIUS_M, Circle, DegeneratePair, GeofenceZone, GeoPoint,
    Rectangle, TooManyZones, Triangle, ZoneEvent, destination_point,
    haversine_distance, initial_bearing, path_length, zone_contains,
    zone_membership, zone_transitions,
)


def law_of_cosines_m(a: GeoPoint, b: GeoPoint) -> float:
    # independent great-circle oracle (spherical law of cosines)
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    dl = math.radians(b.lon - a.lon)
    x = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return EARTH_RADIUS_M * math.acos(max(-1.0, min(1.0, x)))


def bearing_oracle(a: GeoPoint, b: GeoPoint) -> float:
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    dl = math.radians(b.lon - a.lon)
    y = math.sin(dl) * math.cos(p2)
    x = math.cos(p1) * math.sin(p2) - math.sin(p1) * math.cos(p2) * math.cos(dl)
    deg = math.degrees(math.atan2(y, x))
    return deg + 360.0 if deg < 0 else deg


def test_haversine_identity():
    p = GeoPoint(35.7, 51.4)
    assert haversine_distance(p, p) == 0.0


def test_haversine_one_degree_arc():
    # closed form: R * pi / 180 = 111194.93 m
    d = haversine_distance(GeoPoint(0, 0), GeoPoint(0, 1))
    assert abs(d - 111195.0) <= 1.0


def test_haversine_against_law_of_cosines():
    rng = random.Random(11)
    for _ in range(2000):
        a = GeoPoint(rng.uniform(-85, 85), rng.uniform(-179, 179))
        b = GeoPoint(rng.uniform(-85, 85), rng.uniform(-179, 179))
        d = haversine_distance(a, b)
        o = law_of_cosines_m(a, b)
        if o > 1000.0:  # law of cosines is ill-conditioned for tiny arcs
            assert abs(d - o) / o <= 1e-9


def test_haversine_symmetric_nonnegative():
    rng = random.Random(12)
    for _ in range(500):
        a = GeoPoint(rng.uniform(-90, 90), rng.uniform(-180, 180))
        b = GeoPoint(rng.uniform(-90, 90), rng.uniform(-180, 180))
        assert haversine_distance(a, b) >= 0.0
        assert haversine_distance(a, b) == haversine_distance(b, a)


def test_triangle_inequality():
    rng = random.Random(13)
    for _ in range(500):
        pts = [GeoPoint(rng.uniform(-80, 80), rng.uniform(-170, 170))
               for _ in range(3)]
        ab = haversine_distance(pts[0], pts[1])
        bc = haversine_distance(pts[1], pts[2])
        ac = haversine_distance(pts[0], pts[2])
        assert ac <= ab + bc + 1e-6 * max(ac, 1.0)


def test_bearing_cardinal_directions():
    assert initial_bearing(GeoPoint(0, 0), GeoPoint(1, 0)) == pytest.approx(0.0, abs=1e-9)
    assert initial_bearing(GeoPoint(0, 0), GeoPoint(0, 1)) == pytest.approx(90.0, abs=1e-9)


def test_bearing_degenerate_pair():
    with pytest.raises(DegeneratePair):
        initial_bearing(GeoPoint(10, 10), GeoPoint(10, 10))


def test_bearing_against_oracle():
    rng = random.Random(14)
    for _ in range(2000):
        a = GeoPoint(rng.uniform(-85, 85), rng.uniform(-179, 179))
        b = GeoPoint(rng.uniform(-85, 85), rng.uniform(-179, 179))
        if (a.lat, a.lon) == (b.lat, b.lon):
            continue
        got = initial_bearing(a, b)
        want = bearing_oracle(a, b) % 360.0
        d = abs(got - want) % 360.0
        assert min(d, 360.0 - d) <= 1e-6


def test_destination_point_inverts_bearing_distance():
    rng = random.Random(15)
    for _ in range(500):
        start = GeoPoint(rng.uniform(-60, 60), rng.uniform(-170, 170))
        brg = rng.uniform(0, 360)
        dist = rng.uniform(1, 500_000)
        end = destination_point(start, brg, dist)
        assert haversine_distance(start, end) == pytest.approx(dist, rel=1e-9, abs=1e-6)


def test_path_length_edge_cases():
    assert path_length([]) == 0.0
    assert path_length([GeoPoint(1, 1)]) == 0.0


def test_path_length_square():
    # four points ~1 km apart: open path 3 km, closed 4 km
    a = GeoPoint(0.0, 0.0)
    b = destination_point(a, 0.0, 1000.0)
    c = destination_point(b, 90.0, 1000.0)
    d = destination_point(c, 180.0, 1000.0)
    open_path = path_length([a, b, c, d])
    closed = path_length([a, b, c, d, a])
    assert open_path == pytest.approx(3000.0, rel=1e-4)
    assert closed == pytest.approx(4000.0, rel=1e-4)


# -- containment ------------------------------------------------------------

def test_circle_contains_center_and_excludes_beyond_radius():
    zone = GeofenceZone(1, Circle(GeoPoint(35.7, 51.4), 500.0))
    assert zone_contains(zone, GeoPoint(35.7, 51.4))
    just_out = destination_point(GeoPoint(35.7, 51.4), 45.0, 501.0)
    assert not zone_contains(zone, just_out)


def test_circle_matches_haversine_definition_exactly():
    rng = random.Random(21)
    center = GeoPoint(35.0, 51.0)
    zone = GeofenceZone(2, Circle(center, 2000.0))
    for _ in range(10_000):
        p = GeoPoint(center.lat + rng.uniform(-0.1, 0.1),
                     center.lon + rng.uniform(-0.1, 0.1))
        assert zone_contains(zone, p) == (haversine_distance(center, p) <= 2000.0)


def test_rectangle_bounds_and_boundary_inclusive():
    zone = GeofenceZone(3, Rectangle(GeoPoint(35.0, 51.0), GeoPoint(36.0, 52.0)))
    assert zone_contains(zone, GeoPoint(35.5, 51.5))
    assert zone_contains(zone, GeoPoint(35.0, 51.0))   # corner on boundary
    assert zone_contains(zone, GeoPoint(36.0, 52.0))
    assert not zone_contains(zone, GeoPoint(36.0001, 51.5))


def test_rectangle_rejects_swapped_corners():
    with pytest.raises(ValueError):
        Rectangle(GeoPoint(36.0, 51.0), GeoPoint(35.0, 52.0))


def test_triangle_rejects_collinear_and_oversized():
    with pytest.raises(ValueError):
        Triangle(GeoPoint(0, 0), GeoPoint(0, 0.1), GeoPoint(0, 0.2))
    with pytest.raises(ValueError):
        Triangle(GeoPoint(0, 0), GeoPoint(2.0, 0), GeoPoint(0, 2.0))


def winding_number_contains(tri: Triangle, p: GeoPoint) -> bool:
    # independent point-in-polygon oracle in the same local plane
    anchor_lat = (tri.a.lat + tri.b.lat + tri.c.lat) / 3.0
    anchor_lon = (tri.a.lon + tri.b.lon + tri.c.lon) / 3.0
    k = math.cos(math.radians(anchor_lat))

    def xy(q):
        return ((q.lon - anchor_lon) * k, q.lat - anchor_lat)

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
        else:
            if y2 <= py and cross < 0:
                wn -= 1
    if wn != 0:
        return True
    # boundary check: point on any edge counts as inside
    for i in range(3):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % 3]
        cross = (x2 - x1) * (py - y1) - (px - x1) * (y2 - y1)
        if abs(cross) < 1e-18:
            if min(x1, x2) - 1e-12 <= px <= max(x1, x2) + 1e-12 and \
               min(y1, y2) - 1e-12 <= py <= max(y1, y2) + 1e-12:
                return True
    return False


def edge_distance_deg(tri: Triangle, p: GeoPoint) -> float:
    anchor_lat = (tri.a.lat + tri.b.lat + tri.c.lat) / 3.0
    anchor_lon = (tri.a.lon + tri.b.lon + tri.c.lon) / 3.0
    k = math.cos(math.radians(anchor_lat))

    def xy(q):
        return ((q.lon - anchor_lon) * k, q.lat - anchor_lat)

    verts = [xy(tri.a), xy(tri.b), xy(tri.c)]
    px, py = xy(p)
    best = float("inf")
    for i in range(3):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % 3]
        dx, dy = x2 - x1, y2 - y1
        t = max(0.0, min(1.0, ((px - x1) * dx + (py - y1) * dy) / (dx * dx + dy * dy)))
        best = min(best, math.hypot(px - (x1 + t * dx), py - (y1 + t * dy)))
    return best


def test_triangle_against_winding_number_oracle():
    rng = random.Random(31)
    tri = Triangle(GeoPoint(35.00, 51.00), GeoPoint(35.30, 51.05),
                   GeoPoint(35.10, 51.40))
    zone = GeofenceZone(4, tri)
    checked = 0
    for _ in range(10_000):
        p = GeoPoint(rng.uniform(34.9, 35.4), rng.uniform(50.9, 51.5))
        if edge_distance_deg(tri, p) <= 1e-9:
            continue  # boundary band where float sign is arbitrary
        assert zone_contains(zone, p) == winding_number_contains(tri, p)
        checked += 1
    assert checked > 9900


# -- transitions -------------------------------------------------------------

def standard_zones():
    return [
        GeofenceZone(1, Circle(GeoPoint(35.10, 51.10), 8000.0)),
        GeofenceZone(2, Rectangle(GeoPoint(35.05, 51.05), GeoPoint(35.25, 51.30))),
        GeofenceZone(3, Triangle(GeoPoint(35.00, 51.00), GeoPoint(35.30, 51.05),
                                 GeoPoint(35.10, 51.40))),
    ]


def test_no_move_no_events():
    zones = standard_zones()
    p = GeoPoint(35.1, 51.1)
    assert zone_transitions(p, p, zones) == []


def test_enter_on_circle_crossing():
    zones = [GeofenceZone(9, Circle(GeoPoint(35.0, 51.0), 1000.0))]
    outside = destination_point(GeoPoint(35.0, 51.0), 0.0, 2000.0)
    events = zone_transitions(outside, GeoPoint(35.0, 51.0), zones)
    assert events == [ZoneEvent(9, "enter")]


def test_baseline_with_absent_prev_is_silent():
    zones = standard_zones()
    assert zone_transitions(None, GeoPoint(35.1, 51.1), zones) == []


def test_too_many_zones_rejected():
    zones = [GeofenceZone(i + 1, Circle(GeoPoint(0, 0), 10.0))
             for i in range(151)]
    with pytest.raises(TooManyZones):
        zone_transitions(None, GeoPoint(0, 0), zones)


def test_random_walk_matches_membership_diff_oracle():
    rng = random.Random(41)
    zones = standard_zones()
    pos = GeoPoint(35.15, 51.15)
    prev_member = {z.id: zone_contains(z, pos) for z in zones}
    prev = pos
    for _ in range(2000):
        pos = GeoPoint(
            max(-90, min(90, prev.lat + rng.uniform(-0.02, 0.02))),
            max(-180, min(180, prev.lon + rng.uniform(-0.02, 0.02))))
        events = zone_transitions(prev, pos, zones)
        # brute-force per-zone membership diff
        expected = []
        for z in zones:
            now_in = zone_contains(z, pos)
            if now_in and not prev_member[z.id]:
                expected.append(ZoneEvent(z.id, "enter"))
            if not now_in and prev_member[z.id]:
                expected.append(ZoneEvent(z.id, "exit"))
            prev_member[z.id] = now_in
        expected.sort(key=lambda e: (e.zone_id, e.kind))
        assert events == expected
        # stateless reproducibility
        assert zone_transitions(prev, pos, zones) == events
        prev = pos


def test_membership_helper_matches_contains():
    zones = standard_zones()
    p = GeoPoint(35.12, 51.12)
    ids = zone_membership(p, zones)
    assert ids == frozenset(z.id for z in zones if zone_contains(z, p))
