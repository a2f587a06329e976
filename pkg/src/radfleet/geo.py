"""Spherical geodesy and geofence zones.

Spherical model, R = 6,371,000 m. Zones are rectangles (axis-aligned in
lat/lon, no antimeridian crossing), circles, and triangles; containment
is boundary-inclusive. Triangle tests run in a local equirectangular
plane anchored at the centroid, so triangles wider than 100 km are
rejected at construction to keep the planarization error below GPS noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

EARTH_RADIUS_M = 6_371_000.0
MAX_ZONES = 150
MAX_TRIANGLE_SPAN_M = 100_000.0


class DegeneratePair(ValueError):
    """Bearing is undefined for two identical points."""


class TooManyZones(ValueError):
    """More zones than a tracker supports (150)."""


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dlam = math.radians(b.lon - a.lon)
    h = (math.sin(dphi / 2.0) ** 2
         + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2)
    return EARTH_RADIUS_M * 2.0 * math.atan2(math.sqrt(h), math.sqrt(1.0 - h))


def initial_bearing(a: GeoPoint, b: GeoPoint) -> float:
    """Forward azimuth a->b in degrees [0, 360); 0 = north, 90 = east."""
    if a.lat == b.lat and a.lon == b.lon:
        raise DegeneratePair("bearing undefined for identical points")
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dlam = math.radians(b.lon - a.lon)
    y = math.sin(dlam) * math.cos(phi2)
    x = (math.cos(phi1) * math.sin(phi2)
         - math.sin(phi1) * math.cos(phi2) * math.cos(dlam))
    return math.degrees(math.atan2(y, x)) % 360.0


def destination_point(start: GeoPoint, bearing_deg: float, distance_m: float) -> GeoPoint:
    """Point reached from start along an initial bearing for a distance."""
    delta = distance_m / EARTH_RADIUS_M
    theta = math.radians(bearing_deg)
    phi1 = math.radians(start.lat)
    lam1 = math.radians(start.lon)
    phi2 = math.asin(math.sin(phi1) * math.cos(delta)
                     + math.cos(phi1) * math.sin(delta) * math.cos(theta))
    lam2 = lam1 + math.atan2(math.sin(theta) * math.sin(delta) * math.cos(phi1),
                             math.cos(delta) - math.sin(phi1) * math.sin(phi2))
    lon = math.degrees(lam2)
    lon = (lon + 180.0) % 360.0 - 180.0
    return GeoPoint(math.degrees(phi2), lon)


def path_length(points: list[GeoPoint]) -> float:
    """Sum of consecutive great-circle distances; 0 for [] or [p]."""
    total = 0.0
    for prev, cur in zip(points, points[1:]):
        total += haversine_distance(prev, cur)
    return total


@dataclass(frozen=True)
class Rectangle:
    sw: GeoPoint
    ne: GeoPoint

    def __post_init__(self) -> None:
        if self.sw.lat > self.ne.lat or self.sw.lon > self.ne.lon:
            raise ValueError("rectangle corners must be SW <= NE "
                             "(antimeridian-crossing zones are rejected)")


@dataclass(frozen=True)
class Circle:
    center: GeoPoint
    radius_m: float

    def __post_init__(self) -> None:
        if self.radius_m <= 0:
            raise ValueError(f"circle radius must be positive: {self.radius_m}")


@dataclass(frozen=True)
class Triangle:
    a: GeoPoint
    b: GeoPoint
    c: GeoPoint

    def __post_init__(self) -> None:
        for p, q in ((self.a, self.b), (self.b, self.c), (self.a, self.c)):
            if haversine_distance(p, q) > MAX_TRIANGLE_SPAN_M:
                raise ValueError("triangle wider than 100 km; planar test "
                                 "would be unreliable")
        xa, ya = _plane_coords(self.a, self._anchor())
        xb, yb = _plane_coords(self.b, self._anchor())
        xc, yc = _plane_coords(self.c, self._anchor())
        area2 = abs((xb - xa) * (yc - ya) - (xc - xa) * (yb - ya))
        if area2 == 0.0:
            raise ValueError("triangle vertices are collinear")

    def _anchor(self) -> GeoPoint:
        return GeoPoint((self.a.lat + self.b.lat + self.c.lat) / 3.0,
                        (self.a.lon + self.b.lon + self.c.lon) / 3.0)


Shape = Union[Rectangle, Circle, Triangle]


@dataclass(frozen=True)
class GeofenceZone:
    id: int
    shape: Shape

    def __post_init__(self) -> None:
        if not 1 <= self.id <= 65535:
            raise ValueError(f"zone id must be 1..65535: {self.id}")


def _plane_coords(p: GeoPoint, anchor: GeoPoint) -> tuple[float, float]:
    # local equirectangular projection, degrees scaled so x and y are
    # comparable; adequate for zones under 100 km
    return ((p.lon - anchor.lon) * math.cos(math.radians(anchor.lat)),
            p.lat - anchor.lat)


def _triangle_contains(t: Triangle, p: GeoPoint) -> bool:
    anchor = t._anchor()
    ax, ay = _plane_coords(t.a, anchor)
    bx, by = _plane_coords(t.b, anchor)
    cx, cy = _plane_coords(t.c, anchor)
    px, py = _plane_coords(p, anchor)
    d1 = (px - ax) * (by - ay) - (py - ay) * (bx - ax)
    d2 = (px - bx) * (cy - by) - (py - by) * (cx - bx)
    d3 = (px - cx) * (ay - cy) - (py - cy) * (ax - cx)
    has_pos = d1 > 0 or d2 > 0 or d3 > 0
    has_neg = d1 < 0 or d2 < 0 or d3 < 0
    return not (has_pos and has_neg)


def zone_contains(zone: GeofenceZone, p: GeoPoint) -> bool:
    """Boundary-inclusive containment test."""
    s = zone.shape
    if isinstance(s, Rectangle):
        return (s.sw.lat <= p.lat <= s.ne.lat
                and s.sw.lon <= p.lon <= s.ne.lon)
    if isinstance(s, Circle):
        return haversine_distance(s.center, p) <= s.radius_m
    return _triangle_contains(s, p)


def zone_membership(p: GeoPoint, zones: list[GeofenceZone]) -> frozenset[int]:
    """Ids of all zones containing p."""
    return frozenset(z.id for z in zones if zone_contains(z, p))


@dataclass(frozen=True)
class ZoneEvent:
    zone_id: int
    kind: str  # "enter" | "exit"


def zone_transitions(prev: Optional[GeoPoint], cur: GeoPoint,
                     zones: list[GeofenceZone]) -> list[ZoneEvent]:
    """Enter/exit events for the move prev -> cur, ordered by zone id.

    With prev absent the membership baseline is established silently.
    """
    if len(zones) > MAX_ZONES:
        raise TooManyZones(f"{len(zones)} zones, limit is {MAX_ZONES}")
    cur_ids = zone_membership(cur, zones)
    if prev is None:
        return []
    prev_ids = zone_membership(prev, zones)
    events = [ZoneEvent(zid, "enter") for zid in sorted(cur_ids - prev_ids)]
    events += [ZoneEvent(zid, "exit") for zid in sorted(prev_ids - cur_ids)]
    return sorted(events, key=lambda e: (e.zone_id, e.kind))


def membership_events(prev_ids: frozenset[int],
                      cur_ids: frozenset[int]) -> list[ZoneEvent]:
    """Events implied by a membership set change (same order contract)."""
    events = [ZoneEvent(zid, "enter") for zid in sorted(cur_ids - prev_ids)]
    events += [ZoneEvent(zid, "exit") for zid in sorted(prev_ids - cur_ids)]
    return sorted(events, key=lambda e: (e.zone_id, e.kind))
