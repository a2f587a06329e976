"""Key=value config files for the server and the tracker.

Lines are `key = value`; '#' starts a comment; keys may repeat for list
entries (zone, device, maintenance, authorized_*). Zone records:

    zone = <id>, circle, <lat>, <lon>, <radius_m>
    zone = <id>, rect, <sw_lat>, <sw_lon>, <ne_lat>, <ne_lon>
    zone = <id>, triangle, <lat1>, <lon1>, <lat2>, <lon2>, <lat3>, <lon3>
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import wire
from .analytics import DEFAULT_UTC_OFFSET_MIN, MaintenanceItem
from .geo import Circle, GeofenceZone, GeoPoint, Rectangle, Triangle
from .store import DeviceEntry
from .tracker import TrackerConfig


class ConfigFileError(ValueError):
    pass


def parse_kv_lines(text: str) -> list[tuple[str, str]]:
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigFileError(f"line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        pairs.append((key.strip(), value.strip()))
    return pairs


def _parse_bool(value: str) -> bool:
    v = value.lower()
    if v in ("true", "yes", "on", "1"):
        return True
    if v in ("false", "no", "off", "0"):
        return False
    raise ConfigFileError(f"not a boolean: {value!r}")


def parse_zone(value: str) -> GeofenceZone:
    parts = [p.strip() for p in value.split(",")]
    if len(parts) < 2:
        raise ConfigFileError(f"zone needs an id and a shape: {value!r}")
    zone_id = int(parts[0])
    shape_tag = parts[1].lower()
    nums = [float(p) for p in parts[2:]]
    if shape_tag == "circle" and len(nums) == 3:
        shape = Circle(GeoPoint(nums[0], nums[1]), nums[2])
    elif shape_tag in ("rect", "rectangle") and len(nums) == 4:
        shape = Rectangle(GeoPoint(nums[0], nums[1]), GeoPoint(nums[2], nums[3]))
    elif shape_tag == "triangle" and len(nums) == 6:
        shape = Triangle(GeoPoint(nums[0], nums[1]), GeoPoint(nums[2], nums[3]),
                         GeoPoint(nums[4], nums[5]))
    else:
        raise ConfigFileError(f"bad zone record: {value!r}")
    return GeofenceZone(zone_id, shape)


def parse_device(value: str) -> DeviceEntry:
    parts = [p.strip() for p in value.split(",")]
    if not parts or not parts[0]:
        raise ConfigFileError(f"device needs an imei: {value!r}")
    entry = DeviceEntry(imei=int(parts[0]))
    if len(parts) > 1:
        entry.label = parts[1]
    for extra in parts[2:]:
        key, _, v = extra.partition("=")
        key = key.strip().lower()
        v = v.strip()
        if key == "enabled":
            entry.enabled = _parse_bool(v)
        elif key == "class":
            entry.vehicle_class = v
        elif key == "tank":
            entry.tank_capacity_l = float(v)
        elif key == "speed_limit":
            entry.speed_limit_kmh = float(v)
        else:
            raise ConfigFileError(f"unknown device attribute {key!r}")
    return entry


def parse_maintenance(value: str) -> MaintenanceItem:
    parts = [p.strip() for p in value.split(",")]
    if len(parts) < 4:
        raise ConfigFileError(f"maintenance needs name, scope, interval, "
                              f"last service: {value!r}")
    warn = float(parts[4]) if len(parts) > 4 else 0.9
    return MaintenanceItem(parts[0], parts[1], float(parts[2]),
                           float(parts[3]), warn)


@dataclass
class ServerConfig:
    tcp_port: int = wire.TCP_PORT_DEFAULT
    udp_port: int = wire.UDP_PORT_DEFAULT
    http_port: int = 8080
    host: str = "0.0.0.0"
    data_dir: str = "./data"
    sms_enabled: bool = True
    durable: bool = True
    utc_offset_min: int = DEFAULT_UTC_OFFSET_MIN
    devices: list[DeviceEntry] = field(default_factory=list)
    zones: list[GeofenceZone] = field(default_factory=list)
    maintenance: list[MaintenanceItem] = field(default_factory=list)


def parse_server_config(text: str) -> ServerConfig:
    cfg = ServerConfig()
    for key, value in parse_kv_lines(text):
        if key == "tcp_port":
            cfg.tcp_port = int(value)
        elif key == "udp_port":
            cfg.udp_port = int(value)
        elif key == "http_port":
            cfg.http_port = int(value)
        elif key == "host":
            cfg.host = value
        elif key == "data_dir":
            cfg.data_dir = value
        elif key == "sms_enabled":
            cfg.sms_enabled = _parse_bool(value)
        elif key == "durable":
            cfg.durable = _parse_bool(value)
        elif key == "utc_offset_min":
            cfg.utc_offset_min = int(value)
        elif key == "device":
            cfg.devices.append(parse_device(value))
        elif key == "zone":
            cfg.zones.append(parse_zone(value))
        elif key == "maintenance":
            cfg.maintenance.append(parse_maintenance(value))
        else:
            raise ConfigFileError(f"unknown server config key {key!r}")
    return cfg


_TRACKER_FIELDS = {
    "time_trigger_moving_s": float,
    "time_trigger_stationary_s": float,
    "distance_trigger_m": float,
    "angle_trigger_deg": float,
    "speed_limit_kmh": float,
    "moving_speed_kmh": float,
    "harsh_accel_ms2": float,
    "harsh_brake_ms2": float,
    "harsh_corner_ms2": float,
    "harsh_sustain_s": float,
    "overspeed_sustain_s": float,
    "overspeed_clear_margin_kmh": float,
    "towing_displacement_m": float,
    "towing_accel_mg": float,
    "towing_accel_sustain_s": float,
    "t_normal_sleep_s": float,
    "t_deep_sleep_s": float,
    "flush_interval_s": float,
    "batch_max": int,
    "server_port": int,
    "buffer_capacity_bytes": int,
}


def parse_tracker_config(text: str) -> TrackerConfig:
    imei = 0
    kwargs: dict = {}
    zones = []
    keys = set()
    numbers = []
    for key, value in parse_kv_lines(text):
        if key == "imei":
            imei = int(value)
        elif key == "zone":
            zones.append(parse_zone(value))
        elif key == "authorized_key":
            keys.add(int(value, 0))
        elif key == "authorized_number":
            numbers.append(value)
        elif key in ("server_host", "transport", "own_number"):
            kwargs[key] = value
        elif key in _TRACKER_FIELDS:
            kwargs[key] = _TRACKER_FIELDS[key](value)
        else:
            raise ConfigFileError(f"unknown tracker config key {key!r}")
    return TrackerConfig(imei=imei, zones=tuple(zones),
                         authorized_keys=frozenset(keys),
                         authorized_numbers=tuple(numbers), **kwargs)


def render_tracker_config(cfg: TrackerConfig) -> str:
    """TrackerConfig -> key=value text (round-trips through the parser)."""
    lines = [f"imei = {cfg.imei}"]
    for name, coerce in _TRACKER_FIELDS.items():
        lines.append(f"{name} = {getattr(cfg, name)}")
    lines.append(f"server_host = {cfg.server_host}")
    lines.append(f"transport = {cfg.transport}")
    if cfg.own_number:
        lines.append(f"own_number = {cfg.own_number}")
    for key in sorted(cfg.authorized_keys):
        lines.append(f"authorized_key = {key}")
    for number in cfg.authorized_numbers:
        lines.append(f"authorized_number = {number}")
    for zone in cfg.zones:
        lines.append(f"zone = {render_zone(zone)}")
    return "\n".join(lines) + "\n"


def render_zone(zone: GeofenceZone) -> str:
    s = zone.shape
    if isinstance(s, Circle):
        return f"{zone.id}, circle, {s.center.lat}, {s.center.lon}, {s.radius_m}"
    if isinstance(s, Rectangle):
        return (f"{zone.id}, rect, {s.sw.lat}, {s.sw.lon}, "
                f"{s.ne.lat}, {s.ne.lon}")
    return (f"{zone.id}, triangle, {s.a.lat}, {s.a.lon}, {s.b.lat}, {s.b.lon}, "
            f"{s.c.lat}, {s.c.lon}")
