"""radfleet: a desk-scale fleet telemetry platform.

Device-side: a deterministic tracker state machine that reads NMEA input,
detects events, buffers 64-byte telemetry records through outages, and
speaks a CRC-checked binary framing over TCP/UDP plus an SMS text fallback.

Server-side: an ingest service with durable per-device logs, a live event
stream, a dispatch command path, and the analytics that turn stored records
into trip, mileage, fuel, and maintenance reports.
"""

__version__ = "0.1.0"
