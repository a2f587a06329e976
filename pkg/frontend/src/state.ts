// Vehicle marker store: the single source the map and list render from.
// Markers mirror the latest record per vehicle; a marker is stale (grey)
// once its fix is older than the staleness window.

import type { VehicleSnapshot } from "./api";
import type { StreamEvent } from "./stream";

export const STALE_AFTER_S = 15 * 60;
const ALERT_BADGE_MS = 60_000;

export interface VehicleMarker {
  imei: number;
  label: string;
  lat: number;
  lon: number;
  heading: number;
  speedKmh: number;
  timestampMs: number;
  ignition: boolean;
  lastEvent: string;
  alertBadgeUntilMs: number;
  hasFix: boolean;
}

export class MarkerStore {
  private markers = new Map<number, VehicleMarker>();
  private listeners: (() => void)[] = [];

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) {
      listener();
    }
  }

  all(): VehicleMarker[] {
    return [...this.markers.values()].sort((a, b) => a.imei - b.imei);
  }

  get(imei: number): VehicleMarker | undefined {
    return this.markers.get(imei);
  }

  isStale(marker: VehicleMarker, nowMs: number): boolean {
    return !marker.hasFix ||
      (nowMs - marker.timestampMs) / 1000 > STALE_AFTER_S;
  }

  // full-snapshot reconciliation (initial load and reconnect backfill)
  applySnapshot(snapshot: VehicleSnapshot[]): void {
    for (const v of snapshot) {
      const existing = this.markers.get(v.imei);
      const marker: VehicleMarker = existing ?? {
        imei: v.imei,
        label: v.label,
        lat: 0,
        lon: 0,
        heading: 0,
        speedKmh: 0,
        timestampMs: 0,
        ignition: false,
        lastEvent: "",
        alertBadgeUntilMs: 0,
        hasFix: false,
      };
      marker.label = v.label;
      if (v.last && v.last.timestamp_ms >= marker.timestampMs) {
        marker.lat = v.last.lat;
        marker.lon = v.last.lon;
        marker.heading = v.last.heading;
        marker.speedKmh = v.last.speed_kmh;
        marker.timestampMs = v.last.timestamp_ms;
        marker.ignition = v.last.ignition;
        marker.lastEvent = v.last.event;
        marker.hasFix = true;
      }
      this.markers.set(v.imei, marker);
    }
    this.notify();
  }

  // one pushed event moves one marker
  applyEvent(event: StreamEvent): void {
    if (event.type !== "position" && event.type !== "alert") {
      return;
    }
    if (event.imei === undefined) {
      return;
    }
    const marker = this.markers.get(event.imei) ?? {
      imei: event.imei,
      label: event.label ?? String(event.imei),
      lat: 0,
      lon: 0,
      heading: 0,
      speedKmh: 0,
      timestampMs: 0,
      ignition: false,
      lastEvent: "",
      alertBadgeUntilMs: 0,
      hasFix: false,
    };
    const ts = event.timestamp_ms ?? marker.timestampMs;
    if (ts >= marker.timestampMs) {
      marker.lat = event.lat ?? marker.lat;
      marker.lon = event.lon ?? marker.lon;
      marker.heading = event.heading ?? marker.heading;
      marker.speedKmh = event.speed_kmh ?? marker.speedKmh;
      marker.timestampMs = ts;
      marker.ignition = event.ignition ?? marker.ignition;
      marker.lastEvent = event.event ?? marker.lastEvent;
      marker.hasFix = true;
    }
    if (event.type === "alert") {
      marker.alertBadgeUntilMs = ts + ALERT_BADGE_MS;
    }
    this.markers.set(event.imei, marker);
    this.notify();
  }
}
