import { describe, expect, it } from "vitest";

import { MarkerStore, STALE_AFTER_S } from "../src/state";
import type { VehicleSnapshot } from "../src/api";
import type { StreamEvent } from "../src/stream";

const NOW = 1_761_975_000_000;

function positionEvent(overrides: Partial<StreamEvent> = {}): StreamEvent {
  return {
    type: "position",
    imei: 1,
    label: "truck-1",
    timestamp_ms: NOW,
    lat: 35.7,
    lon: 51.4,
    speed_kmh: 62.5,
    heading: 88,
    ignition: true,
    event: "Periodic",
    seq: 10,
    ...overrides,
  };
}

describe("marker store", () => {
  it("starts empty (zero vehicles, empty map)", () => {
    const store = new MarkerStore();
    expect(store.all()).toEqual([]);
  });

  it("moves a marker with exactly one pushed event", () => {
    const store = new MarkerStore();
    let changes = 0;
    store.onChange(() => {
      changes += 1;
    });
    store.applyEvent(positionEvent());
    expect(changes).toBe(1);
    const marker = store.get(1)!;
    expect(marker.lat).toBe(35.7);
    expect(marker.lon).toBe(51.4);
    expect(marker.speedKmh).toBe(62.5);
    // marker heading mirrors the latest record's heading, verbatim
    expect(marker.heading).toBe(88);
  });

  it("ignores stale out-of-order updates", () => {
    const store = new MarkerStore();
    store.applyEvent(positionEvent({ timestamp_ms: NOW, lat: 35.8, seq: 11 }));
    store.applyEvent(
      positionEvent({ timestamp_ms: NOW - 60_000, lat: 35.1, seq: 5 }),
    );
    expect(store.get(1)!.lat).toBe(35.8);
  });

  it("greys out vehicles older than 15 minutes", () => {
    const store = new MarkerStore();
    store.applyEvent(positionEvent());
    const marker = store.get(1)!;
    expect(store.isStale(marker, NOW + (STALE_AFTER_S - 1) * 1000)).toBe(false);
    expect(store.isStale(marker, NOW + (STALE_AFTER_S + 1) * 1000)).toBe(true);
  });

  it("alert events set a badge window", () => {
    const store = new MarkerStore();
    store.applyEvent(positionEvent({ type: "alert", event: "Panic" }));
    const marker = store.get(1)!;
    expect(marker.alertBadgeUntilMs).toBeGreaterThan(NOW);
    expect(marker.lastEvent).toBe("Panic");
  });

  it("snapshot backfill reconciles without regressing newer fixes", () => {
    const store = new MarkerStore();
    store.applyEvent(positionEvent({ timestamp_ms: NOW + 5_000, lat: 35.9 }));
    const snapshot: VehicleSnapshot[] = [
      {
        imei: 1,
        label: "truck-1",
        age_s: 30,
        last: {
          timestamp_ms: NOW,
          lat: 35.5,
          lon: 51.0,
          speed_kmh: 10,
          heading: 0,
          ignition: true,
          event: "Periodic",
          odometer_m: 0,
          seq: 9,
          fuel_level_pct: 50,
        },
      },
      { imei: 2, label: "van-2", age_s: null, last: null },
    ];
    store.applySnapshot(snapshot);
    expect(store.get(1)!.lat).toBe(35.9); // newer live fix wins
    expect(store.get(2)!.hasFix).toBe(false); // listed, no position yet
    expect(store.all().map((m) => m.imei)).toEqual([1, 2]);
  });
});
