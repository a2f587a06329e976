import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api";
import { formatAge, formatFleetTime } from "../src/format";

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("api client", () => {
  it("requests the documented endpoints", async () => {
    const calls: string[] = [];
    vi.stubGlobal("fetch", vi.fn(async (url: string) => {
      calls.push(url);
      return new Response("[]", { status: 200 });
    }));
    const api = new ApiClient("");
    await api.vehicles();
    await api.track(42, 100, 200);
    await api.nearest(35.7, 51.4, 5);
    await api.alerts(7);
    expect(calls).toEqual([
      "/api/vehicles",
      "/api/vehicles/42/track?from=100&to=200",
      "/api/nearest?lat=35.7&lon=51.4&limit=5",
      "/api/alerts?since=7",
    ]);
  });

  it("raises on http errors", async () => {
    vi.stubGlobal("fetch", vi.fn(async () =>
      new Response("{}", { status: 500 })));
    const api = new ApiClient("");
    await expect(api.vehicles()).rejects.toThrow("500");
  });

  it("builds csv download urls that proxy the server export", () => {
    const api = new ApiClient("http://srv:8080");
    expect(api.csvUrl("daily", { vehicle: 42, month: "2025-11" })).toBe(
      "http://srv:8080/api/reports/daily?vehicle=42&month=2025-11&format=csv",
    );
  });
});

describe("fleet-local formatting", () => {
  it("renders times in the server's offset, not the browser zone", () => {
    // 2025-11-01T00:00 at +03:30 == 1761942600000
    expect(formatFleetTime(1_761_942_600_000, 210)).toBe(
      "2025-11-01 00:00:00",
    );
    expect(formatFleetTime(1_761_942_600_000, 0)).toBe("2025-10-31 20:30:00");
  });

  it("ages compress to sensible units", () => {
    expect(formatAge(12)).toBe("12s");
    expect(formatAge(540)).toBe("9m");
    expect(formatAge(7200)).toBe("2.0h");
  });
});
