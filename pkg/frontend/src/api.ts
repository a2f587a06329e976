// Typed client for the fleet server's HTTP JSON API. The dashboard does
// no analytics of its own: every number it renders comes from one of
// these responses.

export interface LastPosition {
  timestamp_ms: number;
  lat: number;
  lon: number;
  speed_kmh: number;
  heading: number;
  ignition: boolean;
  event: string;
  odometer_m: number;
  seq: number;
  fuel_level_pct: number;
}

export interface VehicleSnapshot {
  imei: number;
  label: string;
  last: LastPosition | null;
  age_s: number | null;
}

export interface TrackPoint {
  timestamp_ms: number;
  lat: number;
  lon: number;
  speed_kmh: number;
  heading: number;
  event: string;
  seq: number;
  ignition: boolean;
  valid: boolean;
}

export interface NearestRow {
  imei: number;
  label: string;
  distance_m: number;
  age_s: number;
  lat: number;
  lon: number;
}

export interface NearestResponse {
  ranked: NearestRow[];
  stale: NearestRow[];
}

export interface ReportPayload {
  title: string;
  columns: string[];
  rows: (string | number | null)[][];
}

export interface Mission {
  id: number;
  imei: number;
  driver: string;
  purpose: string;
  start_ms: number;
  end_ms: number;
  km: number;
  liters: number;
  trips: number;
}

export interface CommandStatus {
  id: number;
  imei: number;
  text: string;
  status: string;
  reply: string | null;
  history: { t: number; status: string }[];
}

export interface Meta {
  utc_offset_min: number;
  server_time_ms: number;
}

export interface Alert {
  id: number;
  imei: number;
  label: string;
  event: string;
  timestamp_ms: number | null;
  lat: number;
  lon: number;
  speed_kmh: number;
}

export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  private async get<T>(path: string): Promise<T> {
    const resp = await fetch(this.baseUrl + path);
    if (!resp.ok) {
      throw new Error(`GET ${path} -> ${resp.status}`);
    }
    return (await resp.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const resp = await fetch(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) {
      const text = await resp.text();
      throw new Error(`POST ${path} -> ${resp.status}: ${text}`);
    }
    return (await resp.json()) as T;
  }

  meta(): Promise<Meta> {
    return this.get("/api/meta");
  }

  vehicles(): Promise<VehicleSnapshot[]> {
    return this.get("/api/vehicles");
  }

  track(imei: number, fromMs: number, toMs: number): Promise<TrackPoint[]> {
    return this.get(`/api/vehicles/${imei}/track?from=${fromMs}&to=${toMs}`);
  }

  nearest(lat: number, lon: number, limit = 10): Promise<NearestResponse> {
    return this.get(`/api/nearest?lat=${lat}&lon=${lon}&limit=${limit}`);
  }

  reportDaily(imei: number, month: string): Promise<ReportPayload> {
    return this.get(`/api/reports/daily?vehicle=${imei}&month=${month}`);
  }

  reportMonthly(imei: number, from: string, to: string): Promise<ReportPayload> {
    return this.get(`/api/reports/monthly?vehicle=${imei}&from=${from}&to=${to}`);
  }

  reportCompare(imei: number, monthA: string, monthB: string): Promise<ReportPayload> {
    return this.get(
      `/api/reports/compare?vehicle=${imei}&monthA=${monthA}&monthB=${monthB}`,
    );
  }

  reportFuelBySpeed(imei: number): Promise<ReportPayload> {
    return this.get(`/api/reports/fuel-by-speed?vehicle=${imei}`);
  }

  reportMaintenance(imei: number): Promise<ReportPayload> {
    return this.get(`/api/reports/maintenance?vehicle=${imei}`);
  }

  csvUrl(report: string, params: Record<string, string | number>): string {
    const qs = Object.entries(params)
      .map(([k, v]) => `${k}=${encodeURIComponent(String(v))}`)
      .join("&");
    return `${this.baseUrl}/api/reports/${report}?${qs}&format=csv`;
  }

  missions(): Promise<Mission[]> {
    return this.get("/api/missions");
  }

  createMission(
    imei: number,
    driver: string,
    purpose: string,
    startMs: number,
    endMs: number,
  ): Promise<Mission> {
    return this.post("/api/missions", {
      vehicle: imei,
      driver,
      purpose,
      start_ms: startMs,
      end_ms: endMs,
    });
  }

  sendCommand(imei: number, command: string): Promise<CommandStatus> {
    return this.post("/api/commands", { vehicle: imei, command });
  }

  commands(imei?: number): Promise<CommandStatus[]> {
    return this.get(`/api/commands${imei ? `?vehicle=${imei}` : ""}`);
  }

  alerts(sinceId = 0): Promise<Alert[]> {
    return this.get(`/api/alerts?since=${sinceId}`);
  }
}
