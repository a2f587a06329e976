// Operator console wiring: live map, vehicle list, alert feed, dispatch
// panel, report charts. All data flows from the HTTP API and the event
// stream; nothing is computed here beyond layout.

import { ApiClient } from "./api";
import type { CommandStatus, ReportPayload, VehicleSnapshot } from "./api";
import {
  renderCompareChart, renderDailyChart, renderMaintenancePanel,
  renderMonthlyChart, renderReportTable,
} from "./charts";
import { DispatchFlow } from "./dispatch";
import { formatAge, formatFleetTime } from "./format";
import { FleetMap } from "./map";
import { buildPolyline } from "./playback";
import { MarkerStore } from "./state";
import { LiveStream } from "./stream";

const api = new ApiClient("");
const store = new MarkerStore();
const dispatch = new DispatchFlow(api);
let utcOffsetMin = 210;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing #${id}`);
  }
  return node as T;
}

function renderVehicleList(): void {
  const list = el<HTMLDivElement>("vehicle-list");
  list.textContent = "";
  const now = Date.now();
  for (const marker of store.all()) {
    const row = document.createElement("div");
    const stale = store.isStale(marker, now);
    row.className = "vehicle-row" + (stale ? " stale" : "");
    const age = marker.hasFix ? formatAge((now - marker.timestampMs) / 1000) : "-";
    row.textContent =
      `${marker.label}  ${marker.speedKmh.toFixed(0)} km/h  ` +
      `${marker.heading.toFixed(0)}°  ${age}` +
      (marker.hasFix
        ? `  ${formatFleetTime(marker.timestampMs, utcOffsetMin)}`
        : "  (no fix)");
    row.addEventListener("click", () => {
      void showTrack(marker.imei);
    });
    list.appendChild(row);
  }
}

async function refreshAlerts(): Promise<void> {
  const feed = el<HTMLDivElement>("alert-feed");
  const alerts = await api.alerts();
  feed.textContent = "";
  for (const alert of alerts.slice(-12).reverse()) {
    const row = document.createElement("div");
    row.className = "alert-row";
    row.textContent =
      `${alert.label || alert.imei}: ${alert.event}` +
      (alert.timestamp_ms
        ? ` at ${formatFleetTime(alert.timestamp_ms, utcOffsetMin)}`
        : "");
    feed.appendChild(row);
  }
}

async function showTrack(imei: number): Promise<void> {
  const to = Date.now();
  const from = to - 24 * 3600 * 1000;
  const points = await api.track(imei, from, to);
  map.setPlayback(buildPolyline(points, null));
}

function renderDispatch(): void {
  const panel = el<HTMLDivElement>("dispatch-panel");
  panel.textContent = "";
  const sel = dispatch.selection;
  if (!sel) {
    panel.textContent = "click the map to rank vehicles by distance";
    return;
  }
  const head = document.createElement("div");
  head.textContent =
    `nearest to ${sel.point.lat.toFixed(5)}, ${sel.point.lon.toFixed(5)}`;
  panel.appendChild(head);
  for (const row of sel.nearest.ranked) {
    const item = document.createElement("div");
    item.className = "nearest-row" +
      (sel.chosenImei === row.imei ? " chosen" : "");
    item.textContent =
      `${row.label}  ${(row.distance_m / 1000).toFixed(2)} km  ` +
      `${formatAge(row.age_s)} old`;
    item.addEventListener("click", () => dispatch.chooseVehicle(row.imei));
    panel.appendChild(item);
  }
  if (sel.nearest.ranked.length === 0) {
    const empty = document.createElement("div");
    empty.textContent = `no fresh vehicles (${sel.nearest.stale.length} stale)`;
    panel.appendChild(empty);
  }
  if (sel.chosenImei !== null) {
    const actions = document.createElement("div");
    const missionBtn = document.createElement("button");
    missionBtn.textContent = "assign 2h mission";
    missionBtn.addEventListener("click", () => {
      const start = Date.now();
      void dispatch.createMission("dispatcher", "dispatch", start,
        start + 2 * 3600 * 1000);
    });
    actions.appendChild(missionBtn);
    const immobilizeBtn = document.createElement("button");
    immobilizeBtn.textContent = "immobilize";
    immobilizeBtn.addEventListener("click", () => {
      void dispatch.sendCommand("OUT 0 1");
    });
    actions.appendChild(immobilizeBtn);
    panel.appendChild(actions);
  }
  if (sel.mission) {
    const m = document.createElement("div");
    m.textContent = `mission #${sel.mission.id} created`;
    panel.appendChild(m);
  }
  if (sel.command) {
    const c = document.createElement("div");
    c.className = `command-status status-${sel.command.status}`;
    c.textContent = `command ${sel.command.text}: ${sel.command.status}` +
      (sel.command.reply ? ` (${sel.command.reply})` : "");
    panel.appendChild(c);
  }
}

async function renderReports(imei: number, month: string, monthB: string,
                             fromMonth: string): Promise<void> {
  const target = el<HTMLDivElement>("report-panel");
  target.textContent = "";
  const [daily, monthly, compare, fuel, maintenance] = await Promise.all([
    api.reportDaily(imei, month),
    api.reportMonthly(imei, fromMonth, monthB),
    api.reportCompare(imei, month, monthB),
    api.reportFuelBySpeed(imei),
    api.reportMaintenance(imei),
  ]);
  const blocks: [string, Node, string][] = [
    ["daily mileage", renderDailyChart(daily),
     api.csvUrl("daily", { vehicle: imei, month })],
    ["monthly", renderMonthlyChart(monthly),
     api.csvUrl("monthly", { vehicle: imei, from: fromMonth, to: monthB })],
    ["comparison", renderCompareChart(compare),
     api.csvUrl("compare", { vehicle: imei, monthA: month, monthB })],
    ["fuel by speed", renderReportTable(fuel),
     api.csvUrl("fuel-by-speed", { vehicle: imei })],
    ["maintenance", renderMaintenancePanel(maintenance),
     api.csvUrl("maintenance", { vehicle: imei })],
  ];
  for (const [title, node, csvHref] of blocks) {
    const section = document.createElement("section");
    const h = document.createElement("h3");
    h.textContent = title;
    const a = document.createElement("a");
    a.href = csvHref;
    a.textContent = "csv";
    a.className = "csv-link";
    h.appendChild(a);
    section.appendChild(h);
    section.appendChild(node);
    target.appendChild(section);
  }
}

let map: FleetMap;

async function start(): Promise<void> {
  const meta = await api.meta().catch(() => null);
  if (meta) {
    utcOffsetMin = meta.utc_offset_min;
  }
  map = new FleetMap(el<HTMLCanvasElement>("map"), store, {
    centerLat: 35.7,
    centerLon: 51.4,
    metersPerPixel: 150,
  });
  store.onChange(renderVehicleList);
  dispatch.onChange(renderDispatch);
  map.onClick((lat, lon) => {
    void dispatch.pickPoint(lat, lon);
  });

  const status = el<HTMLSpanElement>("stream-status");
  const stream = new LiveStream({
    url: "/api/stream",
    onEvent: (event) => {
      store.applyEvent(event);
      if (event.type === "command") {
        dispatch.applyCommandEvent(event);
      }
      if (event.type === "alert") {
        void refreshAlerts();
      }
    },
    backfill: async () => {
      const snapshot: VehicleSnapshot[] = await api.vehicles();
      store.applySnapshot(snapshot);
      await refreshAlerts();
    },
    onStatus: (connected) => {
      status.textContent = connected ? "live" : "reconnecting";
      status.className = connected ? "live" : "down";
    },
  });
  stream.start();

  el<HTMLButtonElement>("report-go").addEventListener("click", () => {
    const imei = Number(el<HTMLInputElement>("report-vehicle").value);
    const month = el<HTMLInputElement>("report-month").value;
    const monthB = el<HTMLInputElement>("report-month-b").value;
    const fromMonth = el<HTMLInputElement>("report-from").value;
    void renderReports(imei, month, monthB, fromMonth);
  });
  renderDispatch();
}

if (typeof document !== "undefined" && document.getElementById("map")) {
  void start();
}

export { renderReports, showTrack };
