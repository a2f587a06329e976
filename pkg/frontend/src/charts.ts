// SVG bar charts for the report panels. Every bar carries its source
// value in data-value so tests can compare rendered output to the API
// payload cell for cell; the chart never recomputes anything.

import type { ReportPayload } from "./api";

const SVG_NS = "http://www.w3.org/2000/svg";
const WIDTH = 640;
const HEIGHT = 220;
const BOTTOM = 200;

function svgElement(tag: string): SVGElement {
  return document.createElementNS(SVG_NS, tag) as SVGElement;
}

export interface BarSeries {
  name: string;
  color: string;
  valueColumn: number;
}

export function renderBarChart(
  report: ReportPayload,
  labelColumn: number,
  series: BarSeries[],
  title: string,
): SVGElement {
  const svg = svgElement("svg");
  svg.setAttribute("viewBox", `0 0 ${WIDTH} ${HEIGHT}`);
  svg.setAttribute("class", "bar-chart");
  svg.setAttribute("data-title", title);

  const rows = report.rows;
  const values = rows.flatMap((row) =>
    series.map((s) => Number(row[s.valueColumn] ?? 0)),
  );
  const maxValue = Math.max(1e-9, ...values);
  const slot = WIDTH / Math.max(1, rows.length);
  const barWidth = (slot * 0.8) / series.length;

  rows.forEach((row, i) => {
    series.forEach((s, j) => {
      const value = Number(row[s.valueColumn] ?? 0);
      const h = (value / maxValue) * (BOTTOM - 20);
      const rect = svgElement("rect");
      rect.setAttribute("x", String(slot * i + slot * 0.1 + barWidth * j));
      rect.setAttribute("y", String(BOTTOM - h));
      rect.setAttribute("width", String(barWidth));
      rect.setAttribute("height", String(h));
      rect.setAttribute("fill", s.color);
      rect.setAttribute("data-series", s.name);
      rect.setAttribute("data-label", String(row[labelColumn]));
      rect.setAttribute("data-value", String(value));
      const tip = svgElement("title");
      tip.textContent = `${s.name} ${row[labelColumn]}: ${value}`;
      rect.appendChild(tip);
      svg.appendChild(rect);
    });
    const label = svgElement("text");
    label.setAttribute("x", String(slot * i + slot / 2));
    label.setAttribute("y", String(HEIGHT - 6));
    label.setAttribute("text-anchor", "middle");
    label.setAttribute("class", "bar-label");
    label.textContent = String(row[labelColumn]);
    svg.appendChild(label);
  });
  return svg;
}

export function renderDailyChart(report: ReportPayload): SVGElement {
  // columns: day, km, liters
  return renderBarChart(
    report,
    0,
    [{ name: "km", color: "#2f6fb4", valueColumn: 1 }],
    "daily mileage",
  );
}

export function renderMonthlyChart(report: ReportPayload): SVGElement {
  return renderBarChart(
    report,
    0,
    [
      { name: "km", color: "#2f6fb4", valueColumn: 1 },
      { name: "liters", color: "#b4742f", valueColumn: 2 },
    ],
    "monthly mileage and fuel",
  );
}

export function renderCompareChart(report: ReportPayload): SVGElement {
  // columns: day, km_a, km_b, liters_a, liters_b; blue and orange bars
  return renderBarChart(
    report,
    0,
    [
      { name: "km_a", color: "#2f6fb4", valueColumn: 1 },
      { name: "km_b", color: "#e08b2d", valueColumn: 2 },
    ],
    "month comparison",
  );
}

export function renderReportTable(report: ReportPayload): HTMLTableElement {
  const table = document.createElement("table");
  table.className = "report-table";
  const head = table.createTHead().insertRow();
  for (const col of report.columns) {
    const th = document.createElement("th");
    th.textContent = col;
    head.appendChild(th);
  }
  const body = table.createTBody();
  for (const row of report.rows) {
    const tr = body.insertRow();
    row.forEach((cell, i) => {
      const td = tr.insertCell();
      td.textContent = cell === null ? "" : String(cell);
      td.setAttribute("data-col", report.columns[i]);
      td.setAttribute("data-value", cell === null ? "" : String(cell));
    });
  }
  return table;
}

export function renderMaintenancePanel(report: ReportPayload): HTMLElement {
  // columns: item, km_remaining, state
  const panel = document.createElement("div");
  panel.className = "maintenance-panel";
  for (const row of report.rows) {
    const item = document.createElement("div");
    const state = String(row[2]);
    item.className = `maintenance-item badge-${state.toLowerCase()}`;
    item.setAttribute("data-state", state);
    item.setAttribute("data-value", String(row[1]));
    item.textContent = `${row[0]}: ${state} (${row[1]} km remaining)`;
    panel.appendChild(item);
  }
  return panel;
}
