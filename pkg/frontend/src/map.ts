// Canvas map. With no tile URL configured it draws an offline lat/lon
// grid, so nothing here ever needs the network; markers are triangles
// rotated to the latest heading, grey when stale, badged on alerts.

import type { MarkerStore, VehicleMarker } from "./state";
import type { PolylineSegment } from "./playback";
import { arrowIndices, speedColor } from "./playback";

export interface MapConfig {
  tileUrlTemplate?: string; // e.g. https://tiles.example/{z}/{x}/{y}.png
  centerLat: number;
  centerLon: number;
  metersPerPixel: number;
}

export class FleetMap {
  private playback: PolylineSegment[] = [];
  private clickHandlers: ((lat: number, lon: number) => void)[] = [];

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly store: MarkerStore,
    public config: MapConfig,
    private readonly now: () => number = () => Date.now(),
  ) {
    store.onChange(() => this.render());
    canvas.addEventListener("click", (ev: MouseEvent) => {
      const rect = canvas.getBoundingClientRect();
      const { lat, lon } = this.unproject(
        ev.clientX - rect.left,
        ev.clientY - rect.top,
      );
      for (const handler of this.clickHandlers) {
        handler(lat, lon);
      }
    });
  }

  onClick(handler: (lat: number, lon: number) => void): void {
    this.clickHandlers.push(handler);
  }

  project(lat: number, lon: number): { x: number; y: number } {
    const kLat = 111_195 / this.config.metersPerPixel;
    const kLon =
      (111_195 * Math.cos((this.config.centerLat * Math.PI) / 180)) /
      this.config.metersPerPixel;
    return {
      x: this.canvas.width / 2 + (lon - this.config.centerLon) * kLon,
      y: this.canvas.height / 2 - (lat - this.config.centerLat) * kLat,
    };
  }

  unproject(x: number, y: number): { lat: number; lon: number } {
    const kLat = 111_195 / this.config.metersPerPixel;
    const kLon =
      (111_195 * Math.cos((this.config.centerLat * Math.PI) / 180)) /
      this.config.metersPerPixel;
    return {
      lat: this.config.centerLat - (y - this.canvas.height / 2) / kLat,
      lon: this.config.centerLon + (x - this.canvas.width / 2) / kLon,
    };
  }

  setPlayback(segments: PolylineSegment[]): void {
    this.playback = segments;
    this.render();
  }

  render(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) {
      return; // jsdom has no 2D context; rendering is exercised in a browser
    }
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    this.drawBackground(ctx);
    this.drawPlayback(ctx);
    for (const marker of this.store.all()) {
      if (marker.hasFix) {
        this.drawMarker(ctx, marker);
      }
    }
  }

  private drawBackground(ctx: CanvasRenderingContext2D): void {
    // offline fallback grid; a tile layer would be drawn here when a
    // tile URL template is configured
    ctx.fillStyle = "#f4f1ea";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    ctx.strokeStyle = "#d8d2c4";
    ctx.fillStyle = "#9a937f";
    ctx.font = "10px sans-serif";
    const stepDeg = this.gridStepDeg();
    const start = this.unproject(0, this.canvas.height);
    const end = this.unproject(this.canvas.width, 0);
    for (
      let lat = Math.floor(start.lat / stepDeg) * stepDeg;
      lat <= end.lat;
      lat += stepDeg
    ) {
      const { y } = this.project(lat, this.config.centerLon);
      ctx.beginPath();
      ctx.moveTo(0, y);
      ctx.lineTo(this.canvas.width, y);
      ctx.stroke();
      ctx.fillText(lat.toFixed(2), 4, y - 2);
    }
    for (
      let lon = Math.floor(start.lon / stepDeg) * stepDeg;
      lon <= end.lon;
      lon += stepDeg
    ) {
      const { x } = this.project(this.config.centerLat, lon);
      ctx.beginPath();
      ctx.moveTo(x, 0);
      ctx.lineTo(x, this.canvas.height);
      ctx.stroke();
      ctx.fillText(lon.toFixed(2), x + 2, 12);
    }
  }

  private gridStepDeg(): number {
    const spanDeg =
      (this.canvas.width * this.config.metersPerPixel) / 111_195;
    const steps = [5, 2, 1, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01];
    for (const step of steps) {
      if (spanDeg / step >= 4) {
        return step;
      }
    }
    return 0.01;
  }

  private drawPlayback(ctx: CanvasRenderingContext2D): void {
    for (const seg of this.playback) {
      const a = this.project(seg.fromLat, seg.fromLon);
      const b = this.project(seg.toLat, seg.toLon);
      ctx.strokeStyle = seg.overLimit ? "#c8372d" : speedColor(seg.speedKmh);
      ctx.lineWidth = seg.overLimit ? 4 : 2;
      ctx.beginPath();
      ctx.moveTo(a.x, a.y);
      ctx.lineTo(b.x, b.y);
      ctx.stroke();
    }
    ctx.lineWidth = 1;
    ctx.fillStyle = "#333";
    for (const i of arrowIndices(this.playback.length)) {
      const seg = this.playback[i];
      const m = this.project(
        (seg.fromLat + seg.toLat) / 2,
        (seg.fromLon + seg.toLon) / 2,
      );
      const rad = ((seg.heading - 90) * Math.PI) / 180;
      ctx.save();
      ctx.translate(m.x, m.y);
      ctx.rotate(rad);
      ctx.beginPath();
      ctx.moveTo(6, 0);
      ctx.lineTo(-3, 3);
      ctx.lineTo(-3, -3);
      ctx.closePath();
      ctx.fill();
      ctx.restore();
    }
  }

  private drawMarker(ctx: CanvasRenderingContext2D, marker: VehicleMarker): void {
    const { x, y } = this.project(marker.lat, marker.lon);
    const stale = this.store.isStale(marker, this.now());
    const alert = marker.alertBadgeUntilMs > this.now();
    ctx.save();
    ctx.translate(x, y);
    ctx.rotate(((marker.heading - 90) * Math.PI) / 180);
    ctx.fillStyle = stale ? "#9a9a9a" : marker.ignition ? "#1d6fb8" : "#3d7a46";
    ctx.beginPath();
    ctx.moveTo(9, 0);
    ctx.lineTo(-6, 5);
    ctx.lineTo(-6, -5);
    ctx.closePath();
    ctx.fill();
    ctx.restore();
    if (alert) {
      ctx.fillStyle = "#c8372d";
      ctx.beginPath();
      ctx.arc(x + 8, y - 8, 4, 0, Math.PI * 2);
      ctx.fill();
    }
    ctx.fillStyle = stale ? "#9a9a9a" : "#222";
    ctx.font = "11px sans-serif";
    ctx.fillText(marker.label, x + 10, y + 4);
  }
}
