// Track playback: turn a /track response into a polyline with per-point
// speed coloring, direction arrows, and violation span markers for a
// chosen speed limit. Pure data transforms; the map draws the result.

import type { TrackPoint } from "./api";

export interface PolylineSegment {
  fromLat: number;
  fromLon: number;
  toLat: number;
  toLon: number;
  speedKmh: number;
  heading: number;
  overLimit: boolean;
}

export interface ViolationSpan {
  startMs: number;
  endMs: number;
  peakKmh: number;
}

export function speedColor(speedKmh: number): string {
  // green -> amber -> red by speed band
  if (speedKmh < 40) {
    return "#2e8b57";
  }
  if (speedKmh < 80) {
    return "#d8a51d";
  }
  return "#c8372d";
}

export function buildPolyline(
  points: TrackPoint[],
  speedLimitKmh: number | null,
): PolylineSegment[] {
  const valid = points.filter((p) => p.valid);
  const segments: PolylineSegment[] = [];
  for (let i = 1; i < valid.length; i++) {
    const a = valid[i - 1];
    const b = valid[i];
    segments.push({
      fromLat: a.lat,
      fromLon: a.lon,
      toLat: b.lat,
      toLon: b.lon,
      speedKmh: a.speed_kmh,
      heading: a.heading,
      overLimit: speedLimitKmh !== null && a.speed_kmh > speedLimitKmh,
    });
  }
  return segments;
}

export function violationSpans(
  points: TrackPoint[],
  speedLimitKmh: number,
): ViolationSpan[] {
  const valid = points.filter((p) => p.valid);
  const spans: ViolationSpan[] = [];
  let i = 0;
  while (i < valid.length) {
    if (valid[i].speed_kmh > speedLimitKmh) {
      let j = i;
      let peak = valid[i].speed_kmh;
      while (j + 1 < valid.length && valid[j + 1].speed_kmh > speedLimitKmh) {
        j += 1;
        peak = Math.max(peak, valid[j].speed_kmh);
      }
      const endMs =
        j + 1 < valid.length ? valid[j + 1].timestamp_ms : valid[j].timestamp_ms;
      spans.push({ startMs: valid[i].timestamp_ms, endMs, peakKmh: peak });
      i = j + 1;
    } else {
      i += 1;
    }
  }
  return spans;
}

// arrows every n-th segment so direction reads at a glance
export function arrowIndices(segmentCount: number, every = 5): number[] {
  const indices: number[] = [];
  for (let i = 0; i < segmentCount; i += every) {
    indices.push(i);
  }
  return indices;
}
