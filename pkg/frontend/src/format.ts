// Fleet-local time rendering: the server tells us the fleet's UTC
// offset; all timestamps on screen use it, never the browser zone.

export function formatFleetTime(ms: number, utcOffsetMin: number): string {
  const shifted = new Date(ms + utcOffsetMin * 60_000);
  const p = (n: number, w = 2) => String(n).padStart(w, "0");
  return (
    `${shifted.getUTCFullYear()}-${p(shifted.getUTCMonth() + 1)}-` +
    `${p(shifted.getUTCDate())} ${p(shifted.getUTCHours())}:` +
    `${p(shifted.getUTCMinutes())}:${p(shifted.getUTCSeconds())}`
  );
}

export function formatAge(ageS: number): string {
  if (ageS < 60) {
    return `${Math.round(ageS)}s`;
  }
  if (ageS < 3600) {
    return `${Math.round(ageS / 60)}m`;
  }
  return `${(ageS / 3600).toFixed(1)}h`;
}

export function formatKm(km: number): string {
  return km.toFixed(3);
}
