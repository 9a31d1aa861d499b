import type { RunRequest, WindowSelection } from "./api.js";

// Nightly runs execute between these UTC hours; the presets mirror the
// windows engineers actually review.
export const NIGHT_START_HOUR = 22;
export const NIGHT_END_HOUR = 6;

const HOUR_MS = 3_600_000;
const NIGHT_LENGTH_MS = (24 - NIGHT_START_HOUR + NIGHT_END_HOUR) * HOUR_MS;

function isoAtUtcHour(day: Date, hour: number): Date {
  return new Date(Date.UTC(day.getUTCFullYear(), day.getUTCMonth(), day.getUTCDate(), hour));
}

// The most recent fully completed night: ends at the last 06:00 UTC that has
// already passed, starts eight hours earlier.
export function lastNight(now: Date): { from: string; to: string } {
  let end = isoAtUtcHour(now, NIGHT_END_HOUR);
  if (end.getTime() > now.getTime()) {
    end = new Date(end.getTime() - 24 * HOUR_MS);
  }
  const start = new Date(end.getTime() - NIGHT_LENGTH_MS);
  return { from: start.toISOString(), to: end.toISOString() };
}

export function lastWeek(now: Date): { from: string; to: string } {
  const start = new Date(now.getTime() - 7 * 24 * HOUR_MS);
  return { from: start.toISOString(), to: now.toISOString() };
}

// Wide-open bounds; the service requires explicit endpoints.
export function allTime(): { from: string; to: string } {
  return { from: "1970-01-01T00:00:00.000Z", to: "2100-01-01T00:00:00.000Z" };
}

export type PresetName = "last-night" | "last-week" | "all";

export function presetBounds(name: PresetName, now: Date): { from: string; to: string } {
  switch (name) {
    case "last-night":
      return lastNight(now);
    case "last-week":
      return lastWeek(now);
    case "all":
      return allTime();
  }
}

// An empty branch selection means "all branches": the window object simply
// omits the filter.
export function buildRunRequest(selection: WindowSelection, corpusPath: string): RunRequest {
  const window: RunRequest["config"]["window"] = {
    from: selection.from,
    to: selection.to,
  };
  const branches = selection.branches.filter((branch) => branch.trim().length > 0);
  if (branches.length > 0) {
    window.branches = [...branches].sort();
  }
  return { config: { window }, corpus_path: corpusPath };
}
