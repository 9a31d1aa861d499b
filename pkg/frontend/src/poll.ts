import type { RunSummary } from "./api.js";

export class PollCancelled extends Error {
  constructor() {
    super("polling cancelled");
    this.name = "PollCancelled";
  }
}

export interface PollOptions {
  intervalMs?: number;
  backoffFactor?: number;
  maxIntervalMs?: number;
  onUpdate?: (summary: RunSummary) => void;
  setTimeoutImpl?: (fn: () => void, ms: number) => unknown;
  clearTimeoutImpl?: (handle: unknown) => void;
}

export interface PollHandle {
  done: Promise<RunSummary>;
  cancel(): void;
}

// Polls a run until it settles (done or failed). One request is in flight at
// a time; the delay starts at 2 s and backs off geometrically. Transient
// fetch errors do not abort the poll - the run may still be computing.
export function pollRun(
  fetchStatus: () => Promise<RunSummary>,
  options: PollOptions = {},
): PollHandle {
  const interval = options.intervalMs ?? 2000;
  const factor = options.backoffFactor ?? 1.5;
  const ceiling = options.maxIntervalMs ?? 15_000;
  const schedule = options.setTimeoutImpl ?? ((fn, ms) => setTimeout(fn, ms));
  const unschedule = options.clearTimeoutImpl ?? ((handle) => clearTimeout(handle as number));

  let cancelled = false;
  let timer: unknown = null;
  let rejectDone: (reason: Error) => void;

  const done = new Promise<RunSummary>((resolve, reject) => {
    rejectDone = reject;
    let delay = interval;

    const attempt = async (): Promise<void> => {
      if (cancelled) return;
      let summary: RunSummary | null = null;
      try {
        summary = await fetchStatus();
      } catch {
        summary = null; // transient; retry on the regular schedule
      }
      if (cancelled) return;
      if (summary !== null) {
        options.onUpdate?.(summary);
        if (summary.status === "done" || summary.status === "failed") {
          resolve(summary);
          return;
        }
      }
      timer = schedule(() => void attempt(), delay);
      delay = Math.min(delay * factor, ceiling);
    };

    void attempt();
  });

  return {
    done,
    cancel(): void {
      if (cancelled) return;
      cancelled = true;
      if (timer !== null) unschedule(timer);
      rejectDone(new PollCancelled());
    },
  };
}
