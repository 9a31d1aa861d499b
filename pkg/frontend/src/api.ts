// Typed client for the run service. Everything the UI knows about the
// backend lives here; no endpoint outside /api/v1 is ever called.

export interface Phrase {
  text: string;
  score: number;
  weight: number;
}

export interface GroupPayload {
  cluster: number;
  size: number;
  noise: boolean;
  member_ids: string[];
  top_phrases: Phrase[];
}

export interface ComboRef {
  vectorizer: string;
  preprocessed: boolean;
  algorithm: string;
}

export interface GroupsPayload {
  run_id: string;
  best_combo: ComboRef;
  total_records: number;
  groups: GroupPayload[];
}

export interface CloudPayload {
  cluster: number;
  phrases: Phrase[];
}

export interface LogRecord {
  id: string;
  timestamp: string | null;
  severity: string;
  message: string;
  branch: string;
  session_id: string;
}

export type RunStatus = "pending" | "running" | "done" | "failed";

export interface RunSummary {
  run_id: string;
  status: RunStatus;
  n_records: number;
  config: unknown;
  failures?: Record<string, string>;
  error?: { code: string; message: string };
}

export interface RunAccepted {
  run_id: string;
  status: RunStatus;
}

export interface WindowSelection {
  from: string;
  to: string;
  branches: string[];
}

export interface RunRequest {
  config: { window: { from: string; to: string; branches?: string[] } };
  corpus_jsonl?: string;
  corpus_path?: string;
  idempotency_key?: string;
}

export class ApiError extends Error {
  constructor(
    readonly code: string,
    message: string,
    readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

// Maps every service error code (plus our client-side "unreachable") to the
// banner the user should see. Retryable errors keep their action buttons.
const BANNERS: Record<string, { text: string; retryable: boolean }> = {
  invalid_config: { text: "The run settings were rejected", retryable: false },
  not_found: { text: "That run or record does not exist", retryable: false },
  not_ready: { text: "The run is still being computed", retryable: true },
  conflict: { text: "This submission clashes with an earlier one", retryable: false },
  provider_unavailable: {
    text: "The embedding provider could not be reached",
    retryable: true,
  },
  internal: { text: "The service hit an internal error", retryable: true },
  unreachable: { text: "The service is not responding", retryable: true },
};

export function bannerFor(error: unknown): { text: string; retryable: boolean } {
  if (error instanceof ApiError) {
    const banner = BANNERS[error.code];
    if (banner) {
      return { text: `${banner.text}: ${error.message}`, retryable: banner.retryable };
    }
    return { text: error.message, retryable: false };
  }
  return { text: "Something went wrong in the browser", retryable: true };
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly fetchImpl: FetchLike,
    private readonly base: string = "/api/v1",
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.base + path, init);
    } catch {
      throw new ApiError("unreachable", "could not reach the service", 0);
    }
    const body = await response.json().catch(() => null);
    if (!response.ok) {
      const code =
        body && typeof body === "object" && typeof (body as { code?: unknown }).code === "string"
          ? (body as { code: string }).code
          : "internal";
      const message =
        body && typeof body === "object" && typeof (body as { message?: unknown }).message === "string"
          ? (body as { message: string }).message
          : `request failed with status ${response.status}`;
      throw new ApiError(code, message, response.status);
    }
    return body as T;
  }

  postRun(request: RunRequest): Promise<RunAccepted> {
    return this.request<RunAccepted>("/runs", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(request),
    });
  }

  getRun(runId: string): Promise<RunSummary> {
    return this.request<RunSummary>(`/runs/${encodeURIComponent(runId)}`);
  }

  getGroups(runId: string, limit = 10_000, offset = 0): Promise<GroupsPayload> {
    const query = `?limit=${limit}&offset=${offset}`;
    return this.request<GroupsPayload>(`/runs/${encodeURIComponent(runId)}/groups${query}`);
  }

  getWordcloud(runId: string, cluster: number): Promise<CloudPayload> {
    return this.request<CloudPayload>(
      `/runs/${encodeURIComponent(runId)}/groups/${cluster}/wordcloud`,
    );
  }

  getLog(recordId: string): Promise<LogRecord> {
    return this.request<LogRecord>(`/logs/${encodeURIComponent(recordId)}`);
  }
}
