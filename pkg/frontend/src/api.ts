import type {
  CandidateCard,
  DecisionCriteria,
  DecisionDraft,
  DecisionRecord,
  FieldErrors,
  RunReport,
  RunSummary,
} from "./types.js";

export interface SessionConfig {
  baseUrl: string;
  token: string;
  fetchFn?: typeof fetch;
}

export class ApiRequestError extends Error {
  readonly status: number;
  readonly fields: FieldErrors;

  constructor(status: number, message: string, fields: FieldErrors = {}) {
    super(message);
    this.name = "ApiRequestError";
    this.status = status;
    this.fields = fields;
  }
}

function errorFrom(status: number, body: unknown): ApiRequestError {
  if (body && typeof body === "object") {
    const shaped = body as { error?: unknown; fields?: unknown };
    const message =
      typeof shaped.error === "string"
        ? shaped.error
        : `request failed with status ${status}`;
    const fields: FieldErrors = {};
    if (shaped.fields && typeof shaped.fields === "object") {
      for (const [key, value] of Object.entries(shaped.fields)) {
        fields[key] = String(value);
      }
    }
    return new ApiRequestError(status, message, fields);
  }
  return new ApiRequestError(status, `request failed with status ${status}`);
}

export function createApi(config: SessionConfig) {
  const base = config.baseUrl.replace(/\/+$/, "");
  const fetchFn = config.fetchFn ?? fetch;

  async function request<T>(
    path: string,
    init: RequestInit = {},
    authed = false,
  ): Promise<T> {
    const headers: Record<string, string> = {};
    if (init.body !== undefined) {
      headers["Content-Type"] = "application/json";
    }
    if (authed) {
      headers["Authorization"] = `Bearer ${config.token}`;
    }
    const response = await fetchFn(`${base}${path}`, { ...init, headers });
    const text = await response.text();
    const body: unknown = text ? JSON.parse(text) : null;
    if (!response.ok) {
      throw errorFrom(response.status, body);
    }
    return body as T;
  }

  return {
    listRuns: (): Promise<RunSummary[]> => request("/runs"),

    getRun: (runId: string): Promise<RunReport> =>
      request(`/runs/${encodeURIComponent(runId)}`),

    getShortlist: (runId: string, top?: number): Promise<CandidateCard[]> => {
      const query = top !== undefined ? `?top=${top}` : "";
      return request(`/runs/${encodeURIComponent(runId)}/shortlist${query}`);
    },

    submitDecision: (
      runId: string,
      draft: DecisionDraft,
      force = false,
    ): Promise<DecisionRecord> =>
      request(
        `/runs/${encodeURIComponent(runId)}/decision${force ? "?force=true" : ""}`,
        { method: "POST", body: JSON.stringify(draft) },
        true,
      ),

    autoDecision: (
      runId: string,
      criteria: DecisionCriteria,
      force = false,
    ): Promise<DecisionRecord> =>
      request(
        `/runs/${encodeURIComponent(runId)}/decision:auto${force ? "?force=true" : ""}`,
        { method: "POST", body: JSON.stringify({ criteria }) },
        true,
      ),
  };
}

export type ReviewApi = ReturnType<typeof createApi>;
