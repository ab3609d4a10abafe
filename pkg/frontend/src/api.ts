import type {
  Answer,
  AnswerAck,
  ClusterResult,
  ConfusionTable,
  CreateSessionOptions,
  NextResponse,
  SessionStatus,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type SubmitResult =
  | { conflict: false; ack: AnswerAck }
  | { conflict: true };

/** Thin typed wrapper over the labeling-service HTTP API. */
export class LabelServiceClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = globalThis.fetch.bind(globalThis),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!resp.ok) {
      let code = "http_error";
      let message = `${resp.status} ${resp.statusText}`;
      try {
        const body = (await resp.json()) as { code?: string; message?: string };
        code = body.code ?? code;
        message = body.message ?? message;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(resp.status, code, message);
    }
    return (await resp.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  createSession(opts: CreateSessionOptions): Promise<SessionStatus> {
    return this.post<SessionStatus>("/sessions", { seed: 0, ...opts });
  }

  status(sessionId: string): Promise<SessionStatus> {
    return this.request<SessionStatus>(`/sessions/${sessionId}`);
  }

  next(sessionId: string): Promise<NextResponse> {
    return this.request<NextResponse>(`/sessions/${sessionId}/next`);
  }

  /** Duplicate submissions come back as 409 and are reported, not thrown. */
  async submitAnswer(sessionId: string, queryId: number, answer: Answer): Promise<SubmitResult> {
    try {
      const ack = await this.post<AnswerAck>(`/sessions/${sessionId}/answers`, {
        queryId,
        answer,
      });
      return { conflict: false, ack };
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        return { conflict: true };
      }
      throw err;
    }
  }

  exportUrl(sessionId: string): string {
    return `${this.baseUrl}/sessions/${sessionId}/export`;
  }

  async exportText(sessionId: string): Promise<string> {
    const resp = await this.fetchFn(this.exportUrl(sessionId));
    if (!resp.ok) {
      throw new ApiError(resp.status, "export_failed", `${resp.status} ${resp.statusText}`);
    }
    return resp.text();
  }

  confusion(sessionId: string): Promise<ConfusionTable> {
    return this.request<ConfusionTable>(`/sessions/${sessionId}/confusion`);
  }

  runClustering(sessionId: string, k: number, epsilon = 0.15): Promise<ClusterResult> {
    return this.post<ClusterResult>(`/sessions/${sessionId}/cluster`, { k, epsilon });
  }
}
