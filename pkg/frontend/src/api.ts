// Typed client for the quiz HTTP API. The fetch function is injectable so
// tests can run against a scripted in-memory server.

export type Label = "real" | "synthetic";

export interface SessionInfo {
  session_id: string;
  quiz_id: string;
  cursor: number;
  total_items: number;
}

export interface NextItem {
  done: boolean;
  index: number | null;
  image_url: string | null;
  answered: number;
  total: number;
}

export interface AnswerAck {
  accepted: boolean;
  cursor: number;
  done: boolean;
}

export interface Report {
  session_id: string;
  grader_id: string;
  tp: number;
  fp: number;
  tn: number;
  fn: number;
  tpr: number;
  fpr: number;
  accuracy_percent: number;
  switch_rate_percent: number;
  switched_groups: number;
  duplicate_groups: number;
  mean_time_synthetic_s: number;
  mean_time_real_s: number;
  total_time_s: number;
}

export class ApiError extends Error {
  constructor(public readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class VttApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, `network failure: ${String(err)}`);
    }
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = (await resp.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(resp.status, detail);
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

  startSession(quizId: string, graderId: string): Promise<SessionInfo> {
    return this.post<SessionInfo>("/session", {
      quiz_id: quizId,
      grader_id: graderId,
    });
  }

  nextItem(sessionId: string): Promise<NextItem> {
    return this.request<NextItem>(`/session/${sessionId}/next`);
  }

  submitAnswer(
    sessionId: string,
    index: number,
    label: Label,
    elapsedMs: number,
  ): Promise<AnswerAck> {
    return this.post<AnswerAck>(`/session/${sessionId}/answer`, {
      index,
      label,
      elapsed_ms: elapsedMs,
    });
  }

  report(sessionId: string): Promise<Report> {
    return this.request<Report>(`/session/${sessionId}/report`);
  }
}
