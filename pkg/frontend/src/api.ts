import { Progress, RatingPayload, RatingTask } from "./types.js";

export type SubmitResult =
  | { ok: true }
  | { ok: false; status: number; error: string };

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl = "", fetchImpl: FetchLike = (...args) => fetch(...args)) {
    this.base = baseUrl.replace(/\/$/, "");
    this.fetchImpl = fetchImpl;
  }

  /** Next task for this rater, or null when everything is rated (204). */
  async next(rater: string): Promise<RatingTask | null> {
    const response = await this.fetchImpl(
      `${this.base}/api/next?rater=${encodeURIComponent(rater)}`
    );
    if (response.status === 204) {
      return null;
    }
    if (!response.ok) {
      throw new Error(`next: HTTP ${response.status}`);
    }
    return (await response.json()) as RatingTask;
  }

  /** Submit one judgment; 409/422 come back as structured failures. */
  async submit(payload: RatingPayload): Promise<SubmitResult> {
    const response = await this.fetchImpl(`${this.base}/api/rating`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (response.ok) {
      return { ok: true };
    }
    let error = `HTTP ${response.status}`;
    try {
      const body = (await response.json()) as { error?: string };
      if (body.error) {
        error = body.error;
      }
    } catch {
      // non-JSON error body: keep the status text
    }
    return { ok: false, status: response.status, error };
  }

  async progress(): Promise<Progress> {
    const response = await this.fetchImpl(`${this.base}/api/progress`);
    if (!response.ok) {
      throw new Error(`progress: HTTP ${response.status}`);
    }
    return (await response.json()) as Progress;
  }
}
