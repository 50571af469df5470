/**
 * Typed client for the annotation service HTTP API.
 *
 * Transient network failures are retried with backoff; HTTP errors are
 * surfaced as ApiError (409 as ConflictError so the UI can prompt a
 * reload instead of losing work).
 */

import type { StepLabel, TaskView } from "./state.js";

export interface SplitSummary {
  split_id: number;
  state: string;
  size: number;
  status_counts: Record<string, number>;
  review_round: number;
  review_task_ids: string[];
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ConflictError extends ApiError {
  constructor(message: string) {
    super(409, message);
  }
}

export class NetworkError extends Error {}

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

export class AnnotationApi {
  constructor(
    private baseUrl: string,
    private token: string | null = null,
    private retries = 3,
    private retryDelayMs = 150,
  ) {}

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["X-Annotation-Token"] = this.token;
    return headers;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.raw(path, init);
    return (await response.json()) as T;
  }

  private async raw(path: string, init?: RequestInit): Promise<Response> {
    let lastError: unknown = null;
    for (let attempt = 0; attempt < this.retries; attempt++) {
      let response: Response;
      try {
        response = await fetch(`${this.baseUrl}${path}`, {
          headers: this.headers(),
          ...init,
        });
      } catch (error) {
        lastError = error;
        await sleep(this.retryDelayMs * 2 ** attempt);
        continue;
      }
      if (response.ok) return response;
      const detail = await response
        .json()
        .then((body: { detail?: string }) => body.detail ?? response.statusText)
        .catch(() => response.statusText);
      if (response.status === 409) throw new ConflictError(detail);
      if (response.status >= 500) {
        lastError = new ApiError(response.status, detail);
        await sleep(this.retryDelayMs * 2 ** attempt);
        continue;
      }
      throw new ApiError(response.status, detail);
    }
    throw new NetworkError(`request to ${path} kept failing: ${String(lastError)}`);
  }

  listSplits(): Promise<SplitSummary[]> {
    return this.request("/api/splits");
  }

  claim(splitId: number, assignee: string): Promise<TaskView> {
    return this.request(`/api/splits/${splitId}/claim`, {
      method: "POST",
      body: JSON.stringify({ assignee }),
    });
  }

  task(taskId: string): Promise<TaskView> {
    return this.request(`/api/tasks/${taskId}`);
  }

  submitLabels(taskId: string, labels: StepLabel[], version: number): Promise<TaskView> {
    return this.request(`/api/tasks/${taskId}/labels`, {
      method: "POST",
      body: JSON.stringify({ labels, version }),
    });
  }

  skip(taskId: string, version: number): Promise<TaskView> {
    return this.request(`/api/tasks/${taskId}/skip`, {
      method: "POST",
      body: JSON.stringify({ version }),
    });
  }

  sampleReview(splitId: number): Promise<{ task_ids: string[] }> {
    return this.request(`/api/splits/${splitId}/review/sample`, { method: "POST" });
  }

  resolveReview(splitId: number, accepted: boolean): Promise<SplitSummary> {
    return this.request(`/api/splits/${splitId}/review/resolve`, {
      method: "POST",
      body: JSON.stringify({ accepted }),
    });
  }

  async exportSplit(splitId: number): Promise<string> {
    const response = await this.raw(`/api/splits/${splitId}/export`);
    return response.text();
  }
}
