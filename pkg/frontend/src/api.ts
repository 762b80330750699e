/**
 * Thin typed client for the annotation service HTTP API. The fetch
 * implementation is injectable so tests can run without a network.
 */

import type {
  AgreementResponse,
  AnnotationPayload,
  NextTaskResponse,
  Progress,
  Schema,
  SubmitAck,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function raiseForStatus(response: Response): Promise<void> {
  if (response.ok) return;
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (body && body.detail !== undefined) detail = String(body.detail);
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, detail);
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path);
    await raiseForStatus(response);
    return (await response.json()) as T;
  }

  getSchema(): Promise<Schema> {
    return this.getJson<Schema>("/api/schema");
  }

  nextTask(annotator: string): Promise<NextTaskResponse> {
    return this.getJson<NextTaskResponse>(
      `/api/tasks/next?annotator=${encodeURIComponent(annotator)}`,
    );
  }

  progress(annotator: string): Promise<Progress> {
    return this.getJson<Progress>(`/api/progress?annotator=${encodeURIComponent(annotator)}`);
  }

  agreement(): Promise<AgreementResponse> {
    return this.getJson<AgreementResponse>("/api/agreement");
  }

  async submit(payload: AnnotationPayload): Promise<SubmitAck> {
    const response = await this.fetchFn(this.baseUrl + "/api/annotations", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    await raiseForStatus(response);
    return (await response.json()) as SubmitAck;
  }

  async exportCsv(): Promise<string> {
    const response = await this.fetchFn(this.baseUrl + "/api/export/annotations.csv");
    await raiseForStatus(response);
    return await response.text();
  }

  imageUrl(addressId: string, view: "street" | "satellite"): string {
    return `${this.baseUrl}/api/images/${encodeURIComponent(addressId)}/${view}`;
  }
}
