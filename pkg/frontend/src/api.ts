// Thin HTTP client over the service API. The fetch implementation is
// injectable so tests can replay recorded traffic.

import type {
  AnalysisStatus,
  CorrectionPayload,
  EditOp,
  ModelInfo,
  PatchResponse,
  RecomputeResult,
  ReportResponse,
  TreeResponse,
} from "./types.js";

export type HttpResponse = {
  status: number;
  json(): Promise<unknown>;
};

export type FetchLike = (
  url: string,
  init: { method: string; headers?: Record<string, string>; body?: string },
) => Promise<HttpResponse>;

export class ApiRequestError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiRequestError";
  }
}

export class ConflictError extends ApiRequestError {
  constructor(message: string) {
    super(409, message);
    this.name = "ConflictError";
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike,
  ) {}

  private async request<T>(
    method: string,
    path: string,
    body?: string,
    contentType?: string,
  ): Promise<T> {
    const headers = contentType ? { "Content-Type": contentType } : undefined;
    const response = await this.fetchFn(this.baseUrl + path, { method, headers, body });
    const payload = (await response.json()) as Record<string, unknown>;
    if (response.status >= 400) {
      // surface the service's error text verbatim
      const message = typeof payload.error === "string" ? payload.error : `HTTP ${response.status}`;
      if (response.status === 409) throw new ConflictError(message);
      throw new ApiRequestError(response.status, message);
    }
    return payload as T;
  }

  uploadModel(xml: string): Promise<{ model_id: string }> {
    return this.request("POST", "/models", xml, "application/xml");
  }

  getModel(modelId: string): Promise<ModelInfo> {
    return this.request("GET", `/models/${modelId}`);
  }

  startAnalysis(modelId: string, scenarioIds?: string[]): Promise<{ session_id: string }> {
    const body: Record<string, unknown> = { model_id: modelId };
    if (scenarioIds) body.scenario_ids = scenarioIds;
    return this.request("POST", "/analyses", JSON.stringify(body), "application/json");
  }

  getAnalysis(sessionId: string): Promise<AnalysisStatus> {
    return this.request("GET", `/analyses/${sessionId}`);
  }

  getReport(sessionId: string): Promise<ReportResponse> {
    return this.request("GET", `/reports/${sessionId}`);
  }

  getTree(sessionId: string, scenarioId: string): Promise<TreeResponse> {
    return this.request("GET", `/trees/${sessionId}/${scenarioId}`);
  }

  patchNode(
    sessionId: string,
    scenarioId: string,
    nodeId: string,
    version: number,
    edit: EditOp,
  ): Promise<PatchResponse> {
    return this.request(
      "PATCH",
      `/trees/${sessionId}/${scenarioId}/nodes/${nodeId}`,
      JSON.stringify({ version, edit }),
      "application/json",
    );
  }

  recompute(sessionId: string, scenarioId: string): Promise<RecomputeResult> {
    return this.request("POST", `/trees/${sessionId}/${scenarioId}/recompute`);
  }

  submitCorrection(payload: CorrectionPayload): Promise<{ record_id: string }> {
    return this.request(
      "POST",
      "/knowledge/corrections",
      JSON.stringify(payload),
      "application/json",
    );
  }
}
