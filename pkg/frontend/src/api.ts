/** Thin typed client over the platform HTTP API. */

import type {
  AlertsResponse,
  HealthInfo,
  HeatmapCell,
  Predictions,
  Recommendation,
  StudentRecordDto,
  TalentEntry,
  ThresholdConfig,
  WordCloudEntry,
} from "./types.js";

export class ApiError extends Error {
  constructor(readonly status: number, readonly detail: string) {
    super(`API ${status}: ${detail}`);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let detail = response.statusText;
  try {
    const body = await response.json();
    detail = body.detail ?? body.error ?? JSON.stringify(body);
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(response.status, detail);
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private async getJson<T>(path: string, signal?: AbortSignal): Promise<T> {
    const response = await fetch(this.baseUrl + path, { signal: signal ?? null });
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  health(): Promise<HealthInfo> {
    return this.getJson("/health");
  }

  classAlerts(classId: string, teacherId: string, signal?: AbortSignal): Promise<AlertsResponse> {
    const qs = new URLSearchParams({ teacher_id: teacherId });
    return this.getJson(`/classes/${encodeURIComponent(classId)}/alerts?${qs}`, signal);
  }

  studentAlerts(token: string, teacherId: string): Promise<AlertsResponse> {
    const qs = new URLSearchParams({ teacher_id: teacherId });
    return this.getJson(`/students/${token}/alerts?${qs}`);
  }

  predictions(token: string): Promise<Predictions> {
    return this.getJson(`/students/${token}/predictions`);
  }

  studentRecord(token: string): Promise<StudentRecordDto> {
    return this.getJson(`/students/${token}/record`);
  }

  wordcloud(topN: number): Promise<WordCloudEntry[]> {
    return this.getJson(`/iep/wordcloud?top_n=${topN}`);
  }

  heatmap(): Promise<HeatmapCell[]> {
    return this.getJson("/iep/heatmap");
  }

  talents(category: string, k: number, minScore: number): Promise<TalentEntry[]> {
    return this.getJson(`/talents/${category}?k=${k}&min_score=${minScore}`);
  }

  recommendations(token: string, k: number): Promise<Recommendation[]> {
    return this.getJson(`/students/${token}/recommendations?k=${k}`);
  }

  async getThresholds(teacherId: string): Promise<ThresholdConfig & { snapshot: number }> {
    return this.getJson(`/config/thresholds?teacher_id=${encodeURIComponent(teacherId)}`);
  }

  async updateThresholds(config: ThresholdConfig): Promise<{ snapshot: number }> {
    const response = await fetch(this.baseUrl + "/config/thresholds", {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(config),
    });
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as { snapshot: number };
  }
}
