// Typed client for the /v1 inference endpoints.

export interface Pose {
  yaw: number;
  pitch: number;
  roll: number;
}

export interface Blink {
  left: number;
  right: number;
}

export interface ReenactRequest {
  identity: string;
  pose: Pose;
  blink: Blink;
  mfcc?: number[][] | null;
  audio_pcm_b64?: string | null;
  sample_rate?: number | null;
  want_landmarks?: boolean;
}

export interface ReenactResponse {
  identity: string;
  landmarks: [number, number][];
  face_png_b64: string;
  landmark_png_b64?: string;
  latency_ms: { predict: number; render: number; reenact: number; total: number };
}

export interface SweepRequest {
  variable: "yaw" | "pitch" | "roll" | "blink";
  range: [number, number];
  steps: number;
  base: ReenactRequest;
}

export interface SweepResponse {
  variable: string;
  values: number[];
  frames: ReenactResponse[];
}

export interface ServiceConfig {
  pipeline_version: string;
  resolution: number;
  feature_config: {
    sample_rate: number;
    window_seconds: number;
    fps: number;
    n_fft_frames: number;
    n_mfcc: number;
  };
  identities: string[];
  pose_ranges: { yaw: [number, number]; pitch: [number, number]; roll: [number, number] };
}

export class ApiError extends Error {
  constructor(public status: number, public code: string, message: string) {
    super(message);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(private baseUrl = "", private fetchFn: FetchLike = (...a) => fetch(...a)) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    const body = await response.json();
    if (!response.ok) {
      const detail = body?.detail ?? {};
      throw new ApiError(response.status, detail.code ?? "error", detail.message ?? "request failed");
    }
    return body as T;
  }

  config(): Promise<ServiceConfig> {
    return this.request<ServiceConfig>("/v1/config");
  }

  reenact(body: ReenactRequest): Promise<ReenactResponse> {
    return this.request<ReenactResponse>("/v1/reenact", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  sweep(body: SweepRequest): Promise<SweepResponse> {
    return this.request<SweepResponse>("/v1/sweep", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  stats(): Promise<unknown> {
    return this.request("/v1/stats");
  }
}
