// Typed client for the builder service. Every number the UI shows comes
// from these responses; nothing is recomputed client-side.

export interface PoolingSpec {
  kind: "max" | "average";
  window: number;
}

export interface LayerSpec {
  kernel_size: number;
  dilation: number;
  kernels_per_marker: number;
  kernels_total: number;
  pooling: PoolingSpec;
}

export interface ImageInfo {
  id: string;
  width: number;
  height: number;
  marker_count: number;
  has_gt: boolean;
}

export interface LayerInfo {
  index: number;
  spec: LayerSpec;
  candidates: number;
  selected: number[];
}

export interface ProjectInfo {
  id: string;
  name: string;
  heuristic: string;
  postproc: { box_expand_fraction: number; min_area_px: number };
  images: ImageInfo[];
  layers: LayerInfo[];
}

export type Pixel = [number, number]; // [row, col]

export interface MarkerJson {
  marker_id: number;
  pixels: Pixel[];
}

export interface MarkerSetJson {
  image_id: string;
  markers: MarkerJson[];
}

export interface KernelInfo {
  index: number;
  provenance: string;
  mean_activation: number;
  std_activation: number;
  sign: -1 | 0 | 1;
  selected: boolean;
  thumb: string;
}

export interface KernelListResponse {
  layer: number;
  image: string;
  kernels: KernelInfo[];
}

export interface BoxJson {
  x1: number;
  y1: number;
  x2: number;
  y2: number;
  score?: number;
}

export interface SaliencyResponse {
  layer: number;
  image_id: string;
  width: number;
  height: number;
  saliency_png: string; // base64 PNG
  boxes: BoxJson[];
  gt_boxes: BoxJson[];
}

export interface AddLayerResponse {
  layer: number;
  candidates: number;
  job_id: string;
}

export interface JobStatus {
  id: string;
  status: "done" | "error" | "running";
  result?: { layer: number; candidates: number };
  error?: string;
}

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export interface RequestLogEntry {
  method: string;
  url: string;
}

export class ApiClient {
  /** Every request made, in order; tests assert on this. */
  readonly log: RequestLogEntry[] = [];

  constructor(
    private baseUrl: string,
    private fetchFn: typeof fetch = globalThis.fetch.bind(globalThis),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const url = `${this.baseUrl}/api/v1${path}`;
    this.log.push({ method, url });
    const response = await this.fetchFn(url, {
      method,
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const parsed = await response.json();
        detail = typeof parsed.detail === "string" ? parsed.detail : JSON.stringify(parsed);
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  health(): Promise<{ name: string; version: string }> {
    return this.request("GET", "/health");
  }

  openProject(path: string): Promise<ProjectInfo> {
    return this.request("POST", "/projects", { path });
  }

  listProjects(): Promise<{ id: string; name: string }[]> {
    return this.request("GET", "/projects");
  }

  getProject(pid: string): Promise<ProjectInfo> {
    return this.request("GET", `/projects/${pid}`);
  }

  imageUrl(pid: string, img: string): string {
    return `${this.baseUrl}/api/v1/projects/${pid}/images/${img}`;
  }

  getMarkers(pid: string, img: string): Promise<MarkerSetJson> {
    return this.request("GET", `/projects/${pid}/images/${img}/markers`);
  }

  putMarkers(pid: string, img: string, markers: MarkerJson[]): Promise<unknown> {
    return this.request("PUT", `/projects/${pid}/images/${img}/markers`, { markers });
  }

  addLayer(pid: string, spec: LayerSpec): Promise<AddLayerResponse> {
    return this.request("POST", `/projects/${pid}/layers`, spec);
  }

  getJob(pid: string, jobId: string): Promise<JobStatus> {
    return this.request("GET", `/projects/${pid}/jobs/${jobId}`);
  }

  deleteLayer(pid: string, layer: number): Promise<{ layers: number }> {
    return this.request("DELETE", `/projects/${pid}/layers/${layer}`);
  }

  getKernels(pid: string, layer: number, img: string): Promise<KernelListResponse> {
    return this.request("GET", `/projects/${pid}/layers/${layer}/kernels?img=${encodeURIComponent(img)}`);
  }

  thumbUrl(thumb: string): string {
    return `${this.baseUrl}${thumb}`;
  }

  putSelection(pid: string, layer: number, selected: number[]): Promise<{ layer: number; selected: number[] }> {
    return this.request("PUT", `/projects/${pid}/layers/${layer}/selection`, { selected });
  }

  getSaliency(pid: string, layer: number, img: string): Promise<SaliencyResponse> {
    return this.request("GET", `/projects/${pid}/layers/${layer}/saliency/${img}`);
  }

  exportModel(pid: string): Promise<{ model_id: string; path: string }> {
    return this.request("POST", `/projects/${pid}/export`);
  }

  /** Requests made so far, filtered by method (helper for tests). */
  countRequests(method: string, urlPart: string): number {
    return this.log.filter((e) => e.method === method && e.url.includes(urlPart)).length;
  }
}
