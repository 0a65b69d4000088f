/** Typed client for the glint inference service. */

export interface ParamInfo {
  name: string;
  kind: string;
  min: number;
  max: number;
}

export interface CameraInfo {
  mode: "fixed" | "variable";
  position: number[];
  lookat: number[];
  position_min?: number[];
  position_max?: number[];
  lookat_min?: number[];
  lookat_max?: number[];
}

export interface SpaceInfo {
  dim: number;
  scene: string;
  params: ParamInfo[];
  camera: CameraInfo;
  checkpoint_info: Record<string, unknown>;
}

export interface RenderRequest {
  vector: number[];
  camera: number[];
  resolution: number;
  mode: "net" | "pt";
  spp?: number;
  exposure?: number;
}

export class ApiClient {
  constructor(private baseUrl: string, private fetcher: typeof fetch = fetch) {}

  async space(): Promise<SpaceInfo> {
    const res = await this.fetcher(`${this.baseUrl}/space`);
    if (!res.ok) throw new Error(`GET /space failed: ${res.status}`);
    return (await res.json()) as SpaceInfo;
  }

  async health(): Promise<boolean> {
    try {
      const res = await this.fetcher(`${this.baseUrl}/healthz`);
      return res.ok;
    } catch {
      return false;
    }
  }

  async render(req: RenderRequest): Promise<Blob> {
    const res = await this.fetcher(`${this.baseUrl}/render`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
    });
    if (!res.ok) {
      let detail = `${res.status}`;
      try {
        const doc = await res.json();
        detail = doc.error ?? detail;
      } catch {
        /* non-JSON error body */
      }
      throw new Error(`render failed: ${detail}`);
    }
    return await res.blob();
  }

  async debugNormalize(raw: number[]): Promise<{ normalized: number[]; denormalized: number[] }> {
    const res = await this.fetcher(`${this.baseUrl}/debug/normalize`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ raw }),
    });
    if (!res.ok) throw new Error(`debug/normalize failed: ${res.status}`);
    return await res.json();
  }
}
