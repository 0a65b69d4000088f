/** Panel state and request scheduling, kept free of DOM concerns so the
 * mapping logic and the debounce policy are directly testable. */

import type { ParamInfo, RenderRequest, SpaceInfo } from "./api.js";

/** Exact inverse pair of the server's parameter ranges. */
export function normalizeValue(p: ParamInfo, physical: number): number {
  return (physical - p.min) / (p.max - p.min);
}

export function denormalizeValue(p: ParamInfo, normalized: number): number {
  return p.min + normalized * (p.max - p.min);
}

export interface OrbitState {
  azimuthDeg: number;
  elevationDeg: number;
  radius: number;
  target: [number, number, number];
}

/** Angular camera steering mapped onto the service's position/lookat pair. */
export function orbitToCamera(o: OrbitState): number[] {
  const az = (o.azimuthDeg * Math.PI) / 180;
  const el = (o.elevationDeg * Math.PI) / 180;
  const [tx, ty, tz] = o.target;
  const px = tx + o.radius * Math.cos(el) * Math.sin(az);
  const py = ty + o.radius * Math.sin(el);
  const pz = tz + o.radius * Math.cos(el) * Math.cos(az);
  return [px, py, pz, tx, ty, tz];
}

export class PanelState {
  /** slider values in physical units, one per parameter */
  values: number[];
  resolution = 128;
  mode: "net" | "pt" = "net";
  spp = 16;
  exposure = 1.0;
  orbit: OrbitState;

  constructor(public space: SpaceInfo) {
    this.values = space.params.map((p) => p.min + 0.5 * (p.max - p.min));
    const cam = space.camera;
    const d = [
      cam.position[0] - cam.lookat[0],
      cam.position[1] - cam.lookat[1],
      cam.position[2] - cam.lookat[2],
    ];
    const radius = Math.hypot(d[0], d[1], d[2]);
    this.orbit = {
      azimuthDeg: (Math.atan2(d[0], d[2]) * 180) / Math.PI,
      elevationDeg: (Math.asin(d[1] / radius) * 180) / Math.PI,
      radius,
      target: [cam.lookat[0], cam.lookat[1], cam.lookat[2]],
    };
  }

  setValue(index: number, physical: number): void {
    const p = this.space.params[index];
    this.values[index] = Math.min(p.max, Math.max(p.min, physical));
  }

  normalized(): number[] {
    return this.values.map((v, i) => normalizeValue(this.space.params[i], v));
  }

  camera(): number[] {
    if (this.space.camera.mode === "fixed") {
      return [...this.space.camera.position, ...this.space.camera.lookat];
    }
    return orbitToCamera(this.orbit);
  }

  renderRequest(mode?: "net" | "pt"): RenderRequest {
    const m = mode ?? this.mode;
    const req: RenderRequest = {
      vector: this.normalized(),
      camera: this.camera(),
      resolution: this.resolution,
      mode: m,
      exposure: this.exposure,
    };
    if (m === "pt") req.spp = this.spp;
    return req;
  }
}

export interface RenderResult {
  blob: Blob;
  latencyMs: number;
  request: RenderRequest;
}

/** Debounced, drop-superseded render loop: at most one request in flight;
 * bursts collapse to the latest state. */
export class RenderScheduler {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inFlight = false;
  private pending: RenderRequest | null = null;
  sendCount = 0;
  onResult: (r: RenderResult) => void = () => {};
  onError: (e: Error) => void = () => {};

  constructor(
    private send: (req: RenderRequest) => Promise<Blob>,
    private debounceMs = 100,
    private now: () => number = () => performance.now(),
  ) {}

  /** Call on every state change; the latest request wins. */
  request(req: RenderRequest): void {
    this.pending = req;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      this.fire();
    }, this.debounceMs);
  }

  private fire(): void {
    if (this.inFlight || this.pending === null) return;
    const req = this.pending;
    this.pending = null;
    this.inFlight = true;
    this.sendCount += 1;
    const t0 = this.now();
    this.send(req)
      .then((blob) => {
        this.onResult({ blob, latencyMs: this.now() - t0, request: req });
      })
      .catch((e) => this.onError(e instanceof Error ? e : new Error(String(e))))
      .finally(() => {
        this.inFlight = false;
        if (this.pending !== null) this.fire(); // superseded state queued up
      });
  }
}
