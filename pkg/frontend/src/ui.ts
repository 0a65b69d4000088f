/** DOM construction for the slider panel. */

import { ApiClient } from "./api.js";
import { PanelState, RenderScheduler, denormalizeValue, normalizeValue } from "./model.js";

const SLIDER_STEPS = 1000;

export interface Panel {
  state: PanelState;
  scheduler: RenderScheduler;
  root: HTMLElement;
  requestRender: () => void;
  compare: () => Promise<void>;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, cls?: string, text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text) node.textContent = text;
  return node;
}

function showBlob(img: HTMLImageElement, blob: Blob): void {
  const url = URL.createObjectURL(blob);
  const old = img.dataset.url;
  img.src = url;
  img.dataset.url = url;
  if (old) URL.revokeObjectURL(old);
}

export async function initPanel(root: HTMLElement, api: ApiClient): Promise<Panel> {
  const space = await api.space();
  const state = new PanelState(space);
  const scheduler = new RenderScheduler((req) => api.render(req));

  root.innerHTML = "";
  const controls = el("div", "controls");
  const viewer = el("div", "viewer");
  root.append(controls, viewer);

  const title = el("h2", "", `${space.scene} — ${space.dim} parameters`);
  controls.append(title);

  const image = el("img", "render");
  image.alt = "rendered scene";
  image.width = state.resolution;
  const latency = el("span", "latency", "–");
  const compareImage = el("img", "render compare-img");
  compareImage.alt = "path-traced reference";
  compareImage.style.display = "none";
  viewer.append(image, compareImage, el("div", "badge"), latency);

  const debug = el("pre", "debug");

  const requestRender = () => {
    updateDebug();
    scheduler.request(state.renderRequest());
  };

  scheduler.onResult = (r) => {
    showBlob(image, r.blob);
    latency.textContent = `${r.latencyMs.toFixed(0)} ms (${r.request.mode})`;
  };
  scheduler.onError = (e) => {
    latency.textContent = `error: ${e.message}`;
  };

  // one slider per parameter, labelled in physical units
  for (let i = 0; i < space.params.length; i++) {
    const p = space.params[i];
    const row = el("div", "slider-row");
    const label = el("label", "", `${p.name} (${p.kind})`);
    const slider = el("input", "param-slider");
    slider.type = "range";
    slider.min = "0";
    slider.max = String(SLIDER_STEPS);
    slider.step = "1";
    slider.value = String(Math.round(normalizeValue(p, state.values[i]) * SLIDER_STEPS));
    slider.dataset.param = p.name;
    const readout = el("span", "readout", state.values[i].toFixed(3));
    slider.addEventListener("input", () => {
      const normalized = Number(slider.value) / SLIDER_STEPS;
      state.setValue(i, denormalizeValue(p, normalized));
      readout.textContent = state.values[i].toFixed(3);
      requestRender();
    });
    row.append(label, slider, readout);
    controls.append(row);
  }

  // orbit camera controls, hidden when the space fixes the camera
  const camBox = el("div", "camera-controls");
  if (space.camera.mode === "fixed") {
    camBox.style.display = "none";
  } else {
    const specs: Array<[string, keyof typeof state.orbit, number, number]> = [
      ["azimuth", "azimuthDeg", -180, 180],
      ["elevation", "elevationDeg", -80, 80],
      ["radius", "radius", 0.2, 5],
    ];
    for (const [name, key, lo, hi] of specs) {
      const row = el("div", "slider-row");
      const slider = el("input", "orbit-slider");
      slider.type = "range";
      slider.min = String(lo);
      slider.max = String(hi);
      slider.step = "0.01";
      slider.value = String(state.orbit[key]);
      slider.addEventListener("input", () => {
        (state.orbit[key] as number) = Number(slider.value);
        requestRender();
      });
      row.append(el("label", "", `camera ${name}`), slider);
      camBox.append(row);
    }
  }
  controls.append(camBox);

  // resolution / mode / spp selectors
  const opts = el("div", "options");
  const resSel = el("select", "res-select");
  for (const r of [64, 128, 256, 512]) {
    const o = el("option", "", `${r} px`);
    o.value = String(r);
    if (r === state.resolution) o.selected = true;
    resSel.append(o);
  }
  resSel.addEventListener("change", () => {
    state.resolution = Number(resSel.value);
    requestRender();
  });
  const modeSel = el("select", "mode-select");
  for (const m of ["net", "pt"]) {
    const o = el("option", "", m);
    o.value = m;
    modeSel.append(o);
  }
  modeSel.addEventListener("change", () => {
    state.mode = modeSel.value as "net" | "pt";
    requestRender();
  });
  const sppSel = el("select", "spp-select");
  for (const s of [4, 16, 64, 256]) {
    const o = el("option", "", `${s} spp`);
    o.value = String(s);
    if (s === state.spp) o.selected = true;
    sppSel.append(o);
  }
  sppSel.addEventListener("change", () => {
    state.spp = Number(sppSel.value);
    if (state.mode === "pt") requestRender();
  });
  opts.append(resSel, modeSel, sppSel);
  controls.append(opts);

  // side-by-side ground-truth check of the identical state
  const compareBtn = el("button", "compare", "compare net / pt");
  const compare = async () => {
    const netReq = state.renderRequest("net");
    const ptReq = state.renderRequest("pt");
    compareImage.style.display = "";
    const [netBlob, ptBlob] = await Promise.all([api.render(netReq), api.render(ptReq)]);
    showBlob(image, netBlob);
    showBlob(compareImage, ptBlob);
    latency.textContent = "compare: net | pt";
  };
  compareBtn.addEventListener("click", () => void compare());
  controls.append(compareBtn, debug);

  async function updateDebug(): Promise<void> {
    const normalized = state.normalized();
    let line = `normalized: [${normalized.map((v) => v.toFixed(6)).join(", ")}]`;
    try {
      const server = await api.debugNormalize(state.values);
      const maxErr = Math.max(
        ...server.normalized.map((v, i) => Math.abs(v - normalized[i])),
      );
      line += `\nserver round-trip max err: ${maxErr.toExponential(2)}`;
    } catch {
      line += "\n(server debug endpoint unavailable)";
    }
    debug.textContent = line;
  }

  requestRender();
  return { state, scheduler, root, requestRender, compare };
}
