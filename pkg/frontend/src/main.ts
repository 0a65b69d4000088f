import { ApiClient } from "./api.js";
import { initPanel } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("server") ?? "http://127.0.0.1:8765";

const root = document.getElementById("panel");
if (!root) throw new Error("missing #panel element");

const api = new ApiClient(base);
api.health().then((ok) => {
  if (!ok) {
    root.textContent = `service not reachable at ${base} — start it with: ` +
      "glint serve --checkpoint <ckpt> --scene <scene> --port 8765";
    return;
  }
  void initPanel(root, api);
});
