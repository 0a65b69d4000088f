"""HTTP inference service behind the browser slider UI.

GET /space         scene-space metadata for building sliders
POST /render       PNG of a requested scene instance (net or pt mode)
GET /healthz       liveness probe
POST /debug/normalize   round-trip check used by the UI's debug readout

Responses are CORS-enabled; the model snapshot is immutable, so concurrent
renders are safe. Render concurrency is bounded by a GLINT_THREADS-sized
semaphore.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from . import net as nets
from .imgio import encode_png
from .scene import SceneError, SceneVector, denormalize, normalize, resolve_space
from .tracer import PatchWindow, TracedScene, trace_patch
from .train import render_prediction, worker_count
from .scene import instantiate

MAX_RESOLUTION = 1024
MIN_RESOLUTION = 16
MAX_PT_SPP = 256


class RequestError(Exception):
    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class GlintService:
    """Loaded model + space; parses and executes render requests."""

    def __init__(self, checkpoint_path: str, scene_name: str):
        self.space = resolve_space(scene_name)
        self.scene_name = scene_name
        self.checkpoint_path = checkpoint_path
        self.net = None
        self.info = None
        self._render_slots = threading.Semaphore(worker_count())

    def load(self) -> None:
        info = nets.checkpoint_info(self.checkpoint_path)
        net, state = nets.load_checkpoint(self.checkpoint_path, expect_dim=self.space.dim)
        self.info = {**info, "path": self.checkpoint_path, "train_steps": state.t}
        self.net = net

    @property
    def ready(self) -> bool:
        return self.net is not None

    def space_doc(self) -> dict:
        cam = {"mode": self.space.camera.mode,
               "position": list(self.space.camera.position),
               "lookat": list(self.space.camera.lookat)}
        if self.space.camera.mode == "variable":
            cam["position_min"] = list(self.space.camera.position_min)
            cam["position_max"] = list(self.space.camera.position_max)
            cam["lookat_min"] = list(self.space.camera.lookat_min)
            cam["lookat_max"] = list(self.space.camera.lookat_max)
        return {
            "dim": self.space.dim,
            "scene": self.scene_name,
            "params": [{"name": p.name, "kind": p.kind, "min": p.min, "max": p.max}
                       for p in self.space.params],
            "camera": cam,
            "checkpoint_info": self.info or {},
        }

    def parse_render_request(self, doc: dict) -> dict:
        if not isinstance(doc, dict):
            raise RequestError("request body must be a JSON object")
        vector = doc.get("vector")
        if not isinstance(vector, list) or len(vector) != self.space.dim:
            raise RequestError(
                f"vector must have {self.space.dim} components", field="vector")
        try:
            vec = np.array([float(x) for x in vector])
            SceneVector(vec)
        except (TypeError, ValueError, SceneError) as e:
            raise RequestError(f"invalid vector: {e}", field="vector") from None
        camera = doc.get("camera")
        if not isinstance(camera, list) or len(camera) != 6:
            raise RequestError("camera must be 6 floats", field="camera")
        cam = np.array([float(x) for x in camera])
        if np.array_equal(cam[:3], cam[3:]):
            raise RequestError("camera lookat must differ from position", field="camera")
        res = doc.get("resolution", 128)
        if not isinstance(res, int) or not (MIN_RESOLUTION <= res <= MAX_RESOLUTION):
            raise RequestError(
                f"resolution must be an integer in [{MIN_RESOLUTION}, {MAX_RESOLUTION}]",
                field="resolution")
        mode = doc.get("mode", "net")
        if mode not in ("net", "pt"):
            raise RequestError("mode must be 'net' or 'pt'", field="mode")
        spp = doc.get("spp", 16)
        if mode == "pt" and (not isinstance(spp, int) or not (1 <= spp <= MAX_PT_SPP)):
            raise RequestError(f"spp must be an integer in [1, {MAX_PT_SPP}]", field="spp")
        exposure = float(doc.get("exposure", 1.0))
        if exposure <= 0.0:
            raise RequestError("exposure must be positive", field="exposure")
        return {"vector": vec, "camera": cam, "resolution": res, "mode": mode,
                "spp": spp, "exposure": exposure}

    def render_png(self, req: dict) -> bytes:
        with self._render_slots:
            if req["mode"] == "net":
                img = render_prediction(self.net, self.space, req["vector"],
                                        req["camera"], req["resolution"])
                img = np.maximum(img, 0.0)
            else:
                img = self._render_pt(req)
            return encode_png(img, exposure=req["exposure"])

    def _render_pt(self, req: dict) -> np.ndarray:
        res = req["resolution"]
        inst = instantiate(self.space, SceneVector(req["vector"]), req["camera"])
        scene = TracedScene(inst)
        img = np.zeros((res, res, 3), dtype=np.float32)
        p = min(32, res)
        starts = sorted({min(v, res - p) for v in range(0, res, p)})
        for py in starts:
            for px in starts:
                w = PatchWindow(res, px, py, p)
                img[py:py + p, px:px + p] = trace_patch(scene, w, req["spp"], 0).radiance
        return img

    def normalize_roundtrip(self, doc: dict) -> dict:
        raw = doc.get("raw")
        if not isinstance(raw, list) or len(raw) != self.space.dim:
            raise RequestError(f"raw must have {self.space.dim} values", field="raw")
        v = normalize(self.space, np.array([float(x) for x in raw]))
        back = denormalize(self.space, v)
        return {"normalized": v.values.tolist(), "denormalized": back.tolist()}


class _Handler(BaseHTTPRequestHandler):
    service: GlintService = None
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, code: int, body: bytes, content_type: str) -> None:
        self.send_response(code)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, code: int, doc: dict) -> None:
        self._send(code, json.dumps(doc).encode(), "application/json")

    def do_OPTIONS(self):
        self._send(204, b"", "text/plain")

    def do_GET(self):
        if self.path == "/healthz":
            self._send(200, b"ok", "text/plain")
        elif self.path == "/space":
            self._send_json(200, self.service.space_doc())
        else:
            self._send_json(404, {"error": f"unknown path {self.path}"})

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length) if length else b""
        try:
            return json.loads(raw.decode() or "{}")
        except json.JSONDecodeError as e:
            raise RequestError(f"invalid JSON body: {e.msg}") from None

    def do_POST(self):
        try:
            if self.path == "/render":
                if not self.service.ready:
                    self._send_json(503, {"error": "checkpoint is loading"})
                    return
                req = self.service.parse_render_request(self._read_body())
                png = self.service.render_png(req)
                self._send(200, png, "image/png")
            elif self.path == "/debug/normalize":
                self._send_json(200, self.service.normalize_roundtrip(self._read_body()))
            else:
                self._send_json(404, {"error": f"unknown path {self.path}"})
        except RequestError as e:
            doc = {"error": str(e)}
            if e.field:
                doc["field"] = e.field
            self._send_json(400, doc)


def build_server(checkpoint_path: str, scene_name: str, port: int,
                 defer_load: bool = False) -> ThreadingHTTPServer:
    service = GlintService(checkpoint_path, scene_name)
    if not defer_load:
        service.load()
    handler = type("BoundHandler", (_Handler,), {"service": service})
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    server.service = service
    return server


def run_service(checkpoint_path: str, scene_name: str, port: int) -> None:
    server = build_server(checkpoint_path, scene_name, port)
    print(f"serving {scene_name} on http://127.0.0.1:{port} "
          f"(space dim {server.service.space.dim})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
