"""CPU path tracer: ground-truth radiance patches and first-intersection G-buffers.

Unidirectional path tracing with next-event estimation and MIS (power
heuristic), max path length 8 segments, Russian roulette from depth 3 with
survival probability equal to the surface's max albedo component. All
randomness comes from counter-based per-pixel streams, so results are
bitwise reproducible for a given (instance, window, spp, seed) regardless
of patch decomposition or scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernel, rng
from .scene import Quad, SceneInstance, Sphere

MAX_DEPTH = 8
RR_START_DEPTH = 3
_EPS = 1e-7
_OFFSET = 1e-6  # ray origin offset along the normal, scene units

_KIND_CODE = {"diffuse": 0, "glossy": 1, "mirror": 2, "emitter": 3}


@dataclass(frozen=True)
class PatchWindow:
    """A patch of a virtual square image rendered with a 90-degree fov."""

    image_res: int
    px: int
    py: int
    patch_size: int = 32

    def __post_init__(self):
        if self.px < 0 or self.py < 0:
            raise ValueError("patch origin must be non-negative")
        if self.px + self.patch_size > self.image_res or self.py + self.patch_size > self.image_res:
            raise ValueError(
                f"patch [{self.px},{self.py}]+{self.patch_size} exceeds image res {self.image_res}"
            )


@dataclass
class GBufferPatch:
    position: np.ndarray  # (P,P,3)
    normal: np.ndarray    # (P,P,3) unit, camera-facing
    albedo: np.ndarray    # (P,P,3)
    roughness: np.ndarray  # (P,P)
    wo: np.ndarray        # (P,P,3) unit, toward camera
    emission: np.ndarray  # (P,P,3)
    mask: np.ndarray      # (P,P) 1.0 on hit, 0.0 on miss


@dataclass
class RadiancePatch:
    radiance: np.ndarray  # (P,P,3) linear RGB
    spp: int
    seed: int


class TracedScene:
    """Scene packed into arrays for vectorized intersection."""

    def __init__(self, instance: SceneInstance):
        quads = [p for p in instance.primitives if isinstance(p, Quad)]
        spheres = [p for p in instance.primitives if isinstance(p, Sphere)]
        self.n_quads = len(quads)
        self.n_spheres = len(spheres)

        self.q_origin = np.array([q.origin for q in quads], dtype=np.float64).reshape(-1, 3)
        self.q_eu = np.array([q.edge_u for q in quads], dtype=np.float64).reshape(-1, 3)
        self.q_ev = np.array([q.edge_v for q in quads], dtype=np.float64).reshape(-1, 3)
        n_raw = np.cross(self.q_eu, self.q_ev) if self.n_quads else np.zeros((0, 3))
        self.q_area = np.linalg.norm(n_raw, axis=1) if self.n_quads else np.zeros(0)
        self.q_normal = n_raw / np.maximum(self.q_area, 1e-300)[:, None] if self.n_quads else n_raw
        # Gram inverse for parallelogram coordinates, folded into dual edges:
        # a = (p - origin) . q_du, b = (p - origin) . q_dv
        if self.n_quads:
            uu = np.einsum("ij,ij->i", self.q_eu, self.q_eu)
            vv = np.einsum("ij,ij->i", self.q_ev, self.q_ev)
            uv = np.einsum("ij,ij->i", self.q_eu, self.q_ev)
            det = uu * vv - uv * uv
            self.q_du = (vv[:, None] * self.q_eu - uv[:, None] * self.q_ev) / det[:, None]
            self.q_dv = (uu[:, None] * self.q_ev - uv[:, None] * self.q_eu) / det[:, None]
            self.q_offset = np.einsum("ij,ij->i", self.q_origin, self.q_normal)
        else:
            self.q_du = np.zeros((0, 3))
            self.q_dv = np.zeros((0, 3))
            self.q_offset = np.zeros(0)

        self.s_center = np.array([s.center for s in spheres], dtype=np.float64).reshape(-1, 3)
        self.s_radius = np.array([s.radius for s in spheres], dtype=np.float64)
        self.s_c2 = (np.einsum("ij,ij->i", self.s_center, self.s_center)
                     - self.s_radius ** 2) if self.n_spheres else np.zeros(0)

        mats = [p.material for p in quads] + [p.material for p in spheres]
        self.kind = np.array([_KIND_CODE[m.kind] for m in mats], dtype=np.int32)
        self.albedo = np.array([m.albedo for m in mats], dtype=np.float64).reshape(-1, 3)
        self.roughness = np.array([m.roughness for m in mats], dtype=np.float64)
        self.emission = np.array([m.emission for m in mats], dtype=np.float64).reshape(-1, 3)
        self.env = np.array(instance.env_radiance, dtype=np.float64)

        # emitting primitives, sampled uniformly by index then by area
        self.light_ids = np.where(self.emission.sum(axis=1) > 0.0)[0]
        areas = []
        for pid in self.light_ids:
            if pid < self.n_quads:
                areas.append(self.q_area[pid])
            else:
                areas.append(4.0 * np.pi * self.s_radius[pid - self.n_quads] ** 2)
        self.light_area = np.array(areas, dtype=np.float64)
        self.n_lights = len(self.light_ids)
        self.prim_light_area = np.zeros(self.kind.size, dtype=np.float64)
        self.prim_light_area[self.light_ids] = self.light_area
        self.light_ids_i64 = self.light_ids.astype(np.int64)

        cam = np.asarray(instance.camera_position, dtype=np.float64)
        look = np.asarray(instance.camera_lookat, dtype=np.float64)
        fwd = look - cam
        fwd /= np.linalg.norm(fwd)
        up_hint = np.array([0.0, 1.0, 0.0])
        if abs(fwd @ up_hint) > 0.999:
            up_hint = np.array([0.0, 0.0, 1.0])
        right = np.cross(fwd, up_hint)
        right /= np.linalg.norm(right)
        self.cam_pos = cam
        self.cam_fwd = fwd
        self.cam_right = right
        self.cam_up = np.cross(right, fwd)
        self.tan_half_fov = np.tan(np.radians(instance.fov_deg) / 2.0)

    # -- intersection ------------------------------------------------------

    def _all_hits(self, o: np.ndarray, d: np.ndarray) -> np.ndarray:
        """(N, n_quads + n_spheres) hit distances, inf where no hit."""
        n = o.shape[0]
        cols = []
        if self.n_quads:
            denom = d @ self.q_normal.T                      # (N,Q)
            num = self.q_offset[None, :] - o @ self.q_normal.T
            with np.errstate(divide="ignore", invalid="ignore"):
                t = num / denom
                # parallelogram coordinates from matrix products only
                a = (o @ self.q_du.T + t * (d @ self.q_du.T)
                     - np.einsum("ij,ij->i", self.q_origin, self.q_du)[None, :])
                b = (o @ self.q_dv.T + t * (d @ self.q_dv.T)
                     - np.einsum("ij,ij->i", self.q_origin, self.q_dv)[None, :])
                good = ((np.abs(denom) > 1e-12) & (t > _EPS)
                        & (a >= 0.0) & (a <= 1.0) & (b >= 0.0) & (b <= 1.0))
            cols.append(np.where(good, t, np.inf))
        if self.n_spheres:
            b_half = np.einsum("ij,ij->i", o, d)[:, None] - d @ self.s_center.T  # (N,S)
            c = (np.einsum("ij,ij->i", o, o)[:, None] - 2.0 * (o @ self.s_center.T)
                 + self.s_c2[None, :])
            disc = b_half * b_half - c
            sq = np.sqrt(np.maximum(disc, 0.0))
            t0 = -b_half - sq
            t1 = -b_half + sq
            t = np.where(t0 > _EPS, t0, t1)
            good = (disc > 0.0) & (t > _EPS)
            cols.append(np.where(good, t, np.inf))
        if not cols:
            return np.full((n, 1), np.inf)
        return cols[0] if len(cols) == 1 else np.concatenate(cols, axis=1)

    def intersect(self, o: np.ndarray, d: np.ndarray):
        """Nearest hit for each ray. Returns (t, prim_id, geo_normal); -1 = miss."""
        hits = self._all_hits(o, d)
        prim = np.argmin(hits, axis=1)
        t_best = hits[np.arange(o.shape[0]), prim]
        prim = np.where(np.isfinite(t_best), prim, -1)
        geo_n = np.zeros((o.shape[0], 3))
        qh = (prim >= 0) & (prim < self.n_quads)
        if qh.any():
            geo_n[qh] = self.q_normal[prim[qh]]
        sh = prim >= self.n_quads
        if sh.any():
            pts = o[sh] + t_best[sh, None] * d[sh]
            nn = pts - self.s_center[prim[sh] - self.n_quads]
            geo_n[sh] = nn / np.linalg.norm(nn, axis=1, keepdims=True)
        return t_best, prim, geo_n

    def occluded(self, o: np.ndarray, d: np.ndarray, t_max: np.ndarray) -> np.ndarray:
        """True where any primitive blocks the segment o -> o + t_max*d."""
        hits = self._all_hits(o, d)
        return (hits < t_max[:, None] * (1.0 - 1e-6)).any(axis=1)

    # -- camera ------------------------------------------------------------

    def primary_rays(self, window: PatchWindow):
        """Rays through pixel centers; returns (origins, dirs, pixel_ids)."""
        p = window.patch_size
        r = window.image_res
        jj, ii = np.meshgrid(np.arange(p), np.arange(p), indexing="ij")  # jj = row
        gx = window.px + ii + 0.5
        gy = window.py + jj + 0.5
        ndc_x = gx / r * 2.0 - 1.0
        ndc_y = 1.0 - gy / r * 2.0
        dirs = (self.cam_fwd[None, None, :]
                + ndc_x[..., None] * self.tan_half_fov * self.cam_right
                + ndc_y[..., None] * self.tan_half_fov * self.cam_up)
        dirs = dirs.reshape(-1, 3)
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        pixel_ids = ((window.py + jj) * r + (window.px + ii)).reshape(-1).astype(np.uint64)
        origins = np.broadcast_to(self.cam_pos, dirs.shape).copy()
        return origins, dirs, pixel_ids


# ---------------------------------------------------------------------------


def gbuffer_patch(instance: SceneInstance, window: PatchWindow) -> GBufferPatch:
    """Deterministic first-intersection buffers (one ray per pixel center)."""
    scene = instance if isinstance(instance, TracedScene) else TracedScene(instance)
    o, d, _ = scene.primary_rays(window)
    t, prim, geo_n = scene.intersect(o, d)
    p = window.patch_size
    hit = prim >= 0
    pid = np.where(hit, prim, 0)

    position = np.where(hit[:, None], o + t[:, None] * d, 0.0)
    facing = np.einsum("ij,ij->i", geo_n, d) > 0.0
    normal = np.where(facing[:, None], -geo_n, geo_n)
    normal = np.where(hit[:, None], normal, 0.0)
    kind = scene.kind[pid]
    albedo = np.where(hit[:, None], scene.albedo[pid], 0.0)
    albedo[hit & (kind == _KIND_CODE["mirror"])] = 1.0
    roughness = np.where(hit, scene.roughness[pid], 0.0)
    roughness[hit & (kind == _KIND_CODE["mirror"])] = 0.0
    roughness[hit & (kind == _KIND_CODE["diffuse"])] = 1.0
    roughness[hit & (kind == _KIND_CODE["emitter"])] = 1.0
    wo = np.where(hit[:, None], -d, 0.0)
    front = np.einsum("ij,ij->i", geo_n, d) < 0.0
    emission = np.where((hit & front)[:, None], scene.emission[pid], 0.0)

    return GBufferPatch(
        position=position.reshape(p, p, 3),
        normal=normal.reshape(p, p, 3),
        albedo=albedo.reshape(p, p, 3),
        roughness=roughness.reshape(p, p),
        wo=wo.reshape(p, p, 3),
        emission=emission.reshape(p, p, 3),
        mask=hit.astype(np.float64).reshape(p, p),
    )


def trace_patch(instance: SceneInstance, window: PatchWindow, spp: int, seed: int) -> RadiancePatch:
    """Unbiased path-traced estimate of the patch radiance."""
    if spp < 1:
        raise ValueError("spp must be >= 1")
    scene = instance if isinstance(instance, TracedScene) else TracedScene(instance)
    o0, d0, pixel_ids = scene.primary_rays(window)
    keys = rng.pixel_keys(seed, pixel_ids)
    p = window.patch_size
    out = np.zeros((p * p, 3))
    kernel.trace_pixels(
        o0, d0, keys, spp, rng.SAMPLE_STRIDE, MAX_DEPTH, RR_START_DEPTH,
        scene.q_origin, scene.q_eu, scene.q_ev, scene.q_normal, scene.q_du,
        scene.q_dv, scene.q_offset, scene.s_center, scene.s_radius,
        scene.kind, scene.albedo, scene.roughness, scene.emission,
        scene.prim_light_area, scene.n_lights, scene.light_ids_i64,
        scene.env, out)
    return RadiancePatch(radiance=out.reshape(p, p, 3).astype(np.float32),
                         spp=spp, seed=seed)


def render_image(instance: SceneInstance, resolution: int, spp: int, seed: int,
                 patch_size: int = 32, with_gbuffers: bool = True):
    """Full frame by tiling trace_patch/gbuffer_patch; identical to per-patch results."""
    scene = TracedScene(instance)
    p = min(patch_size, resolution)
    image = np.zeros((resolution, resolution, 3), dtype=np.float32)
    bufs = None
    if with_gbuffers:
        bufs = GBufferPatch(
            position=np.zeros((resolution, resolution, 3)),
            normal=np.zeros((resolution, resolution, 3)),
            albedo=np.zeros((resolution, resolution, 3)),
            roughness=np.zeros((resolution, resolution)),
            wo=np.zeros((resolution, resolution, 3)),
            emission=np.zeros((resolution, resolution, 3)),
            mask=np.zeros((resolution, resolution)),
        )
    starts = sorted({min(v, resolution - p) for v in range(0, resolution, p)})
    for py in starts:
        for px in starts:
            w = PatchWindow(resolution, px, py, p)
            patch = trace_patch(scene, w, spp, seed)
            image[py:py + p, px:px + p] = patch.radiance
            if with_gbuffers:
                g = gbuffer_patch(scene, w)
                for name in ("position", "normal", "albedo", "roughness", "wo",
                             "emission", "mask"):
                    getattr(bufs, name)[py:py + p, px:px + p] = getattr(g, name)
    return image, bufs
