"""Variable-scene parameter spaces and concrete scene instantiation.

A scene space declares which properties of a built-in base scene are tunable
and over which physical ranges. A point of the unit hypercube (one normalized
value per parameter) plus a camera fully determines a renderable instance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


class SceneError(ValueError):
    """Invalid scene-space definition or scene input."""


class ParamRangeError(SceneError):
    """A raw parameter value fell outside its declared [min, max]."""


PARAM_KINDS = (
    "translation-x",
    "translation-z",
    "translation-y",
    "rotation-deg",
    "albedo-channel",
    "roughness",
    "emitter-intensity",
    "camera-pos-component",
    "camera-lookat-component",
)

# Element types each parameter kind may drive, and the property it sets.
_KIND_RULES = {
    "translation-x": ({"box", "sphere", "light"}, "x"),
    "translation-y": ({"box", "sphere", "light"}, "y"),
    "translation-z": ({"box", "sphere", "light"}, "z"),
    "rotation-deg": ({"box"}, "rot"),
    "roughness": ({"sphere"}, "roughness"),
    "emitter-intensity": ({"light"}, "intensity"),
}

# Albedo channels cap below 1 so path-traced variance stays bounded.
ALBEDO_CAP = 0.97


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str
    min: float
    max: float
    binding: str

    def __post_init__(self):
        if self.kind not in PARAM_KINDS:
            raise SceneError(f"param '{self.name}': unknown kind '{self.kind}'")
        if not self.min < self.max:
            raise SceneError(
                f"param '{self.name}': min ({self.min}) must be < max ({self.max})"
            )


@dataclass(frozen=True)
class CameraSpec:
    mode: str  # "fixed" | "variable"
    position: tuple[float, float, float]
    lookat: tuple[float, float, float]
    position_min: tuple[float, float, float] | None = None
    position_max: tuple[float, float, float] | None = None
    lookat_min: tuple[float, float, float] | None = None
    lookat_max: tuple[float, float, float] | None = None

    def __post_init__(self):
        if self.mode not in ("fixed", "variable"):
            raise SceneError(f"camera mode must be fixed|variable, got '{self.mode}'")
        if self.mode == "variable":
            boxes = (self.position_min, self.position_max, self.lookat_min, self.lookat_max)
            if any(b is None for b in boxes):
                raise SceneError("variable camera requires per-component min/max boxes")
            for lo, hi in ((self.position_min, self.position_max), (self.lookat_min, self.lookat_max)):
                if any(l >= h for l, h in zip(lo, hi)):
                    raise SceneError("camera box min must be < max per component")

    def default_values(self) -> np.ndarray:
        return np.array(self.position + self.lookat, dtype=np.float64)

    def denormalize(self, u: np.ndarray) -> np.ndarray:
        """Map 6 normalized components to (position, lookat) world values."""
        if self.mode != "variable":
            raise SceneError("camera is fixed; no normalized components to map")
        lo = np.array(self.position_min + self.lookat_min, dtype=np.float64)
        hi = np.array(self.position_max + self.lookat_max, dtype=np.float64)
        return lo + np.asarray(u, dtype=np.float64) * (hi - lo)


@dataclass(frozen=True)
class SceneSpace:
    params: tuple[ParamSpec, ...]
    base_scene: str
    camera: CameraSpec

    def __post_init__(self):
        if len(self.params) < 1:
            raise SceneError("a scene space needs at least one parameter")
        seen = set()
        for p in self.params:
            if p.name in seen:
                raise SceneError(f"duplicate parameter name '{p.name}'")
            seen.add(p.name)

    @property
    def dim(self) -> int:
        return len(self.params)


class SceneVector:
    """A point of the unit hypercube; component order follows space.params."""

    __slots__ = ("values",)

    def __init__(self, values):
        v = np.array(values, dtype=np.float64)
        if v.ndim != 1:
            raise SceneError("scene vector must be one-dimensional")
        bad = np.where((v < 0.0) | (v > 1.0))[0]
        if bad.size:
            raise SceneError(
                f"scene vector component {bad[0]} = {v[bad[0]]} outside [0, 1]"
            )
        v.flags.writeable = False
        self.values = v

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        return isinstance(other, SceneVector) and np.array_equal(self.values, other.values)

    def __repr__(self) -> str:
        return f"SceneVector({self.values.tolist()})"


# ---------------------------------------------------------------------------
# Concrete instances: materials and primitives the tracer consumes.


@dataclass(frozen=True)
class Material:
    kind: str  # diffuse | glossy | mirror | emitter
    albedo: tuple[float, float, float] = (0.0, 0.0, 0.0)
    roughness: float = 1.0
    emission: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("diffuse", "glossy", "mirror", "emitter"):
            raise SceneError(f"unknown material kind '{self.kind}'")
        if any(not (0.0 <= a < 1.0) for a in self.albedo):
            raise SceneError(f"albedo {self.albedo} must lie in [0, 1)")
        if not (0.0 < self.roughness <= 1.0):
            raise SceneError(f"roughness {self.roughness} must lie in (0, 1]")
        if any(e < 0.0 for e in self.emission):
            raise SceneError(f"emission {self.emission} must be non-negative")


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float
    material: Material
    name: str = ""


@dataclass(frozen=True)
class Quad:
    """Parallelogram spanned by two edges; normal = normalize(eu x ev)."""

    origin: tuple[float, float, float]
    edge_u: tuple[float, float, float]
    edge_v: tuple[float, float, float]
    material: Material
    name: str = ""


@dataclass(frozen=True)
class SceneInstance:
    primitives: tuple
    camera_position: tuple[float, float, float]
    camera_lookat: tuple[float, float, float]
    fov_deg: float = 90.0
    env_radiance: tuple[float, float, float] = (0.0, 0.0, 0.0)


# ---------------------------------------------------------------------------
# Normalization.


def normalize(space: SceneSpace, raw) -> SceneVector:
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape != (space.dim,):
        raise SceneError(f"expected {space.dim} raw values, got shape {raw.shape}")
    out = np.empty(space.dim)
    for i, p in enumerate(space.params):
        if not (p.min <= raw[i] <= p.max):
            raise ParamRangeError(
                f"parameter '{p.name}': value {raw[i]} outside [{p.min}, {p.max}]"
            )
        out[i] = (raw[i] - p.min) / (p.max - p.min)
    return SceneVector(out)


def denormalize(space: SceneSpace, v: SceneVector) -> np.ndarray:
    vals = v.values if isinstance(v, SceneVector) else np.asarray(v, dtype=np.float64)
    if vals.shape != (space.dim,):
        raise SceneError(f"expected {space.dim} components, got shape {vals.shape}")
    lo = np.array([p.min for p in space.params])
    hi = np.array([p.max for p in space.params])
    return lo + vals * (hi - lo)


# ---------------------------------------------------------------------------
# Base scenes. Rooms span x in [-1,1], y in [0,2], z in [-1,1].


def _wall(name, origin, edge_u, edge_v, albedo):
    return Quad(origin, edge_u, edge_v, Material("diffuse", albedo=albedo), name=name)


def _box_quads(name, cx, cy, cz, sx, sy, sz, rot_deg, material):
    """Six quads of a box centered at (cx,cy,cz), rotated rot_deg about +y."""
    hx, hy, hz = sx / 2.0, sy / 2.0, sz / 2.0
    c, s = math.cos(math.radians(rot_deg)), math.sin(math.radians(rot_deg))

    def point(dx, dy, dz):
        rx = c * dx + s * dz
        rz = -s * dx + c * dz
        return (cx + rx, cy + dy, cz + rz)

    def quad(o, u, v):
        ou = point(*[a + b for a, b in zip(o, u)])
        ov = point(*[a + b for a, b in zip(o, v)])
        po = point(*o)
        return Quad(po, tuple(a - b for a, b in zip(ou, po)),
                    tuple(a - b for a, b in zip(ov, po)), material, name=name)

    return (
        quad((-hx, -hy, hz), (2 * hx, 0, 0), (0, 2 * hy, 0)),    # front (+z)
        quad((hx, -hy, -hz), (-2 * hx, 0, 0), (0, 2 * hy, 0)),   # back (-z)
        quad((hx, -hy, hz), (0, 0, -2 * hz), (0, 2 * hy, 0)),    # right (+x)
        quad((-hx, -hy, -hz), (0, 0, 2 * hz), (0, 2 * hy, 0)),   # left (-x)
        quad((-hx, hy, hz), (2 * hx, 0, 0), (0, 0, -2 * hz)),    # top (+y)
        quad((-hx, -hy, -hz), (2 * hx, 0, 0), (0, 0, 2 * hz)),   # bottom (-y)
    )


_GRAY = (0.75, 0.75, 0.75)


def _room_walls(albedos, front_wall: bool):
    """Walls with inward-facing normals (normal = edge_u x edge_v)."""
    walls = [
        _wall("floor", (-1, 0, 1), (2, 0, 0), (0, 0, -2), albedos.get("floor", _GRAY)),
        _wall("ceiling", (-1, 2, -1), (2, 0, 0), (0, 0, 2), albedos.get("ceiling", _GRAY)),
        _wall("back_wall", (-1, 0, -1), (2, 0, 0), (0, 2, 0), albedos.get("back_wall", _GRAY)),
        _wall("left_wall", (-1, 0, -1), (0, 2, 0), (0, 0, 2), albedos.get("left_wall", _GRAY)),
        _wall("right_wall", (1, 0, -1), (0, 0, 2), (0, 2, 0), albedos.get("right_wall", _GRAY)),
    ]
    if front_wall:
        walls.append(_wall("front_wall", (-1, 0, 1), (0, 2, 0), (2, 0, 0),
                           albedos.get("front_wall", _GRAY)))
    return walls


def _ceiling_light(li, width, depth):
    rad = tuple(max(0.0, r * li["intensity"]) for r in li["radiance"])
    x, y, z = li["x"], li.get("y", 1.998), li["z"]
    return Quad((x - width / 2, y, z - depth / 2), (width, 0, 0), (0, 0, depth),
                Material("emitter", emission=rad), name="light")


@dataclass(frozen=True)
class BaseScene:
    """Element table of a built-in base scene plus its geometry builder."""

    name: str
    elements: dict = field(hash=False)
    build: callable = field(hash=False, compare=False)


def _build_cornell(el, camera):
    walls = _room_walls({k: el[k]["albedo"] for k in
                         ("left_wall", "right_wall", "floor", "ceiling", "back_wall")},
                        front_wall=False)
    tb, sb = el["tall_box"], el["short_box"]
    prims = list(walls)
    prims += _box_quads("tall_box", tb["x"], 0.6, tb["z"], 0.55, 1.2, 0.55, tb["rot"],
                        Material("diffuse", albedo=tb["albedo"]))
    prims += _box_quads("short_box", sb["x"], 0.3, sb["z"], 0.55, 0.6, 0.55, sb["rot"],
                        Material("diffuse", albedo=sb["albedo"]))
    prims.append(_ceiling_light(el["light"], 0.5, 0.5))
    return SceneInstance(tuple(prims), tuple(camera[:3]), tuple(camera[3:]))


def _build_mirror_room(el, camera):
    prims = list(_room_walls({}, front_wall=True))
    # mirror panel sits just inside the front wall, facing the room; the
    # fixed camera stares at it, so the ball is seen only as a reflection
    prims.append(Quad((-_MIRROR_PANEL_HALF_WIDTH, 1.0 - _MIRROR_PANEL_HALF_HEIGHT,
                       _MIRROR_PANEL_Z),
                      (0, 2 * _MIRROR_PANEL_HALF_HEIGHT, 0),
                      (2 * _MIRROR_PANEL_HALF_WIDTH, 0, 0),
                      Material("mirror", roughness=0.05), name="mirror"))
    ball = el["ball"]
    prims.append(Sphere((ball["x"], ball["y"], ball["z"]), 0.22,
                        Material("diffuse", albedo=ball["albedo"]), name="ball"))
    prims.append(_ceiling_light(el["light"], 0.6, 0.4))
    return SceneInstance(tuple(prims), tuple(camera[:3]), tuple(camera[3:]))


def _build_caustic_box(el, camera):
    walls = _room_walls({k: el[k]["albedo"] for k in
                         ("left_wall", "right_wall", "floor", "ceiling", "back_wall")},
                        front_wall=False)
    prims = list(walls)
    ball = el["ball"]
    prims.append(Sphere((ball["x"], ball.get("y", 0.42), ball["z"]), 0.42,
                        Material("glossy", albedo=ball["albedo"],
                                 roughness=ball["roughness"]), name="ball"))
    prims.append(_ceiling_light(el["light"], 0.5, 0.5))
    return SceneInstance(tuple(prims), tuple(camera[:3]), tuple(camera[3:]))


def _wall_el(albedo):
    return {"type": "wall", "albedo": albedo}


_BASE_SCENES = {
    "cornell": BaseScene(
        "cornell",
        elements={
            "left_wall": _wall_el((0.63, 0.065, 0.05)),
            "right_wall": _wall_el((0.14, 0.45, 0.09)),
            "floor": _wall_el(_GRAY), "ceiling": _wall_el(_GRAY), "back_wall": _wall_el(_GRAY),
            "tall_box": {"type": "box", "x": -0.33, "z": -0.3, "rot": 0.0, "albedo": _GRAY},
            "short_box": {"type": "box", "x": 0.33, "z": 0.35, "rot": 0.0, "albedo": _GRAY},
            "light": {"type": "light", "x": 0.0, "z": 0.0, "intensity": 1.0,
                      "radiance": (15.0, 14.0, 12.0)},
        },
        build=_build_cornell,
    ),
    "mirror_room": BaseScene(
        "mirror_room",
        elements={
            "ball": {"type": "sphere", "x": 0.0, "y": 1.0, "z": -0.3,
                     "albedo": (0.7, 0.08, 0.08)},
            "light": {"type": "light", "x": 0.0, "z": -0.3, "intensity": 1.0,
                      "radiance": (14.0, 14.0, 14.0)},
        },
        build=_build_mirror_room,
    ),
    "caustic_box": BaseScene(
        "caustic_box",
        elements={
            "left_wall": _wall_el((0.63, 0.065, 0.05)),
            "right_wall": _wall_el((0.14, 0.45, 0.09)),
            "floor": _wall_el(_GRAY), "ceiling": _wall_el(_GRAY), "back_wall": _wall_el(_GRAY),
            "ball": {"type": "sphere", "x": 0.0, "z": 0.05, "roughness": 0.15,
                     "albedo": (0.85, 0.85, 0.85)},
            "light": {"type": "light", "x": 0.0, "z": 0.0, "intensity": 1.0,
                      "radiance": (15.0, 14.0, 12.0)},
        },
        build=_build_caustic_box,
    ),
}


def _validate_binding(p: ParamSpec, base: BaseScene) -> None:
    if p.kind in ("camera-pos-component", "camera-lookat-component"):
        if p.binding not in ("camera.x", "camera.y", "camera.z"):
            raise SceneError(
                f"param '{p.name}': camera binding must be camera.x|y|z, got '{p.binding}'"
            )
        return
    if p.kind == "albedo-channel":
        elem, dot, chan = p.binding.rpartition(".")
        if not dot or chan not in ("r", "g", "b"):
            raise SceneError(
                f"param '{p.name}': albedo binding must be '<element>.r|g|b', got '{p.binding}'"
            )
        if elem not in base.elements:
            raise SceneError(f"param '{p.name}': unknown binding element '{elem}'")
        if not (0.0 <= p.min and p.max <= ALBEDO_CAP):
            raise SceneError(
                f"param '{p.name}': albedo range must lie in [0, {ALBEDO_CAP}]"
            )
        return
    if p.binding not in base.elements:
        raise SceneError(f"param '{p.name}': unknown binding element '{p.binding}'")
    allowed, _prop = _KIND_RULES[p.kind]
    etype = base.elements[p.binding]["type"]
    if etype not in allowed:
        raise SceneError(
            f"param '{p.name}': kind '{p.kind}' cannot drive {etype} '{p.binding}'"
        )


def validate_space(space: SceneSpace) -> BaseScene:
    if space.base_scene not in _BASE_SCENES:
        raise SceneError(f"unknown base scene '{space.base_scene}'")
    base = _BASE_SCENES[space.base_scene]
    for p in space.params:
        _validate_binding(p, base)
    return base


def instantiate(space: SceneSpace, v: SceneVector, camera) -> SceneInstance:
    """Base scene with every bound parameter set to its denormalized value."""
    base = validate_space(space)
    camera = np.asarray(camera, dtype=np.float64)
    if camera.shape != (6,):
        raise SceneError(f"camera must be 6 floats, got shape {camera.shape}")
    if np.array_equal(camera[:3], camera[3:]):
        raise SceneError("camera lookat must differ from position")
    raw = denormalize(space, v)
    elements = {k: dict(v) for k, v in base.elements.items()}
    for k in elements:
        if "albedo" in elements[k]:
            elements[k]["albedo"] = list(elements[k]["albedo"])
    camera = camera.copy()
    for p, value in zip(space.params, raw):
        if p.kind == "camera-pos-component":
            camera["xyz".index(p.binding[-1])] = value
        elif p.kind == "camera-lookat-component":
            camera[3 + "xyz".index(p.binding[-1])] = value
        elif p.kind == "albedo-channel":
            elem, _, chan = p.binding.rpartition(".")
            elements[elem]["albedo"]["rgb".index(chan)] = value
        else:
            _, prop = _KIND_RULES[p.kind]
            elements[p.binding][prop] = value
    for k in elements:
        if "albedo" in elements[k]:
            elements[k]["albedo"] = tuple(elements[k]["albedo"])
    return base.build(elements, camera)


# ---------------------------------------------------------------------------
# Built-in spaces and the JSON file format.


def builtin(name: str) -> tuple[SceneSpace, BaseScene]:
    if name == "CornellVar":
        albedo = lambda elem, c: ParamSpec(f"{elem}_{c}", "albedo-channel", 0.05, ALBEDO_CAP,
                                           f"{elem}.{c}")
        params = (
            albedo("left_wall", "r"), albedo("left_wall", "g"), albedo("left_wall", "b"),
            albedo("right_wall", "r"), albedo("right_wall", "g"), albedo("right_wall", "b"),
            ParamSpec("tall_box_x", "translation-x", -0.65, 0.1, "tall_box"),
            ParamSpec("tall_box_z", "translation-z", -0.6, 0.1, "tall_box"),
            ParamSpec("short_box_x", "translation-x", -0.1, 0.65, "short_box"),
            ParamSpec("short_box_z", "translation-z", 0.0, 0.65, "short_box"),
            ParamSpec("light_x", "translation-x", -0.6, 0.6, "light"),
            ParamSpec("light_z", "translation-z", -0.6, 0.6, "light"),
        )
        camera = CameraSpec(
            "variable", (0.0, 1.0, 0.9), (0.0, 1.0, -1.0),
            position_min=(-0.45, 0.7, 0.5), position_max=(0.45, 1.3, 1.0),
            lookat_min=(-0.4, 0.7, -1.0), lookat_max=(0.4, 1.3, -0.5),
        )
        space = SceneSpace(params, "cornell", camera)
    elif name == "MirrorRoom":
        params = (
            ParamSpec("ball_x", "translation-x", -0.9, 0.9, "ball"),
            ParamSpec("ball_z", "translation-z", -0.9, 0.1, "ball"),
        )
        camera = CameraSpec("fixed", (0.0, 1.0, 0.4), (0.0, 1.0, 1.0))
        space = SceneSpace(params, "mirror_room", camera)
    elif name == "CausticBox":
        albedo = lambda elem, c: ParamSpec(f"{elem}_{c}", "albedo-channel", 0.05, ALBEDO_CAP,
                                           f"{elem}.{c}")
        params = (
            ParamSpec("ball_x", "translation-x", -0.45, 0.45, "ball"),
            ParamSpec("ball_z", "translation-z", -0.35, 0.45, "ball"),
            ParamSpec("ball_roughness", "roughness", 0.05, 0.6, "ball"),
            albedo("left_wall", "r"), albedo("left_wall", "g"), albedo("left_wall", "b"),
            albedo("right_wall", "r"), albedo("right_wall", "g"), albedo("right_wall", "b"),
        )
        camera = CameraSpec("fixed", (0.0, 1.0, 0.95), (0.0, 1.0, -1.0))
        space = SceneSpace(params, "caustic_box", camera)
    else:
        raise SceneError(f"unknown builtin scene '{name}'")
    base = validate_space(space)
    return space, base


BUILTIN_NAMES = ("CornellVar", "MirrorRoom", "CausticBox")


def save_space(space: SceneSpace) -> str:
    cam = {"mode": space.camera.mode,
           "position": list(space.camera.position),
           "lookat": list(space.camera.lookat)}
    if space.camera.mode == "variable":
        cam["position_min"] = list(space.camera.position_min)
        cam["position_max"] = list(space.camera.position_max)
        cam["lookat_min"] = list(space.camera.lookat_min)
        cam["lookat_max"] = list(space.camera.lookat_max)
    doc = {
        "base_scene": space.base_scene,
        "camera": cam,
        "params": [{"name": p.name, "kind": p.kind, "min": p.min, "max": p.max,
                    "binding": p.binding} for p in space.params],
    }
    return json.dumps(doc, indent=2)


def _vec3(doc, key, ctx):
    try:
        val = doc[key]
    except KeyError:
        raise SceneError(f"{ctx}: missing field '{key}'") from None
    if not (isinstance(val, list) and len(val) == 3):
        raise SceneError(f"{ctx}: field '{key}' must be a list of 3 numbers")
    return tuple(float(x) for x in val)


def load_space(text: str) -> SceneSpace:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SceneError(f"scene-space file: parse error at line {e.lineno}: {e.msg}") from None
    if not isinstance(doc, dict):
        raise SceneError("scene-space file: top level must be an object")
    for key in ("base_scene", "camera", "params"):
        if key not in doc:
            raise SceneError(f"scene-space file: missing field '{key}'")
    cam_doc = doc["camera"]
    mode = cam_doc.get("mode", "fixed")
    kwargs = {}
    if mode == "variable":
        for k in ("position_min", "position_max", "lookat_min", "lookat_max"):
            kwargs[k] = _vec3(cam_doc, k, "camera")
    camera = CameraSpec(mode, _vec3(cam_doc, "position", "camera"),
                        _vec3(cam_doc, "lookat", "camera"), **kwargs)
    if not isinstance(doc["params"], list) or not doc["params"]:
        raise SceneError("scene-space file: 'params' must be a non-empty list")
    params = []
    for i, pd in enumerate(doc["params"]):
        ctx = f"params[{i}]"
        for k in ("name", "kind", "min", "max", "binding"):
            if k not in pd:
                raise SceneError(f"{ctx}: missing field '{k}'")
        params.append(ParamSpec(pd["name"], pd["kind"], float(pd["min"]),
                                float(pd["max"]), pd["binding"]))
    space = SceneSpace(tuple(params), doc["base_scene"], camera)
    validate_space(space)
    return space


def load_space_file(path: str) -> SceneSpace:
    with open(path) as f:
        return load_space(f.read())


def resolve_space(name_or_path: str) -> SceneSpace:
    """Accept a builtin name or a path to a scene-space JSON file."""
    if name_or_path in BUILTIN_NAMES:
        return builtin(name_or_path)[0]
    return load_space_file(name_or_path)


# ---------------------------------------------------------------------------
# MirrorRoom visibility geometry. The ball is seen in the mirror panel iff the
# segment from the virtual (mirrored) camera to the ball center crosses the
# panel; everything lies at camera height, so only x and z matter.

_MIRROR_CAM_Z = 0.4
_MIRROR_PANEL_Z = 0.998
_MIRROR_PANEL_HALF_WIDTH = 0.08
_MIRROR_PANEL_HALF_HEIGHT = 0.55


def mirror_band_threshold(z) -> np.ndarray:
    """Max |ball x| (world units) still reflected for a given ball z."""
    z_virtual = 2.0 * _MIRROR_PANEL_Z - _MIRROR_CAM_Z
    return (_MIRROR_PANEL_HALF_WIDTH * (z_virtual - np.asarray(z, dtype=np.float64))
            / (z_virtual - _MIRROR_PANEL_Z))


def mirror_band_mask(space: SceneSpace, states: np.ndarray) -> np.ndarray:
    """Which normalized (ball_x, ball_z) states land in the mirror-visible band."""
    raw_x = denormalize_component(space, 0, states[:, 0])
    raw_z = denormalize_component(space, 1, states[:, 1])
    return np.abs(raw_x) <= mirror_band_threshold(raw_z)


def denormalize_component(space: SceneSpace, index: int, values) -> np.ndarray:
    p = space.params[index]
    return p.min + np.asarray(values, dtype=np.float64) * (p.max - p.min)


def mirror_band_fraction(space: SceneSpace, grid: int = 512) -> float:
    """Hypercube area fraction of the mirror-visible band."""
    xs = (np.arange(grid) + 0.5) / grid
    zs = (np.arange(grid) + 0.5) / grid
    gx, gz = np.meshgrid(xs, zs, indexing="ij")
    states = np.stack([gx.reshape(-1), gz.reshape(-1)], axis=1)
    return float(mirror_band_mask(space, states).mean())
