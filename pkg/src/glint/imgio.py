"""HDR/LDR image files: PFM for float data, PPM/PNG for quick-look output.

PFM files are little-endian with scanlines stored bottom-up (scale -1.0).
Grayscale grids (histograms, single-channel buffers) use the "Pf" variant.
"""

from __future__ import annotations

import json
import os

import numpy as np


class ImageIOError(Exception):
    pass


def write_pfm(path: str, image: np.ndarray) -> None:
    """Write (H,W,3) or (H,W) float array as PFM, row 0 = top of image."""
    img = np.asarray(image, dtype=np.float32)
    if img.ndim == 2:
        header = b"Pf"
    elif img.ndim == 3 and img.shape[2] == 3:
        header = b"PF"
    else:
        raise ImageIOError(f"PFM supports (H,W) or (H,W,3) arrays, got {img.shape}")
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(header + b"\n")
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")  # negative scale = little-endian
        f.write(img[::-1].astype("<f4").tobytes())


def read_pfm(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic not in (b"PF", b"Pf"):
            raise ImageIOError(f"{path}: bad PFM magic {magic!r}")
        dims = f.readline().split()
        if len(dims) != 2:
            raise ImageIOError(f"{path}: bad PFM dimension line")
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline())
        channels = 3 if magic == b"PF" else 1
        count = w * h * channels
        dtype = "<f4" if scale < 0 else ">f4"
        raw = f.read(count * 4)
        if len(raw) < count * 4:
            raise ImageIOError(f"{path}: truncated PFM payload")
        data = np.frombuffer(raw, dtype=dtype, count=count)
    shape = (h, w, 3) if channels == 3 else (h, w)
    return data.reshape(shape)[::-1].astype(np.float32)


def to_srgb_u8(image: np.ndarray, exposure: float = 1.0) -> np.ndarray:
    """Linear radiance -> 8-bit with gamma 2.2, clamped after exposure."""
    x = np.clip(np.asarray(image, dtype=np.float64) * exposure, 0.0, 1.0)
    return (x ** (1.0 / 2.2) * 255.0 + 0.5).astype(np.uint8)


def write_ppm(path: str, image: np.ndarray, exposure: float = 1.0) -> None:
    img = to_srgb_u8(image, exposure)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ImageIOError(f"PPM needs (H,W,3), got {img.shape}")
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(img.tobytes())


def encode_png(image: np.ndarray, exposure: float = 1.0) -> bytes:
    from io import BytesIO

    from PIL import Image

    buf = BytesIO()
    Image.fromarray(to_srgb_u8(image, exposure), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def write_png(path: str, image: np.ndarray, exposure: float = 1.0) -> None:
    with open(path, "wb") as f:
        f.write(encode_png(image, exposure))


def save_patch(path_prefix: str, radiance: np.ndarray, window: dict, spp: int, seed: int) -> None:
    """Patch PFM plus sidecar JSON with the window/spp/seed that produced it."""
    write_pfm(path_prefix + ".pfm", radiance)
    with open(path_prefix + ".json", "w") as f:
        json.dump({"window": window, "spp": spp, "seed": seed}, f, indent=1)


def load_patch(path_prefix: str) -> tuple[np.ndarray, dict]:
    radiance = read_pfm(path_prefix + ".pfm")
    if not os.path.exists(path_prefix + ".json"):
        raise ImageIOError(f"{path_prefix}.json: missing patch sidecar")
    with open(path_prefix + ".json") as f:
        meta = json.load(f)
    return radiance, meta
