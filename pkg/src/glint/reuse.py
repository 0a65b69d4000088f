"""Self-tuning sample reuse: stored training patches, a Bernoulli reuse
decision with probability sigmoid(Loss_exist - Loss_new + beta), and
loss-weighted replay.

Only large-step samples move the two loss EMAs; small-step samples are still
stored and replayed (they are valid training data) but would bias the
overfitting signal the EMAs exist to detect.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .imgio import read_pfm, write_pfm
from .tracer import GBufferPatch, PatchWindow

GENERATE = "generate"
REUSE = "reuse"

WARMUP_SAMPLES = 100
DEFAULT_BETA = 4.6
DEFAULT_DECAY = 0.99
DEFAULT_CAPACITY = 20_000


@dataclass
class StoredSample:
    gbuffer: GBufferPatch
    radiance: np.ndarray  # (P,P,3) ground truth
    vector: np.ndarray    # normalized scene values
    camera: np.ndarray    # raw position + lookat
    window: PatchWindow
    weight: float         # last recorded loss
    large_step: bool
    iteration: int
    spp: int = 0
    seed: int = 0


def sigmoid(x: float) -> float:
    return 1.0 / (1.0 + np.exp(-x))


class ReuseTracker:
    """EMAs of the losses of fresh vs replayed large-step samples."""

    def __init__(self, beta: float = DEFAULT_BETA, decay: float = DEFAULT_DECAY):
        self.beta = beta
        self.decay = decay
        self.ema_new: float | None = None
        self.ema_exist: float | None = None

    def _update(self, current: float | None, loss: float) -> float:
        if loss < 0.0:
            raise ValueError("loss must be non-negative")
        if current is None:
            return loss
        return self.decay * current + (1.0 - self.decay) * loss

    def observe_new(self, loss: float, large_step: bool) -> None:
        if large_step:
            self.ema_new = self._update(self.ema_new, loss)

    def observe_exist(self, loss: float, large_step: bool) -> None:
        if large_step:
            self.ema_exist = self._update(self.ema_exist, loss)


def reuse_probability(tracker: ReuseTracker) -> float:
    if tracker.ema_new is None:
        raise ValueError("reuse tracker is unseeded: no large-step sample recorded yet")
    # before any sample has been replayed, treat the existing loss as equal
    exist = tracker.ema_exist if tracker.ema_exist is not None else tracker.ema_new
    return sigmoid(exist - tracker.ema_new + tracker.beta)


def decide(tracker: ReuseTracker, iteration: int, gen: np.random.Generator,
           warmup: int = WARMUP_SAMPLES) -> str:
    """Generate for the first `warmup` decisions, then Bernoulli(p_s)."""
    if iteration < warmup:
        return GENERATE
    p_s = reuse_probability(tracker)
    return REUSE if gen.random() < p_s else GENERATE


class SampleStore:
    """Bounded store of rendered samples; eviction drops min-weight first."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.samples: list[StoredSample] = []

    def __len__(self) -> int:
        return len(self.samples)

    def add(self, sample: StoredSample) -> None:
        if len(self.samples) >= self.capacity:
            drop = min(range(len(self.samples)), key=lambda i: self.samples[i].weight)
            self.samples.pop(drop)
        self.samples.append(sample)


def sample_replay_batch(store: SampleStore, n: int, gen: np.random.Generator) -> list[StoredSample]:
    """n independent draws with selection probability proportional to weight."""
    if not store.samples:
        raise ValueError("sample store is empty")
    w = np.array([s.weight for s in store.samples], dtype=np.float64)
    total = w.sum()
    if total <= 0.0:
        idx = gen.integers(0, len(store.samples), size=n)
    else:
        idx = gen.choice(len(store.samples), size=n, replace=True, p=w / total)
    return [store.samples[i] for i in idx]


def record_new(store: SampleStore, tracker: ReuseTracker, sample: StoredSample,
               loss: float) -> None:
    sample.weight = float(loss)
    store.add(sample)
    tracker.observe_new(loss, sample.large_step)


def record_reused(store: SampleStore, tracker: ReuseTracker, sample: StoredSample,
                  loss: float) -> None:
    sample.weight = float(loss)
    tracker.observe_exist(loss, sample.large_step)


# ---------------------------------------------------------------------------
# Optional on-disk spill for warm restarts: per sample a ground-truth PFM, a
# 17-plane grayscale PFM packing the G-buffer, and a JSON metadata sidecar.

_GBUF_PLANES = ("position", "normal", "albedo", "roughness", "wo", "emission", "mask")


def _pack_gbuffer(g: GBufferPatch) -> np.ndarray:
    p = g.mask.shape[0]
    planes = []
    for name in _GBUF_PLANES:
        arr = getattr(g, name)
        if arr.ndim == 2:
            planes.append(arr)
        else:
            planes.extend(arr[:, :, c] for c in range(arr.shape[2]))
    return np.concatenate(planes, axis=1).astype(np.float32)  # (P, 17P)


def _unpack_gbuffer(packed: np.ndarray) -> GBufferPatch:
    p = packed.shape[0]
    fields = {}
    off = 0
    for name in _GBUF_PLANES:
        width = 1 if name in ("roughness", "mask") else 3
        block = packed[:, off * p:(off + width) * p].astype(np.float64)
        off += width
        if width == 1:
            fields[name] = block
        else:
            fields[name] = np.stack([block[:, i * p:(i + 1) * p] for i in range(3)], axis=2)
    return GBufferPatch(**fields)


def save_store(store: SampleStore, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    index = []
    for i, s in enumerate(store.samples):
        stem = f"sample_{i:06d}"
        write_pfm(os.path.join(directory, stem + "_gt.pfm"), s.radiance)
        write_pfm(os.path.join(directory, stem + "_gbuf.pfm"), _pack_gbuffer(s.gbuffer))
        index.append({
            "stem": stem,
            "vector": s.vector.tolist(),
            "camera": s.camera.tolist(),
            "window": {"image_res": s.window.image_res, "px": s.window.px,
                       "py": s.window.py, "patch_size": s.window.patch_size},
            "weight": s.weight,
            "large_step": s.large_step,
            "iteration": s.iteration,
            "spp": s.spp,
            "seed": s.seed,
        })
    with open(os.path.join(directory, "store.json"), "w") as f:
        json.dump({"capacity": store.capacity, "samples": index}, f)


def load_store(directory: str) -> SampleStore:
    with open(os.path.join(directory, "store.json")) as f:
        doc = json.load(f)
    store = SampleStore(capacity=doc["capacity"])
    for meta in doc["samples"]:
        stem = os.path.join(directory, meta["stem"])
        radiance = read_pfm(stem + "_gt.pfm")
        gbuf = _unpack_gbuffer(read_pfm(stem + "_gbuf.pfm"))
        store.add(StoredSample(
            gbuffer=gbuf, radiance=radiance,
            vector=np.array(meta["vector"]), camera=np.array(meta["camera"]),
            window=PatchWindow(**meta["window"]), weight=meta["weight"],
            large_step=meta["large_step"], iteration=meta["iteration"],
            spp=meta["spp"], seed=meta["seed"],
        ))
    return store
