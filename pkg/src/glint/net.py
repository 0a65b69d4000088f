"""Per-pixel radiance generator: MLP with position preconditioning, manual
forward/backward, Adam with access to the hypothetical per-patch step norm,
and the L1 + DSSIM training loss.

The world position goes alone through the first layer; the remaining
conditioning (normal, albedo, roughness, outgoing direction, scene vector,
camera) is concatenated with the hidden state at the skip layers. Emission
bypasses the network and is added to the output.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

LEAKY_SLOPE = 0.01
GBUFFER_FEATURES = 10  # normal 3 + albedo 3 + roughness 1 + wo 3
CAMERA_FEATURES = 6

_MAGIC = b"GLNT"
_VERSION = 1


class CheckpointError(Exception):
    pass


@dataclass
class PixelInput:
    position: np.ndarray  # (N,3)
    cond: np.ndarray      # (N, GBUFFER_FEATURES + dim + 6)
    emission: np.ndarray  # (N,3)
    mask: np.ndarray      # (N,)


def pixel_inputs(gbuf, scene_values: np.ndarray, camera6: np.ndarray) -> PixelInput:
    """Flatten a G-buffer patch plus repeated global state into network inputs."""
    p = gbuf.mask.shape[0]
    n = p * p
    sv = np.asarray(scene_values, dtype=np.float64).reshape(-1)
    cam = np.asarray(camera6, dtype=np.float64).reshape(6)
    cond = np.concatenate([
        gbuf.normal.reshape(n, 3),
        gbuf.albedo.reshape(n, 3),
        gbuf.roughness.reshape(n, 1),
        gbuf.wo.reshape(n, 3),
        np.broadcast_to(sv, (n, sv.size)),
        np.broadcast_to(cam, (n, 6)),
    ], axis=1)
    return PixelInput(
        position=gbuf.position.reshape(n, 3),
        cond=cond,
        emission=gbuf.emission.reshape(n, 3),
        mask=gbuf.mask.reshape(n),
    )


class PixelGenerator:
    """MLP of `hidden_layers` layers x `hidden_width` features, skip
    re-injection of the conditioning at layers 2 and hidden_layers//2 + 2."""

    def __init__(self, scene_dim: int, hidden_width: int = 512, hidden_layers: int = 8,
                 seed: int = 0, dtype=np.float32):
        if hidden_layers < 2:
            raise ValueError("need at least 2 hidden layers")
        self.scene_dim = scene_dim
        self.hidden_width = hidden_width
        self.hidden_layers = hidden_layers
        self.dtype = np.dtype(dtype)
        self.cond_dim = GBUFFER_FEATURES + scene_dim + CAMERA_FEATURES
        self.skip_layers = {2, hidden_layers // 2 + 2}

        gen = np.random.Generator(np.random.Philox(seed))
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in self.layer_shapes():
            limit = np.sqrt(6.0 / fan_in)
            self.weights.append(gen.uniform(-limit, limit, (fan_in, fan_out)).astype(self.dtype))
            self.biases.append(np.zeros(fan_out, dtype=self.dtype))

    def layer_shapes(self) -> list[tuple[int, int]]:
        h, c = self.hidden_width, self.cond_dim
        shapes = [(3, h)]
        for layer in range(2, self.hidden_layers + 1):
            shapes.append((h + c if layer in self.skip_layers else h, h))
        shapes.append((h, 3))  # linear output head
        return shapes

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def astype(self, dtype) -> "PixelGenerator":
        net = PixelGenerator.__new__(PixelGenerator)
        net.scene_dim = self.scene_dim
        net.hidden_width = self.hidden_width
        net.hidden_layers = self.hidden_layers
        net.dtype = np.dtype(dtype)
        net.cond_dim = self.cond_dim
        net.skip_layers = set(self.skip_layers)
        net.weights = [w.astype(dtype) for w in self.weights]
        net.biases = [b.astype(dtype) for b in self.biases]
        return net

    # -- forward / backward --------------------------------------------------

    def forward(self, inputs: PixelInput, tape: list | None = None) -> np.ndarray:
        pos = np.asarray(inputs.position, dtype=self.dtype)
        cond = np.asarray(inputs.cond, dtype=self.dtype)
        if pos.shape[1] != 3 or cond.shape[1] != self.cond_dim:
            raise ValueError(
                f"input dims (3, {self.cond_dim}) expected, got "
                f"({pos.shape[1]}, {cond.shape[1]})"
            )
        h = pos
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            layer = i + 1
            x = np.concatenate([h, cond], axis=1) if layer in self.skip_layers else h
            z = x @ w + b
            last = i == len(self.weights) - 1
            if tape is not None:
                tape.append((x, z))
            h = z if last else np.where(z > 0, z, self.dtype.type(LEAKY_SLOPE) * z)
        mask = np.asarray(inputs.mask, dtype=self.dtype)[:, None]
        return h * mask + np.asarray(inputs.emission, dtype=self.dtype)

    def backward(self, inputs: PixelInput, tape: list, dout: np.ndarray):
        """Gradients of sum(dout * output) w.r.t. all weights and biases."""
        mask = np.asarray(inputs.mask, dtype=self.dtype)[:, None]
        delta = np.asarray(dout, dtype=self.dtype) * mask
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            x, z = tape[i]
            last = i == len(self.weights) - 1
            if not last:
                delta = delta * np.where(z > 0, self.dtype.type(1.0),
                                         self.dtype.type(LEAKY_SLOPE))
            grads_w[i] = x.T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                dx = delta @ self.weights[i].T
                layer = i + 1
                if layer in self.skip_layers:
                    dx = dx[:, : self.hidden_width]
                delta = dx
        return grads_w, grads_b

    # -- parameter flattening (checkpoint & step-norm bookkeeping) -----------

    def param_arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


def flatten_grads(grads_w, grads_b) -> list[np.ndarray]:
    out = []
    for gw, gb in zip(grads_w, grads_b):
        out.append(gw)
        out.append(gb)
    return out


# ---------------------------------------------------------------------------
# Adam.


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_net(cls, net: PixelGenerator, lr: float = 1e-4) -> "AdamState":
        params = net.param_arrays()
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params], lr=lr)


def adam_step(net: PixelGenerator, state: AdamState, grads: list[np.ndarray]):
    """In-place Adam update; returns the applied step new_weights - old_weights."""
    params = net.param_arrays()
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    deltas = []
    for p, m, v, g in zip(params, state.m, state.v, grads):
        g = g.astype(p.dtype, copy=False)
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        step = state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p -= step.astype(p.dtype)
        deltas.append(-step)
    return deltas


def step_norm_for_patch(state: AdamState, grads: list[np.ndarray]) -> float:
    """Norm of the Adam step this gradient WOULD take from the current moments.

    The moments are read, not mutated: this is the per-chain proxy of the
    optimizer's total step used by the exploration target."""
    t1 = state.t + 1
    bc1 = 1.0 - state.beta1 ** t1
    bc2 = 1.0 - state.beta2 ** t1
    sq = 0.0
    for m, v, g in zip(state.m, state.v, grads):
        m1 = state.beta1 * m + (1.0 - state.beta1) * g
        v1 = state.beta2 * v + (1.0 - state.beta2) * g * g
        step = state.lr * (m1 / bc1) / (np.sqrt(v1 / bc2) + state.eps)
        sq += float((step.astype(np.float64) ** 2).sum())
    return float(np.sqrt(sq))


# ---------------------------------------------------------------------------
# Training loss: L1 + structural dissimilarity.

SSIM_WINDOW = 8
SSIM_STRIDE = 4
_LUMA = np.array([0.2126, 0.7152, 0.0722])


class DynamicRange:
    """Running max of target luminance, clamped to at least 1."""

    def __init__(self):
        self._max = 1.0

    def update(self, target: np.ndarray) -> float:
        luma = np.asarray(target, dtype=np.float64).reshape(-1, 3) @ _LUMA
        if luma.size:
            self._max = max(self._max, float(luma.max()))
        return self._max

    @property
    def max_val(self) -> float:
        return self._max


@dataclass
class LossValue:
    total: float
    l1: float
    dssim: float
    per_patch: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _window_views(img: np.ndarray):
    from numpy.lib.stride_tricks import sliding_window_view

    w = sliding_window_view(img, (SSIM_WINDOW, SSIM_WINDOW), axis=(0, 1))
    return w[::SSIM_STRIDE, ::SSIM_STRIDE]  # (wy, wx, 3, 8, 8)


def loss_and_grad(pred: np.ndarray, target: np.ndarray, max_val: float | None = None):
    """LossValue for one patch plus d(total)/d(pred)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 3 or pred.shape[2] != 3:
        raise ValueError(f"patch shapes must match as (P,P,3), got {pred.shape} vs {target.shape}")
    if np.isnan(pred).any() or np.isnan(target).any():
        raise ValueError("NaN in loss inputs")
    p = pred.shape[0]
    if p < SSIM_WINDOW:
        raise ValueError(f"patch side {p} below SSIM window {SSIM_WINDOW}")
    if max_val is None:
        max_val = max(1.0, float((target.reshape(-1, 3) @ _LUMA).max()))

    diff = pred - target
    n_el = diff.size
    l1 = float(np.abs(diff).mean())
    dl1 = np.sign(diff) / n_el

    c1 = (0.01 * max_val) ** 2
    c2 = (0.03 * max_val) ** 2
    xw = _window_views(pred)
    yw = _window_views(target)
    nw = SSIM_WINDOW * SSIM_WINDOW
    mu_x = xw.mean(axis=(3, 4))
    mu_y = yw.mean(axis=(3, 4))
    var_x = (xw * xw).mean(axis=(3, 4)) - mu_x * mu_x
    var_y = (yw * yw).mean(axis=(3, 4)) - mu_y * mu_y
    cov = (xw * yw).mean(axis=(3, 4)) - mu_x * mu_y
    a = 2.0 * mu_x * mu_y + c1
    b = mu_x * mu_x + mu_y * mu_y + c1
    c = 2.0 * cov + c2
    d = var_x + var_y + c2
    ssim = (a * c) / (b * d)
    n_windows = ssim.size
    dssim = float(((1.0 - ssim) / 2.0).mean())

    # dS per window, chained to pred pixels and accumulated over overlaps
    ds_dmu = 2.0 * mu_y * c / (b * d) - a * c * 2.0 * mu_x / (b * b * d)
    ds_dvar = -a * c / (b * d * d)
    ds_dcov = 2.0 * a / (b * d)
    scale = -1.0 / (2.0 * n_windows)
    ddssim = np.zeros_like(pred)
    wy, wx = ssim.shape[:2]
    for iy in range(wy):
        oy = iy * SSIM_STRIDE
        for ix in range(wx):
            ox = ix * SSIM_STRIDE
            xwin = pred[oy:oy + SSIM_WINDOW, ox:ox + SSIM_WINDOW]
            ywin = target[oy:oy + SSIM_WINDOW, ox:ox + SSIM_WINDOW]
            term = (ds_dmu[iy, ix]
                    + ds_dvar[iy, ix] * 2.0 * (xwin - mu_x[iy, ix])
                    + ds_dcov[iy, ix] * (ywin - mu_y[iy, ix]))
            ddssim[oy:oy + SSIM_WINDOW, ox:ox + SSIM_WINDOW] += scale / nw * term

    total = l1 + dssim
    value = LossValue(total=total, l1=l1, dssim=dssim, per_patch=np.array([total]))
    return value, dl1 + ddssim


def loss(pred: np.ndarray, target: np.ndarray, max_val: float | None = None) -> LossValue:
    value, _ = loss_and_grad(pred, target, max_val)
    return value


# ---------------------------------------------------------------------------
# Checkpoint io: magic GLNT, u32 version/dim/width/layers, f32 params
# layer-major, then Adam m and v, then t as u64.


def save_checkpoint(net: PixelGenerator, state: AdamState, path: str) -> None:
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<IIII", _VERSION, net.scene_dim, net.hidden_width,
                            net.hidden_layers))
        for arr in net.param_arrays():
            f.write(arr.astype("<f4").tobytes())
        for arr in state.m + state.v:
            f.write(arr.astype("<f4").tobytes())
        f.write(struct.pack("<Q", state.t))


def load_checkpoint(path: str, expect_dim: int | None = None):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != _MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}")
    try:
        version, dim, width, layers = struct.unpack_from("<IIII", raw, 4)
    except struct.error:
        raise CheckpointError(f"{path}: truncated header") from None
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    if expect_dim is not None and dim != expect_dim:
        raise CheckpointError(
            f"{path}: checkpoint scene dim {dim} does not match space dim {expect_dim}"
        )
    net = PixelGenerator(dim, width, layers)
    state = AdamState.for_net(net)
    off = 20
    targets = net.param_arrays() + state.m + state.v
    for arr in targets:
        end = off + arr.size * 4
        if end > len(raw):
            raise CheckpointError(f"{path}: truncated parameter payload")
        arr[...] = np.frombuffer(raw[off:end], dtype="<f4").reshape(arr.shape)
        off = end
    if off + 8 > len(raw):
        raise CheckpointError(f"{path}: missing optimizer timestep")
    state.t = struct.unpack_from("<Q", raw, off)[0]
    return net, state


def checkpoint_info(path: str) -> dict:
    with open(path, "rb") as f:
        head = f.read(20)
    if head[:4] != _MAGIC or len(head) < 20:
        raise CheckpointError(f"{path}: not a checkpoint")
    version, dim, width, layers = struct.unpack_from("<IIII", head, 4)
    return {"version": version, "scene_dim": dim, "hidden_width": width,
            "hidden_layers": layers}
