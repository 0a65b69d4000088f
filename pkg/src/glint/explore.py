"""MCMC active exploration of the scene-parameter hypercube.

Chains walk over [0,1]^D where D = scene dim + (6 variable-camera components
if the space declares them) + 2 normalized patch coordinates. Proposals mix
fresh uniform states (large steps, probability p_ls) with reflected Gaussian
perturbations (small steps). States are scored by f = patch loss x norm of
the hypothetical Adam step; acceptance is greedy by default, Metropolis for
validating the chain machinery, or unconditional for the uniform baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import net as nets
from . import rng as crng
from .reuse import StoredSample
from .scene import SceneSpace, SceneVector, instantiate
from .tracer import PatchWindow, TracedScene, gbuffer_patch, trace_patch

ACCEPT_MODES = ("greedy", "metropolis", "always")


@dataclass
class ProposalConfig:
    p_ls: float = 0.3
    sigma: float = 0.05
    # boundary rule: reflect into [0,1]

    def __post_init__(self):
        if not 0.0 < self.p_ls <= 1.0:
            raise ValueError("p_ls must lie in (0, 1]")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")


@dataclass
class ChainState:
    u: np.ndarray
    f: float | None = None
    sample: object | None = None


@dataclass
class TargetValue:
    f: float
    loss: float
    step_norm: float


@dataclass
class StepResult:
    kind: str          # init | large | small
    accepted: bool
    f_evaluated: float
    payload: object    # whatever the evaluator returned alongside f


def state_dim(space: SceneSpace) -> int:
    cam = 6 if space.camera.mode == "variable" else 0
    return space.dim + cam + 2


def init_chains(space: SceneSpace, n: int = 16, seed: int = 0) -> list[ChainState]:
    if n < 1:
        raise ValueError("need at least one chain")
    gen = np.random.Generator(np.random.Philox(seed))
    d = state_dim(space)
    return [ChainState(u=gen.random(d)) for _ in range(n)]


def reflect01(x: np.ndarray) -> np.ndarray:
    y = np.abs(x) % 2.0
    return np.where(y > 1.0, 2.0 - y, y)


def propose(u: np.ndarray, config: ProposalConfig, gen: np.random.Generator):
    """Candidate state plus the step kind taken ('large' or 'small')."""
    if gen.random() < config.p_ls:
        return gen.random(u.size), "large"
    return reflect01(u + gen.normal(0.0, config.sigma, u.size)), "small"


def accept(f_current: float, f_proposed: float, mode: str,
           gen: np.random.Generator | None = None) -> bool:
    if not (np.isfinite(f_current) and np.isfinite(f_proposed)):
        raise ValueError("target values must be finite")
    if mode == "greedy":
        return f_proposed > f_current
    if mode == "metropolis":
        if f_current <= 0.0:
            return True
        ratio = min(1.0, f_proposed / f_current)
        return gen.random() < ratio
    if mode == "always":
        return True
    raise ValueError(f"unknown acceptance mode '{mode}'")


def chain_step(chain: ChainState, config: ProposalConfig, evaluate, mode: str,
               gen: np.random.Generator, refresh=None) -> StepResult:
    """One propose -> evaluate -> accept transition.

    `evaluate(u) -> (f, payload)` scores a state; the payload of the evaluated
    candidate is always returned so the caller can train on it. On rejection
    the incumbent's cached f is refreshed through `refresh(sample)` when
    given: the incumbent took part in the training pass, so its target value
    must reflect the current network without re-rendering anything.
    """
    if chain.f is None:
        f, payload = evaluate(chain.u)
        chain.f = f
        chain.sample = payload
        return StepResult(kind="init", accepted=True, f_evaluated=f, payload=payload)
    cand, kind = propose(chain.u, config, gen)
    f_prop, payload = evaluate(cand)
    accepted = accept(chain.f, f_prop, mode, gen)
    if accepted:
        chain.u = cand
        chain.f = f_prop
        chain.sample = payload
    elif refresh is not None and chain.sample is not None:
        chain.f = refresh(chain.sample)
    return StepResult(kind=kind, accepted=accepted, f_evaluated=f_prop, payload=payload)


# ---------------------------------------------------------------------------
# Target evaluation against the live network and tracer.


@dataclass
class EvalContext:
    space: SceneSpace
    net: "nets.PixelGenerator"
    adam: "nets.AdamState"
    resolution: int
    patch_size: int
    spp: int
    dynamic_range: "nets.DynamicRange"
    target_mode: str = "product"  # product | loss (ablation)


def split_state(space: SceneSpace, u: np.ndarray):
    """Chain state -> (scene values, raw camera 6, normalized patch coords)."""
    d = space.dim
    sv = u[:d]
    if space.camera.mode == "variable":
        cam = space.camera.denormalize(u[d:d + 6])
    else:
        cam = space.camera.default_values()
    return sv, cam, u[-2:]


def patch_origin(q: np.ndarray, resolution: int, patch_size: int) -> tuple[int, int]:
    span = resolution - patch_size
    ox = int(np.floor(q[0] * span + 0.5))
    oy = int(np.floor(q[1] * span + 0.5))
    return ox, oy


def evaluate_target(u: np.ndarray, ctx: EvalContext, seed: int):
    """Render the candidate's patch, run the per-patch backward pass, and
    score it. Returns (TargetValue, StoredSample, LossValue, gradients)."""
    sv, cam, q = split_state(ctx.space, u)
    ox, oy = patch_origin(q, ctx.resolution, ctx.patch_size)
    window = PatchWindow(ctx.resolution, ox, oy, ctx.patch_size)
    inst = instantiate(ctx.space, SceneVector(sv), cam)
    scene = TracedScene(inst)
    gbuf = gbuffer_patch(scene, window)
    gt = trace_patch(scene, window, ctx.spp, seed)
    ctx.dynamic_range.update(gt.radiance)
    sample = StoredSample(gbuffer=gbuf, radiance=gt.radiance, vector=sv.copy(),
                          camera=cam.copy(), window=window, weight=0.0,
                          large_step=False, iteration=0, spp=ctx.spp, seed=seed)
    value, lv, grads = score_sample(sample, ctx)
    return value, sample, lv, grads


def score_sample(sample: "StoredSample", ctx: EvalContext):
    """loss x hypothetical-step-norm of a rendered sample under current weights."""
    pin = nets.pixel_inputs(sample.gbuffer, sample.vector, sample.camera)
    tape = []
    pred = ctx.net.forward(pin, tape)
    p = sample.window.patch_size
    lv, dpred = nets.loss_and_grad(pred.reshape(p, p, 3), sample.radiance,
                                   max_val=ctx.dynamic_range.max_val)
    gw, gb = ctx.net.backward(pin, tape, dpred.reshape(-1, 3))
    grads = nets.flatten_grads(gw, gb)
    if ctx.target_mode == "loss":
        f = lv.total
        sn = 0.0
    else:
        sn = nets.step_norm_for_patch(ctx.adam, grads)
        f = lv.total * sn
    return TargetValue(f=float(f), loss=float(lv.total), step_norm=float(sn)), lv, grads


CHAIN_CSV_HEADER = "iteration,chain,kind,accepted,f"


def chain_csv_row(iteration: int, chain_id: int, kind: str, accepted: bool,
                  f: float, u: np.ndarray) -> str:
    comps = ",".join(f"{x:.9g}" for x in u)
    return f"{iteration},{chain_id},{kind},{int(accepted)},{f:.9g},{comps}"
