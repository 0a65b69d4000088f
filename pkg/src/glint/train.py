"""Interleaved training loop: chain steps, batch assembly, Adam updates,
reuse decisions, and the progressive-resolution schedule.

Every iteration applies exactly one Adam update, built either from 16 freshly
rendered chain patches or from 16 loss-weighted replayed samples. Renders may
run on a worker pool (GLINT_THREADS); all random decisions are drawn from a
single seeded stream in a fixed order, so runs replay bit-identically.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import explore, metrics, reuse
from . import net as nets
from . import rng as crng
from .scene import (SceneSpace, SceneVector, instantiate, mirror_band_threshold,
                    resolve_space)
from .tracer import PatchWindow, TracedScene, gbuffer_patch, trace_patch


class TrainingDiverged(RuntimeError):
    pass


def worker_count() -> int:
    env = os.environ.get("GLINT_THREADS", "")
    if env.strip():
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


@dataclass(frozen=True)
class Schedule:
    r0: int = 64
    increment: int = 4
    period: int = 200
    r_max: int = 128

    def __post_init__(self):
        if self.r_max < self.r0 or self.period < 1:
            raise ValueError("schedule needs r_max >= r0 and period >= 1")

    @classmethod
    def paper(cls) -> "Schedule":
        return cls(r0=128, increment=4, period=2000, r_max=600)


def resolution(iteration: int, schedule: Schedule) -> int:
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    return min(schedule.r_max,
               schedule.r0 + schedule.increment * (iteration // schedule.period))


# spp defaults per base scene (specular mirror paths are deterministic, the
# caustic needs far more samples)
SPP_DEFAULTS = {"cornell": 200, "mirror_room": 64, "caustic_box": 512}


@dataclass
class TrainConfig:
    scene: str
    iterations: int
    out_dir: str
    batch_chains: int = 16
    patch_size: int = 32
    schedule: Schedule = field(default_factory=Schedule)
    spp: int | None = None
    acceptance: str = "greedy"        # greedy | metropolis | always
    sampler: str = "mcmc"             # mcmc | uniform
    resolution_mode: str = "adaptive"  # adaptive | fixed
    target_mode: str = "product"      # product | loss (ablation)
    seed: int = 0
    hidden_width: int = 64
    hidden_layers: int = 4
    lr: float = 1e-4
    p_ls: float = 0.3
    sigma: float = 0.05
    store_capacity: int = reuse.DEFAULT_CAPACITY
    warmup_generate: int = reuse.WARMUP_SAMPLES
    val_interval: int = 250
    val_frames: int = 16
    val_res: int = 64
    val_spp: int = 128
    checkpoint_interval: int = 1000

    def __post_init__(self):
        if self.schedule.r0 < self.patch_size:
            raise ValueError("schedule r0 must be at least the patch size")
        if self.sampler not in ("mcmc", "uniform"):
            raise ValueError(f"unknown sampler mode '{self.sampler}'")
        if self.acceptance not in explore.ACCEPT_MODES:
            raise ValueError(f"unknown acceptance mode '{self.acceptance}'")
        if self.resolution_mode not in ("adaptive", "fixed"):
            raise ValueError(f"unknown resolution mode '{self.resolution_mode}'")
        if self.target_mode not in ("product", "loss"):
            raise ValueError(f"unknown target mode '{self.target_mode}'")


LOG_HEADER = ("iteration,wall_time,loss,l1,dssim,p_s,decision,resolution,"
              "f_mean,f_max,val_loss")


# ---------------------------------------------------------------------------
# Validation sets.


@dataclass
class ValidationFrame:
    vector: np.ndarray  # normalized
    camera: np.ndarray  # raw 6
    gt: np.ndarray | None = None


def validation_frames(space: SceneSpace, n: int, seed: int) -> list[ValidationFrame]:
    """Fixed frames, biased toward the hard configurations of each scene."""
    gen = np.random.Generator(np.random.Philox(crng.mix_u64(seed, 0x7A11D)))
    frames = []
    if space.base_scene == "mirror_room":
        # ball visible in the mirror: pick x well inside the reflected band
        zs = np.linspace(0.05, 0.95, n)
        for i, zn in enumerate(zs):
            z = space.params[1].min + zn * (space.params[1].max - space.params[1].min)
            thr = float(mirror_band_threshold(z))
            x = (0.5 if i % 2 == 0 else -0.5) * thr * (0.4 + 0.6 * (i % 3) / 2.0)
            xn = (x - space.params[0].min) / (space.params[0].max - space.params[0].min)
            vec = np.array([xn, zn])
            frames.append(ValidationFrame(vec, space.camera.default_values()))
        return frames
    if space.base_scene == "caustic_box":
        # sharp caustics: low roughness, ball positions spread over the box
        for i in range(n):
            vec = gen.random(space.dim)
            vec[2] = 0.05 + 0.25 * (i % 4) / 3.0  # roughness component near minimum
            frames.append(ValidationFrame(vec, space.camera.default_values()))
        return frames
    for _ in range(n):
        vec = gen.random(space.dim)
        if space.camera.mode == "variable":
            cam = space.camera.denormalize(gen.random(6))
        else:
            cam = space.camera.default_values()
        frames.append(ValidationFrame(vec, cam))
    return frames


def render_reference(space: SceneSpace, frame: ValidationFrame, res: int, spp: int,
                     seed: int) -> np.ndarray:
    inst = instantiate(space, SceneVector(frame.vector), frame.camera)
    scene = TracedScene(inst)
    img = np.zeros((res, res, 3), dtype=np.float32)
    p = min(32, res)
    starts = sorted({min(v, res - p) for v in range(0, res, p)})
    for py in starts:
        for px in starts:
            w = PatchWindow(res, px, py, p)
            img[py:py + p, px:px + p] = trace_patch(scene, w, spp, seed).radiance
    return img


def render_prediction(net: nets.PixelGenerator, space: SceneSpace, vector: np.ndarray,
                      camera: np.ndarray, res: int) -> np.ndarray:
    inst = instantiate(space, SceneVector(vector), camera)
    scene = TracedScene(inst)
    gbuf = gbuffer_patch(scene, PatchWindow(res, 0, 0, res))
    pin = nets.pixel_inputs(gbuf, vector, camera)
    return np.asarray(net.forward(pin), dtype=np.float64).reshape(res, res, 3)


def validate(predictor, space: SceneSpace, frames: list[ValidationFrame],
             res: int) -> tuple[metrics.MetricReport, float]:
    """Metrics vs cached ground truth; also the mean training loss.

    `predictor` is either a PixelGenerator or a callable
    (vector, camera, res) -> image."""
    if isinstance(predictor, nets.PixelGenerator):
        fn = lambda v, c, r: render_prediction(predictor, space, v, c, r)
    else:
        fn = predictor
    report = metrics.MetricReport()
    losses = []
    for i, frame in enumerate(frames):
        if frame.gt is None:
            raise ValueError(f"validation frame {i} has no ground truth")
        pred = np.maximum(fn(frame.vector, frame.camera, res), 0.0)
        report.add_frame(f"frame_{i:03d}", pred, frame.gt)
        losses.append(nets.loss(pred, frame.gt).total)
    return report, float(np.mean(losses))


# ---------------------------------------------------------------------------


class Trainer:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.space = resolve_space(cfg.scene)
        self.spp = cfg.spp if cfg.spp is not None else SPP_DEFAULTS[self.space.base_scene]

        self.net = nets.PixelGenerator(self.space.dim, cfg.hidden_width,
                                       cfg.hidden_layers,
                                       seed=crng.mix_u64(cfg.seed, 0x11E7))
        self.adam = nets.AdamState.for_net(self.net, lr=cfg.lr)
        self.chains = explore.init_chains(self.space, cfg.batch_chains,
                                          seed=crng.mix_u64(cfg.seed, 0xC4A15))
        self.store = reuse.SampleStore(cfg.store_capacity)
        self.tracker = reuse.ReuseTracker()
        self.dyn = nets.DynamicRange()
        self.gen = np.random.Generator(np.random.Philox(crng.mix_u64(cfg.seed, 0x5EED)))

        if cfg.sampler == "uniform":
            # the uniform baseline of the comparisons: large steps only,
            # always accepted, no resolution adaptation; reuse stays active
            self.proposal = explore.ProposalConfig(p_ls=1.0, sigma=cfg.sigma)
            self.acceptance = "always"
            self.res_mode = "fixed"
        else:
            self.proposal = explore.ProposalConfig(p_ls=cfg.p_ls, sigma=cfg.sigma)
            self.acceptance = cfg.acceptance
            self.res_mode = cfg.resolution_mode

        self.run_dir = cfg.out_dir
        os.makedirs(self.run_dir, exist_ok=True)
        os.makedirs(os.path.join(self.run_dir, "checkpoints"), exist_ok=True)
        with open(os.path.join(self.run_dir, "config.json"), "w") as f:
            json.dump(dataclasses.asdict(cfg), f, indent=1)
        self._log = open(os.path.join(self.run_dir, "log.csv"), "w")
        self._log.write(LOG_HEADER + "\n")
        self._chain_log = open(os.path.join(self.run_dir, "chains.csv"), "w")
        d = explore.state_dim(self.space)
        comps = ",".join(f"u{i}" for i in range(d))
        self._chain_log.write(explore.CHAIN_CSV_HEADER + "," + comps + "\n")
        self._t0 = time.perf_counter()
        self._val_frames: list[ValidationFrame] | None = None
        self._workers = worker_count()
        self.last_val_loss: float | None = None

    # -- validation --------------------------------------------------------

    def ensure_validation(self) -> list[ValidationFrame]:
        if self._val_frames is not None:
            return self._val_frames
        cfg = self.cfg
        frames = validation_frames(self.space, cfg.val_frames, cfg.seed)
        vdir = os.path.join(self.run_dir, "validation")
        os.makedirs(vdir, exist_ok=True)
        meta = []
        from .imgio import read_pfm, write_pfm

        for i, frame in enumerate(frames):
            path = os.path.join(vdir, f"frame_{i:03d}.pfm")
            if os.path.exists(path):
                frame.gt = read_pfm(path)
            else:
                seed = crng.mix_u64(cfg.seed, 0xFA11, i)
                frame.gt = render_reference(self.space, frame, cfg.val_res,
                                            cfg.val_spp, seed)
                write_pfm(path, frame.gt)
            meta.append({"vector": frame.vector.tolist(),
                         "camera": frame.camera.tolist()})
        with open(os.path.join(vdir, "validation.json"), "w") as f:
            json.dump({"scene": cfg.scene, "res": cfg.val_res, "spp": cfg.val_spp,
                       "frames": meta}, f, indent=1)
        self._val_frames = frames
        return frames

    # -- iteration ---------------------------------------------------------

    def _current_resolution(self, it: int) -> int:
        if self.res_mode == "fixed":
            return self.cfg.schedule.r0
        return resolution(it, self.cfg.schedule)

    def _ctx(self, res: int) -> explore.EvalContext:
        return explore.EvalContext(space=self.space, net=self.net, adam=self.adam,
                                   resolution=res, patch_size=self.cfg.patch_size,
                                   spp=self.spp, dynamic_range=self.dyn,
                                   target_mode=self.cfg.target_mode)

    def _render_candidate(self, u: np.ndarray, ctx: explore.EvalContext,
                          seed: int) -> reuse.StoredSample:
        sv, cam, q = explore.split_state(self.space, u)
        ox, oy = explore.patch_origin(q, ctx.resolution, ctx.patch_size)
        window = PatchWindow(ctx.resolution, ox, oy, ctx.patch_size)
        inst = instantiate(self.space, SceneVector(sv), cam)
        scene = TracedScene(inst)
        gbuf = gbuffer_patch(scene, window)
        gt = trace_patch(scene, window, ctx.spp, seed)
        return reuse.StoredSample(gbuffer=gbuf, radiance=gt.radiance, vector=sv.copy(),
                                  camera=cam.copy(), window=window, weight=0.0,
                                  large_step=False, iteration=0, spp=ctx.spp, seed=seed)

    def _generate_iteration(self, it: int, ctx: explore.EvalContext):
        cfg = self.cfg
        # phase A: proposals in chain order (deterministic stream use)
        cands, kinds = [], []
        for chain in self.chains:
            if chain.f is None:
                cands.append(chain.u)
                kinds.append("init")
            else:
                cand, kind = explore.propose(chain.u, self.proposal, self.gen)
                cands.append(cand)
                kinds.append(kind)
        seeds = [crng.mix_u64(cfg.seed, 0x9E9D, it, ci) for ci in range(len(cands))]
        # phase B: renders in parallel (stateless, seed-determined)
        if self._workers > 1 and len(cands) > 1:
            with ThreadPoolExecutor(max_workers=self._workers) as pool:
                samples = list(pool.map(lambda args: self._render_candidate(*args),
                                        [(u, ctx, s) for u, s in zip(cands, seeds)]))
        else:
            samples = [self._render_candidate(u, ctx, s) for u, s in zip(cands, seeds)]
        # phase C: score, accept, store -- sequential in chain order
        grads_acc = None
        values = []
        for ci, (chain, cand, kind, sample) in enumerate(
                zip(self.chains, cands, kinds, samples)):
            self.dyn.update(sample.radiance)
            tv, lv, grads = explore.score_sample(sample, ctx)
            if kind == "init":
                accepted = True
                chain.f = tv.f
                chain.sample = sample
            else:
                accepted = explore.accept(chain.f, tv.f, self.acceptance, self.gen)
                if accepted:
                    chain.u = cand
                    chain.f = tv.f
                    chain.sample = sample
                else:
                    # the incumbent took part in this training pass; refresh
                    # its target value without re-rendering
                    tv_inc, _, _ = explore.score_sample(chain.sample, ctx)
                    chain.f = tv_inc.f
            sample.large_step = kind != "small"
            sample.iteration = it
            reuse.record_new(self.store, self.tracker, sample, tv.loss)
            values.append(lv)
            self._chain_log.write(explore.chain_csv_row(
                it, ci, kind, accepted, tv.f, chain.u) + "\n")
            if grads_acc is None:
                grads_acc = [g.astype(np.float64) for g in grads]
            else:
                for acc, g in zip(grads_acc, grads):
                    acc += g
        n = len(samples)
        grads_mean = [g / n for g in grads_acc]
        return grads_mean, values

    def _reuse_iteration(self, it: int, ctx: explore.EvalContext):
        batch = reuse.sample_replay_batch(self.store, self.cfg.batch_chains, self.gen)
        grads_acc = None
        values = []
        for sample in batch:
            pin = nets.pixel_inputs(sample.gbuffer, sample.vector, sample.camera)
            tape = []
            pred = self.net.forward(pin, tape)
            p = sample.window.patch_size
            lv, dpred = nets.loss_and_grad(pred.reshape(p, p, 3), sample.radiance,
                                           max_val=self.dyn.max_val)
            gw, gb = self.net.backward(pin, tape, dpred.reshape(-1, 3))
            grads = nets.flatten_grads(gw, gb)
            reuse.record_reused(self.store, self.tracker, sample, lv.total)
            values.append(lv)
            if grads_acc is None:
                grads_acc = [g.astype(np.float64) for g in grads]
            else:
                for acc, g in zip(grads_acc, grads):
                    acc += g
        n = len(batch)
        return [g / n for g in grads_acc], values

    def train_iteration(self, it: int) -> None:
        cfg = self.cfg
        res = self._current_resolution(it)
        ctx = self._ctx(res)
        decision = reuse.decide(self.tracker, it, self.gen, warmup=cfg.warmup_generate)
        try:
            p_s = reuse.reuse_probability(self.tracker)
        except ValueError:
            p_s = None

        try:
            if decision == reuse.GENERATE:
                grads, values = self._generate_iteration(it, ctx)
            else:
                grads, values = self._reuse_iteration(it, ctx)
        except ValueError as e:
            raise TrainingDiverged(f"iteration {it}: {e}") from e

        batch_loss = float(np.mean([lv.total for lv in values]))
        batch_l1 = float(np.mean([lv.l1 for lv in values]))
        batch_dssim = float(np.mean([lv.dssim for lv in values]))
        if not np.isfinite(batch_loss):
            raise TrainingDiverged(f"iteration {it}: non-finite batch loss {batch_loss}")
        nets.adam_step(self.net, self.adam, grads)

        val_txt = ""
        if (it + 1) % cfg.val_interval == 0:
            frames = self.ensure_validation()
            _, val_loss = validate(self.net, self.space, frames, cfg.val_res)
            self.last_val_loss = val_loss
            val_txt = f"{val_loss:.9g}"

        fs = [c.f for c in self.chains if c.f is not None]
        f_mean = float(np.mean(fs)) if fs else float("nan")
        f_max = float(np.max(fs)) if fs else float("nan")
        wall = time.perf_counter() - self._t0
        p_s_txt = "" if p_s is None else f"{p_s:.9g}"
        self._log.write(
            f"{it},{wall:.3f},{batch_loss:.9g},{batch_l1:.9g},"
            f"{batch_dssim:.9g},{p_s_txt},{decision},{res},"
            f"{f_mean:.9g},{f_max:.9g},{val_txt}\n"
        )

        if (it + 1) % cfg.checkpoint_interval == 0 or it + 1 == cfg.iterations:
            path = os.path.join(self.run_dir, "checkpoints", f"ckpt_{it + 1}.bin")
            nets.save_checkpoint(self.net, self.adam, path)

    def run(self) -> str:
        try:
            for it in range(self.cfg.iterations):
                self.train_iteration(it)
        finally:
            self._log.close()
            self._chain_log.close()
        return self.run_dir


def train_run(cfg: TrainConfig) -> str:
    return Trainer(cfg).run()
