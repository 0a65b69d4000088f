"""Command-line entry point: train, render, eval, diag-mcmc, inspect-space, serve.

Exit codes: 0 ok, 2 configuration error, 3 runtime divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys

import numpy as np

from . import metrics
from . import net as nets
from .imgio import read_pfm, write_pfm, write_png, write_ppm
from .scene import SceneError, SceneVector, resolve_space
from .train import Schedule, TrainConfig, TrainingDiverged, train_run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _parse_floats(text: str, expect: int, what: str) -> np.ndarray:
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    try:
        vals = np.array([float(p) for p in parts], dtype=np.float64)
    except ValueError:
        raise SceneError(f"{what}: could not parse '{text}' as floats") from None
    if expect is not None and vals.size != expect:
        raise SceneError(f"{what}: expected {expect} values, got {vals.size}")
    return vals


def _latest_checkpoint(run_dir: str) -> str:
    ckpt_dir = os.path.join(run_dir, "checkpoints")
    if not os.path.isdir(ckpt_dir):
        raise SceneError(f"no checkpoints directory under {run_dir}")
    best, best_iter = None, -1
    for name in os.listdir(ckpt_dir):
        m = re.fullmatch(r"ckpt_(\d+)\.bin", name)
        if m and int(m.group(1)) > best_iter:
            best_iter = int(m.group(1))
            best = os.path.join(ckpt_dir, name)
    if best is None:
        raise SceneError(f"no checkpoints found under {ckpt_dir}")
    return best


def _scene_for_checkpoint(ckpt_path: str) -> str:
    """The run directory's config.json names the scene the model was trained on."""
    for candidate in (os.path.dirname(ckpt_path),
                      os.path.dirname(os.path.dirname(ckpt_path))):
        cfg = os.path.join(candidate, "config.json")
        if os.path.exists(cfg):
            with open(cfg) as f:
                return json.load(f)["scene"]
    raise SceneError(
        f"cannot resolve the scene for {ckpt_path}: no config.json found next to "
        "the checkpoint or one directory up (keep checkpoints inside their run "
        "directory, or pass a run-dir checkpoint path)"
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glint",
        description="Neural global illumination for variable scenes, trained by "
                    "MCMC active exploration.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a generator on a variable scene")
    p.add_argument("--scene", required=True,
                   help="builtin name (CornellVar, MirrorRoom, CausticBox) or scene-space JSON path")
    p.add_argument("--iters", type=int, required=True, help="training iterations")
    p.add_argument("--mode", choices=["mcmc", "uniform"], default="mcmc",
                   help="sample selection: MCMC active exploration or the uniform baseline")
    p.add_argument("--resolution", choices=["adaptive", "fixed"], default="adaptive",
                   help="progressive virtual-image resolution or fixed at R0")
    p.add_argument("--acceptance", choices=["greedy", "metropolis"], default="greedy",
                   help="chain acceptance policy")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--spp", type=int, default=None, help="ground-truth samples per pixel")
    p.add_argument("--hidden", type=int, default=64, help="hidden width")
    p.add_argument("--layers", type=int, default=4, help="hidden layers")

    p = sub.add_parser("render", help="render a scene instance with a trained model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vector", required=True, help="normalized components, comma separated")
    p.add_argument("--camera", required=True, help="px,py,pz,lx,ly,lz")
    p.add_argument("--res", type=int, required=True)
    p.add_argument("--out", required=True, help="output image (.pfm, .ppm or .png)")
    p.add_argument("--gt", action="store_true", help="path-trace the reference instead")
    p.add_argument("--spp", type=int, default=256, help="spp for --gt")

    p = sub.add_parser("eval", help="metrics of a run's model against a validation set")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--validation", required=True, help="validation directory")

    p = sub.add_parser("diag-mcmc", help="2D histogram of chain states")
    p.add_argument("--run", required=True)
    p.add_argument("--dims", required=True, help="i,j state components")
    p.add_argument("--bins", type=int, default=64)

    p = sub.add_parser("inspect-space", help="print a scene space's parameter table")
    p.add_argument("--scene", required=True)

    p = sub.add_parser("serve", help="HTTP inference service for the slider UI")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--port", type=int, default=8765)
    return parser


def _cmd_train(args) -> int:
    if args.mode == "uniform" and args.acceptance != "greedy":
        print("warning: --acceptance is ignored in uniform mode (always accepted)",
              file=sys.stderr)
    if args.mode == "uniform" and args.resolution == "adaptive":
        print("warning: uniform baseline runs at fixed resolution; "
              "--resolution adaptive ignored", file=sys.stderr)
    cfg = TrainConfig(
        scene=args.scene, iterations=args.iters, out_dir=args.out,
        sampler=args.mode, resolution_mode=args.resolution,
        acceptance=args.acceptance, seed=args.seed, spp=args.spp,
        hidden_width=args.hidden, hidden_layers=args.layers,
        schedule=Schedule(),
    )
    run_dir = train_run(cfg)
    print(f"run complete: {run_dir}")
    return EXIT_OK


def _cmd_render(args) -> int:
    from .train import render_prediction, render_reference
    from .train import ValidationFrame

    scene_name = _scene_for_checkpoint(args.checkpoint)
    space = resolve_space(scene_name)
    net, _ = nets.load_checkpoint(args.checkpoint, expect_dim=space.dim)
    vector = _parse_floats(args.vector, space.dim, "--vector")
    SceneVector(vector)  # range validation
    camera = _parse_floats(args.camera, 6, "--camera")
    if args.gt:
        frame = ValidationFrame(vector=vector, camera=camera)
        image = render_reference(space, frame, args.res, args.spp, seed=0)
    else:
        image = np.maximum(render_prediction(net, space, vector, camera, args.res), 0.0)
    ext = os.path.splitext(args.out)[1].lower()
    if ext == ".ppm":
        write_ppm(args.out, image)
    elif ext == ".png":
        write_png(args.out, image)
    else:
        write_pfm(args.out, np.asarray(image, dtype=np.float32))
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    from .train import ValidationFrame, validate

    meta_path = os.path.join(args.validation, "validation.json")
    if not os.path.exists(meta_path):
        raise SceneError(f"{args.validation}: missing validation.json")
    with open(meta_path) as f:
        meta = json.load(f)
    space = resolve_space(meta["scene"])
    net, _ = nets.load_checkpoint(_latest_checkpoint(args.run), expect_dim=space.dim)
    frames = []
    for i, fr in enumerate(meta["frames"]):
        gt = read_pfm(os.path.join(args.validation, f"frame_{i:03d}.pfm"))
        frames.append(ValidationFrame(vector=np.array(fr["vector"]),
                                      camera=np.array(fr["camera"]), gt=gt))
    report, val_loss = validate(net, space, frames, meta["res"])
    report.meta = {"run": args.run, "validation": args.validation,
                   "val_loss": f"{val_loss:.6g}"}
    out_csv = os.path.join(args.run, "metrics.csv")
    report.write_csv(out_csv)
    report.write_summary(os.path.join(args.run, "metrics.txt"))
    report.write_figure(os.path.join(args.run, "metrics.png"))
    agg = report.aggregate()
    print(f"mape {agg['mape']:.4g}  mae {agg['mae']:.4g}  dssim {agg['dssim']:.4g}")
    print(f"wrote {out_csv}")
    return EXIT_OK


def _cmd_diag(args) -> int:
    dims = tuple(int(x) for x in args.dims.split(","))
    if len(dims) != 2:
        raise SceneError("--dims needs two comma-separated indices")
    csv_path = os.path.join(args.run, "chains.csv")
    hist = metrics.chain_histogram(csv_path, dims, args.bins)
    prefix = os.path.join(args.run, f"hist_{dims[0]}_{dims[1]}")
    metrics.write_histogram(hist, prefix)
    print(f"wrote {prefix}.pfm and {prefix}.png ({int(hist.sum())} states)")
    return EXIT_OK


def _cmd_inspect(args) -> int:
    space = resolve_space(args.scene)
    print(f"scene space: {args.scene}")
    print(f"base scene: {space.base_scene}")
    print(f"dim: {space.dim}")
    print(f"camera: {space.camera.mode} position={list(space.camera.position)} "
          f"lookat={list(space.camera.lookat)}")
    header = f"{'idx':>3}  {'name':<18} {'kind':<22} {'min':>9} {'max':>9}  binding"
    print(header)
    print("-" * len(header))
    for i, p in enumerate(space.params):
        print(f"{i:>3}  {p.name:<18} {p.kind:<22} {p.min:>9.4g} {p.max:>9.4g}  {p.binding}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .serve import run_service

    run_service(args.checkpoint, args.scene, args.port)
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "train": _cmd_train,
        "render": _cmd_render,
        "eval": _cmd_eval,
        "diag-mcmc": _cmd_diag,
        "inspect-space": _cmd_inspect,
        "serve": _cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except TrainingDiverged as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (SceneError, nets.CheckpointError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
