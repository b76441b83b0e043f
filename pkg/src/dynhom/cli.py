"""The ``dynhom`` command line.

Subcommands: synth (build a synthetic dataset), ingest (detect static clips
in a frame directory), train, eval, infer.  Shared flags: ``--config``,
``--seed``, ``--preset {desk, full}``, ``--out``.  Exit codes: 0 success,
2 configuration error, 3 data/I-O error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import imaging
from .datasynth import extract_static_clips
from .datasynth.build import build_dataset
from .datasynth.store import load_dataset
from .errors import (
    ConfigInvalid,
    DataIoError,
    DatasetEmpty,
    DegenerateCorners,
    DynhomError,
    ImageTooSmall,
    InsufficientCorrespondences,
    OutOfBounds,
    PointAtInfinity,
    ShapeMismatch,
    SingularMatrix,
    SizeMismatch,
)
from .geometry import PatchFrame, homography_to_displacement
from .trainer.evaluate import (
    evaluate,
    identity_estimator,
    model_estimator,
    render_cdf_png,
    write_metrics,
)
from .trainer.loop import TrainConfig, load_model, train
from .trainer.ransac import ransac_estimator

_CONFIG_ERRORS = (ConfigInvalid,)
_DATA_ERRORS = (DataIoError, DatasetEmpty, OutOfBounds, SizeMismatch,
                ImageTooSmall, OSError)
_NUMERIC_ERRORS = (PointAtInfinity, SingularMatrix, DegenerateCorners,
                   ShapeMismatch, InsufficientCorrespondences)


def _file_values(args) -> dict[str, str]:
    return cfgmod.load_config_file(args.config) if args.config else {}


def _preset(args) -> dict:
    if args.preset not in cfgmod.PRESETS:
        raise ConfigInvalid(f"unknown preset {args.preset!r}")
    return cfgmod.PRESETS[args.preset]


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    preset = _preset(args)
    defaults = {
        "seed": 0,
        "preset": args.preset,
        "n_samples": preset["n_samples"],
        "samples_per_clip": preset["samples_per_clip"],
        "frames_per_clip": 12,
        "dynamic": False,
        "patch_size": preset["patch_size"],
        "perturb_range": preset["perturb_range"],
        "frame_size": 256,
        "bg_octaves": 4,
        "sprite_count_lo": 1,
        "sprite_count_hi": 3,
        "sprite_area_lo": 0.05,
        "sprite_area_hi": 0.35,
        "speed_lo": 2.0,
        "speed_hi": 12.0,
        "ratio_lo": -1.0,
        "ratio_hi": -1.0,
    }
    cfg = cfgmod.resolve("synth", defaults, _file_values(args), {
        "seed": args.seed,
        "n_samples": args.n_samples,
        "dynamic": args.dynamic,
    })
    ratio_range = None
    if cfg["ratio_lo"] >= 0 and cfg["ratio_hi"] >= 0:
        ratio_range = (cfg["ratio_lo"], cfg["ratio_hi"])
    out = Path(args.out)
    build_dataset(
        out,
        n_samples=cfg["n_samples"],
        patch_size=cfg["patch_size"],
        perturb_range=cfg["perturb_range"],
        master_seed=cfg["seed"],
        dynamic=cfg["dynamic"],
        samples_per_clip=cfg["samples_per_clip"],
        frames_per_clip=cfg["frames_per_clip"],
        frame_size=cfg["frame_size"],
        bg_octaves=cfg["bg_octaves"],
        sprite_count_range=(cfg["sprite_count_lo"], cfg["sprite_count_hi"]),
        sprite_area_range=(cfg["sprite_area_lo"], cfg["sprite_area_hi"]),
        speed_range=(cfg["speed_lo"], cfg["speed_hi"]),
        ratio_range=ratio_range,
        preset=cfg["preset"],
    )
    cfgmod.write_resolved("synth", cfg, out / "resolved.cfg")
    print(f"wrote {cfg['n_samples']} samples to {out}")
    return 0


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    defaults = {"seed": 0, "preset": args.preset, "block": 16, "radius": 8}
    cfg = cfgmod.resolve("ingest", defaults, _file_values(args),
                         {"seed": args.seed})
    frames_dir = Path(args.frames)
    files = sorted(frames_dir.glob("*.png"))
    if not files:
        raise DataIoError(f"no PNG frames under {frames_dir}")
    frames = []
    for f in files:
        img = imaging.load_gray(f)
        if img.shape != (256, 256):
            img = imaging.resize(img, 256, 256)
        frames.append(img)
    clips = extract_static_clips(frames, block=cfg["block"], radius=cfg["radius"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "n_frames": len(files),
        "frame_files": [f.name for f in files],
        "clips": [
            {**c.to_dict(), "frame_files": [files[i].name for i in c.frames]}
            for c in clips
        ],
    }
    (out / "clips.json").write_text(json.dumps(payload, sort_keys=True, indent=1))
    cfgmod.write_resolved("ingest", cfg, out / "resolved.cfg")
    print(f"{len(clips)} static clip(s) among {len(files)} frames -> {out / 'clips.json'}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    preset = _preset(args)
    defaults = {
        "seed": 0,
        "preset": args.preset,
        "model": "mhn",
        "batch_size": preset["batch_size"],
        "n_scales": preset["n_scales"],
        "base_channels": preset["base_channels"],
        "dropout_keep": 0.8,
        "initial_rate": 1e-4,
        "decay_step": 100_000,
        "decay_rate": 0.96,
        "phases": preset["phases"],
        "checkpoint_every": preset["checkpoint_every"],
        "dtype": "float32",
    }
    cfg = cfgmod.resolve("train", defaults, _file_values(args), {
        "seed": args.seed,
        "model": args.model,
    })
    dataset = load_dataset(args.dataset)
    tc = TrainConfig(
        model=cfg["model"],
        preset=cfg["preset"],
        n_scales=cfg["n_scales"],
        patch_size=dataset.patch_size,
        base_channels=cfg["base_channels"],
        dropout_keep=cfg["dropout_keep"],
        batch_size=cfg["batch_size"],
        seed=cfg["seed"],
        initial_rate=cfg["initial_rate"],
        decay_step=cfg["decay_step"],
        decay_rate=cfg["decay_rate"],
        phases=tuple(cfg["phases"]),
        checkpoint_every=cfg["checkpoint_every"],
        dtype=cfg["dtype"],
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfgmod.write_resolved("train", cfg, out / "resolved.cfg")
    ckpt = train(tc, dataset, out, resume=args.resume)
    print(f"checkpoint: {ckpt}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(args) -> int:
    defaults = {
        "seed": 0,
        "preset": args.preset,
        "baselines": "",
        "plot": False,
        "ransac_iters": 500,
        "ransac_tol": 1.0,
        "ransac_block": 8,
        "ransac_radius": 12,
    }
    cfg = cfgmod.resolve("eval", defaults, _file_values(args), {
        "seed": args.seed,
        "baselines": args.baselines,
        "plot": True if args.plot else None,
    })
    dataset = load_dataset(args.dataset)
    model, _ = load_model(args.checkpoint)
    reports = {"model": evaluate(model_estimator(model), dataset)}
    for name in filter(None, str(cfg["baselines"]).split(",")):
        name = name.strip()
        if name == "identity":
            reports["identity"] = evaluate(identity_estimator, dataset)
        elif name == "ransac":
            est = ransac_estimator(iters=cfg["ransac_iters"],
                                   inlier_tol=cfg["ransac_tol"],
                                   seed=cfg["seed"],
                                   block=cfg["ransac_block"],
                                   radius=cfg["ransac_radius"])
            reports["ransac"] = evaluate(est, dataset)
        else:
            raise ConfigInvalid(f"unknown baseline {name!r}")
    out = Path(args.out)
    write_metrics(reports, out)
    if cfg["plot"]:
        render_cdf_png(reports, out / "cdf.png")
    cfgmod.write_resolved("eval", cfg, out / "resolved.cfg")
    for name, rep in reports.items():
        s = rep["summary"]
        print(f"{name}: mean e_c {s['mean_ec']:.3f} px, median {s['median_ec']:.3f} px "
              f"({s['n']} samples)")
    return 0


# ---------------------------------------------------------------------------
# infer
# ---------------------------------------------------------------------------

def _load_square_gray(path, size: int, allow_resize: bool) -> np.ndarray:
    img = imaging.load_gray(path)
    if img.shape != (size, size):
        if not allow_resize:
            raise SizeMismatch(
                f"{path}: {img.shape[1]}x{img.shape[0]} but the model expects "
                f"{size}x{size}; pass --resize to rescale")
        img = imaging.resize(img, size, size)
    return img


def cmd_infer(args) -> int:
    model, manifest = load_model(args.checkpoint)
    size = model.cfg.patch_size
    image_a = _load_square_gray(args.image_a, size, args.resize)
    image_b = _load_square_gray(args.image_b, size, args.resize)
    res = model.estimate(image_a, image_b, mode="infer")
    h = res.homography[0]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frame = PatchFrame(size, size)
    payload = {
        "homography": [float(v) for v in h.ravel()],
        "displacement": [float(v) for v in homography_to_displacement(h, frame)],
        "per_scale_displacements": {
            str(k): [float(v) for v in res.displacements[k].data.reshape(8)]
            for k in range(model.cfg.n_scales)
        },
        "patch_size": size,
        "model_kind": manifest["kind"],
    }
    (out / "homography.json").write_text(json.dumps(payload, sort_keys=True, indent=1))

    warped = imaging.warp(image_a, h, size, size)
    imaging.save_rgb(out / "anaglyph.png", imaging.anaglyph(image_b, warped))
    if model.cfg.mask_enabled:
        finest = res.masks[0].data[0]
        imaging.save_gray(out / "mask_1.png", np.asarray(finest[0], dtype=np.float64))
        imaging.save_gray(out / "mask_2.png", np.asarray(finest[1], dtype=np.float64))
    print(f"estimate written to {out / 'homography.json'}")
    return 0


# ---------------------------------------------------------------------------
# parser / entry
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynhom",
                                description="coarse-to-fine homography "
                                            "estimation for dynamic scenes")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key/value config file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--preset", choices=("desk", "full"), default="desk")

    sp = sub.add_parser("synth", help="generate a synthetic dataset")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--n-samples", type=int, default=None, dest="n_samples")
    sp.add_argument("--dynamic", action="store_true", default=None,
                    help="moving sprites (default: static scenes)")
    sp.set_defaults(run=cmd_synth)

    sp = sub.add_parser("ingest", help="detect static clips in a frame directory")
    common(sp)
    sp.add_argument("--frames", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(run=cmd_ingest)

    sp = sub.add_parser("train", help="train an estimator")
    common(sp)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--model", choices=("mhn", "mhn_m"), default=None)
    sp.add_argument("--resume", help="checkpoint to continue from")
    sp.set_defaults(run=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--baselines", default=None,
                    help="comma list: identity,ransac")
    sp.add_argument("--plot", action="store_true",
                    help="also render cdf.png")
    sp.set_defaults(run=cmd_eval)

    sp = sub.add_parser("infer", help="estimate a homography for two images")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--image-a", required=True, dest="image_a")
    sp.add_argument("--image-b", required=True, dest="image_b")
    sp.add_argument("--out", required=True)
    sp.add_argument("--resize", action="store_true",
                    help="rescale inputs to the model's patch size")
    sp.set_defaults(run=cmd_infer)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.run(args)
    except _CONFIG_ERRORS as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except _DATA_ERRORS as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except _NUMERIC_ERRORS as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 4
    except DynhomError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
