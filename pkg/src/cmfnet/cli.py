"""Command-line interface: ``cmfnet {train,infer,eval,gradcheck,synth}``.

Exit codes: 0 success, 1 verification failure, 2 usage or I/O error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from . import data
from .losses import LossConfig, Protocol, evaluate_pair
from .model import CmfnetConfig
from .tensor import ShapeError, Tensor, no_grad
from .train import NonFiniteError, Schedule, Trainer

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("cmfnet")


class UsageError(Exception):
    pass


def _formatter(prog):
    return argparse.ArgumentDefaultsHelpFormatter(prog, max_help_position=32)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cmfnet",
        description="Multi-branch attention image restoration: training, inference, evaluation.",
        formatter_class=_formatter,
    )
    parser.add_argument("-q", "--quiet", action="store_true", help="only print warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model", formatter_class=_formatter,
                       description="Train on a pair directory (degraded/ + clean/) or synthetic data. "
                                   "Writes a binary checkpoint and a CSV log step,lr,loss,psnr,ssim.")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", metavar="DIR", help="dataset root with degraded/<id>.png and clean/<id>.png")
    src.add_argument("--synthetic", choices=["haze", "blur"], help="generate training pairs on the fly")
    p.add_argument("--pairs", type=int, default=20, help="number of synthetic pairs")
    p.add_argument("--image-size", type=int, default=96, help="side of synthetic images")
    p.add_argument("--val-dir", metavar="DIR", help="held-out pair directory for periodic evaluation")
    p.add_argument("--width", type=int, default=8, help="base feature channels")
    p.add_argument("--scales", type=int, default=3, help="U-Net scales per branch")
    p.add_argument("--blocks", type=int, default=3, help="attention blocks per scale")
    p.add_argument("--branches", default="cps", help="branch attention kinds: any of c(hannel) p(ixel) s(patial)")
    p.add_argument("--sc", choices=["none", "asc", "msc"], default="msc", help="skip connection variant")
    p.add_argument("--loss", choices=["l1", "ps"], default="ps", help="main loss term")
    p.add_argument("--patch", type=int, default=64, help="training patch size")
    p.add_argument("--batch", type=int, default=2, help="batch size")
    p.add_argument("--iters", type=int, default=2000, help="training iterations")
    p.add_argument("--epochs", type=float, default=None, help="optional epoch limit (stops at whichever comes first)")
    p.add_argument("--lr-max", type=float, default=2e-4, help="initial learning rate")
    p.add_argument("--lr-min", type=float, default=1e-6, help="final cosine-annealed learning rate")
    p.add_argument("--clip-norm", type=float, default=None, help="clip global gradient norm (off by default)")
    p.add_argument("--no-augment", action="store_true", help="disable flip/rotation augmentation")
    p.add_argument("--init", choices=["uniform", "zero"], default="uniform", help="parameter initialization")
    p.add_argument("--seed", type=int, default=0, help="seed for init, data and sampling")
    p.add_argument("--log-every", type=int, default=10, help="log interval in steps")
    p.add_argument("--eval-every", type=int, default=100, help="held-out evaluation interval in steps")
    p.add_argument("--ckpt-every", type=int, default=0, help="periodic checkpoint interval (0 = end only)")
    p.add_argument("--resume", metavar="CKPT", help="continue training from a checkpoint")
    p.add_argument("--out", default="cmfnet.ckpt", help="checkpoint output path")
    p.add_argument("--log", default=None, help="CSV log path (default: <out>.csv)")

    p = sub.add_parser("infer", help="restore one image", formatter_class=_formatter)
    p.add_argument("--ckpt", required=True, help="checkpoint file")
    p.add_argument("--input", required=True, help="degraded PNG/PPM image")
    p.add_argument("--output", required=True, help="restored image path")

    p = sub.add_parser("eval", help="score predictions against ground truth", formatter_class=_formatter,
                       description="Prints CSV lines filename,psnr_db,ssim and a final mean line.")
    p.add_argument("--pred-dir", required=True, help="directory of restored images")
    p.add_argument("--gt-dir", required=True, help="directory of ground-truth images with the same names")
    p.add_argument("--protocol", choices=["rgb", "yluma"], default="rgb",
                   help="score RGB channels or BT.601 luma only")

    p = sub.add_parser("gradcheck", help="run the finite-difference gradient suites", formatter_class=_formatter)
    p.add_argument("--width", type=int, default=4, help="feature width of the checked blocks and model")
    p.add_argument("--size", type=int, default=8, help="spatial size of the checked inputs")
    p.add_argument("--seed", type=int, default=0, help="seed for random check points")

    p = sub.add_parser("synth", help="apply a synthetic degradation", formatter_class=_formatter,
                       description="Writes the degraded image and <output>.json with the sampled parameters.")
    p.add_argument("--kind", choices=["haze", "blur"], required=True, help="degradation model")
    p.add_argument("--input", required=True, help="clean image")
    p.add_argument("--output", required=True, help="degraded image path")
    p.add_argument("--seed", type=int, default=0, help="seed for parameter sampling and noise")
    p.add_argument("--params", default=None, help="JSON file overriding sampled parameters (sidecar format)")
    return parser


# -- train ---------------------------------------------------------------------
def _config_from_args(args):
    try:
        return CmfnetConfig(width=args.width, scales=args.scales, blocks_per_scale=args.blocks,
                            branches=args.branches, sc_variant=args.sc)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_train(args):
    config = _config_from_args(args)
    multiple = config.size_multiple
    if args.patch % multiple:
        raise UsageError(f"--patch must be divisible by {multiple}")
    eval_pair = None
    if args.data:
        try:
            pairs = data.load_pair_dir(args.data)
        except (OSError, ValueError) as exc:
            raise UsageError(str(exc)) from exc
    else:
        if args.image_size < args.patch:
            raise UsageError("--image-size must be at least --patch")
        pairs = data.synthetic_pairs(args.synthetic, args.pairs, args.image_size, args.seed)
        held = data.synthetic_pairs(args.synthetic, 1, args.image_size, args.seed + 1_000_003)[0]
        eval_pair = _crop_to_multiple(held, multiple)
    if args.val_dir:
        try:
            eval_pair = _crop_to_multiple(data.load_pair_dir(args.val_dir)[0], multiple)
        except (OSError, ValueError) as exc:
            raise UsageError(str(exc)) from exc
    if any(min(p.clean.shape[1:]) < args.patch for p in pairs):
        raise UsageError(f"some training images are smaller than --patch {args.patch}")
    source = data.PairSource(pairs, args.patch, augment=not args.no_augment, multiple=multiple)

    iters = args.iters
    if args.epochs is not None:
        iters = min(iters, math.ceil(args.epochs * len(pairs) / args.batch))

    if args.resume:
        ckpt = _load_ckpt(args.resume)
        trainer = Trainer.from_checkpoint(ckpt, source, eval_pair, args.log_every, args.eval_every)
    else:
        sched = Schedule(args.lr_max, args.lr_min, max(1, iters))
        trainer = Trainer(config, LossConfig(kind=args.loss), sched, source, seed=args.seed,
                          batch_size=args.batch, init=args.init, clip_norm=args.clip_norm,
                          eval_pair=eval_pair, log_every=args.log_every, eval_every=args.eval_every)
    log_path = Path(args.log) if args.log else Path(args.out).with_suffix(".csv")
    start = time.perf_counter()
    try:
        trainer.run(iters, args.out, args.ckpt_every)
    except NonFiniteError as exc:
        log.error("numerical failure: %s", exc)
        _write(log_path, trainer.log_csv())
        return EXIT_NUMERIC
    _write(log_path, trainer.log_csv())
    log.info("trained %d steps in %.1fs; checkpoint %s, log %s",
             iters, time.perf_counter() - start, args.out, log_path)
    return EXIT_OK


def _write(path, text):
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from exc


def _crop_to_multiple(pair, multiple):
    _, h, w = pair.clean.shape
    h, w = h - h % multiple, w - w % multiple
    return data.ImagePair(pair.degraded[:, :h, :w], pair.clean[:, :h, :w], pair.id)


def _load_ckpt(path):
    try:
        return ckpt_io.load_checkpoint(path)
    except (OSError, ckpt_io.CheckpointError) as exc:
        raise UsageError(str(exc)) from exc


# -- infer -----------------------------------------------------------------------
def pad_to_multiple(img, multiple):
    """Reflect-pad ``[C, H, W]`` on the bottom/right to multiples of ``multiple``."""
    _, h, w = img.shape
    ph, pw = (-h) % multiple, (-w) % multiple
    if ph == 0 and pw == 0:
        return img
    mode = "reflect" if ph < h and pw < w else "symmetric"
    return np.pad(img, ((0, 0), (0, ph), (0, pw)), mode=mode)


def restore_image(model, img):
    _, h, w = img.shape
    padded = pad_to_multiple(img, model.config.size_multiple)
    with no_grad():
        out = model(Tensor(padded[None].astype(np.float32))).data[0]
    return np.clip(out[:, :h, :w], 0.0, 1.0)


def cmd_infer(args):
    ckpt = _load_ckpt(args.ckpt)
    try:
        model = ckpt_io.model_from_checkpoint(ckpt)
    except (ckpt_io.CheckpointMismatch, ValueError) as exc:
        raise UsageError(f"{args.ckpt}: {exc}") from exc
    try:
        img = data.load_image(args.input)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    try:
        out = restore_image(model, img)
    except ShapeError as exc:
        raise UsageError(str(exc)) from exc
    try:
        data.save_image(out, args.output)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    return EXIT_OK


# -- eval ---------------------------------------------------------------------------
def cmd_eval(args):
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    for d in (pred_dir, gt_dir):
        if not d.is_dir():
            raise UsageError(f"{d}: not a directory")
    names = sorted(p.name for p in pred_dir.iterdir() if p.suffix.lower() in data.IMAGE_SUFFIXES)
    missing = [n for n in names if not (gt_dir / n).exists()]
    if missing:
        raise UsageError("no ground truth for: " + ", ".join(missing))
    if not names:
        raise UsageError(f"no images to compare between {pred_dir} and {gt_dir}")
    print("filename,psnr_db,ssim")
    scores = []
    for name in names:
        try:
            pred, gt = data.load_image(pred_dir / name), data.load_image(gt_dir / name)
            p, s = evaluate_pair(pred, gt, Protocol(args.protocol))
        except (OSError, ValueError) as exc:
            raise UsageError(f"{name}: {exc}") from exc
        scores.append((p, s))
        print(f"{name},{p:.6f},{s:.6f}")
    mp, ms = np.mean(scores, axis=0)
    print(f"mean,{mp:.6f},{ms:.6f}")
    return EXIT_OK


# -- gradcheck --------------------------------------------------------------------------
def cmd_gradcheck(args):
    from .verify import run_suite

    results = run_suite(width=args.width, seed=args.seed, size=args.size)
    failed = []
    for name, (err, tol) in results.items():
        ok = err < tol
        print(f"{name:<16} {err:.3e}  (tol {tol:.0e})  {'ok' if ok else 'FAIL'}")
        if not ok:
            failed.append(name)
    if failed:
        print("gradient check failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


# -- synth ----------------------------------------------------------------------------------
def _haze_from_json(obj, h, w):
    m = np.asarray(obj["m"], dtype=np.float32)
    if m.ndim == 0:
        m = np.full((1, h, w), m, dtype=np.float32)
    elif m.ndim == 2:
        m = m[None]
    a = np.broadcast_to(np.asarray(obj["A"], dtype=np.float32), (3,)).copy()
    return data.HazeParams(m, a)


def _blur_from_json(obj):
    return data.BlurParams(np.asarray(obj["kernel"], dtype=np.float64), float(obj.get("noise_sigma", 0.0)))


def cmd_synth(args):
    try:
        clean = data.load_image(args.input)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    _, h, w = clean.shape
    rng = np.random.default_rng(args.seed)
    override = None
    if args.params:
        try:
            override = json.loads(Path(args.params).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"{args.params}: {exc}") from exc
    try:
        if args.kind == "haze":
            params = _haze_from_json(override, h, w) if override else data.random_haze_params(rng, h, w)
            degraded = data.synth_haze(clean, params)
        else:
            params = _blur_from_json(override) if override else data.random_blur_params(rng)
            degraded = data.synth_blur(clean, params, rng)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"invalid degradation parameters: {exc}") from exc
    try:
        data.save_image(degraded, args.output)
        Path(str(args.output) + ".json").write_text(json.dumps(params.to_json()))
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "synth": cmd_synth,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"cmfnet {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
