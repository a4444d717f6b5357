"""Command-line entry point: ``bmlinpaint {phantom,train,detect,eval,report}``.

Every command reads one JSON run config (see :mod:`bmlinpaint.config`) and
writes under its output directory::

    out/data/                      phantom dataset + manifest.json
    out/checkpoints/model_<R>.ckpt trained inpainter per resolution R
    out/checkpoints/loss_<R>.csv   per-step training loss
    out/detect/{masks,traces,overlays}/
    out/eval/{slices.csv,sweep.csv,report.json,report.md}

Exit codes: 0 success, 1 usage or config error, 2 runtime or data error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import imgcore, phantom
from .config import ConfigError, RunConfig
from .detect import erode, run_pipeline
from .evaluate import sweep_report
from .ffcnet import (TrainingDiverged, build_model, classical_inpaint, load_checkpoint, load_healthy,
                     model_inpainter, save_checkpoint, train)

log = logging.getLogger("bmlinpaint")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _resolutions(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad resolution list {text!r}")
    if not vals or min(vals) < 8:
        raise argparse.ArgumentTypeError(f"bad resolution list {text!r}")
    return vals


def _manifest(cfg: RunConfig):
    path = cfg.data_dir / "manifest.json"
    if not path.is_file():
        raise DataError(f"dataset missing: {path} (run the phantom command first)")
    return phantom.load_manifest(path)


def _classical(cfg: RunConfig):
    tol, iters = cfg.detect.classical_tolerance, cfg.detect.classical_max_iters
    return lambda image, mask: classical_inpaint(image, mask, tolerance=tol, max_iters=iters)


def _trained(cfg: RunConfig, resolution: int):
    path = cfg.checkpoint_path(resolution)
    if not path.is_file() and cfg.eval.share_model:
        have = sorted(int(p.stem.split("_")[1]) for p in cfg.checkpoint_dir.glob("model_*.ckpt"))
        if have:
            path = cfg.checkpoint_path(min(have, key=lambda r: (abs(r - resolution), r)))
    if not path.is_file():
        raise DataError(f"missing model: {path} (run train or pass --classical)")
    model, _ = load_checkpoint(path)
    return model_inpainter(model)


def cmd_phantom(cfg: RunConfig, args) -> None:
    phantom.gen_dataset(cfg.phantom.config, cfg.phantom.counts, cfg.data_dir,
                        size_classes=cfg.phantom.size_classes, seed=cfg.seed)
    log.info("wrote %d slices to %s", sum(cfg.phantom.counts.values()), cfg.data_dir)


def cmd_train(cfg: RunConfig, args) -> None:
    entries, root = _manifest(cfg)
    tcfg = cfg.train.train
    if args.steps is not None:
        tcfg = type(tcfg).from_dict({**tcfg.to_dict(), "steps": args.steps})
    imgcore.ensure_dir(cfg.checkpoint_dir)
    for res in cfg.train.resolutions:
        try:
            images, masks = load_healthy(entries, root, res)
        except ValueError as err:
            raise DataError(str(err)) from err
        model = build_model(cfg.train.arch, seed=cfg.seed)
        log.info("training %d px model on %d slices for %d steps", res, len(images), tcfg.steps)
        try:
            model, trace = train(model, images, masks, tcfg, seed=cfg.seed, log_every=max(tcfg.steps // 10, 1))
        except TrainingDiverged as err:
            raise DataError(f"training diverged at step {err.step} (loss {err.loss})") from err
        save_checkpoint(model, cfg.checkpoint_path(res), {**tcfg.to_dict(), "resolution": res}, seed=cfg.seed)
        lines = ["step,loss"] + [f"{i},{v!r}" for i, v in enumerate(trace)]
        (cfg.checkpoint_dir / f"loss_{res}.csv").write_text("\n".join(lines) + "\n")


def overlay(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """8-bit RGB copy of ``image`` with the inner contour of ``mask`` in red."""
    gray = np.floor(np.clip(image, 0, 1) * 255 + 0.5).astype(np.uint8)
    rgb = np.repeat(gray[..., None], 3, axis=2)
    contour = mask & ~erode(mask, 1)
    rgb[contour] = (255, 0, 0)
    return rgb


def _detect_inputs(cfg: RunConfig, args):
    """Yield (stem, image, bone) from --image/--bone pairs or the eval split."""
    if args.image:
        if len(args.image) != len(args.bone or []):
            raise UsageError("--image and --bone must be given the same number of times")
        for ip, bp in zip(args.image, args.bone):
            try:
                image, bone = imgcore.load_image(ip), imgcore.load_mask(bp)
            except (OSError, ValueError) as err:
                raise DataError(str(err)) from err
            if image.shape != bone.shape:
                raise DataError(f"dimension mismatch: {ip} is {image.shape}, {bp} is {bone.shape}")
            yield Path(ip).stem, image, bone
        return
    entries, root = _manifest(cfg)
    for e in sorted(entries, key=lambda e: e["id"]):
        if e["split"] == cfg.eval.split:
            image, bone, _ = phantom.load_entry(e, root)
            yield e["id"], image, bone


def cmd_detect(cfg: RunConfig, args) -> None:
    classical = args.classical or cfg.detect.inpainter == "classical"
    out = cfg.out / "detect"
    inpainters: dict[int, object] = {}
    n = 0
    for stem, image, bone in _detect_inputs(cfg, args):
        res = image.shape[0]
        if res not in inpainters:
            inpainters[res] = _classical(cfg) if classical else _trained(cfg, res)
        final, trace = run_pipeline(image, bone, inpainters[res], cfg.detect.config.scaled(res))
        imgcore.save_mask(final, imgcore.ensure_dir(out / "masks") / f"{stem}.png")
        if args.trace:
            trace.dump(out / "traces", stem)
        if args.overlay:
            Image.fromarray(overlay(image, final), "RGB").save(imgcore.ensure_dir(out / "overlays") / f"{stem}.png")
        n += 1
    if n == 0:
        raise DataError("no input slices")
    log.info("wrote %d masks to %s", n, out / "masks")


def cmd_eval(cfg: RunConfig, args) -> None:
    entries, root = _manifest(cfg)
    entries = [e for e in entries if e["split"] == cfg.eval.split]
    if not entries:
        raise DataError(f"no '{cfg.eval.split}' slices in the manifest")
    resolutions = args.resolutions or cfg.eval.resolutions
    classical = args.classical or cfg.detect.inpainter == "classical"
    factory = (lambda r: _classical(cfg)) if classical else (lambda r: _trained(cfg, r))
    result = sweep_report(entries, root, factory, resolutions, cfg.detect.config,
                          cfg.eval.region, cfg.eval.n_groups)
    result.write(imgcore.ensure_dir(cfg.out / "eval"))
    for res in resolutions:
        s = result.summary(res)
        log.info("%d px: dice %.4f iou %.4f", res, s["dice"], s["iou"])


def render_report(report: dict) -> str:
    lines = ["# Detection report", "", "| resolution | dice | iou | sensitivity | specificity | accuracy |",
             "|---|---|---|---|---|---|"]
    for block in report["resolutions"]:
        s = block["summary"]
        lines.append(f"| {block['resolution']} | {s['dice']:.4f} | {s['iou']:.4f} | {s['sensitivity']:.4f} "
                     f"| {s['specificity']:.4f} | {s['accuracy']:.4f} |")
    for block in report["resolutions"]:
        groups = block.get("size_groups")
        if not groups:
            continue
        lines += ["", f"## Lesion size groups at {block['resolution']} px", "",
                  "| group | relative area | n | dice | iou |", "|---|---|---|---|---|"]
        for g in groups:
            lines.append(f"| {g['group']} | {g['area_min']:.4f} to {g['area_max']:.4f} | {g['count']} "
                         f"| {g['dice']:.4f} | {g['iou']:.4f} |")
    return "\n".join(lines) + "\n"


def cmd_report(cfg: RunConfig, args) -> None:
    path = cfg.out / "eval" / "report.json"
    if not path.is_file():
        raise DataError(f"{path} not found (run eval first)")
    text = render_report(json.loads(path.read_text()))
    (cfg.out / "eval" / "report.md").write_text(text)
    print(text, end="")


COMMANDS = {"phantom": cmd_phantom, "train": cmd_train, "detect": cmd_detect, "eval": cmd_eval, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bmlinpaint", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", type=Path)
        if name == "train":
            p.add_argument("--steps", type=int)
        if name in ("detect", "eval"):
            p.add_argument("--classical", action="store_true", help="use the harmonic inpainter")
        if name == "detect":
            p.add_argument("--trace", action="store_true", help="dump every pipeline stage")
            p.add_argument("--overlay", action="store_true", help="write RGB contour overlays")
            p.add_argument("--image", action="append", help="input image (repeatable)")
            p.add_argument("--bone", action="append", help="bone mask for the matching --image")
        if name == "eval":
            p.add_argument("--resolutions", type=_resolutions)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if getattr(args, "steps", None) is not None and args.steps < 0:
            raise UsageError("--steps must be non-negative")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        cfg = RunConfig.load(args.config, seed=args.seed, out=args.out)
        COMMANDS[args.command](cfg, args)
    except (UsageError, ConfigError) as err:
        print(f"bmlinpaint {args.command}: {err}", file=sys.stderr)
        return 1
    except Exception as err:
        log.debug("traceback", exc_info=True)
        print(f"bmlinpaint {args.command}: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
