"""Train the FFC inpainter on healthy phantoms and compare it with harmonic inpainting.

    python scripts/compare_inpainters.py --steps 3000 --lr 1e-3 --out /tmp/cmp
"""
import argparse
import logging
import time
from pathlib import Path

import numpy as np

from bmlinpaint import phantom
from bmlinpaint.detect import DetectConfig
from bmlinpaint.evaluate import sweep_report
from bmlinpaint.ffcnet import (ArchConfig, TrainConfig, build_model, classical_inpaint, evaluate_loss,
                               load_healthy, model_inpainter, save_checkpoint, train)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--out", default="/tmp/bml_compare")
    p.add_argument("--steps", type=int, default=3000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--schedule", default="constant", choices=["constant", "cosine"])
    p.add_argument("--bias-bound", type=float, default=0.3, help="0 disables the bias-field augmentation")
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--n-train", type=int, default=200)
    p.add_argument("--n-test", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    out = Path(args.out)
    manifest = out / "data" / "manifest.json"
    if not manifest.exists():
        phantom.gen_dataset(phantom.PhantomConfig(), {"train": args.n_train, "val": 5, "test": args.n_test},
                            out / "data", seed=args.seed)
    entries, root = phantom.load_manifest(manifest)
    images, masks = load_healthy(entries, root)

    cfg = TrainConfig(steps=args.steps, lr=args.lr, batch_size=args.batch_size, schedule=args.schedule,
                      bias_field=args.bias_bound > 0, bias_bound=args.bias_bound)
    model = build_model(ArchConfig(), seed=args.seed)
    loss0 = evaluate_loss(model, images[:20], masks[:20])
    t = time.time()
    model, trace = train(model, images, masks, cfg, seed=args.seed, log_every=250)
    print(f"trained {args.steps} steps in {time.time() - t:.0f}s; "
          f"train-set loss {loss0:.4f} -> {evaluate_loss(model, images[:20], masks[:20]):.4f}")
    save_checkpoint(model, out / f"model_{args.schedule}_{args.steps}_b{args.bias_bound:g}_s{args.seed}.ckpt", cfg.to_dict(), args.seed)

    test = [e for e in entries if e["split"] == "test"]
    for name, inp in (("classical", classical_inpaint), ("trained", model_inpainter(model))):
        res = sweep_report(test, root, {128: inp}, [128], DetectConfig())
        s = res.summary(128)
        groups = " ".join(f"{g.dice:.3f}" for g in res.size_groups(128))
        print(f"{name:9s} " + " ".join(f"{k} {v:.3f}" for k, v in s.items()) + f" | groups {groups}")


if __name__ == "__main__":
    main()
