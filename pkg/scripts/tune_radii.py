"""Grid-search the opening/closing radii per inpainter on validation phantoms.

Reconstructions are computed once per slice and reused across the grid.

    python scripts/tune_radii.py /tmp/cmp/model_*.ckpt --n 100 --max-radius 4
"""
import argparse
from pathlib import Path

import numpy as np

from bmlinpaint.detect import DetectConfig, run_pipeline
from bmlinpaint.evaluate import evaluate_slice
from bmlinpaint.ffcnet import classical_inpaint, load_checkpoint, model_inpainter
from bmlinpaint.phantom import DEFAULT_SIZE_CLASSES, PhantomConfig, generate_sample


def main():
    p = argparse.ArgumentParser()
    p.add_argument("checkpoints", nargs="*")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=7, help="validation seed; keep it apart from test seeds")
    p.add_argument("--max-radius", type=int, default=4)
    p.add_argument("--lift", default=None, help="override the phantom lift range, e.g. 0.25,0.32")
    args = p.parse_args()

    inpainters = {"classical": classical_inpaint}
    for path in args.checkpoints:
        inpainters[Path(path).stem] = model_inpainter(load_checkpoint(path)[0])

    cfg = PhantomConfig()
    if args.lift:
        cfg = PhantomConfig(lift_range=tuple(float(v) for v in args.lift.split(",")))
    samples = [generate_sample(cfg, "val", i, int(s.generate_state(1)[0]), DEFAULT_SIZE_CLASSES)[0]
               for i, s in enumerate(np.random.SeedSequence(args.seed).spawn(args.n))]
    radii = range(args.max_radius + 1)
    for name, inp in inpainters.items():
        recons = [inp(s.image, s.bone_mask) for s in samples]
        table = np.zeros((len(radii), len(radii)))
        for o in radii:
            for c in radii:
                dc = DetectConfig(open_radius=o, close_radius=c)
                table[o, c] = np.mean([
                    evaluate_slice(run_pipeline(s.image, s.bone_mask, lambda x, b, r=r: r, dc)[0],
                                   s.lesion_mask, s.bone_mask).dice
                    for s, r in zip(samples, recons)
                ])
        o, c = np.unravel_index(np.argmax(table), table.shape)
        print(f"{name}: best open {o} close {c} dice {table[o, c]:.3f}")
        print("  open\\close " + " ".join(f"{c:6d}" for c in radii))
        for o in radii:
            print(f"  {o:10d} " + " ".join(f"{v:6.3f}" for v in table[o]))


if __name__ == "__main__":
    main()
