"""Score classical and trained inpainters on lesioned phantoms for several lift ranges.

Lesion lift is the phantom's free contrast knob; this is the validation run
used to pick its default. Training only sees healthy slices, so checkpoints
can be reused across lift settings.

    python scripts/calibrate_lift.py /tmp/cmp/model_*.ckpt --lifts 0.25,0.40 0.25,0.32 --n 100
"""
import argparse
from pathlib import Path

import numpy as np

from bmlinpaint.detect import DetectConfig, run_pipeline
from bmlinpaint.evaluate import evaluate_slice, stratify_by_size
from bmlinpaint.ffcnet import classical_inpaint, load_checkpoint, model_inpainter
from bmlinpaint.phantom import DEFAULT_SIZE_CLASSES, PhantomConfig, generate_sample


def main():
    p = argparse.ArgumentParser()
    p.add_argument("checkpoints", nargs="*")
    p.add_argument("--lifts", nargs="+", default=["0.25,0.40", "0.25,0.32", "0.25,0.30"])
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=7, help="validation seed; keep it apart from test seeds")
    args = p.parse_args()

    inpainters = {"classical": classical_inpaint}
    for path in args.checkpoints:
        inpainters[Path(path).stem] = model_inpainter(load_checkpoint(path)[0])

    seeds = np.random.SeedSequence(args.seed).spawn(args.n)
    for lift in args.lifts:
        cfg = PhantomConfig(lift_range=tuple(float(v) for v in lift.split(",")))
        records = {name: [] for name in inpainters}
        areas = []
        for i, s in enumerate(seeds):
            sample, _ = generate_sample(cfg, "val", i, int(s.generate_state(1)[0]), DEFAULT_SIZE_CLASSES)
            areas.append(sample.lesion_mask.sum() / sample.bone_area)
            for name, inp in inpainters.items():
                final, _ = run_pipeline(sample.image, sample.bone_mask, inp, DetectConfig())
                records[name].append(evaluate_slice(final, sample.lesion_mask, sample.bone_mask, f"{i:04d}"))
        print(f"lift {lift}")
        for name, recs in records.items():
            groups = " ".join(f"{g.dice:.3f}" for g in stratify_by_size(recs, areas))
            print(f"  {name:36s} dice {np.mean([r.dice for r in recs]):.3f} "
                  f"iou {np.mean([r.iou for r in recs]):.3f} | groups {groups}")


if __name__ == "__main__":
    main()
