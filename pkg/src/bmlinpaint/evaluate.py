"""Pixel-level segmentation metrics, size stratification and resolution sweeps."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

import numpy as np

from . import imgcore
from .detect import DetectConfig, Inpainter, run_pipeline
from .phantom import load_entry

METRIC_NAMES = ("dice", "iou", "sensitivity", "specificity", "accuracy")
CSV_COLUMNS = ("resolution", "slice_id", "tp", "fp", "tn", "fn", *METRIC_NAMES)
SWEEP_RESOLUTIONS = (128, 192, 256, 320, 448)


def confusion(pred, truth, region) -> tuple[int, int, int, int]:
    """(tp, fp, tn, fn) counted over pixels where ``region`` is set."""
    pred = imgcore.as_mask(pred)
    truth = imgcore.as_mask(truth, pred.shape)
    region = imgcore.as_mask(region, pred.shape)
    if not region.any():
        raise ValueError("evaluation region is empty")
    p, t = pred[region], truth[region]
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    tn = int(p.size - tp - fp - fn)
    return tp, fp, tn, fn


@dataclass(frozen=True)
class MetricsRecord:
    slice_id: str
    tp: int
    fp: int
    tn: int
    fn: int
    dice: float
    iou: float
    sensitivity: float
    specificity: float
    accuracy: float

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def metrics(counts, slice_id: str = "") -> MetricsRecord:
    """Derive the five scores from confusion counts.

    With no lesion in the truth, an empty prediction scores 1 on dice, IoU and
    sensitivity and any predicted pixel scores 0. Specificity is 1 when the
    region holds no negatives.
    """
    tp, fp, tn, fn = (int(c) for c in counts)
    if min(tp, fp, tn, fn) < 0:
        raise ValueError("confusion counts must be non-negative")
    total = tp + fp + tn + fn
    if total == 0:
        raise ValueError("confusion counts are all zero")
    if tp + fn == 0:
        score = 1.0 if fp == 0 else 0.0
        dice = iou = sens = score
    else:
        dice = 2 * tp / (2 * tp + fp + fn)
        iou = tp / (tp + fp + fn)
        sens = tp / (tp + fn)
    spec = tn / (tn + fp) if tn + fp else 1.0
    acc = (tp + tn) / total
    return MetricsRecord(slice_id, tp, fp, tn, fn, dice, iou, sens, spec, acc)


def evaluate_slice(pred, truth, region, slice_id: str = "") -> MetricsRecord:
    return metrics(confusion(pred, truth, region), slice_id)


def mean_metrics(records: Iterable[MetricsRecord]) -> dict[str, float]:
    """Macro average: the arithmetic mean of per-slice scores."""
    records = list(records)
    if not records:
        raise ValueError("no records to average")
    return {m: float(np.mean([getattr(r, m) for r in records])) for m in METRIC_NAMES}


@dataclass(frozen=True)
class SizeGroupReport:
    group: int
    area_min: float
    area_max: float
    dice: float
    iou: float
    count: int
    slice_ids: tuple[str, ...] = field(default=(), repr=False)


def stratify_by_size(records, rel_areas, n_groups: int = 5) -> list[SizeGroupReport]:
    """Split records into ``n_groups`` equal-count groups ordered by relative lesion area.

    Ties in area are broken by slice id; when the count does not divide
    evenly the smaller-area groups take one extra record each.
    """
    records = list(records)
    rel_areas = [float(a) for a in rel_areas]
    if len(records) != len(rel_areas):
        raise ValueError("records and areas differ in length")
    if len(records) < n_groups:
        raise ValueError(f"need at least {n_groups} records, got {len(records)}")
    if any(a <= 0 for a in rel_areas):
        raise ValueError("every record needs a positive lesion area")
    order = sorted(range(len(records)), key=lambda i: (rel_areas[i], records[i].slice_id))
    groups = []
    for g, idx in enumerate(np.array_split(np.array(order), n_groups), start=1):
        recs = [records[i] for i in idx]
        areas = [rel_areas[i] for i in idx]
        groups.append(
            SizeGroupReport(
                g, min(areas), max(areas),
                float(np.mean([r.dice for r in recs])),
                float(np.mean([r.iou for r in recs])),
                len(recs),
                tuple(r.slice_id for r in recs),
            )
        )
    return groups


# ---------------------------------------------------------------------------
# Resolution sweep

@dataclass
class SweepResult:
    resolutions: list[int]
    records: dict[int, list[MetricsRecord]]
    rel_areas: dict[str, float]
    n_groups: int = 5

    def summary(self, resolution: int) -> dict[str, float]:
        return mean_metrics(self.records[resolution])

    def size_groups(self, resolution: int) -> list[SizeGroupReport]:
        recs = [r for r in self.records[resolution] if self.rel_areas[r.slice_id] > 0]
        return stratify_by_size(recs, [self.rel_areas[r.slice_id] for r in recs], self.n_groups)

    def slices_csv(self) -> str:
        """Per-slice rows per resolution, each block followed by a 'mean' row."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for res in self.resolutions:
            recs = self.records[res]
            for r in recs:
                w.writerow([res, r.slice_id, r.tp, r.fp, r.tn, r.fn,
                            *(repr(getattr(r, m)) for m in METRIC_NAMES)])
            sums = [sum(getattr(r, c) for r in recs) for c in ("tp", "fp", "tn", "fn")]
            mean = self.summary(res)
            w.writerow([res, "mean", *sums, *(repr(mean[m]) for m in METRIC_NAMES)])
        return buf.getvalue()

    def sweep_csv(self) -> str:
        """One row per resolution with macro-averaged metrics."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("resolution", "n_slices", *METRIC_NAMES))
        for res in self.resolutions:
            mean = self.summary(res)
            w.writerow([res, len(self.records[res]), *(repr(mean[m]) for m in METRIC_NAMES)])
        return buf.getvalue()

    def to_json(self) -> str:
        out = {"resolutions": []}
        for res in self.resolutions:
            block = {
                "resolution": res,
                "summary": self.summary(res),
                "slices": [asdict(r) for r in self.records[res]],
            }
            try:
                block["size_groups"] = [
                    {k: v for k, v in asdict(g).items() if k != "slice_ids"} | {"slice_ids": list(g.slice_ids)}
                    for g in self.size_groups(res)
                ]
            except ValueError:
                block["size_groups"] = []
            out["resolutions"].append(block)
        return json.dumps(out, indent=1, sort_keys=True) + "\n"

    def write(self, out_dir) -> None:
        out = imgcore.ensure_dir(out_dir)
        (out / "slices.csv").write_text(self.slices_csv())
        (out / "sweep.csv").write_text(self.sweep_csv())
        (out / "report.json").write_text(self.to_json())


def load_at_resolution(entry: dict, root, resolution: int | None):
    image, bone, lesion = load_entry(entry, root)
    if resolution is not None and image.shape != (resolution, resolution):
        image = imgcore.resize_bilinear(image, resolution, resolution)
        bone = imgcore.resize_mask(bone, resolution, resolution)
        lesion = imgcore.resize_mask(lesion, resolution, resolution) & bone
    return image, bone, lesion


def sweep_report(
    entries: list[dict],
    root,
    inpainters: Mapping[int, Inpainter] | Callable[[int], Inpainter],
    resolutions=SWEEP_RESOLUTIONS,
    config: DetectConfig = DetectConfig(),
    region: str = "bone",
    n_groups: int = 5,
    on_slice: Callable | None = None,
) -> SweepResult:
    """Run the detection pipeline on ``entries`` at every resolution and score it.

    ``inpainters`` maps a resolution to an inpainter (or is a factory taking
    the resolution). Radii in ``config`` are given at 128 px and scaled.
    """
    if region not in ("bone", "full"):
        raise ValueError("region must be 'bone' or 'full'")
    resolutions = [int(r) for r in resolutions]
    if isinstance(inpainters, Mapping):
        missing = [r for r in resolutions if r not in inpainters]
        if missing:
            raise KeyError(f"no inpainter for resolution(s) {missing}")
    records: dict[int, list[MetricsRecord]] = {}
    rel_areas: dict[str, float] = {}
    entries = sorted(entries, key=lambda e: e["id"])
    for res in resolutions:
        inp = inpainters[res] if isinstance(inpainters, Mapping) else inpainters(res)
        cfg = config.scaled(res)
        recs = []
        for e in entries:
            image, bone, lesion = load_at_resolution(e, root, res)
            final, trace = run_pipeline(image, bone, inp, cfg)
            reg = bone if region == "bone" else np.ones_like(bone)
            recs.append(evaluate_slice(final, lesion, reg, e["id"]))
            rel_areas.setdefault(e["id"], e["lesion_area_px"] / max(e["bone_area_px"], 1))
            if on_slice is not None:
                on_slice(res, e, final, trace)
        records[res] = recs
    return SweepResult(resolutions, records, rel_areas, n_groups)
