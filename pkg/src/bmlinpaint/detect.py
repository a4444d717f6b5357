"""Difference map, Otsu thresholding, morphological clean-up and the per-slice pipeline."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from functools import lru_cache
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from . import imgcore
from .augment import hist_equalize

BASE_RESOLUTION = 128


@dataclass(frozen=True)
class DetectConfig:
    open_radius: int = 1
    close_radius: int = 2
    bins: int = 256
    restrict_to_bone: bool = True

    def __post_init__(self):
        if self.open_radius < 0 or self.close_radius < 0:
            raise ValueError("radii must be >= 0")
        if self.bins < 2:
            raise ValueError("bins must be >= 2")

    def scaled(self, resolution: int, base: int = BASE_RESOLUTION) -> "DetectConfig":
        """Radii scaled proportionally from the base resolution, rounded half up."""
        f = resolution / base
        return DetectConfig(
            math.floor(self.open_radius * f + 0.5),
            math.floor(self.close_radius * f + 0.5),
            self.bins,
            self.restrict_to_bone,
        )

    @classmethod
    def from_dict(cls, d: dict) -> "DetectConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def diff_map(enhanced, enhanced_recon, bone) -> np.ndarray:
    """max(x' - x~', 0) inside the bone, 0 elsewhere (original minus reconstruction)."""
    a = np.asarray(enhanced, dtype=np.float64)
    b = np.asarray(enhanced_recon, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    bone = imgcore.as_mask(bone, a.shape)
    return np.where(bone, np.clip(a - b, 0.0, 1.0), 0.0)


# ---------------------------------------------------------------------------
# Otsu

class OtsuResult(NamedTuple):
    threshold: float  # lower edge of the first foreground bin
    mask: np.ndarray
    degenerate: bool
    bin_index: int  # first foreground bin; -1 when degenerate


def otsu_bin(hist) -> int:
    """First foreground bin k maximizing between-class variance; -1 if degenerate.

    Classes are bins [0, k) and [k, bins). The score is evaluated in exact
    integer arithmetic as (N*S0 - n0*S)**2 / (n0*n1), which is N**4 times the
    between-class variance in bin units; ties go to the smallest k.
    """
    hist = np.asarray(hist, dtype=np.int64)
    n0s = np.cumsum(hist)[:-1].tolist()
    s0s = np.cumsum(hist * np.arange(hist.size))[:-1].tolist()
    total = int(hist.sum())
    ssum = int(np.dot(hist, np.arange(hist.size)))
    best_k, best_num, best_den = -1, 0, 1
    for k, (n0, s0) in enumerate(zip(n0s, s0s), start=1):
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        num = (total * s0 - n0 * ssum) ** 2
        den = n0 * n1
        if num * best_den > best_num * den:
            best_k, best_num, best_den = k, num, den
    return best_k


def otsu_threshold(values, region, bins: int = 256) -> OtsuResult:
    """Otsu threshold over the ``region`` pixels of ``values`` (in [0, 1]).

    Foreground is every region pixel whose bin is at or above the chosen
    bin; all region pixels in one bin gives an empty, degenerate result.
    """
    vals = np.asarray(values, dtype=np.float64)
    region = imgcore.as_mask(region, vals.shape)
    if not region.any():
        raise ValueError("Otsu region is empty")
    b = np.minimum((vals * bins).astype(np.int64), bins - 1)
    hist = np.bincount(b[region], minlength=bins)
    k = otsu_bin(hist)
    if k < 0:
        return OtsuResult(1.0, np.zeros_like(region), True, -1)
    return OtsuResult(k / bins, region & (b >= k), False, k)


# ---------------------------------------------------------------------------
# Morphology with a disk structuring element {(di, dj): di^2 + dj^2 <= r^2}

@lru_cache(maxsize=None)
def disk_offsets(radius: int) -> tuple[tuple[int, int], ...]:
    r = int(radius)
    return tuple(
        (di, dj)
        for di in range(-r, r + 1)
        for dj in range(-r, r + 1)
        if di * di + dj * dj <= r * r
    )


def _shift(mask: np.ndarray, di: int, dj: int, fill: bool) -> np.ndarray:
    """out[i, j] = mask[i + di, j + dj], ``fill`` outside the image."""
    h, w = mask.shape
    out = np.full_like(mask, fill)
    out[max(0, -di) : min(h, h - di), max(0, -dj) : min(w, w - dj)] = mask[
        max(0, di) : min(h, h + di), max(0, dj) : min(w, w + dj)
    ]
    return out


def dilate(mask, radius: int) -> np.ndarray:
    mask = imgcore.as_mask(mask)
    out = np.zeros_like(mask)
    for di, dj in disk_offsets(radius):
        out |= _shift(mask, di, dj, False)
    return out


def erode(mask, radius: int) -> np.ndarray:
    """Erosion treating pixels outside the image as foreground (dual of ``dilate``)."""
    mask = imgcore.as_mask(mask)
    out = np.ones_like(mask)
    for di, dj in disk_offsets(radius):
        out &= _shift(mask, di, dj, True)
    return out


def morph_open(mask, radius: int) -> np.ndarray:
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return imgcore.as_mask(mask).copy()
    return dilate(erode(mask, radius), radius)


def morph_close(mask, radius: int) -> np.ndarray:
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return imgcore.as_mask(mask).copy()
    return erode(dilate(mask, radius), radius)


# ---------------------------------------------------------------------------
# Pipeline

Inpainter = Callable[[np.ndarray, np.ndarray], np.ndarray]

STAGES = ("x", "recon", "x_he", "recon_he", "diff", "otsu", "opened", "final")


@dataclass
class PipelineTrace:
    x: np.ndarray
    recon: np.ndarray
    x_he: np.ndarray
    recon_he: np.ndarray
    diff: np.ndarray
    otsu: np.ndarray
    opened: np.ndarray
    final: np.ndarray
    threshold: float = 1.0
    degenerate: bool = False

    def stages(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in STAGES}

    def dump(self, out_dir, stem: str) -> None:
        """Write every stage as a 16-bit PNG named ``<stem>_<stage>.png``."""
        out = imgcore.ensure_dir(out_dir)
        for name, arr in self.stages().items():
            imgcore.save_image(np.asarray(arr, dtype=np.float64), Path(out) / f"{stem}_{name}.png", 16)


def run_pipeline(x, bone, inpainter: Inpainter, config: DetectConfig = DetectConfig()):
    """Inpaint the bone, compare and post-process; returns (final_mask, trace)."""
    x = imgcore.as_image(x)
    bone = imgcore.as_mask(bone, x.shape)
    recon = np.asarray(inpainter(x, bone), dtype=np.float64)
    if recon.shape != x.shape:
        raise ValueError("inpainter changed the image shape")
    x_he = hist_equalize(x)
    recon_he = hist_equalize(recon)
    region = bone if config.restrict_to_bone else np.ones_like(bone)
    diff = diff_map(x_he, recon_he, region)
    if region.any():
        otsu = otsu_threshold(diff, region, config.bins)
    else:
        otsu = OtsuResult(1.0, np.zeros_like(bone), True, -1)
    opened = morph_open(otsu.mask, config.open_radius)
    final = morph_close(opened, config.close_radius) & region
    trace = PipelineTrace(x, recon, x_he, recon_he, diff, otsu.mask, opened, final,
                          otsu.threshold, otsu.degenerate)
    return final, trace
