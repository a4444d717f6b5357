"""Synthetic knee-like slices with a femur ROI and injectable bright lesions.

Layout of a healthy slice (all intensities in [0, 1]):

* air outside an elliptical leg cross-section,
* textured soft tissue inside the leg,
* a superellipse "femur" with a noisy boundary, made of a dark cortical rim
  and marrow = base + Gaussian-blurred noise,
* a bright cartilage band hugging the articular (lower) side of the bone.

Per-sample seeds are derived with ``numpy.random.SeedSequence(seed).spawn``
in manifest order, so every sample can be regenerated on its own.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import imgcore

MARGIN_PX = 4


@dataclass(frozen=True)
class PhantomConfig:
    size: int = 128
    bone_center: tuple[float, float] = (0.44, 0.5)  # (row, col) as fractions of size
    bone_axes: tuple[float, float] = (0.27, 0.31)  # semi-axes (rows, cols)
    bone_exponent: float = 2.6
    boundary_jitter: float = 0.05
    shape_jitter: float = 0.06
    marrow_base: float = 0.30
    noise_amplitude: float = 0.06
    noise_scale: float = 1.5
    rim_width: int = 2
    rim_intensity: float = 0.10
    background_intensity: float = 0.02
    tissue_intensity: float = 0.55
    tissue_noise: float = 0.04
    cartilage_intensity: float = 0.75
    cartilage_width: int = 2
    # lesion sampling for lesioned splits
    lift_range: tuple[float, float] = (0.25, 0.32)
    softness_range: tuple[float, float] = (1.0, 2.5)
    irregularity_max: float = 0.35
    seed: int = 0

    def __post_init__(self):
        for name in (
            "marrow_base", "rim_intensity", "background_intensity",
            "tissue_intensity", "cartilage_intensity",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.size < 16:
            raise ValueError("size must be >= 16")
        if self.noise_amplitude < 0 or self.noise_scale < 0:
            raise ValueError("noise parameters must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomConfig":
        d = dict(d)
        for key in ("bone_center", "bone_axes", "lift_range", "softness_range"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class LesionSpec:
    area: float  # target area, pixels
    center: tuple[float, float]  # (row, col)
    lift: float
    softness: float = 1.0  # Gaussian falloff sigma outside the core, pixels
    irregularity: float = 0.0


@dataclass
class PhantomSample:
    image: np.ndarray
    bone_mask: np.ndarray
    lesion_mask: np.ndarray
    marrow_mask: np.ndarray = field(repr=False)

    @property
    def bone_area(self) -> int:
        return int(self.bone_mask.sum())


def _smooth_noise(rng: np.random.Generator, shape, sigma: float) -> np.ndarray:
    """Unit-variance Gaussian noise blurred with a Gaussian of width ``sigma``."""
    white = rng.standard_normal(shape)
    if sigma <= 0:
        return white
    blurred = ndimage.gaussian_filter(white, sigma, mode="wrap")
    # normalize by the kernel's L2 norm so the marginal std is exactly 1
    delta = np.zeros(shape)
    delta[0, 0] = 1.0
    kernel_norm = np.sqrt(np.sum(ndimage.gaussian_filter(delta, sigma, mode="wrap") ** 2))
    return blurred / kernel_norm


def _radial_perturbation(rng: np.random.Generator, theta: np.ndarray, kmax: int = 5) -> np.ndarray:
    """Smooth periodic function of angle with values roughly in [-1, 1]."""
    ks = np.arange(2, kmax + 1)
    amps = rng.uniform(-1.0, 1.0, size=ks.size) / ks
    phases = rng.uniform(0, 2 * np.pi, size=ks.size)
    g = sum(a * np.cos(k * theta + p) for a, k, p in zip(amps, ks, phases))
    return g / max(np.sum(np.abs(amps)), 1e-12)


def bone_shape(config: PhantomConfig, rng: np.random.Generator) -> np.ndarray:
    n = config.size
    jit = config.shape_jitter
    cy = (config.bone_center[0] + rng.uniform(-jit, jit) * 0.2) * n
    cx = (config.bone_center[1] + rng.uniform(-jit, jit) * 0.2) * n
    ay = config.bone_axes[0] * (1 + rng.uniform(-jit, jit)) * n
    ax = config.bone_axes[1] * (1 + rng.uniform(-jit, jit)) * n
    rows, cols = np.mgrid[0:n, 0:n] + 0.5
    dy, dx = rows - cy, cols - cx
    theta = np.arctan2(dy, dx)
    p = config.bone_exponent
    with np.errstate(divide="ignore"):
        r_edge = (np.abs(np.cos(theta) / ax) ** p + np.abs(np.sin(theta) / ay) ** p) ** (-1 / p)
    r_edge = r_edge * (1 + config.boundary_jitter * _radial_perturbation(rng, theta))
    bone = np.hypot(dy, dx) <= r_edge
    rr, cc = np.nonzero(bone)
    if rr.size == 0:
        raise ValueError("bone region is empty")
    if rr.min() < MARGIN_PX or cc.min() < MARGIN_PX or rr.max() >= n - MARGIN_PX or cc.max() >= n - MARGIN_PX:
        raise ValueError(f"bone region violates the {MARGIN_PX}-pixel image margin")
    return bone


def gen_healthy(config: PhantomConfig, seed: int | None = None) -> PhantomSample:
    """Generate a lesion-free slice; bit-identical for a fixed seed."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    n = config.size
    bone = bone_shape(config, rng)

    rows, cols = np.mgrid[0:n, 0:n] + 0.5
    leg = ((rows - 0.5 * n) / (0.48 * n)) ** 2 + ((cols - 0.5 * n) / (0.47 * n)) ** 2 <= 1.0
    image = np.full((n, n), config.background_intensity)
    tissue = config.tissue_intensity + config.tissue_noise * _smooth_noise(rng, (n, n), 3.0)
    image[leg] = tissue[leg]

    # cartilage along the lower part of the bone outline
    outside_dist = ndimage.distance_transform_edt(~bone)
    bone_rows = np.nonzero(bone)[0]
    low_side = rows > bone_rows.min() + 0.6 * (bone_rows.max() - bone_rows.min())
    cartilage = (outside_dist > 0) & (outside_dist <= config.cartilage_width) & low_side
    image[cartilage] = config.cartilage_intensity

    inside_dist = ndimage.distance_transform_edt(bone)
    rim = bone & (inside_dist <= config.rim_width)
    marrow = bone & ~rim
    texture = config.marrow_base + config.noise_amplitude * _smooth_noise(rng, (n, n), config.noise_scale)
    image[rim] = config.rim_intensity
    image[marrow] = texture[marrow]

    image = np.clip(image, 0.0, 1.0)
    return PhantomSample(image, bone, np.zeros_like(bone), marrow)


def lesion_shape(spec: LesionSpec, shape: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    """Rasterize a disk with low-frequency radial perturbation at the target area."""
    rows, cols = np.mgrid[0 : shape[0], 0 : shape[1]] + 0.5
    dy, dx = rows - (spec.center[0] + 0.5), cols - (spec.center[1] + 0.5)
    dist = np.hypot(dy, dx)
    g = _radial_perturbation(rng, np.arctan2(dy, dx), kmax=4)
    profile = np.maximum(1.0 + spec.irregularity * g, 0.3)

    def raster(radius):
        return dist <= radius * profile

    lo, hi = 0.0, np.sqrt(spec.area / np.pi) * 3 + 2
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if raster(mid).sum() < spec.area:
            lo = mid
        else:
            hi = mid
    below, above = raster(lo), raster(hi)
    if abs(below.sum() - spec.area) < abs(above.sum() - spec.area):
        return below
    return above


def inject_lesion(sample: PhantomSample, spec: LesionSpec, seed: int) -> PhantomSample:
    """Return a copy of ``sample`` with a bright soft-edged lesion added.

    Lesion pixels get the full lift; marrow around the lesion gets
    ``lift * exp(-d**2 / (2 * softness**2))`` with ``d`` the distance to the
    lesion, which blurs the visible edge beyond the recorded mask.
    """
    if not 0.0 < spec.lift <= 1.0:
        raise ValueError("lesion lift must lie in (0, 1]")
    if spec.area <= 0:
        raise ValueError("lesion area must be positive")
    if not sample.bone_mask.any():
        raise ValueError("sample has an empty bone mask")
    r, c = int(round(spec.center[0])), int(round(spec.center[1]))
    h, w = sample.image.shape
    if not (0 <= r < h and 0 <= c < w) or not sample.marrow_mask[r, c]:
        raise ValueError("lesion center is not inside the marrow")
    rng = np.random.default_rng(seed)
    mask = lesion_shape(spec, sample.image.shape, rng)
    if not mask.any():
        raise ValueError("lesion rasterized to an empty mask")
    if np.any(mask & ~sample.marrow_mask):
        raise ValueError("lesion does not fit inside the marrow region")
    if spec.softness > 0:
        d = ndimage.distance_transform_edt(~mask)
        falloff = np.exp(-(d**2) / (2 * spec.softness**2))
    else:
        falloff = mask.astype(np.float64)
    falloff = np.where(sample.marrow_mask, falloff, 0.0)
    image = np.clip(sample.image + spec.lift * falloff, 0.0, 1.0)
    return replace(sample, image=image, lesion_mask=mask)


# ---------------------------------------------------------------------------
# Datasets

DEFAULT_SIZE_CLASSES = (0.007, 0.015, 0.028, 0.045, 0.07)
SPLITS = ("train", "val", "test")


def _child_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def sample_lesion(
    healthy: PhantomSample,
    config: PhantomConfig,
    rel_area: float,
    rng: np.random.Generator,
    tries: int = 50,
) -> tuple[PhantomSample, LesionSpec]:
    """Place a random lesion with ``rel_area`` of the bone area into ``healthy``."""
    area = rel_area * healthy.bone_area * rng.uniform(0.85, 1.15)
    irr = rng.uniform(0.0, config.irregularity_max)
    lift = rng.uniform(*config.lift_range)
    softness = rng.uniform(*config.softness_range)
    reach = np.sqrt(area / np.pi) * (1 + irr) + 1.0
    depth = ndimage.distance_transform_edt(healthy.marrow_mask)
    candidates = np.argwhere(depth > reach)
    if candidates.size == 0:
        raise ValueError(f"lesion of {area:.0f} px cannot fit inside the bone")
    last_err = None
    for _ in range(tries):
        center = tuple(float(v) for v in candidates[rng.integers(len(candidates))])
        spec = LesionSpec(area, center, lift, softness, irr)
        try:
            return inject_lesion(healthy, spec, int(rng.integers(2**31))), spec
        except ValueError as err:
            last_err = err
    raise ValueError(f"could not place lesion after {tries} tries: {last_err}")


def generate_sample(config: PhantomConfig, split: str, index: int, seed: int, size_classes) -> tuple[PhantomSample, int]:
    """Generate one manifest entry's sample; returns (sample, size_class or -1)."""
    rng = np.random.default_rng(seed)
    healthy = gen_healthy(config, int(rng.integers(2**31)))
    if split == "train":
        return healthy, -1
    cls = index % len(size_classes)
    sample, _ = sample_lesion(healthy, config, size_classes[cls], rng)
    return sample, cls


def gen_dataset(
    config: PhantomConfig,
    counts: dict,
    out_dir,
    size_classes=DEFAULT_SIZE_CLASSES,
    seed: int = 0,
) -> Path:
    """Write images, masks and ``manifest.json`` under ``out_dir``.

    ``counts`` maps "train" (healthy), "val" and "test" (lesioned) to sample
    counts; lesioned samples cycle through ``size_classes`` (lesion area as a
    fraction of bone area) so each class is equally represented.
    """
    for split in SPLITS:
        if int(counts.get(split, 0)) < 1:
            raise ValueError(f"count for split {split!r} must be >= 1")
    out = imgcore.ensure_dir(out_dir)
    for sub in ("images", "bone", "lesion"):
        imgcore.ensure_dir(out / sub)
    plan = [(split, i) for split in SPLITS for i in range(int(counts[split]))]
    seeds = _child_seeds(seed, len(plan))
    entries = []
    for (split, i), s in zip(plan, seeds):
        sample, cls = generate_sample(config, split, i, s, size_classes)
        sid = f"{split}_{i:04d}"
        paths = {
            "image_path": f"images/{sid}.png",
            "bone_mask_path": f"bone/{sid}.png",
            "lesion_mask_path": f"lesion/{sid}.png",
        }
        imgcore.save_image(sample.image, out / paths["image_path"], depth=16)
        imgcore.save_mask(sample.bone_mask, out / paths["bone_mask_path"])
        imgcore.save_mask(sample.lesion_mask, out / paths["lesion_mask_path"])
        entries.append(
            {
                "id": sid,
                "split": split,
                **paths,
                "lesion_area_px": int(sample.lesion_mask.sum()),
                "bone_area_px": sample.bone_area,
                "size_class": cls,
            }
        )
    manifest = out / "manifest.json"
    manifest.write_text(json.dumps(entries, indent=1, sort_keys=True) + "\n")
    (out / "phantom_config.json").write_text(
        json.dumps({"config": asdict(config), "counts": dict(counts),
                    "size_classes": list(size_classes), "seed": seed},
                   indent=1, sort_keys=True) + "\n"
    )
    return manifest


def load_manifest(path) -> tuple[list[dict], Path]:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    return json.loads(path.read_text()), path.parent


def load_entry(entry: dict, root) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (image, bone_mask, lesion_mask) for one manifest entry."""
    root = Path(root)
    image = imgcore.load_image(root / entry["image_path"])
    bone = imgcore.load_mask(root / entry["bone_mask_path"])
    lesion = imgcore.load_mask(root / entry["lesion_mask_path"]) & bone
    return image, bone, lesion
