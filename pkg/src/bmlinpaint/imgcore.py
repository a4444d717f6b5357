"""Image, mask and volume primitives shared by the rest of the package.

Images are ``float64`` arrays of shape ``(height, width)`` with values in
[0, 1]; masks are ``bool`` arrays of the same shape; volumes are
``(slices, height, width)`` arrays. Quantization only happens at file
boundaries.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage


def as_image(data) -> np.ndarray:
    """Validate and return a 2-D float64 image with finite values in [0, 1]."""
    img = np.asarray(data, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    if img.size and (img.min() < 0.0 or img.max() > 1.0):
        raise ValueError("image values must lie in [0, 1]")
    return img


def as_mask(data, shape: tuple[int, int] | None = None) -> np.ndarray:
    mask = np.asarray(data).astype(bool)
    if mask.ndim != 2:
        raise ValueError(f"expected a 2-D mask, got shape {mask.shape}")
    if shape is not None and mask.shape != tuple(shape):
        raise ValueError(f"mask shape {mask.shape} does not match {tuple(shape)}")
    return mask


# ---------------------------------------------------------------------------
# 2-D file I/O: binary PGM (P5) and single-channel PNG, 8 or 16 bit.

def _quantize(img: np.ndarray, depth: int) -> np.ndarray:
    maxval = (1 << depth) - 1
    # round half up: 0.5 at 8 bit -> 127.5 -> 128
    codes = np.floor(np.clip(img, 0.0, 1.0) * maxval + 0.5)
    return codes.astype(np.uint16 if depth == 16 else np.uint8)


def _read_pgm(path: Path) -> tuple[np.ndarray, int]:
    raw = path.read_bytes()
    if not raw.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM file")
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace byte before the raster
    width, height, maxval = (int(t) for t in tokens)
    if maxval == 255:
        dtype, maxcode = np.dtype(np.uint8), 255
    elif maxval == 65535:
        dtype, maxcode = np.dtype(">u2"), 65535
    else:
        raise ValueError(f"{path}: unsupported PGM maxval {maxval}")
    count = width * height
    payload = raw[pos : pos + count * dtype.itemsize]
    if len(payload) != count * dtype.itemsize:
        raise ValueError(f"{path}: PGM payload is truncated")
    codes = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return codes, maxcode


def _read_png(path: Path) -> tuple[np.ndarray, int]:
    with Image.open(path) as im:
        mode = im.mode
        if mode == "L":
            return np.asarray(im, dtype=np.uint8), 255
        if mode in ("I;16", "I;16B", "I;16L", "I"):
            codes = np.asarray(im).astype(np.int64)
            if codes.min() < 0 or codes.max() > 65535:
                raise ValueError(f"{path}: 32-bit integer PNG is not supported")
            return codes.astype(np.uint16), 65535
    raise ValueError(f"{path}: unsupported image mode {mode!r} (need 8/16-bit grayscale)")


def load_image(path) -> np.ndarray:
    """Load an 8- or 16-bit single-channel PGM/PNG, scaled so full scale is 1.0."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        codes, maxcode = _read_pgm(path)
    else:
        codes, maxcode = _read_png(path)
    return codes.astype(np.float64) / maxcode


def save_image(image, path, depth: int = 16) -> None:
    if depth not in (8, 16):
        raise ValueError("depth must be 8 or 16")
    if not str(path):
        raise ValueError("empty output path")
    path = Path(path)
    codes = _quantize(as_image(image), depth)
    if path.suffix.lower() == ".pgm":
        maxval = (1 << depth) - 1
        header = f"P5\n{codes.shape[1]} {codes.shape[0]}\n{maxval}\n".encode("ascii")
        body = codes.astype(">u2").tobytes() if depth == 16 else codes.tobytes()
        path.write_bytes(header + body)
    else:
        Image.fromarray(codes).save(path, format="PNG")


def load_mask(path) -> np.ndarray:
    return load_image(path) >= 0.5


def save_mask(mask, path) -> None:
    save_image(as_mask(mask).astype(np.float64), path, depth=8)


# ---------------------------------------------------------------------------
# Volumes: raw little-endian float32 payload plus a JSON sidecar.

def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def save_volume(volume, path) -> None:
    vol = np.asarray(volume)
    if vol.ndim != 3:
        raise ValueError(f"expected (slices, height, width), got shape {vol.shape}")
    path = Path(path)
    slices, height, width = vol.shape
    path.write_bytes(vol.astype("<f4").tobytes())
    header = {"width": width, "height": height, "slices": slices, "dtype": "f32le"}
    _sidecar(path).write_text(json.dumps(header, sort_keys=True))


def load_volume(path) -> np.ndarray:
    """Return a float32 ``(slices, height, width)`` array; payload is bit-exact."""
    path = Path(path)
    header = json.loads(_sidecar(path).read_text())
    if header.get("dtype") != "f32le":
        raise ValueError(f"unsupported volume dtype {header.get('dtype')!r}")
    shape = (int(header["slices"]), int(header["height"]), int(header["width"]))
    raw = path.read_bytes()
    expected = shape[0] * shape[1] * shape[2]
    if len(raw) != 4 * expected:
        raise ValueError(
            f"{path}: header declares {expected} scalars, payload holds {len(raw) / 4:g}"
        )
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)


def volume_slice(volume: np.ndarray, k: int) -> np.ndarray:
    return np.asarray(volume[k], dtype=np.float64)


# ---------------------------------------------------------------------------
# Resampling

def _axis_weights(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel centres, clamped at the edges
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(image, new_width: int, new_height: int) -> np.ndarray:
    if new_width < 1 or new_height < 1:
        raise ValueError("target dimensions must be >= 1")
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape
    if (h, w) == (new_height, new_width):
        return img.copy()
    r0, r1, fr = _axis_weights(h, new_height)
    c0, c1, fc = _axis_weights(w, new_width)
    rows = img[r0] * (1.0 - fr)[:, None] + img[r1] * fr[:, None]
    out = rows[:, c0] * (1.0 - fc) + rows[:, c1] * fc
    # convex weights; clip only guards against rounding past the input range
    return np.clip(out, img.min(), img.max())


def resize_mask(mask, new_width: int, new_height: int) -> np.ndarray:
    return resize_bilinear(as_mask(mask).astype(np.float64), new_width, new_height) >= 0.5


# ---------------------------------------------------------------------------
# Connected components

@dataclass(frozen=True)
class Component:
    id: int
    area: int
    bbox: tuple[int, int, int, int]  # row0, col0, row1, col1 (exclusive)


@dataclass(frozen=True)
class LabeledComponents:
    labels: np.ndarray
    components: tuple[Component, ...]

    def __len__(self) -> int:
        return len(self.components)

    @property
    def areas(self) -> list[int]:
        return [c.area for c in self.components]


_STRUCTURES = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}


def connected_components(mask, connectivity: int = 8) -> LabeledComponents:
    """Label foreground pixels; ids follow first-encounter raster order."""
    if connectivity not in _STRUCTURES:
        raise ValueError("connectivity must be 4 or 8")
    mask = as_mask(mask)
    labels, count = ndimage.label(mask, structure=_STRUCTURES[connectivity])
    areas = np.bincount(labels.ravel(), minlength=count + 1)
    comps = []
    for k, sl in enumerate(ndimage.find_objects(labels), start=1):
        comps.append(
            Component(k, int(areas[k]), (sl[0].start, sl[1].start, sl[0].stop, sl[1].stop))
        )
    return LabeledComponents(labels.astype(np.int32), tuple(comps))


def ensure_dir(path) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    return path
