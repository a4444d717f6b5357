"""Training-free inpainting: discrete harmonic extension of the boundary values."""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from .. import imgcore

_CROSS = ndimage.generate_binary_structure(2, 1)


def _neighbour_sum(u: np.ndarray) -> np.ndarray:
    s = np.zeros_like(u)
    s[1:, :] += u[:-1, :]
    s[:-1, :] += u[1:, :]
    s[:, 1:] += u[:, :-1]
    s[:, :-1] += u[:, 1:]
    return s


def check_reachable(mask: np.ndarray) -> None:
    """Raise unless every 4-connected masked component borders known pixels."""
    labels, count = ndimage.label(mask, structure=_CROSS)
    if count == 0:
        return
    touching = ndimage.binary_dilation(~mask, structure=_CROSS) & mask
    reached = np.unique(labels[touching])
    if np.setdiff1d(np.arange(1, count + 1), reached).size:
        raise ValueError("masked region has no unmasked boundary pixels to extend")


def classical_inpaint(
    image,
    mask,
    tolerance: float = 1e-6,
    max_iters: int = 20000,
    omega: float | None = None,
) -> np.ndarray:
    """Fill ``mask`` with the harmonic extension of the surrounding pixels.

    Red-black over-relaxed 4-neighbour averaging; neighbours outside the
    image are ignored (reflecting border). Iterates until the largest update
    falls below ``tolerance`` or ``max_iters`` sweeps are done. Unmasked
    pixels are returned untouched, and the fill is clipped to the range of
    the boundary values so the discrete maximum principle holds exactly even
    when over-relaxation has not fully settled.
    """
    img = imgcore.as_image(image)
    mask = imgcore.as_mask(mask, img.shape)
    if not mask.any():
        return img.copy()
    check_reachable(mask)

    boundary = ndimage.binary_dilation(mask, structure=_CROSS) & ~mask
    lo, hi = img[boundary].min(), img[boundary].max()

    counts = _neighbour_sum(np.ones_like(img))
    u = img.copy()
    u[mask] = img[boundary].mean()

    rows, cols = np.nonzero(mask)
    extent = max(rows.max() - rows.min(), cols.max() - cols.min()) + 2
    if omega is None:
        omega = 2.0 / (1.0 + np.sin(np.pi / extent))
    parity = (np.add.outer(np.arange(img.shape[0]), np.arange(img.shape[1])) % 2).astype(bool)
    colours = (mask & ~parity, mask & parity)

    for _ in range(max_iters):
        biggest = 0.0
        for sel in colours:
            avg = _neighbour_sum(u)[sel] / counts[sel]
            step = omega * (avg - u[sel])
            u[sel] += step
            if step.size:
                biggest = max(biggest, float(np.abs(step).max()))
        if biggest < tolerance:
            break

    u[mask] = np.clip(u[mask], lo, hi)
    u[~mask] = img[~mask]
    return u
