"""Flips, multiplicative bias fields and global histogram equalization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HE_BINS = 256


def flip(image: np.ndarray, *masks: np.ndarray, axis: str = "horizontal"):
    """Flip an image and any paired masks with the same permutation.

    Returns a tuple ``(image, *masks)``.
    """
    if axis == "horizontal":
        ax = 1
    elif axis == "vertical":
        ax = 0
    else:
        raise ValueError(f"axis must be 'horizontal' or 'vertical', got {axis!r}")
    return tuple(np.flip(a, axis=ax).copy() for a in (image, *masks))


@dataclass(frozen=True)
class BiasFieldParams:
    order: int = 3
    bound: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.order < 0:
            raise ValueError("order must be >= 0")
        if self.bound < 0:
            raise ValueError("bound must be >= 0")


def monomials(order: int) -> list[tuple[int, int]]:
    """Exponent pairs (i, j) for u**i * v**j, by total degree then falling i.

    For order 1 this is [(0, 0), (1, 0), (0, 1)], i.e. (1, u, v).
    """
    return [(i, d - i) for d in range(order + 1) for i in range(d, -1, -1)]


def polynomial_field(shape: tuple[int, int], coeffs, order: int) -> np.ndarray:
    """Evaluate the log-bias polynomial on normalized coords u (cols), v (rows) in [-1, 1]."""
    terms = monomials(order)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != (len(terms),):
        raise ValueError(f"order {order} needs {len(terms)} coefficients, got {coeffs.shape}")
    h, w = shape
    v = np.linspace(-1.0, 1.0, h) if h > 1 else np.zeros(1)
    u = np.linspace(-1.0, 1.0, w) if w > 1 else np.zeros(1)
    uu, vv = np.meshgrid(u, v)
    out = np.zeros(shape)
    for c, (i, j) in zip(coeffs, terms):
        if c != 0.0:
            out += c * uu**i * vv**j
    return out


def random_bias_coeffs(params: BiasFieldParams) -> np.ndarray:
    rng = np.random.default_rng(params.seed)
    n = len(monomials(params.order))
    return rng.uniform(-params.bound, params.bound, size=n)


def bias_field_from_coeffs(image: np.ndarray, coeffs, order: int) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    field = np.exp(polynomial_field(img.shape, coeffs, order))
    return np.clip(img * field, 0.0, 1.0)


def bias_field(image: np.ndarray, params: BiasFieldParams) -> np.ndarray:
    """Multiply by exp(P(u, v)) with random coefficients in [-bound, bound], then clip."""
    if params.bound == 0:
        return np.asarray(image, dtype=np.float64).copy()
    return bias_field_from_coeffs(image, random_bias_coeffs(params), params.order)


def quantize_bins(image: np.ndarray, bins: int = HE_BINS) -> np.ndarray:
    return np.minimum((np.asarray(image) * bins).astype(np.int64), bins - 1)


def hist_equalize(image: np.ndarray) -> np.ndarray:
    """Global 256-bin histogram equalization.

    y = (CDF(bin(x)) - CDF_min) / (1 - CDF_min), with CDF_min the CDF at the
    lowest occupied bin. A single occupied bin has no contrast to stretch
    (the formula is 0/0); every pixel then maps to the image minimum, so a
    constant image comes back unchanged.
    """
    img = np.asarray(image, dtype=np.float64)
    b = quantize_bins(img)
    hist = np.bincount(b.ravel(), minlength=HE_BINS)
    cdf = np.cumsum(hist) / b.size
    cdf_min = cdf[hist > 0][0]
    if cdf_min >= 1.0:
        return np.full_like(img, img.min())
    lut = np.clip((cdf - cdf_min) / (1.0 - cdf_min), 0.0, 1.0)
    return lut[b]
