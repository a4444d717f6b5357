"""Deterministic Adam training loop for the inpainter on healthy slices."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
import torch

from .. import augment, imgcore
from ..phantom import load_entry
from .model import Inpainter, make_input, masked_l1_loss

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"non-finite loss {loss} at step {step}")
        self.step = step
        self.loss = loss


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 3000
    batch_size: int = 8
    lr: float = 2e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    lam_out: float = 0.1
    schedule: str = "constant"  # or "cosine": lr * (1 + cos(pi * step / steps)) / 2
    flip: bool = True
    bias_field: bool = True
    bias_prob: float = 0.5
    bias_order: int = 3
    bias_bound: float = 0.3
    resolution: int | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        d = {k: v for k, v in d.items() if k in names}
        if "betas" in d:
            d["betas"] = tuple(d["betas"])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def load_healthy(entries: list[dict], root, resolution: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Stack the training split as (images, bone masks), optionally resampled."""
    train = sorted((e for e in entries if e["split"] == "train"), key=lambda e: e["id"])
    if not train:
        raise ValueError("dataset has no training samples")
    lesioned = [e["id"] for e in train if e.get("lesion_area_px", 0) > 0]
    if lesioned:
        raise ValueError(f"training split must be lesion-free; found lesions in {lesioned[:3]}")
    images, masks = [], []
    for e in train:
        img, bone, _ = load_entry(e, root)
        if resolution is not None and img.shape != (resolution, resolution):
            img = imgcore.resize_bilinear(img, resolution, resolution)
            bone = imgcore.resize_mask(bone, resolution, resolution)
        images.append(img)
        masks.append(bone)
    return np.stack(images), np.stack(masks)


def _augmented_batch(images, masks, idx, cfg: TrainConfig, rng: np.random.Generator):
    xs, ms = [], []
    for i in idx:
        x, m = images[i], masks[i]
        if cfg.flip:
            if rng.random() < 0.5:
                x, m = augment.flip(x, m, axis="horizontal")
            if rng.random() < 0.5:
                x, m = augment.flip(x, m, axis="vertical")
        if cfg.bias_field and rng.random() < cfg.bias_prob:
            params = augment.BiasFieldParams(cfg.bias_order, cfg.bias_bound, int(rng.integers(2**31)))
            x = augment.bias_field(x, params)
        xs.append(x)
        ms.append(m)
    return np.stack(xs), np.stack(ms)


def train(
    model: Inpainter,
    images: np.ndarray,
    masks: np.ndarray,
    cfg: TrainConfig = TrainConfig(),
    seed: int = 0,
    log_every: int = 0,
) -> tuple[Inpainter, list[float]]:
    """Train ``model`` in place on healthy ``images`` with bone ``masks`` as the hole.

    Returns the model and the per-step loss trace. Batches and augmentations
    are drawn from ``numpy.random.default_rng(seed)`` in a fixed order, so
    the result is a pure function of the initial model, data, config and seed.
    """
    if len(images) == 0:
        raise ValueError("no training images")
    rng = np.random.default_rng(seed)
    dtype = next(model.parameters()).dtype
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=cfg.betas, eps=cfg.eps)
    model.train()
    trace = []
    n = len(images)
    if cfg.schedule not in ("constant", "cosine"):
        raise ValueError(f"unknown lr schedule {cfg.schedule!r}")
    for step in range(cfg.steps):
        if cfg.schedule == "cosine":
            for group in opt.param_groups:
                group["lr"] = cfg.lr * 0.5 * (1.0 + math.cos(math.pi * step / cfg.steps))
        idx = rng.choice(n, size=cfg.batch_size, replace=n < cfg.batch_size)
        xb, mb = _augmented_batch(images, masks, idx, cfg, rng)
        x = torch.as_tensor(xb, dtype=dtype)
        m = torch.as_tensor(mb, dtype=dtype)
        pred = model(make_input(x, m))[:, 0]
        loss = masked_l1_loss(pred, x, m, cfg.lam_out)
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingDiverged(step, value)
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        trace.append(value)
        if log_every and (step % log_every == 0 or step == cfg.steps - 1):
            log.info("step %d loss %.5f", step, value)
    model.eval()
    return model, trace


@torch.no_grad()
def evaluate_loss(model: Inpainter, images, masks, lam_out: float = 0.1) -> float:
    """Masked L1 of ``model`` on un-augmented data, averaged over slices."""
    dtype = next(model.parameters()).dtype
    model.eval()
    vals = []
    for x, m in zip(images, masks):
        xt = torch.as_tensor(x, dtype=dtype)[None]
        mt = torch.as_tensor(m, dtype=dtype)[None]
        pred = model(make_input(xt, mt))[:, 0]
        vals.append(float(masked_l1_loss(pred, xt, mt, lam_out)))
    return float(np.mean(vals))
