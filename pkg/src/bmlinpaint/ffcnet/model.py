"""Encoder / FFC-bottleneck / decoder inpainter and the masked L1 loss."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .. import imgcore
from .layers import IN_EPS, FFCResBlock


@dataclass(frozen=True)
class ArchConfig:
    channels: int = 32  # bottleneck width; encoder uses channels/4 and channels/2
    n_blocks: int = 4
    alpha: float = 0.5
    kernel_size: int = 3

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_dict(self) -> dict:
        return asdict(self)


def _conv_in_relu(ci: int, co: int, k: int, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(ci, co, k, stride=stride, padding=k // 2, bias=False),
        nn.InstanceNorm2d(co, eps=IN_EPS, affine=True),
        nn.ReLU(),
    )


class Inpainter(nn.Module):
    """2-channel (masked image, mask) -> 1-channel image in [0, 1].

    Two stride-2 convolutions, ``n_blocks`` FFC residual blocks, two
    nearest-upsample + conv stages, then a head that also sees the raw
    input (instance norm discards absolute intensity) and a sigmoid.
    Inputs whose sides are not multiples of 4 are reflect-padded and the
    output cropped back.
    """

    def __init__(self, arch: ArchConfig = ArchConfig()):
        super().__init__()
        self.arch = arch
        c, k = arch.channels, arch.kernel_size
        c1, c2 = max(c // 4, 1), max(c // 2, 1)
        self.stem = _conv_in_relu(2, c1, k)
        self.down1 = _conv_in_relu(c1, c2, k, stride=2)
        self.down2 = _conv_in_relu(c2, c, k, stride=2)
        self.blocks = nn.Sequential(*(FFCResBlock(c, arch.alpha, k) for _ in range(arch.n_blocks)))
        self.up1 = _conv_in_relu(c, c2, k)
        self.up2 = _conv_in_relu(c2, c1, k)
        self.head = nn.Conv2d(c1 + 2, 1, k, padding=k // 2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != 2:
            raise ValueError(f"expected input of shape (N, 2, H, W), got {tuple(x.shape)}")
        h, w = x.shape[-2:]
        ph, pw = (-h) % 4, (-w) % 4
        if ph or pw:
            x = F.pad(x, (0, pw, 0, ph), mode="replicate")
        y = self.down2(self.down1(self.stem(x)))
        y = self.blocks(y)
        y = self.up1(F.interpolate(y, scale_factor=2, mode="nearest"))
        y = self.up2(F.interpolate(y, scale_factor=2, mode="nearest"))
        y = torch.sigmoid(self.head(torch.cat([y, x], dim=1)))
        return y[..., :h, :w]


def build_model(arch: ArchConfig = ArchConfig(), seed: int = 0) -> Inpainter:
    """Freshly initialized model; parameters depend only on ``arch`` and ``seed``."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return Inpainter(arch)


def make_input(images: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
    """stack(x * (1 - m), m): the region to fill is zeroed in the image channel."""
    masks = masks.to(images.dtype)
    return torch.stack([images * (1 - masks), masks], dim=1)


def masked_l1_loss(pred, target, mask, lam_out: float = 0.1) -> torch.Tensor:
    """mean_{m=1} |pred - target| + lam_out * mean_{m=0} |pred - target|."""
    if pred.shape != target.shape or pred.shape != mask.shape:
        raise ValueError("pred, target and mask must share a shape")
    m = mask.to(torch.bool)
    n_in = int(m.sum())
    if n_in == 0:
        raise ValueError("mask selects no pixels")
    err = (pred - target).abs()
    loss = err[m].sum() / n_in
    n_out = m.numel() - n_in
    if lam_out and n_out:
        loss = loss + lam_out * err[~m].sum() / n_out
    return loss


@torch.no_grad()
def predict(model: Inpainter, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Raw model output for one slice as a float64 array."""
    dtype = next(model.parameters()).dtype
    x = torch.as_tensor(np.asarray(image), dtype=dtype)[None]
    m = torch.as_tensor(np.asarray(mask), dtype=dtype)[None]
    was_training = model.training
    model.eval()
    out = model(make_input(x, m))[0, 0]
    model.train(was_training)
    return out.double().numpy()


def inpaint(model: Inpainter, image, mask) -> np.ndarray:
    """x~: the model's prediction inside ``mask``, the input everywhere else."""
    img = imgcore.as_image(image)
    mask = imgcore.as_mask(mask, img.shape)
    if not mask.any():
        return img.copy()
    pred = np.clip(predict(model, img, mask), 0.0, 1.0)
    return np.where(mask, pred, img)


def model_inpainter(model: Inpainter):
    def run(image, mask):
        return inpaint(model, image, mask)

    return run
