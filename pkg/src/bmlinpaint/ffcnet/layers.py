"""Fast Fourier convolution layers.

A tensor entering an FFC layer is split along channels into a local part
(``c - round(alpha * c)`` channels) and a global part (``round(alpha * c)``
channels). The local branch is an ordinary k x k convolution; the global
branch mixes channels pointwise in the 2-D Fourier domain, so every output
pixel sees the whole input.
"""
from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

IN_EPS = 1e-5


def split_channels(channels: int, alpha: float) -> tuple[int, int]:
    """(local, global) channel counts for a global fraction ``alpha``."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    c_global = int(round(alpha * channels))
    return channels - c_global, c_global


def spectral_transform(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor | None = None) -> torch.Tensor:
    """irfft2(conv1x1(stack(re, im)(rfft2(x)))) with orthonormal FFTs.

    ``weight`` has shape (2*c_out, 2*c_in, 1, 1); input channels are ordered
    [re_0 .. re_{c-1}, im_0 .. im_{c-1}] and outputs likewise.
    """
    if x.dim() != 4:
        raise ValueError(f"expected an NCHW tensor, got {tuple(x.shape)}")
    n, c, h, w = x.shape
    if h < 2 or w < 2:
        raise ValueError("spectral transform needs height and width >= 2")
    if weight.shape[1] != 2 * c:
        raise ValueError(f"weight expects {weight.shape[1] // 2} channels, input has {c}")
    spec = torch.fft.rfft2(x, norm="ortho")
    z = torch.cat([spec.real, spec.imag], dim=1)
    z = F.conv2d(z, weight, bias)
    c_out = z.shape[1] // 2
    spec = torch.complex(z[:, :c_out], z[:, c_out:])
    return torch.fft.irfft2(spec, s=(h, w), norm="ortho")


class SpectralTransform(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, bias: bool = True):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(2 * out_channels, 2 * in_channels, 1, 1))
        self.bias = nn.Parameter(torch.zeros(2 * out_channels)) if bias else None
        nn.init.kaiming_uniform_(self.weight, a=5**0.5)

    def forward(self, x):
        return spectral_transform(x, self.weight, self.bias)


class FFC(nn.Module):
    """One FFC layer: local->local, local->global, global->local, global->global.

    ``norm`` adds per-channel instance normalization (affine) to each output
    branch and ``act`` a ReLU after it; with both off the layer is linear
    in its input (plus biases).
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int = 3,
        alpha: float = 0.5,
        bias: bool = True,
        norm: bool = True,
        act: bool = True,
    ):
        super().__init__()
        self.in_split = split_channels(in_channels, alpha)
        self.out_split = split_channels(out_channels, alpha)
        (li, gi), (lo, go) = self.in_split, self.out_split
        pad = kernel_size // 2

        def conv(ci, co):
            if ci == 0 or co == 0:
                return None
            return nn.Conv2d(ci, co, kernel_size, padding=pad, bias=bias)

        self.l2l = conv(li, lo)
        self.l2g = conv(li, go)
        self.g2l = conv(gi, lo)
        self.g2g = SpectralTransform(gi, go, bias=bias) if gi and go else None
        self.norm_l = nn.InstanceNorm2d(lo, eps=IN_EPS, affine=True) if norm and lo else None
        self.norm_g = nn.InstanceNorm2d(go, eps=IN_EPS, affine=True) if norm and go else None
        self.act = act

    @property
    def alpha(self) -> float:
        return self.in_split[1] / max(sum(self.in_split), 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != sum(self.in_split):
            raise ValueError(f"FFC expects {sum(self.in_split)} channels, got {x.shape[1]}")
        li, _ = self.in_split
        x_l, x_g = x[:, :li], x[:, li:]
        branches = (
            ((self.l2l, x_l), (self.g2l, x_g), self.norm_l),
            ((self.g2g, x_g), (self.l2g, x_l), self.norm_g),
        )
        outs = []
        for a, b, norm in branches:
            parts = [m(src) for m, src in (a, b) if m is not None]
            if not parts:
                continue
            y = parts[0] if len(parts) == 1 else parts[0] + parts[1]
            if norm is not None:
                y = norm(y)
            if self.act:
                y = F.relu(y)
            outs.append(y)
        return outs[0] if len(outs) == 1 else torch.cat(outs, dim=1)


def ffc_forward(x: torch.Tensor, layer: FFC) -> torch.Tensor:
    return layer(x)


class FFCResBlock(nn.Module):
    """Two normalized FFC layers with an identity skip."""

    def __init__(self, channels: int, alpha: float = 0.5, kernel_size: int = 3):
        super().__init__()
        # biases before instance norm are cancelled exactly, so they are left out
        self.conv1 = FFC(channels, channels, kernel_size, alpha, bias=False)
        self.conv2 = FFC(channels, channels, kernel_size, alpha, bias=False)

    def forward(self, x):
        return x + self.conv2(self.conv1(x))
