"""Stage-1 generator: attribute vector + noise -> multi-scale sketch pyramid.

The augmented conditioning code is reshaped into a 4x4 seed map (512
channels at default width), then refined by UP(256)-Res-UP(128)-Res-UP(64)-
Res-UP(32) with image taps at every pyramid scale.  Every normalization is
conditioned on the texture attribute vector.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .attributes import SKETCH_DIM
from .nn import AttributeAugment, ConditionalBatchNorm2d, ConditionEmbedding, ResBlock, StrBlock, UpBlock


def validate_scales(scales: tuple[int, ...]) -> tuple[int, ...]:
    scales = tuple(int(s) for s in scales)
    if len(scales) < 2:
        raise ValueError("need at least two pyramid scales")
    for low, high in zip(scales, scales[1:]):
        if high != 2 * low:
            raise ValueError(f"scales must double at each level, got {scales}")
    if scales[0] % 4 or scales[0] < 8:
        raise ValueError(f"lowest scale must be a multiple of 4 and >= 8, got {scales}")
    return scales


class SketchGenerator(nn.Module):
    """Multi-scale conditional sketch generator."""

    def __init__(
        self,
        attr_dim: int = SKETCH_DIM,
        noise_dim: int = 100,
        latent_dim: int = 128,
        base_channels: int = 32,
        scales: tuple[int, ...] = (16, 32, 64),
    ):
        super().__init__()
        self.scales = validate_scales(scales)
        self.attr_dim = attr_dim
        self.noise_dim = noise_dim
        self.base_channels = base_channels
        self.seed_res = self.scales[0] // 4
        self.seed_channels = 16 * base_channels
        self.augment = AttributeAugment(attr_dim, noise_dim=noise_dim, latent_dim=latent_dim)
        self.seed_fc = nn.Linear(latent_dim + noise_dim, self.seed_channels * self.seed_res ** 2)
        self.seed_norm = ConditionalBatchNorm2d(self.seed_channels, attr_dim)

        n_up = int(math.log2(self.scales[-1] // self.seed_res))
        self.ups = nn.ModuleList()
        self.res_blocks = nn.ModuleDict()
        self.taps = nn.ModuleDict()
        self.stage_resolutions: list[int] = []
        channels = self.seed_channels
        res = self.seed_res
        for i in range(n_up):
            out_channels = max(channels // 2, base_channels)
            self.ups.append(UpBlock(channels, out_channels, attr_dim))
            channels = out_channels
            res *= 2
            self.stage_resolutions.append(res)
            if i < n_up - 1:
                self.res_blocks[str(res)] = ResBlock(channels, attr_dim)
            if res in self.scales:
                self.taps[str(res)] = StrBlock(channels)

    def forward(
        self,
        attrs: torch.Tensor,
        noise: torch.Tensor,
        eps: torch.Tensor | None = None,
        generator: torch.Generator | None = None,
    ) -> tuple[list[torch.Tensor], ConditionEmbedding]:
        """Return pyramid images (lowest scale first) and the conditioning embedding."""
        embedding = self.augment(attrs, noise, eps=eps, generator=generator)
        batch = attrs.shape[0]
        h = self.seed_fc(embedding.code).view(batch, self.seed_channels, self.seed_res, self.seed_res)
        h = F.relu(self.seed_norm(h, attrs))
        outputs = []
        for up, res in zip(self.ups, self.stage_resolutions):
            h = up(h, attrs)
            if str(res) in self.res_blocks:
                h = self.res_blocks[str(res)](h, attrs)
            if str(res) in self.taps:
                outputs.append(self.taps[str(res)](h))
        return outputs, embedding
