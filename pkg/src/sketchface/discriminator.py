"""Multi-scale patch discriminators with matching-aware conditional branches.

One discriminator per pyramid scale.  Each runs a 4-stride-2 conv chain down
to a 4x4 grid; lower-resolution scales simply drop the leading convolutions
of the 64x64 chain, so the 4x4 stage always carries the same channel count.
An unconditional head scores realness; a conditional branch tiles an
attribute embedding over the grid, concatenates and scores attribute match.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn

from .losses import PatchJudgment

PATCH_SIZE = 4


class PatchDiscriminator(nn.Module):
    """Single-scale discriminator emitting 4x4 realness and match maps."""

    def __init__(self, resolution: int, attr_dim: int, base_channels: int = 64,
                 embed_channels: int = 128):
        super().__init__()
        steps = int(math.log2(resolution / PATCH_SIZE))
        if 2 ** steps * PATCH_SIZE != resolution or steps < 1:
            raise ValueError(f"resolution {resolution} is not 4 * 2^k with k >= 1")
        self.resolution = resolution
        self.attr_dim = attr_dim
        # Channel ladder of the full 64x64 chain, truncated from the left for
        # smaller inputs so every scale ends at 8 * base_channels.
        ladder = [base_channels * 2 ** i for i in range(4)][-steps:]
        layers: list[nn.Module] = []
        in_ch = 3
        for i, out_ch in enumerate(ladder):
            layers.append(nn.Conv2d(in_ch, out_ch, 4, stride=2, padding=1))
            if i > 0:
                layers.append(nn.BatchNorm2d(out_ch))
            layers.append(nn.LeakyReLU(0.2, inplace=True))
            in_ch = out_ch
        self.features = nn.Sequential(*layers)
        self.realness_head = nn.Sequential(nn.Conv2d(in_ch, 1, 1), nn.Sigmoid())
        self.attr_embed = nn.Sequential(nn.Linear(attr_dim, embed_channels), nn.LeakyReLU(0.2))
        self.match_head = nn.Sequential(
            nn.Conv2d(in_ch + embed_channels, in_ch, 1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(in_ch, 1, 1),
            nn.Sigmoid(),
        )

    def forward(self, image: torch.Tensor, attrs: torch.Tensor) -> PatchJudgment:
        if image.shape[-1] != self.resolution or image.shape[-2] != self.resolution:
            raise ValueError(
                f"discriminator for {self.resolution}x{self.resolution} got {tuple(image.shape)}"
            )
        if attrs.shape[-1] != self.attr_dim:
            raise ValueError(f"attribute dim {attrs.shape[-1]} != expected {self.attr_dim}")
        h = self.features(image)
        realness = self.realness_head(h)
        embed = self.attr_embed(attrs)
        tiled = embed[:, :, None, None].expand(-1, -1, PATCH_SIZE, PATCH_SIZE)
        match = self.match_head(torch.cat([h, tiled], dim=1))
        return PatchJudgment(realness=realness, match=match)


class DiscriminatorSet(nn.Module):
    """One PatchDiscriminator per scale, addressed by resolution."""

    def __init__(self, scales: tuple[int, ...], attr_dim: int, base_channels: int = 64):
        super().__init__()
        self.scales = tuple(scales)
        self.members = nn.ModuleDict(
            {
                str(res): PatchDiscriminator(res, attr_dim, base_channels=base_channels)
                for res in self.scales
            }
        )

    def judge(
        self, pyramid: list[torch.Tensor] | tuple[torch.Tensor, ...], attrs: torch.Tensor
    ) -> list[PatchJudgment]:
        """Judge each pyramid level with its own discriminator, low scale first."""
        judgments = []
        for image in pyramid:
            res = image.shape[-1]
            if str(res) not in self.members:
                raise KeyError(f"no discriminator registered for resolution {res}")
            judgments.append(self.members[str(res)](image, attrs))
        return judgments
