"""Stage-2 generator: sketch + attribute vector + noise -> multi-scale faces.

A UNet-shaped translator.  Four stride-2 DO blocks encode the top-scale
sketch down to a bottleneck; the augmented attribute code is broadcast over
the bottleneck grid and fused by a 1x1 conv; UP blocks decode back up with
encoder skips concatenated at matching resolutions, so the geometry of the
sketch has a direct path to every output scale.  The decoder's channel
ladder ends in a stride-preserving stage: four doublings already return the
bottleneck to the input resolution, so the fifth entry refines channels at
full size instead of upsampling.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .attributes import FACE_DIM
from .nn import (
    AttributeAugment,
    ConditionalBatchNorm2d,
    ConditionEmbedding,
    DownBlock,
    ResBlock,
    StrBlock,
    UpBlock,
)
from .sketch import validate_scales


class FaceGenerator(nn.Module):
    """UNet translator from sketches to multi-scale face images."""

    def __init__(
        self,
        attr_dim: int = FACE_DIM,
        noise_dim: int = 100,
        latent_dim: int = 128,
        base_channels: int = 32,
        scales: tuple[int, ...] = (16, 32, 64),
        fuse_channels: int = 128,
    ):
        super().__init__()
        self.scales = validate_scales(scales)
        self.attr_dim = attr_dim
        self.noise_dim = noise_dim
        self.base_channels = base_channels
        self.input_res = self.scales[-1]
        if self.input_res % 16:
            raise ValueError(f"top scale must be divisible by 16, got {self.input_res}")
        b = base_channels
        self.encoder = nn.ModuleList(
            [
                DownBlock(3, 2 * b, attr_dim),
                DownBlock(2 * b, 4 * b, attr_dim),
                DownBlock(4 * b, 8 * b, attr_dim),
                DownBlock(8 * b, 16 * b, attr_dim),
            ]
        )
        self.skip_resolutions = (self.input_res // 2, self.input_res // 4, self.input_res // 8)
        self.bottleneck_res = self.input_res // 16

        self.augment = AttributeAugment(attr_dim, noise_dim=noise_dim, latent_dim=latent_dim)
        self.fuse_proj = nn.Linear(latent_dim + noise_dim, fuse_channels)
        self.fuse_conv = nn.Conv2d(16 * b + fuse_channels, 16 * b, 1)
        self.fuse_norm = ConditionalBatchNorm2d(16 * b, attr_dim)

        # Decoder: skip channels join before the UP that leaves the skip's
        # resolution, hence the widened input channel counts.
        self.up1 = UpBlock(16 * b, 16 * b, attr_dim)
        self.res1 = ResBlock(16 * b, attr_dim)
        self.up2 = UpBlock(16 * b + 8 * b, 8 * b, attr_dim)
        self.res2 = ResBlock(8 * b, attr_dim)
        self.up3 = UpBlock(8 * b + 4 * b, 4 * b, attr_dim)
        self.res3 = ResBlock(4 * b, attr_dim)
        self.up4 = UpBlock(4 * b + 2 * b, 2 * b, attr_dim)
        self.res4 = ResBlock(2 * b, attr_dim)
        self.top_conv = nn.Conv2d(2 * b, b, 3, padding=1)
        self.top_norm = ConditionalBatchNorm2d(b, attr_dim)
        self.taps = nn.ModuleDict(
            {
                str(self.scales[0]): StrBlock(8 * b),
                str(self.scales[1]): StrBlock(4 * b),
                str(self.scales[2]): StrBlock(b),
            }
            if len(self.scales) == 3
            else {}
        )
        if len(self.scales) != 3:
            raise ValueError("face generator expects exactly three pyramid scales")

    def encode_sketch(
        self, sketch: torch.Tensor, attrs: torch.Tensor
    ) -> tuple[torch.Tensor, dict[int, torch.Tensor]]:
        """Encode a top-scale sketch; returns (bottleneck, skips keyed by resolution)."""
        if sketch.shape[-1] != self.input_res or sketch.shape[-2] != self.input_res:
            raise ValueError(
                f"expected {self.input_res}x{self.input_res} sketch, got {tuple(sketch.shape)}"
            )
        if sketch.shape[1] != 3:
            raise ValueError("sketch must have 3 channels")
        skips: dict[int, torch.Tensor] = {}
        h = sketch
        for block in self.encoder:
            h = block(h, attrs)
            res = h.shape[-1]
            if res in self.skip_resolutions:
                skips[res] = h
        return h, skips

    def fuse_condition(
        self,
        bottleneck: torch.Tensor,
        attrs: torch.Tensor,
        noise: torch.Tensor,
        eps: torch.Tensor | None = None,
        generator: torch.Generator | None = None,
    ) -> tuple[torch.Tensor, ConditionEmbedding]:
        """Broadcast the augmented code over the bottleneck grid and fuse."""
        embedding = self.augment(attrs, noise, eps=eps, generator=generator)
        proj = self.fuse_proj(embedding.code)
        grid = proj[:, :, None, None].expand(-1, -1, bottleneck.shape[-2], bottleneck.shape[-1])
        fused = self.fuse_conv(torch.cat([bottleneck, grid], dim=1))
        fused = F.relu(self.fuse_norm(fused, attrs))
        return fused, embedding

    def decode(
        self, fused: torch.Tensor, skips: dict[int, torch.Tensor], attrs: torch.Tensor
    ) -> list[torch.Tensor]:
        """Decode the fused bottleneck into the face pyramid, lowest scale first."""
        r = self.bottleneck_res
        h = self.res1(self.up1(fused, attrs), attrs)
        h = self.res2(self.up2(torch.cat([h, skips[2 * r]], dim=1), attrs), attrs)
        low = self.taps[str(self.scales[0])](h)
        h = self.res3(self.up3(torch.cat([h, skips[4 * r]], dim=1), attrs), attrs)
        mid = self.taps[str(self.scales[1])](h)
        h = self.res4(self.up4(torch.cat([h, skips[8 * r]], dim=1), attrs), attrs)
        h = F.relu(self.top_norm(self.top_conv(h), attrs))
        top = self.taps[str(self.scales[2])](h)
        return [low, mid, top]

    def forward(
        self,
        sketch: torch.Tensor,
        attrs: torch.Tensor,
        noise: torch.Tensor,
        eps: torch.Tensor | None = None,
        generator: torch.Generator | None = None,
    ) -> tuple[list[torch.Tensor], ConditionEmbedding]:
        if attrs.shape[-1] != self.attr_dim:
            raise ValueError(f"attribute dim {attrs.shape[-1]} != expected {self.attr_dim}")
        bottleneck, skips = self.encode_sketch(sketch, attrs)
        fused, embedding = self.fuse_condition(bottleneck, attrs, noise, eps=eps, generator=generator)
        return self.decode(fused, skips, attrs), embedding
