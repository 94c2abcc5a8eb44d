"""Differentiable building blocks shared by both generator stages.

Attribute augmentation (AA) turns an attribute vector into a Gaussian
conditioning latent by reparameterization; conditional batch normalization
(CBN) re-injects the attribute vector after every normalization so that a
batch of identical attribute rows is not normalized into silence; UP / DO /
Res / STR blocks assemble the generator stacks.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class ConditionEmbedding:
    """Reparameterized conditioning latent and the noise it travels with."""

    mu: torch.Tensor
    sigma: torch.Tensor
    latent: torch.Tensor
    noise: torch.Tensor

    @property
    def code(self) -> torch.Tensor:
        """Input to the downstream stack: concat(latent, noise)."""
        return torch.cat([self.latent, self.noise], dim=-1)


def kl_regularizer(mu: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
    """KL divergence of N(mu, diag(sigma^2)) from N(0, I).

    Computes 0.5 * sum_i (mu_i^2 + sigma_i^2 - 1 - ln sigma_i^2) over the
    trailing dimension; batched inputs are averaged over leading dimensions.
    """
    if (sigma <= 0).any():
        raise ValueError("sigma must be positive everywhere")
    terms = 0.5 * (mu * mu + sigma * sigma - 1.0 - torch.log(sigma * sigma))
    per_vector = terms.sum(dim=-1)
    return per_vector.mean() if per_vector.dim() else per_vector


class _ConditionalNorm(nn.Module):
    """Batch normalization with attribute-driven affine parameters.

    gamma(y) = scale_base + W_g y + b_g and beta(y) = W_b y + b_b, applied
    after an affine-free batch norm.  The affine heads start at zero, so an
    untrained layer behaves exactly like plain batch norm; ``zero_init_scale``
    drops the scale base to 0 for layers that must start as the zero map
    (the residual trunk's final norm).
    """

    def __init__(self, norm: nn.Module, num_features: int, cond_dim: int,
                 zero_init_scale: bool = False):
        super().__init__()
        self.norm = norm
        self.gain = nn.Linear(cond_dim, num_features)
        self.bias = nn.Linear(cond_dim, num_features)
        nn.init.zeros_(self.gain.weight)
        nn.init.zeros_(self.gain.bias)
        nn.init.zeros_(self.bias.weight)
        nn.init.zeros_(self.bias.bias)
        self.scale_base = 0.0 if zero_init_scale else 1.0

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        if self.training and x.shape[0] < 2:
            raise ValueError("conditional batch norm needs batch size >= 2 in training mode")
        if cond.shape[0] != x.shape[0]:
            raise ValueError(f"condition batch {cond.shape[0]} != input batch {x.shape[0]}")
        h = self.norm(x)
        gamma = self.scale_base + self.gain(cond)
        beta = self.bias(cond)
        shape = (x.shape[0], -1) + (1,) * (x.dim() - 2)
        return gamma.view(shape) * h + beta.view(shape)


class ConditionalBatchNorm2d(_ConditionalNorm):
    def __init__(self, num_features: int, cond_dim: int, zero_init_scale: bool = False):
        super().__init__(
            nn.BatchNorm2d(num_features, affine=False), num_features, cond_dim, zero_init_scale
        )


class ConditionalBatchNorm1d(_ConditionalNorm):
    def __init__(self, num_features: int, cond_dim: int, zero_init_scale: bool = False):
        super().__init__(
            nn.BatchNorm1d(num_features, affine=False), num_features, cond_dim, zero_init_scale
        )


class AttributeAugment(nn.Module):
    """Attribute vector -> Gaussian conditioning latent, reparameterized.

    Two hidden fully-connected layers (width 256, conditional norm, ReLU)
    feed a mean head and a log-variance head.  The log-variance head starts
    at zero so sigma = 1 elementwise before training.  The sampled latent is
    mu + sigma * eps; pass ``eps`` to pin the sample or ``generator`` to
    draw it reproducibly.
    """

    def __init__(self, attr_dim: int, noise_dim: int = 100, latent_dim: int = 128,
                 hidden_dim: int = 256):
        super().__init__()
        self.attr_dim = attr_dim
        self.noise_dim = noise_dim
        self.latent_dim = latent_dim
        self.fc1 = nn.Linear(attr_dim, hidden_dim)
        self.norm1 = ConditionalBatchNorm1d(hidden_dim, attr_dim)
        self.fc2 = nn.Linear(hidden_dim, hidden_dim)
        self.norm2 = ConditionalBatchNorm1d(hidden_dim, attr_dim)
        self.mu_head = nn.Linear(hidden_dim, latent_dim)
        self.logvar_head = nn.Linear(hidden_dim, latent_dim)
        nn.init.zeros_(self.logvar_head.weight)
        nn.init.zeros_(self.logvar_head.bias)

    def forward(
        self,
        attrs: torch.Tensor,
        noise: torch.Tensor,
        eps: torch.Tensor | None = None,
        generator: torch.Generator | None = None,
    ) -> ConditionEmbedding:
        if attrs.shape[-1] != self.attr_dim:
            raise ValueError(f"attribute dim {attrs.shape[-1]} != expected {self.attr_dim}")
        if noise.shape[-1] != self.noise_dim:
            raise ValueError(f"noise dim {noise.shape[-1]} != expected {self.noise_dim}")
        h = F.relu(self.norm1(self.fc1(attrs), attrs))
        h = F.relu(self.norm2(self.fc2(h), attrs))
        mu = self.mu_head(h)
        logvar = self.logvar_head(h)
        sigma = torch.exp(0.5 * logvar)
        if eps is None:
            eps = torch.randn(mu.shape, generator=generator, dtype=mu.dtype, device=mu.device)
        latent = mu + sigma * eps
        return ConditionEmbedding(mu=mu, sigma=sigma, latent=latent, noise=noise)


class UpBlock(nn.Module):
    """Nearest-neighbor x2 upsample, 3x3 conv, conditional norm, ReLU."""

    def __init__(self, in_channels: int, out_channels: int, cond_dim: int):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.norm = ConditionalBatchNorm2d(out_channels, cond_dim)

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        h = F.interpolate(x, scale_factor=2, mode="nearest")
        return F.relu(self.norm(self.conv(h), cond))


class DownBlock(nn.Module):
    """4x4 stride-2 conv, conditional norm, ReLU: halves the spatial size."""

    def __init__(self, in_channels: int, out_channels: int, cond_dim: int):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, 4, stride=2, padding=1)
        self.norm = ConditionalBatchNorm2d(out_channels, cond_dim)

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        return F.relu(self.norm(self.conv(x), cond))


class ResBlock(nn.Module):
    """Identity-plus-trunk residual block preserving shape.

    Trunk is conv-norm-ReLU-conv-norm; the final norm's scale base is zero
    so a fresh block is exactly the identity map.  No activation after the
    addition, keeping the skip path clean.
    """

    def __init__(self, channels: int, cond_dim: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm1 = ConditionalBatchNorm2d(channels, cond_dim)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm2 = ConditionalBatchNorm2d(channels, cond_dim, zero_init_scale=True)

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.conv1.in_channels:
            raise ValueError(
                f"residual block built for {self.conv1.in_channels} channels got {x.shape[1]}"
            )
        h = F.relu(self.norm1(self.conv1(x), cond))
        h = self.norm2(self.conv2(h), cond)
        return x + h


class StrBlock(nn.Module):
    """Feature map -> 3-channel image in [-1, 1]: two 1x1 convs then Tanh."""

    def __init__(self, in_channels: int, out_channels: int = 3):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, in_channels, 1)
        self.conv2 = nn.Conv2d(in_channels, out_channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.tanh(self.conv2(F.relu(self.conv1(x))))
