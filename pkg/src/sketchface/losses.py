"""Adversarial losses over triplet patch judgments.

Each discriminator emits two 4x4 probability maps per image: unconditional
realness and attribute match.  The discriminator is trained on triplets of
(real, matching attrs), (real, mismatching attrs) and (fake, matching
attrs); the wrong pair contributes only through the match branch.  The
generator minimizes the non-saturating form over its fake judgments.  All
probabilities are clamped to [1e-7, 1 - 1e-7] before the log so every loss
stays finite for arbitrary parameters; maps are averaged over batch and the
16 patch locations, keeping magnitudes comparable across scales.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

PROB_MIN = 1e-7
PROB_MAX = 1.0 - 1e-7


@dataclass
class PatchJudgment:
    """Per-scale discriminator output: two (B, 1, 4, 4) probability maps."""

    realness: torch.Tensor
    match: torch.Tensor


def _log(p: torch.Tensor) -> torch.Tensor:
    return torch.log(p.clamp(PROB_MIN, PROB_MAX)).mean()


def discriminator_loss(
    real: PatchJudgment, fake: PatchJudgment, wrong: PatchJudgment
) -> torch.Tensor:
    """Per-scale discriminator loss over one triplet.

    Negation of: log D(real) + log D(real, y) + log(1 - D(wrong, y))
    + log(1 - D(fake)) + log(1 - D(fake, y)).  With all five maps at 0.5
    this is 5 ln 2.
    """
    score = (
        _log(real.realness)
        + _log(real.match)
        + _log(1.0 - wrong.match)
        + _log(1.0 - fake.realness)
        + _log(1.0 - fake.match)
    )
    return -score


def generator_adv_loss(fakes: list[PatchJudgment] | tuple[PatchJudgment, ...]) -> torch.Tensor:
    """Non-saturating generator loss summed over scales.

    Per scale: -(log D(fake) + log D(fake, y)).  With judgments at 0.5 this
    is 2 ln 2 per scale.
    """
    total = None
    for judgment in fakes:
        term = -(_log(judgment.realness) + _log(judgment.match))
        total = term if total is None else total + term
    if total is None:
        raise ValueError("no fake judgments given")
    return total


def generator_saturating_loss(
    fakes: list[PatchJudgment] | tuple[PatchJudgment, ...]
) -> torch.Tensor:
    """Classic min-max generator term, kept for the config toggle."""
    total = None
    for judgment in fakes:
        term = _log(1.0 - judgment.realness) + _log(1.0 - judgment.match)
        total = term if total is None else total + term
    if total is None:
        raise ValueError("no fake judgments given")
    return total


def total_stage_loss(adv: torch.Tensor, kl: torch.Tensor, kl_weight: float) -> torch.Tensor:
    """Stage objective for the generator: adversarial term + weighted KL."""
    if kl_weight < 0:
        raise ValueError("kl_weight must be nonnegative")
    return adv + kl_weight * kl


def stage_objective(
    triplets: list[tuple[PatchJudgment, PatchJudgment, PatchJudgment]],
    kl: torch.Tensor,
    kl_weight: float,
) -> torch.Tensor:
    """Full per-stage objective: summed per-scale triplet losses + weighted KL.

    ``triplets`` holds (real, fake, wrong) judgments per scale.  With all
    judgments at 0.5 and KL = 0 this evaluates to scales * 5 ln 2.
    """
    total = None
    for real, fake, wrong in triplets:
        term = discriminator_loss(real, fake, wrong)
        total = term if total is None else total + term
    if total is None:
        raise ValueError("no scales given")
    return total_stage_loss(total, kl, kl_weight)
