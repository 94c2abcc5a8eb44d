"""Alternating adversarial training of both stages with reproducible state.

Determinism strategy: model initialization happens under a seed derived
from the run seed, and every per-step random draw (batch order, noise,
reparameterization, mismatch sampling) is generated from a fresh generator
seeded by (run seed, purpose, step).  No RNG state needs to survive a
restart: resuming from a step-k checkpoint replays step k+1 exactly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .checkpoint import CheckpointBundle, file_hash, load_checkpoint, save_checkpoint
from .config import TrainConfig, config_hash
from .data import CuratedDataset, mismatch_index
from .discriminator import DiscriminatorSet
from .face import FaceGenerator
from .losses import discriminator_loss, generator_adv_loss, generator_saturating_loss
from .nn import kl_regularizer
from .sketch import SketchGenerator

log = logging.getLogger(__name__)

LATENT_DIM = 128
NOISE_DIM = 100


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from a tuple of labels (run seed, purpose, step...)."""
    text = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


def lr_schedule(epoch: int, cfg: TrainConfig, base_lr: float | None = None) -> float:
    """Learning rate for an epoch: frozen, then linear decay toward zero.

    Constant at ``base_lr`` (stage-1 rate by default) for the first
    ``freeze_epochs``; afterwards each epoch subtracts ``decay_fraction`` of
    the initial value, floored at zero.
    """
    if not 0 <= epoch < cfg.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.epochs})")
    if base_lr is None:
        base_lr = cfg.lr_stage1
    if epoch < cfg.freeze_epochs:
        return base_lr
    return base_lr * max(0.0, 1.0 - cfg.decay_fraction * (epoch - cfg.freeze_epochs + 1))


class TrainingDiverged(RuntimeError):
    """Raised when a loss turns non-finite; carries the offending report."""

    def __init__(self, message: str, report: dict):
        super().__init__(message)
        self.report = report


@dataclass
class LossReport:
    """Every objective term of one training step, plus bookkeeping.

    ``wall_clock`` is the only nondeterministic field; comparisons of runs
    go through :meth:`deterministic_dict`, which drops it.
    """

    step: int
    epoch: int
    phase: str
    lr_stage1: float
    lr_stage2: float
    g_total: float
    wall_clock: float
    d_loss_sketch: dict[str, float] | None = None
    d_loss_face: dict[str, float] | None = None
    g_adv_sketch: float | None = None
    g_adv_face: float | None = None
    kl_sketch: float | None = None
    kl_face: float | None = None
    d_gap_sketch: float | None = None
    d_gap_face: float | None = None

    def deterministic_dict(self) -> dict:
        payload = dataclasses.asdict(self)
        payload.pop("wall_clock")
        return payload

    def to_json_line(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json_line(cls, line: str) -> "LossReport":
        return cls(**json.loads(line))

    def finite(self) -> bool:
        for value in dataclasses.asdict(self).values():
            if isinstance(value, float) and not math.isfinite(value):
                return False
            if isinstance(value, dict) and any(not math.isfinite(v) for v in value.values()):
                return False
        return True

    @property
    def g_adv_total(self) -> float:
        return (self.g_adv_sketch or 0.0) + (self.g_adv_face or 0.0)


def _to_chw(stack: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(stack.transpose(0, 3, 1, 2)))


class Trainer:
    """Owns models, optimizers and the step loop for one training run."""

    def __init__(self, dataset: CuratedDataset, cfg: TrainConfig,
                 out_dir: str | Path | None = None,
                 phase_plan: list[tuple[str, int]] | None = None):
        if tuple(dataset.scales) != tuple(cfg.scales):
            raise ValueError(
                f"dataset scales {dataset.scales} do not match config scales {cfg.scales}"
            )
        if len(dataset) < cfg.batch_size:
            raise ValueError(
                f"dataset of {len(dataset)} samples is smaller than batch size {cfg.batch_size}"
            )
        self.cfg = cfg
        self.dataset = dataset
        self.phase_plan = phase_plan
        self.out_dir = Path(out_dir) if out_dir is not None else None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)

        torch.manual_seed(derive_seed(cfg.seed, "init"))
        d_width = cfg.d_base_channels or 2 * cfg.base_channels
        self.g_s = SketchGenerator(base_channels=cfg.base_channels, scales=cfg.scales)
        self.d_s = DiscriminatorSet(cfg.scales, self.g_s.attr_dim, base_channels=d_width)
        self.g_f = FaceGenerator(base_channels=cfg.base_channels, scales=cfg.scales)
        self.d_f = DiscriminatorSet(cfg.scales, self.g_f.attr_dim, base_channels=d_width)
        self.models = {"g_s": self.g_s, "d_s": self.d_s, "g_f": self.g_f, "d_f": self.d_f}
        betas = (cfg.adam_beta1, cfg.adam_beta2)
        d_scale = cfg.d_lr_scale
        self.optimizers = {
            "g_s": torch.optim.Adam(self.g_s.parameters(), lr=cfg.lr_stage1, betas=betas),
            "d_s": torch.optim.Adam(self.d_s.parameters(), lr=cfg.lr_stage1 * d_scale, betas=betas),
            "g_f": torch.optim.Adam(self.g_f.parameters(), lr=cfg.lr_stage2, betas=betas),
            "d_f": torch.optim.Adam(self.d_f.parameters(), lr=cfg.lr_stage2 * d_scale, betas=betas),
        }

        self.faces = {res: _to_chw(dataset.faces[res]) for res in cfg.scales}
        self.sketches = {res: _to_chw(dataset.sketches[res]) for res in cfg.scales}
        self.y_f = torch.from_numpy(dataset.y_f.copy())
        self.y_s = torch.from_numpy(dataset.y_s.copy())
        self.step = 0

    # ------------------------------------------------------------------ plan
    @property
    def steps_per_epoch(self) -> int:
        return len(self.dataset) // self.cfg.batch_size

    def phases(self) -> list[tuple[str, int]]:
        """(phase name, epoch count) pairs; staged mode pretrains stage 1."""
        if self.phase_plan is not None:
            return list(self.phase_plan)
        if self.cfg.pretrain_epochs > 0:
            return [("stage1", self.cfg.pretrain_epochs), ("stage2", self.cfg.epochs)]
        return [("joint", self.cfg.epochs)]

    def total_steps(self) -> int:
        return sum(epochs for _, epochs in self.phases()) * self.steps_per_epoch

    def plan_step(self, step: int) -> tuple[str, int, int, int]:
        """Map a 1-indexed step to (phase, phase epoch, global epoch, batch index)."""
        if step < 1:
            raise ValueError("steps are 1-indexed")
        done = step - 1
        global_epoch, batch_index = divmod(done, self.steps_per_epoch)
        epoch = global_epoch
        for phase, epochs in self.phases():
            if epoch < epochs:
                return phase, epoch, global_epoch, batch_index
            epoch -= epochs
        raise ValueError(f"step {step} beyond the configured schedule")

    def _batch_indices(self, global_epoch: int, batch_index: int) -> np.ndarray:
        rng = np.random.default_rng(derive_seed(self.cfg.seed, "order", global_epoch))
        order = rng.permutation(len(self.dataset))
        lo = batch_index * self.cfg.batch_size
        return order[lo : lo + self.cfg.batch_size]

    def _set_lr(self, epoch: int) -> tuple[float, float]:
        epoch = min(epoch, self.cfg.epochs - 1)
        lr1 = lr_schedule(epoch, self.cfg, self.cfg.lr_stage1)
        lr2 = lr_schedule(epoch, self.cfg, self.cfg.lr_stage2)
        d_scale = self.cfg.d_lr_scale
        roles = (("g_s", lr1), ("d_s", lr1 * d_scale), ("g_f", lr2), ("d_f", lr2 * d_scale))
        for name, lr in roles:
            for group in self.optimizers[name].param_groups:
                group["lr"] = lr
        return lr1, lr2

    # ------------------------------------------------------------------ step
    def train_step(self, step: int) -> LossReport:
        """One discriminator update (all scales) then one generator update."""
        cfg = self.cfg
        phase, phase_epoch, global_epoch, batch_index = self.plan_step(step)
        lr1, lr2 = self._set_lr(phase_epoch)
        train_sketch = phase in ("joint", "stage1")
        train_face = phase in ("joint", "stage2")

        idx = self._batch_indices(global_epoch, batch_index)
        batch = int(len(idx))
        if batch < 2:
            raise ValueError("batch size must be >= 2")
        idx_t = torch.from_numpy(idx.copy())
        y_s = self.y_s[idx_t]
        y_f = self.y_f[idx_t]

        mism_rng = np.random.default_rng(derive_seed(cfg.seed, "mismatch", step))
        wrong_s = np.array(
            [mismatch_index(self.dataset.y_s, self.dataset.y_s[i], mism_rng) for i in idx]
        )
        wrong_f = np.array(
            [mismatch_index(self.dataset.y_f, self.dataset.y_f[i], mism_rng) for i in idx]
        )
        noise_gen = torch.Generator().manual_seed(derive_seed(cfg.seed, "noise", step))
        z_s = torch.randn(batch, NOISE_DIM, generator=noise_gen)
        eps_s = torch.randn(batch, LATENT_DIM, generator=noise_gen)
        z_f = torch.randn(batch, NOISE_DIM, generator=noise_gen)
        eps_f = torch.randn(batch, LATENT_DIM, generator=noise_gen)

        self.g_s.train(train_sketch)
        self.g_f.train(train_face)
        self.d_s.train(train_sketch)
        self.d_f.train(train_face)

        sketch_pyr = emb_s = None
        if train_sketch or not cfg.ground_truth_sketch:
            sketch_pyr, emb_s = self.g_s(y_s, z_s, eps=eps_s)
        face_pyr = emb_f = None
        if train_face:
            if cfg.ground_truth_sketch:
                face_input = self.sketches[cfg.scales[-1]][idx_t]
            else:
                face_input = sketch_pyr[-1]
                if cfg.stop_sketch_gradient or phase == "stage2":
                    face_input = face_input.detach()
            face_pyr, emb_f = self.g_f(face_input, y_f, z_f, eps=eps_f)

        # Discriminator update on detached fakes.
        for name in ("d_s", "d_f"):
            self.optimizers[name].zero_grad(set_to_none=True)
        d_total = None
        d_loss_sketch = d_loss_face = None
        d_gap_sketch = d_gap_face = None
        if train_sketch:
            d_loss_sketch, d_gap_sketch, loss = self._discriminate_stage(
                self.d_s, self.sketches, idx_t, wrong_s, sketch_pyr, y_s
            )
            d_total = loss
        if train_face:
            d_loss_face, d_gap_face, loss = self._discriminate_stage(
                self.d_f, self.faces, idx_t, wrong_f, face_pyr, y_f
            )
            d_total = loss if d_total is None else d_total + loss
        assert d_total is not None
        d_total.backward()
        if train_sketch:
            self.optimizers["d_s"].step()
        if train_face:
            self.optimizers["d_f"].step()

        # Generator update against the freshly updated discriminators.
        for name in ("g_s", "g_f"):
            self.optimizers[name].zero_grad(set_to_none=True)
        adv_fn = generator_saturating_loss if cfg.saturating_generator_loss else generator_adv_loss
        g_total = None
        g_adv_sketch = g_adv_face = kl_sketch = kl_face = None
        if train_sketch:
            g_adv_s = adv_fn(self.d_s.judge(sketch_pyr, y_s))
            kl_s = kl_regularizer(emb_s.mu, emb_s.sigma)
            g_adv_sketch, kl_sketch = float(g_adv_s.detach()), float(kl_s.detach())
            g_total = g_adv_s + cfg.lambda_s * kl_s
        if train_face:
            g_adv_f = adv_fn(self.d_f.judge(face_pyr, y_f))
            kl_f = kl_regularizer(emb_f.mu, emb_f.sigma)
            g_adv_face, kl_face = float(g_adv_f.detach()), float(kl_f.detach())
            term = g_adv_f + cfg.lambda_f * kl_f
            g_total = term if g_total is None else g_total + term
        assert g_total is not None
        g_total.backward()
        if train_sketch:
            self.optimizers["g_s"].step()
        if train_face:
            self.optimizers["g_f"].step()

        report = LossReport(
            step=step,
            epoch=global_epoch,
            phase=phase,
            lr_stage1=lr1,
            lr_stage2=lr2,
            g_total=float(g_total.detach()),
            wall_clock=time.time(),
            d_loss_sketch=d_loss_sketch,
            d_loss_face=d_loss_face,
            g_adv_sketch=g_adv_sketch,
            g_adv_face=g_adv_face,
            kl_sketch=kl_sketch,
            kl_face=kl_face,
            d_gap_sketch=d_gap_sketch,
            d_gap_face=d_gap_face,
        )
        if not report.finite():
            snapshot = None
            if self.out_dir is not None:
                snapshot = self.save_checkpoints(step, tag="diverged")
            raise TrainingDiverged(
                f"non-finite loss at step {step}"
                + (f"; diagnostic snapshot in {snapshot}" if snapshot else ""),
                report.deterministic_dict(),
            )
        self.step = step
        return report

    def _discriminate_stage(self, d_set, real_stacks, idx_t, wrong_idx, fake_pyr, attrs):
        per_scale = {}
        gaps = []
        total = None
        wrong_t = torch.from_numpy(wrong_idx.copy())
        for level, fake in zip(self.cfg.scales, fake_pyr):
            member = d_set.members[str(level)]
            real_j = member(real_stacks[level][idx_t], attrs)
            fake_j = member(fake.detach(), attrs)
            wrong_j = member(real_stacks[level][wrong_t], attrs)
            loss = discriminator_loss(real_j, fake_j, wrong_j)
            per_scale[str(level)] = float(loss.detach())
            gaps.append(float((real_j.realness.mean() - fake_j.realness.mean()).detach()))
            total = loss if total is None else total + loss
        return per_scale, float(np.mean(gaps)), total

    # ----------------------------------------------------------- persistence
    def save_checkpoints(self, step: int, tag: str | None = None) -> Path:
        """Write the stage-1/stage-2 checkpoint pair; returns the directory."""
        if self.out_dir is None:
            raise ValueError("trainer has no output directory")
        label = tag if tag is not None else f"{step:06d}"
        stage1 = self.out_dir / f"stage1-{label}.ckpt"
        stage2 = self.out_dir / f"stage2-{label}.ckpt"
        h1 = save_checkpoint(
            stage1, "sketch", step, self.cfg,
            {"g_s": self.g_s, "d_s": self.d_s},
            {"g_s": self.optimizers["g_s"], "d_s": self.optimizers["d_s"]},
        )
        save_checkpoint(
            stage2, "face", step, self.cfg,
            {"g_f": self.g_f, "d_f": self.d_f},
            {"g_f": self.optimizers["g_f"], "d_f": self.optimizers["d_f"]},
            extra={"stage1_hash": h1},
        )
        return self.out_dir

    def restore(self, stage1: CheckpointBundle, stage2: CheckpointBundle) -> None:
        """Load a checkpoint pair; config hashes must match this trainer's."""
        own = config_hash(self.cfg)
        for bundle in (stage1, stage2):
            if bundle.config_hash != own:
                raise ValueError(
                    "checkpoint config hash does not match the requested config; "
                    "resume with the original configuration"
                )
        if stage1.step != stage2.step:
            raise ValueError(
                f"checkpoint pair disagrees on step: {stage1.step} vs {stage2.step}"
            )
        stage1.restore_module("g_s", self.g_s)
        stage1.restore_module("d_s", self.d_s)
        stage2.restore_module("g_f", self.g_f)
        stage2.restore_module("d_f", self.d_f)
        stage1.restore_optimizer("g_s", self.optimizers["g_s"], self.g_s)
        stage1.restore_optimizer("d_s", self.optimizers["d_s"], self.d_s)
        stage2.restore_optimizer("g_f", self.optimizers["g_f"], self.g_f)
        stage2.restore_optimizer("d_f", self.optimizers["d_f"], self.d_f)
        self.step = stage1.step


def find_checkpoint_pair(run_dir: str | Path, step: int | None = None) -> tuple[Path, Path]:
    """Locate the stage-1/stage-2 pair in a run directory (latest by default)."""
    run_dir = Path(run_dir)
    stage1s = sorted(run_dir.glob("stage1-[0-9]*.ckpt"))
    if not stage1s:
        raise FileNotFoundError(f"no stage-1 checkpoints under {run_dir}")
    if step is not None:
        stage1 = run_dir / f"stage1-{step:06d}.ckpt"
        if not stage1.exists():
            raise FileNotFoundError(f"no checkpoint for step {step} under {run_dir}")
    else:
        stage1 = stage1s[-1]
    stage2 = Path(str(stage1).replace("stage1-", "stage2-"))
    if not stage2.exists():
        raise FileNotFoundError(f"checkpoint pair incomplete: {stage2} missing")
    return stage1, stage2


def run_training(
    cfg: TrainConfig,
    dataset: CuratedDataset,
    out_dir: str | Path,
    total_steps: int | None = None,
    resume_from: str | Path | None = None,
    checkpoint_every: int | None = None,
    log_every: int = 50,
    phase_plan: list[tuple[str, int]] | None = None,
    stage1_init: str | Path | None = None,
) -> Trainer:
    """Drive a training run end to end, writing metrics and checkpoints.

    ``resume_from`` names a run directory holding a checkpoint pair; the
    resumed config must hash identically to ``cfg``.  Checkpoints are
    written every ``checkpoint_every`` steps (config default) and at the
    final step; the metrics log is appended one JSON record per step.
    ``phase_plan`` overrides the schedule (single-stage verbs) and
    ``stage1_init`` seeds the sketch stage from an existing checkpoint.
    """
    out_dir = Path(out_dir)
    trainer = Trainer(dataset, cfg, out_dir=out_dir, phase_plan=phase_plan)
    if stage1_init is not None:
        bundle = load_checkpoint(stage1_init)
        bundle.restore_module("g_s", trainer.g_s)
        if "d_s" in bundle.model_arrays:
            bundle.restore_module("d_s", trainer.d_s)
        log.info("sketch stage initialized from %s (step %d)", stage1_init, bundle.step)
    if resume_from is not None:
        stage1, stage2 = find_checkpoint_pair(resume_from)
        trainer.restore(load_checkpoint(stage1), load_checkpoint(stage2))
        log.info("resumed from %s at step %d", resume_from, trainer.step)
    if total_steps is None:
        total_steps = trainer.total_steps()
    if checkpoint_every is None:
        checkpoint_every = cfg.checkpoint_every
    metrics_path = out_dir / "metrics.jsonl"
    with open(metrics_path, "a") as metrics:
        for step in range(trainer.step + 1, total_steps + 1):
            report = trainer.train_step(step)
            metrics.write(report.to_json_line() + "\n")
            if checkpoint_every and step % checkpoint_every == 0:
                trainer.save_checkpoints(step)
            if log_every and (step % log_every == 0 or step == total_steps):
                log.info(
                    "step %d/%d phase=%s g_total=%.4f g_adv=%.4f",
                    step, total_steps, report.phase, report.g_total, report.g_adv_total,
                )
    trainer.save_checkpoints(trainer.step)
    return trainer
