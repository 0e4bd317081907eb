"""Unpaired stage-2 training: two generators, two discriminators and two
temporal predictors, updated discriminators -> predictors -> generators.

Domain a is the source (human) stream, domain b the target (animated)
stream; gen_ab translates a->b. Predictors are fitted on real frames of
their own domain only, and the recycle term routes translated frames
through the opposite predictor before mapping them back.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from ..checkpoints import load_checkpoint, latest_checkpoint, save_checkpoint
from ..config import PipelineConfig
from ..errors import TrainingDivergedError, ValidationError
from ..landmarks import EyeLandmarkHead
from ..media import TalkingClip
from ..torchutil import image_to_tensor, seed_all
from ..stage1.trainer import LossBundle, OptimizerSettings, lr_schedule
from .losses import (
    Stage2LossWeights,
    cam_loss,
    identity_loss,
    lip_sync_loss,
    lsgan_loss,
    predictor_loss,
    recycle_loss,
    stage2_blink_loss,
)
from .networks import (
    Stage2Config,
    Stage2Discriminator,
    TemporalPredictor,
    TranslationGenerator,
    clip_rho,
)

# checkpoint archive names, source domain = s = a, target domain = t = b
CHECKPOINT_NETWORKS = ("gen_s2t", "gen_t2s", "disc_t", "disc_s", "predictor_s", "predictor_t")


def stage2_network_config(config: PipelineConfig) -> Stage2Config:
    return Stage2Config(
        resolution=config["resolution"],
        base_channels=config["stage2.base_channels"],
        n_res_blocks=config["stage2.n_res_blocks"],
        past_frames=config["stage2.past_frames"],
        disc_channels=config["stage2.disc_channels"],
    )


@dataclass
class Stage2Batch:
    frames_a: torch.Tensor  # (t+1, 3, R, R) in [-1, 1]
    frames_b: torch.Tensor


class Stage2Dataset:
    """Two ordered unpaired streams, sampled as contiguous t+1 windows."""

    def __init__(self, stream_a: list[TalkingClip], stream_b: list[TalkingClip],
                 config: Stage2Config):
        self.config = config
        window = config.past_frames + 1
        self.windows_needed = window
        self.domain_a = self._prepare(stream_a, "a")
        self.domain_b = self._prepare(stream_b, "b")

    def _prepare(self, clips: list[TalkingClip], label: str) -> list[torch.Tensor]:
        usable = []
        for clip in clips:
            if not clip.has_temporal_window(self.windows_needed):
                continue  # too short for temporal losses; make_unpaired_streams accepted it
            usable.append(torch.cat([image_to_tensor(f) for f in clip.frames], dim=0))
        if not usable:
            raise ValidationError(
                f"domain {label} has no clip with >= {self.windows_needed} frames"
            )
        return usable

    def sample(self, rng: np.random.Generator) -> Stage2Batch:
        window = self.windows_needed
        frames = []
        for domain in (self.domain_a, self.domain_b):
            clip = domain[int(rng.integers(0, len(domain)))]
            start = int(rng.integers(0, clip.shape[0] - window + 1))
            frames.append(clip[start:start + window])
        return Stage2Batch(frames_a=frames[0], frames_b=frames[1])


class Stage2Trainer:
    def __init__(self, dataset: Stage2Dataset, config: PipelineConfig, out_dir=None,
                 landmark_provider=None):
        self.dataset = dataset
        self.pipeline_config = config
        self.net_config = dataset.config
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.landmark_provider = landmark_provider
        self.weights = Stage2LossWeights(
            lambda_cam=config["stage2.lambda_cam"],
            lambda_recycle=config["stage2.lambda_recycle"],
            lambda_identity=config["stage2.lambda_identity"],
            lambda_lip=config["stage2.lambda_lip"],
            lambda_bl=config["stage2.lambda_bl"],
        )
        self.settings = OptimizerSettings(
            learning_rate=config["stage2.lr"],
            beta1=config["stage2.beta1"],
            beta2=config["stage2.beta2"],
            constant_epochs=config["stage2.constant_epochs"],
            decay_epochs=config["stage2.decay_epochs"],
        )
        self.identity_on_source = config["stage2.identity_on_source"]
        seed_all(config["seed"])
        cfg = self.net_config
        self.gen_ab = TranslationGenerator(cfg)
        self.gen_ba = TranslationGenerator(cfg)
        self.disc_b = Stage2Discriminator(cfg)
        self.disc_a = Stage2Discriminator(cfg)
        self.pred_a = TemporalPredictor(cfg)
        self.pred_b = TemporalPredictor(cfg)
        self.landmark_head = EyeLandmarkHead(cfg.resolution)
        self.head_optimizer = torch.optim.Adam(self.landmark_head.parameters(), lr=1e-3)
        betas = (self.settings.beta1, self.settings.beta2)
        lr = self.settings.learning_rate
        self.optimizers = {
            "gen_s2t": torch.optim.Adam(self.gen_ab.parameters(), lr=lr, betas=betas),
            "gen_t2s": torch.optim.Adam(self.gen_ba.parameters(), lr=lr, betas=betas),
            "disc_t": torch.optim.Adam(self.disc_b.parameters(), lr=lr, betas=betas),
            "disc_s": torch.optim.Adam(self.disc_a.parameters(), lr=lr, betas=betas),
            "predictor_s": torch.optim.Adam(self.pred_a.parameters(), lr=lr, betas=betas),
            "predictor_t": torch.optim.Adam(self.pred_b.parameters(), lr=lr, betas=betas),
        }
        self.step_count = 0

    def networks(self) -> dict[str, nn.Module]:
        return {
            "gen_s2t": self.gen_ab,
            "gen_t2s": self.gen_ba,
            "disc_t": self.disc_b,
            "disc_s": self.disc_a,
            "predictor_s": self.pred_a,
            "predictor_t": self.pred_b,
        }

    # ------------------------------------------------------------------ step
    def train_step(self, batch: Stage2Batch) -> LossBundle:
        t = self.net_config.past_frames
        a_frames = batch.frames_a
        b_frames = batch.frames_b
        if a_frames.shape[0] != t + 1 or b_frames.shape[0] != t + 1:
            raise ValidationError(
                f"batches must be {t + 1}-frame windows, got {a_frames.shape[0]} and {b_frames.shape[0]}"
            )
        a_last = a_frames[-1:].contiguous()
        b_last = b_frames[-1:].contiguous()
        values: dict[str, float] = {}

        # -- discriminators
        with torch.no_grad():
            fake_b, _, _ = self.gen_ab(a_last)
            fake_a, _, _ = self.gen_ba(b_last)
        for name, disc, opt_name, real, fake in (
            ("d_t", self.disc_b, "disc_t", b_last, fake_b),
            ("d_s", self.disc_a, "disc_s", a_last, fake_a),
        ):
            real_scores, real_cams = disc(real)
            fake_scores, fake_cams = disc(fake)
            adv = lsgan_loss(real_scores, fake_scores, "discriminator")
            cam = sum(
                cam_loss(rc, fc, side="discriminator")
                for rc, fc in zip(real_cams, fake_cams)
            )
            loss = adv + self.weights.lambda_cam * cam
            self._check_finite(f"lsgan_{name}", adv)
            self._check_finite(f"cam_{name}", cam)
            optimizer = self.optimizers[opt_name]
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            values[f"lsgan_{name}"] = float(adv.detach())
            values[f"cam_{name}"] = float(cam.detach())

        # -- temporal predictors, real frames of their own domain only
        for name, predictor, opt_name, frames in (
            ("pred_s", self.pred_a, "predictor_s", a_frames),
            ("pred_t", self.pred_b, "predictor_t", b_frames),
        ):
            loss = predictor_loss(list(frames.unsqueeze(1)), predictor, t)
            self._check_finite(name, loss)
            optimizer = self.optimizers[opt_name]
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            values[name] = float(loss.detach())

        # -- landmark head regression for the blink term
        if self.landmark_provider is not None and self.weights.lambda_bl > 0:
            real = torch.cat([a_last, b_last], dim=0)
            targets = torch.stack([
                torch.as_tensor(np.asarray(
                    self.landmark_provider((frame.permute(1, 2, 0).numpy() + 1.0) / 2.0),
                    dtype=np.float32,
                ))
                for frame in real
            ])
            predicted = self.landmark_head((real + 1.0) / 2.0)
            head_loss = ((predicted - targets) ** 2).mean()
            self.head_optimizer.zero_grad()
            head_loss.backward()
            self.head_optimizer.step()

        # -- generators, both directions in one objective
        losses: dict[str, torch.Tensor] = {}
        fake_b, cam_ab_fwd, _ = self.gen_ab(a_last)
        fake_a, cam_ba_fwd, _ = self.gen_ba(b_last)
        losses["gan_ab"] = lsgan_loss(None, self.disc_b(fake_b)[0], "generator")
        losses["gan_ba"] = lsgan_loss(None, self.disc_a(fake_a)[0], "generator")
        _, cam_ab_idt, _ = self.gen_ab(b_last)
        _, cam_ba_idt, _ = self.gen_ba(a_last)
        losses["cam_ab"] = cam_loss(cam_ab_fwd, cam_ab_idt, side="generator")
        losses["cam_ba"] = cam_loss(cam_ba_fwd, cam_ba_idt, side="generator")
        if self.identity_on_source:
            # alternative convention: source-domain frames through the
            # forward generator instead of each generator's own domain
            losses["identity_a"] = identity_loss(a_last, self.gen_ab)
            losses["identity_b"] = identity_loss(b_last, self.gen_ba)
        else:
            losses["identity_a"] = identity_loss(a_last, self.gen_ba)
            losses["identity_b"] = identity_loss(b_last, self.gen_ab)
        losses["recycle_a"] = recycle_loss(list(a_frames.unsqueeze(1)), self.gen_ab,
                                           self.gen_ba, self.pred_b)
        losses["recycle_b"] = recycle_loss(list(b_frames.unsqueeze(1)), self.gen_ba,
                                           self.gen_ab, self.pred_a)
        losses["lip_a"] = lip_sync_loss(a_last, self.gen_ab, self.gen_ba)
        losses["lip_b"] = lip_sync_loss(b_last, self.gen_ba, self.gen_ab)
        cycled_a = self.gen_ba(self.gen_ab(a_last)[0])[0]
        cycled_b = self.gen_ab(self.gen_ba(b_last)[0])[0]
        losses["bl_a"] = stage2_blink_loss((a_last + 1.0) / 2.0, (cycled_a + 1.0) / 2.0,
                                           self.landmark_head)
        losses["bl_b"] = stage2_blink_loss((b_last + 1.0) / 2.0, (cycled_b + 1.0) / 2.0,
                                           self.landmark_head)
        w = self.weights
        objective = (
            losses["gan_ab"] + losses["gan_ba"]
            + w.lambda_cam * (losses["cam_ab"] + losses["cam_ba"])
            + w.lambda_recycle * (losses["recycle_a"] + losses["recycle_b"])
            + w.lambda_identity * (losses["identity_a"] + losses["identity_b"])
            + w.lambda_lip * (losses["lip_a"] + losses["lip_b"])
            + w.lambda_bl * (losses["bl_a"] + losses["bl_b"])
        )
        for name, value in losses.items():
            self._check_finite(name, value)
        self.optimizers["gen_s2t"].zero_grad()
        self.optimizers["gen_t2s"].zero_grad()
        objective.backward()
        self.optimizers["gen_s2t"].step()
        self.optimizers["gen_t2s"].step()
        clip_rho(self.gen_ab)
        clip_rho(self.gen_ba)

        self.step_count += 1
        values.update({name: float(value.detach()) for name, value in losses.items()})
        values["recycle"] = 0.5 * (values["recycle_a"] + values["recycle_b"])
        values["g_objective"] = float(objective.detach())
        return LossBundle(values, "stage2")

    def _check_finite(self, name: str, value) -> None:
        scalar = float(value.detach()) if isinstance(value, torch.Tensor) else float(value)
        if scalar != scalar or scalar in (float("inf"), float("-inf")):
            raise TrainingDivergedError(
                f"NaN/inf in loss '{name}' at step {self.step_count}; aborting step"
            )

    # ----------------------------------------------------------------- epoch
    def _epoch_seed(self, epoch: int) -> int:
        return (self.pipeline_config["seed"] * 90_001 + epoch + 7) % (2 ** 31)

    def run_epoch(self, epoch: int) -> dict[str, float]:
        seed_all(self._epoch_seed(epoch))
        rng = np.random.default_rng(self._epoch_seed(epoch))
        lr = lr_schedule(epoch, self.settings)
        for optimizer in self.optimizers.values():
            for group in optimizer.param_groups:
                group["lr"] = lr
        steps = self.pipeline_config["stage2.steps_per_epoch"] or max(
            len(self.dataset.domain_a), len(self.dataset.domain_b)
        )
        sums: dict[str, float] = {}
        for _ in range(steps):
            values = self.train_step(self.dataset.sample(rng))
            for name, value in values.items():
                sums[name] = sums.get(name, 0.0) + value
        return {name: total / steps for name, total in sums.items()}

    def train(self, resume: bool = False, stop_after_epochs: int | None = None) -> list[Path]:
        if self.out_dir is None:
            raise ValidationError("trainer needs an out_dir to write checkpoints")
        self.out_dir.mkdir(parents=True, exist_ok=True)
        checkpoint_dir = self.out_dir / "checkpoints"
        log_path = self.out_dir / "losses.csv"
        start_epoch = 0
        if resume:
            latest = latest_checkpoint(checkpoint_dir)
            if latest is not None:
                state = load_checkpoint(latest, self.networks(), self.optimizers,
                                        expected_config_hash=self.pipeline_config.hash())
                self.step_count = int(state.get("step", 0))
                start_epoch = int(state.get("epoch", -1)) + 1
        paths = []
        new_log = not (resume and log_path.exists())
        with open(log_path, "w" if new_log else "a", newline="") as handle:
            writer = csv.writer(handle)
            if new_log:
                writer.writerow(["epoch", "phase", "loss_name", "value"])
            for epoch in range(start_epoch, self.pipeline_config["stage2.epochs"]):
                if stop_after_epochs is not None and epoch - start_epoch >= stop_after_epochs:
                    break
                means = self.run_epoch(epoch)
                for name in sorted(means):
                    writer.writerow([epoch, "stage2", name, f"{means[name]:.10g}"])
                handle.flush()
                state = {
                    "config_hash": self.pipeline_config.hash(),
                    "step": str(self.step_count),
                    "epoch": str(epoch),
                }
                paths.append(save_checkpoint(checkpoint_dir, epoch, self.networks(),
                                             self.optimizers, state))
        return paths
