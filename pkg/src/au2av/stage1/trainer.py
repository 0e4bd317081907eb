"""Curriculum-phased training for stage 1 plus inference-time adaptation.

Training runs in three phases. Phase 1 trains the generator against the
frame discriminator with feature-matching and perceptual terms; once those
losses stabilize, phase 2 adds the temporal discriminator, the frozen
synchronization encoder, reconstruction on the lower face and the
contrastive term; phase 3 finally adds the blink term. Stabilization means
the moving-average slope of every active loss has flattened out.

The synchronization encoder is pretrained on real genuine/mismatched pairs
with the contrastive loss and then frozen; an optional flag re-enables its
updates during the adversarial phases.
"""

from __future__ import annotations

import copy
import csv
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from ..checkpoints import load_checkpoint, latest_checkpoint, save_checkpoint
from ..config import PipelineConfig
from ..errors import TrainingDivergedError, ValidationError
from ..landmarks import EyeLandmarkHead, eye_aspect_ratio
from ..media import TalkingClip, slice_audio_windows, frame_audio_windows
from ..torchutil import image_to_tensor, seed_all
from .losses import (
    PHASE_ACTIVE_LOSSES,
    Stage1LossWeights,
    adversarial_loss,
    blink_loss,
    contrastive_loss,
    feature_matching_loss,
    perceptual_loss,
    reconstruction_loss_lower,
    stage1_objective,
    temporal_adversarial_loss,
)
from .networks import (
    FrameDiscriminator,
    Stage1Config,
    Stage1Generator,
    SyncEncoder,
    TemporalDiscriminator,
    stack_frame_window,
)

WINDOW_FRAMES = 5  # batch window shared by the temporal and sync paths

CHECKPOINT_NETWORKS = ("generator", "frame_d", "temporal_d", "sync_d")


class LossBundle(Mapping):
    """Named scalar losses from one training step, tagged with the phase
    (or stage label) that gated them."""

    def __init__(self, values: dict[str, float], phase):
        self._values = dict(values)
        self.phase = phase

    def __getitem__(self, name: str) -> float:
        return self._values[name]

    def __iter__(self):
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}={v:.4g}" for k, v in self._values.items())
        return f"LossBundle(phase={self.phase!r}, {inner})"


def stage1_network_config(config: PipelineConfig) -> Stage1Config:
    return Stage1Config(
        resolution=config["resolution"],
        base_channels=config["stage1.base_channels"],
        embedding_dim=config["stage1.embedding_dim"],
        temporal_window=config["stage1.temporal_window"],
        sync_dim=config["stage1.sync_dim"],
        sync_resolution=config["stage1.sync_resolution"],
        sync_channels=config["stage1.sync_channels"],
        disc_channels=config["stage1.disc_channels"],
        disc_layers=config["stage1.disc_layers"],
    )


@dataclass
class OptimizerSettings:
    learning_rate: float = 0.002
    beta1: float = 0.0
    beta2: float = 0.90
    constant_epochs: int = 50
    decay_epochs: int = 100

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError(f"learning rate must be positive, got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not (0.0 <= value < 1.0):
                raise ValidationError(f"{name} must be in [0, 1), got {value}")


def lr_schedule(epoch: int, settings: OptimizerSettings) -> float:
    """Constant for the first epochs, then linear decay to zero."""
    if epoch < 0:
        raise ValidationError(f"epoch must be >= 0, got {epoch}")
    if epoch < settings.constant_epochs:
        return settings.learning_rate
    progress = (epoch - settings.constant_epochs) / settings.decay_epochs
    return settings.learning_rate * max(0.0, 1.0 - progress)


def stabilization_check(history, epsilon: float, patience: int) -> bool:
    """True when the least-squares slope of the last `patience` values is
    flatter than epsilon (loss units per epoch)."""
    series = np.asarray(list(history), dtype=np.float64)
    if series.size < patience:
        raise ValidationError(f"history of {series.size} values is shorter than patience {patience}")
    window = series[-patience:]
    x = np.arange(patience, dtype=np.float64)
    slope = np.polyfit(x, window, 1)[0] if patience > 1 else 0.0
    return bool(abs(slope) < epsilon)


@dataclass
class CurriculumState:
    """Phase, per-loss history and the monotone advancement rule."""

    phase: int = 1
    epoch: int = 0
    loss_history: dict[str, list[float]] = field(default_factory=dict)

    @property
    def active_losses(self) -> frozenset[str]:
        return PHASE_ACTIVE_LOSSES[self.phase]

    def record(self, epoch_losses: dict[str, float]) -> None:
        for name, value in epoch_losses.items():
            self.loss_history.setdefault(name, []).append(float(value))
        self.epoch += 1

    def should_advance(self, rel_epsilon: float, patience: int) -> bool:
        if self.phase >= 3:
            return False
        for name in sorted(self.active_losses):
            series = self.loss_history.get(name, [])
            if len(series) < patience:
                return False
            window = np.asarray(series[-patience:])
            epsilon = rel_epsilon * max(abs(float(window.mean())), 1e-12)
            if not stabilization_check(series, epsilon, patience):
                return False
        return True

    def advance(self) -> None:
        if self.phase < 3:
            self.phase += 1

    def serialize(self) -> dict[str, str]:
        state = {"phase": str(self.phase), "epoch": str(self.epoch)}
        for name, series in sorted(self.loss_history.items()):
            state[f"history.{name}"] = ",".join(f"{v:.10g}" for v in series)
        return state

    @classmethod
    def deserialize(cls, state: dict[str, str]) -> "CurriculumState":
        history = {}
        for key, value in state.items():
            if key.startswith("history.") and value:
                history[key[len("history."):]] = [float(v) for v in value.split(",")]
        return cls(phase=int(state["phase"]), epoch=int(state["epoch"]), loss_history=history)


@dataclass
class Stage1Batch:
    """One training sample: a 5-frame window of a clip with its audio."""

    identity: torch.Tensor       # (1, 3, R, R) in [-1, 1]
    real_frames: torch.Tensor    # (5, 3, R, R) in [-1, 1]
    mfcc_windows: torch.Tensor   # (5, T, 13)
    sync_audio: torch.Tensor     # (5, chunk_samples)
    mismatched_audio: torch.Tensor | None = None
    landmarks: torch.Tensor | None = None  # (5, 6, 2) provider output on real frames


class Stage1Dataset:
    """Prepared clips ready for window sampling.

    Every clip needs audio and at least WINDOW_FRAMES frames; the identity
    image is the pose-selected aligned frame (stored identity.png when the
    clip was prepared, otherwise the first frame).
    """

    def __init__(self, clips: list[TalkingClip], config: Stage1Config,
                 landmark_provider=None, fps: float | None = None,
                 identity_frames: list[np.ndarray] | None = None):
        if not clips:
            raise ValidationError("dataset has no clips")
        self.config = config
        self.entries = []
        for k, clip in enumerate(clips):
            if clip.audio is None:
                raise ValidationError(f"clip {clip.name!r} has no audio; stage 1 needs aligned audio")
            if not clip.has_temporal_window(WINDOW_FRAMES):
                raise ValidationError(
                    f"clip {clip.name!r} has {len(clip.frames)} frames; needs >= {WINDOW_FRAMES}"
                )
            rate = fps or clip.fps
            sequence = frame_audio_windows(clip.audio, rate)
            raw = slice_audio_windows(clip.audio, rate)
            n = min(len(clip.frames), len(sequence))
            if n < WINDOW_FRAMES:
                raise ValidationError(f"clip {clip.name!r}: only {n} aligned frame/audio pairs")
            identity = identity_frames[k] if identity_frames is not None else clip.frames[0]
            frames = torch.cat([image_to_tensor(f) for f in clip.frames[:n]], dim=0)
            mfcc = torch.stack([
                torch.from_numpy(sequence.windows[i].coefficients) for i in range(n)
            ])
            landmarks = None
            if landmark_provider is not None:
                landmarks = torch.stack([
                    torch.as_tensor(np.asarray(landmark_provider(clip.frames[i]), dtype=np.float32))
                    for i in range(n)
                ])
            self.entries.append({
                "identity": image_to_tensor(identity),
                "frames": frames,
                "mfcc": mfcc,
                "raw_audio": torch.from_numpy(raw[:n]),
                "landmarks": landmarks,
                "n": n,
                "name": clip.name,
            })

    def __len__(self) -> int:
        return len(self.entries)

    def sample_window(self, clip_index: int, rng: np.random.Generator,
                      with_landmarks: bool) -> Stage1Batch:
        entry = self.entries[clip_index]
        n = entry["n"]
        start = int(rng.integers(0, n - WINDOW_FRAMES + 1))
        center = start + WINDOW_FRAMES // 2
        mismatch_center = (center + max(1, n // 2)) % n
        landmarks = None
        if with_landmarks:
            if entry["landmarks"] is None:
                raise ValidationError(
                    f"clip {entry['name']!r} has no landmarks but the blink loss is active"
                )
            landmarks = entry["landmarks"][start:start + WINDOW_FRAMES]
        chunks = self.config.audio_chunks
        return Stage1Batch(
            identity=entry["identity"],
            real_frames=entry["frames"][start:start + WINDOW_FRAMES],
            mfcc_windows=entry["mfcc"][start:start + WINDOW_FRAMES],
            sync_audio=entry["raw_audio"][center].reshape(chunks, -1),
            mismatched_audio=entry["raw_audio"][mismatch_center].reshape(chunks, -1),
            landmarks=landmarks,
        )


def lower_half_sync_input(frames: torch.Tensor) -> torch.Tensor:
    """(5, 3, H, W) frames -> (1, 5, 3, H/2, W) lower halves."""
    h = frames.shape[-2]
    return frames[:, :, h // 2:, :].unsqueeze(0)


class Stage1Trainer:
    """Owns the four stage-1 networks, their optimizers and the curriculum."""

    def __init__(self, dataset: Stage1Dataset, config: PipelineConfig,
                 perceptual_provider, out_dir=None):
        self.dataset = dataset
        self.pipeline_config = config
        self.net_config = dataset.config
        self.perceptual = perceptual_provider
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.weights = Stage1LossWeights(
            lambda_fm=config["stage1.lambda_fm"],
            lambda_pl=config["stage1.lambda_pl"],
            lambda_cl=config["stage1.lambda_cl"],
            lambda_bl=config["stage1.lambda_bl"],
            margin=config["stage1.margin"],
        )
        self.settings = OptimizerSettings(
            learning_rate=config["stage1.lr"],
            beta1=config["stage1.beta1"],
            beta2=config["stage1.beta2"],
            constant_epochs=config["stage1.constant_epochs"],
            decay_epochs=config["stage1.decay_epochs"],
        )
        seed_all(config["seed"])
        self.generator = Stage1Generator(self.net_config)
        self.frame_d = FrameDiscriminator(self.net_config)
        self.temporal_d = TemporalDiscriminator(self.net_config)
        self.sync_d = SyncEncoder(self.net_config)
        self.landmark_head = EyeLandmarkHead(self.net_config.resolution)
        betas = (self.settings.beta1, self.settings.beta2)
        lr = self.settings.learning_rate
        self.optimizers = {
            "generator": torch.optim.Adam(self.generator.parameters(), lr=lr, betas=betas),
            "frame_d": torch.optim.Adam(self.frame_d.parameters(), lr=lr, betas=betas),
            "temporal_d": torch.optim.Adam(self.temporal_d.parameters(), lr=lr, betas=betas),
            "sync_d": torch.optim.Adam(self.sync_d.parameters(), lr=lr, betas=betas),
        }
        self.head_optimizer = torch.optim.Adam(self.landmark_head.parameters(), lr=1e-3)
        self.curriculum = CurriculumState()
        self.step_count = 0
        self.sync_pretrained = False

    # ------------------------------------------------------------------ sync
    def pretrain_sync(self, steps: int | None = None, rng: np.random.Generator | None = None) -> None:
        """Contrastive pretraining of the sync encoder on real pairs; the
        encoder is frozen afterwards unless stage1.sync_adversarial is set."""
        steps = self.pipeline_config["stage1.sync_pretrain_steps"] if steps is None else steps
        rng = rng or np.random.default_rng(self.pipeline_config["seed"])
        optimizer = self.optimizers["sync_d"]
        for _ in range(steps):
            batch = self.dataset.sample_window(int(rng.integers(0, len(self.dataset))), rng,
                                               with_landmarks=False)
            genuine = self.sync_d(lower_half_sync_input(batch.real_frames), batch.sync_audio.unsqueeze(0))
            mismatched = self.sync_d(lower_half_sync_input(batch.real_frames),
                                     batch.mismatched_audio.unsqueeze(0))
            loss = contrastive_loss([genuine, mismatched], [1.0, 0.0], self.weights.margin)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        self.sync_pretrained = True
        if not self.pipeline_config["stage1.sync_adversarial"]:
            for p in self.sync_d.parameters():
                p.requires_grad_(False)

    # ------------------------------------------------------------------ step
    def _generate_window(self, batch: Stage1Batch) -> torch.Tensor:
        frames = []
        for i in range(batch.real_frames.shape[0]):
            embedding = self.generator.encoder(batch.mfcc_windows[i].unsqueeze(0))
            frames.append(self.generator(batch.identity, embedding))
        return torch.cat(frames, dim=0)

    def train_step(self, batch: Stage1Batch) -> LossBundle:
        """One discriminator update then one generator update; returns the
        named loss values of this step."""
        phase = self.curriculum.phase
        active = PHASE_ACTIVE_LOSSES[phase]
        if "bl" in active and batch.landmarks is None:
            raise ValidationError("phase 3 batches must carry landmarks for the blink loss")
        identity = batch.identity
        real = batch.real_frames
        values: dict[str, float] = {}

        # -- discriminators
        with torch.no_grad():
            fake_detached = self._generate_window(batch)
        d_loss = 0.0
        gan_d = 0.0
        for i in range(real.shape[0]):
            out_real = self.frame_d.discriminate(real[i:i + 1], identity)
            out_fake = self.frame_d.discriminate(fake_detached[i:i + 1], identity)
            gan_d = gan_d + adversarial_loss(out_real.score_maps, out_fake.score_maps, "discriminator")
        gan_d = gan_d / real.shape[0]
        self._check_finite("gan_d", gan_d)
        values["gan_d"] = float(gan_d.detach())
        d_loss = gan_d
        if "tal" in active:
            window_real = stack_frame_window(list(real.unsqueeze(1)))
            window_fake = stack_frame_window(list(fake_detached.unsqueeze(1)))
            tal_d = temporal_adversarial_loss(
                [self.temporal_d.discriminate(window_real).score_maps],
                [self.temporal_d.discriminate(window_fake).score_maps],
                side="discriminator",
            )
            self._check_finite("tal_d", tal_d)
            values["tal_d"] = float(tal_d.detach())
            d_loss = d_loss + tal_d
        self.optimizers["frame_d"].zero_grad()
        self.optimizers["temporal_d"].zero_grad()
        d_loss.backward()
        self.optimizers["frame_d"].step()
        if "tal" in active:
            self.optimizers["temporal_d"].step()

        # -- landmark head regression on real frames (keeps blink term live)
        if "bl" in active:
            predicted = self.landmark_head((real + 1.0) / 2.0)
            head_loss = ((predicted - batch.landmarks) ** 2).mean()
            self._check_finite("landmark_head", head_loss)
            self.head_optimizer.zero_grad()
            head_loss.backward()
            self.head_optimizer.step()

        # -- generator
        fake = self._generate_window(batch)
        losses: dict[str, torch.Tensor] = {}
        gan_g = 0.0
        fm = 0.0
        pl = 0.0
        for i in range(real.shape[0]):
            out_real = self.frame_d.discriminate(real[i:i + 1], identity)
            out_fake = self.frame_d.discriminate(fake[i:i + 1], identity)
            gan_g = gan_g + adversarial_loss(None, out_fake.score_maps, "generator")
            fm = fm + feature_matching_loss(
                [[f.detach() for f in scale] for scale in out_real.features],
                out_fake.features,
            )
            pl = pl + perceptual_loss(real[i:i + 1], fake[i:i + 1], self.perceptual)
        n = real.shape[0]
        losses["gan"] = gan_g / n
        losses["fm"] = fm / n
        losses["pl"] = pl / n
        if "rl" in active:
            losses["rl"] = reconstruction_loss_lower(real, fake)
        if "tal" in active:
            window_fake = stack_frame_window(list(fake.unsqueeze(1)))
            losses["tal"] = temporal_adversarial_loss(
                [], [self.temporal_d.discriminate(window_fake).score_maps], side="generator",
            )
        sync_finetuning = (
            "cl" in active and self.pipeline_config["stage1.sync_adversarial"]
            and any(p.requires_grad for p in self.sync_d.parameters())
        )
        if "cl" in active:
            pair = self.sync_d(lower_half_sync_input(fake), batch.sync_audio.unsqueeze(0))
            losses["cl"] = contrastive_loss([pair], [1.0], self.weights.margin)
        if "bl" in active:
            with torch.no_grad():
                real_ear = eye_aspect_ratio(batch.landmarks.to(torch.float32))
            fake_ear = eye_aspect_ratio(self.landmark_head((fake + 1.0) / 2.0))
            losses["bl"] = blink_loss(real_ear, fake_ear).mean()
        for name, value in losses.items():
            self._check_finite(name, value)
        objective = stage1_objective(losses, self.weights, phase)
        self.optimizers["generator"].zero_grad()
        if sync_finetuning:
            self.optimizers["sync_d"].zero_grad()
        objective.backward()
        self.optimizers["generator"].step()
        if sync_finetuning:
            self.optimizers["sync_d"].step()

        self.step_count += 1
        values.update({name: float(value.detach()) for name, value in losses.items()})
        values["objective"] = float(objective.detach())
        return LossBundle(values, phase)

    def _check_finite(self, name: str, value) -> None:
        scalar = float(value.detach()) if isinstance(value, torch.Tensor) else float(value)
        if scalar != scalar or scalar in (float("inf"), float("-inf")):
            raise TrainingDivergedError(
                f"NaN/inf in loss '{name}' at step {self.step_count}; aborting step"
            )

    # ----------------------------------------------------------------- epoch
    def _set_lr(self, epoch: int) -> None:
        lr = lr_schedule(epoch, self.settings)
        for optimizer in self.optimizers.values():
            for group in optimizer.param_groups:
                group["lr"] = lr

    def _epoch_seed(self, epoch: int) -> int:
        return (self.pipeline_config["seed"] * 100_003 + epoch + 1) % (2 ** 31)

    def run_epoch(self, epoch: int) -> dict[str, float]:
        seed_all(self._epoch_seed(epoch))
        rng = np.random.default_rng(self._epoch_seed(epoch))
        self._set_lr(epoch)
        steps = self.pipeline_config["stage1.steps_per_epoch"] or len(self.dataset)
        sums: dict[str, float] = {}
        with_landmarks = "bl" in self.curriculum.active_losses
        for step in range(steps):
            clip_index = step % len(self.dataset)
            batch = self.dataset.sample_window(clip_index, rng, with_landmarks)
            values = self.train_step(batch)
            for name, value in values.items():
                sums[name] = sums.get(name, 0.0) + value
        return {name: total / steps for name, total in sums.items()}

    def train(self, resume: bool = False, stop_after_epochs: int | None = None) -> list[Path]:
        """Full curriculum run; one checkpoint directory per epoch.

        stop_after_epochs simulates an interruption: training halts once that
        many epochs have completed in this invocation (resume continues it).
        """
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
                self.curriculum = CurriculumState.deserialize(state)
                self.step_count = int(state.get("step", 0))
                self.sync_pretrained = state.get("sync_pretrained", "false") == "true"
                if self.sync_pretrained and not self.pipeline_config["stage1.sync_adversarial"]:
                    for p in self.sync_d.parameters():
                        p.requires_grad_(False)
                start_epoch = self.curriculum.epoch
        if not self.sync_pretrained:
            self.pretrain_sync()
        override = self.pipeline_config["stage1.phase_override"]
        if override:
            self.curriculum.phase = override
        paths = []
        new_log = not (resume and log_path.exists())
        with open(log_path, "w" if new_log else "a", newline="") as handle:
            writer = csv.writer(handle)
            if new_log:
                writer.writerow(["epoch", "phase", "loss_name", "value"])
            for epoch in range(start_epoch, self.pipeline_config["stage1.epochs"]):
                if stop_after_epochs is not None and epoch - start_epoch >= stop_after_epochs:
                    break
                phase_at_start = self.curriculum.phase
                means = self.run_epoch(epoch)
                for name in sorted(means):
                    writer.writerow([epoch, phase_at_start, name, f"{means[name]:.10g}"])
                handle.flush()
                self.curriculum.record(means)
                if not override and self.curriculum.should_advance(
                    self.pipeline_config["stage1.stabilization_rel_epsilon"],
                    self.pipeline_config["stage1.stabilization_patience"],
                ):
                    self.curriculum.advance()
                state = {
                    "config_hash": self.pipeline_config.hash(),
                    "step": str(self.step_count),
                    "sync_pretrained": "true" if self.sync_pretrained else "false",
                }
                state.update(self.curriculum.serialize())
                paths.append(save_checkpoint(checkpoint_dir, epoch, self.networks(),
                                             self.optimizers, state))
        return paths

    def networks(self) -> dict[str, nn.Module]:
        return {
            "generator": self.generator,
            "frame_d": self.frame_d,
            "temporal_d": self.temporal_d,
            "sync_d": self.sync_d,
        }


def silence_mfcc(config: Stage1Config, sample_rate: int = 16000, window_ms: float = 200.0) -> torch.Tensor:
    """MFCC of a silent window, used when adapting without speech."""
    from ..media import compute_mfcc

    window = int(round(window_ms * sample_rate / 1000.0))
    return torch.from_numpy(compute_mfcc(np.zeros(window), sample_rate)).unsqueeze(0)


def one_shot_adapt(generator: Stage1Generator, unseen_image: torch.Tensor,
                   feature_provider, epochs: int = 5, lr: float = 0.002,
                   betas: tuple[float, float] = (0.0, 0.90)) -> Stage1Generator:
    """Fine-tune a copy of the generator on one unseen identity image.

    Runs exactly `epochs` optimization passes minimizing the perceptual loss
    between the generated silent frame and the identity image; the source
    generator is never touched.
    """
    adapted = copy.deepcopy(generator)
    for p in adapted.parameters():
        p.requires_grad_(True)
    optimizer = torch.optim.Adam(adapted.parameters(), lr=lr, betas=betas)
    silence = silence_mfcc(adapted.config)
    initial = None
    for _ in range(epochs):
        embedding = adapted.encoder(silence)
        frame = adapted(unseen_image, embedding)
        loss = perceptual_loss(unseen_image, frame, feature_provider)
        value = float(loss.detach())
        if value != value:
            raise TrainingDivergedError("NaN perceptual loss during one-shot adaptation")
        if initial is None:
            initial = value
        elif initial > 0 and value > 10.0 * initial:
            raise TrainingDivergedError(
                f"one-shot adaptation diverged: loss {value:.4g} > 10x initial {initial:.4g}"
            )
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
    return adapted


def adaptation_loss(generator: Stage1Generator, unseen_image: torch.Tensor,
                    feature_provider) -> float:
    """Perceptual loss of the silent frame; the quantity adaptation minimizes."""
    with torch.no_grad():
        embedding = generator.encoder(silence_mfcc(generator.config))
        frame = generator(unseen_image, embedding)
        return float(perceptual_loss(unseen_image, frame, feature_provider))
