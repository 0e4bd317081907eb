"""Stage-1 trainable networks.

One generator and three discriminators produce the human-domain talking
head: a speech content encoder feeds a spatially-adaptive generator whose
normalization layers are modulated by the identity image, while a
multi-scale frame discriminator, a multi-scale temporal discriminator over
stacked consecutive frames, and an audio-visual synchronization encoder
pair supply the adversarial and contrastive signals.

Frames at network boundaries live in [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import ValidationError

SPADE_EPS = 1e-5


@dataclass
class Stage1Config:
    """Sizes for the stage-1 networks; defaults are desk-scale."""

    resolution: int = 64
    base_channels: int = 16
    embedding_dim: int = 256
    temporal_window: int = 4  # L; the temporal discriminator sees L+1 frames
    sync_dim: int = 256
    sync_resolution: int = 224
    sync_channels: int = 8
    disc_channels: int = 16
    disc_layers: int = 3
    mfcc_dim: int = 13
    audio_chunks: int = 5
    audio_chunk_samples: int = 640

    def __post_init__(self):
        if self.resolution < 16 or self.resolution & (self.resolution - 1):
            raise ValidationError(f"resolution must be a power of two >= 16, got {self.resolution}")


@dataclass
class SpeechEmbedding:
    """Content features for one audio window."""

    vector: torch.Tensor  # (B, embedding_dim)
    source_window_index: int = -1


@dataclass
class DiscriminatorOutput:
    """Per-scale score maps plus the intermediate features behind them."""

    score_maps: list[torch.Tensor]
    features: list[list[torch.Tensor]] = field(default_factory=list)


@dataclass
class SyncPair:
    """Matching-dimension video and audio embeddings."""

    v: torch.Tensor
    a: torch.Tensor

    def __post_init__(self):
        if self.v.shape[-1] != self.a.shape[-1]:
            raise ValidationError(
                f"sync embeddings must share a dimension, got {self.v.shape[-1]} vs {self.a.shape[-1]}"
            )

    def distance(self) -> torch.Tensor:
        return torch.linalg.vector_norm(self.v - self.a, dim=-1)


class SpeechEncoder(nn.Module):
    """Speech content encoder: two temporal convolutions, one bi-GRU.

    Takes an MFCC window (B, T, 13) and returns a fixed-size content vector.
    `load_pretrained` accepts an external state dict so published recognizer
    weights can be dropped in.
    """

    def __init__(self, config: Stage1Config):
        super().__init__()
        self.config = config
        ch = max(16, config.base_channels)
        self.conv = nn.Sequential(
            nn.Conv1d(config.mfcc_dim, ch, kernel_size=5, stride=2, padding=2),
            nn.ReLU(),
            nn.Conv1d(ch, ch, kernel_size=3, stride=2, padding=1),
            nn.ReLU(),
        )
        self.rnn = nn.GRU(ch, ch, batch_first=True, bidirectional=True)
        self.proj = nn.Linear(2 * ch, config.embedding_dim)

    def forward(self, window: torch.Tensor) -> torch.Tensor:
        if window.ndim == 2:
            window = window.unsqueeze(0)
        if window.ndim != 3 or window.shape[-1] != self.config.mfcc_dim:
            raise ValidationError(
                f"expected (B, T, {self.config.mfcc_dim}) MFCC window, got {tuple(window.shape)}"
            )
        x = self.conv(window.transpose(1, 2))
        out, _ = self.rnn(x.transpose(1, 2))
        forward_last = out[:, -1, :out.shape[2] // 2]
        backward_first = out[:, 0, out.shape[2] // 2:]
        return self.proj(torch.cat([forward_last, backward_first], dim=1))

    def load_pretrained(self, state_dict) -> None:
        self.load_state_dict(state_dict)


def encode_speech(window: torch.Tensor, encoder: SpeechEncoder, window_index: int = -1) -> SpeechEmbedding:
    return SpeechEmbedding(vector=encoder(window), source_window_index=window_index)


class SpadeNorm(nn.Module):
    """Spatially-adaptive normalization driven by the identity image.

    The activation is standardized per channel (over batch and space) with
    no learned affine terms; scale and shift maps are predicted from the
    identity image, resized to the activation's spatial size:

        out = normalized(x) * (1 + gamma(img)) + beta(img)
    """

    def __init__(self, channels: int, hidden: int = 32, image_channels: int = 3):
        super().__init__()
        self.shared = nn.Sequential(
            nn.Conv2d(image_channels, hidden, kernel_size=3, padding=1),
            nn.ReLU(),
        )
        self.gamma = nn.Conv2d(hidden, channels, kernel_size=3, padding=1)
        self.beta = nn.Conv2d(hidden, channels, kernel_size=3, padding=1)

    def modulation(self, identity_image: torch.Tensor, size) -> tuple[torch.Tensor, torch.Tensor]:
        img = F.interpolate(identity_image, size=size, mode="nearest")
        hidden = self.shared(img)
        return self.gamma(hidden), self.beta(hidden)

    def forward(self, activation: torch.Tensor, identity_image: torch.Tensor) -> torch.Tensor:
        if activation.ndim != 4:
            raise ValidationError(f"expected (B, C, H, W) activation, got {tuple(activation.shape)}")
        normalized = standardize_per_channel(activation)
        gamma, beta = self.modulation(identity_image, activation.shape[2:])
        return normalized * (1.0 + gamma) + beta


def standardize_per_channel(activation: torch.Tensor, eps: float = SPADE_EPS) -> torch.Tensor:
    """Parameter-free standardization over all dims but the channel one."""
    dims = [d for d in range(activation.ndim) if d != 1]
    mean = activation.mean(dim=dims, keepdim=True)
    var = activation.var(dim=dims, unbiased=False, keepdim=True)
    return (activation - mean) / torch.sqrt(var + eps)


def spade_normalize(activation: torch.Tensor, identity_image: torch.Tensor, spade: SpadeNorm) -> torch.Tensor:
    return spade(activation, identity_image)


class Stage1Generator(nn.Module):
    """Spatially-adaptive generator conditioned on speech content.

    The speech embedding seeds the coarsest feature map; every upsampling
    stage is modulated by SPADE maps predicted from the identity image, so
    spatial identity information survives normalization.
    """

    SEED_SIZE = 4

    def __init__(self, config: Stage1Config):
        super().__init__()
        self.config = config
        self.encoder = SpeechEncoder(config)
        n_up = (config.resolution // self.SEED_SIZE).bit_length() - 1
        widths = [min(config.base_channels * 2 ** (n_up - i), 4 * config.base_channels)
                  for i in range(n_up + 1)]
        self.seed_channels = widths[0]
        self.fc = nn.Linear(config.embedding_dim, widths[0] * self.SEED_SIZE ** 2)
        self.blocks = nn.ModuleList()
        self.norms = nn.ModuleList()
        for i in range(n_up):
            self.norms.append(SpadeNorm(widths[i], hidden=max(8, config.base_channels)))
            self.blocks.append(nn.Conv2d(widths[i], widths[i + 1], kernel_size=3, padding=1))
        self.out_norm = SpadeNorm(widths[-1], hidden=max(8, config.base_channels))
        self.out_conv = nn.Conv2d(widths[-1], 3, kernel_size=3, padding=1)

    def forward(self, identity_image: torch.Tensor, embedding: torch.Tensor) -> torch.Tensor:
        if identity_image.ndim != 4 or identity_image.shape[1] != 3:
            raise ValidationError(f"expected (B, 3, H, W) identity image, got {tuple(identity_image.shape)}")
        if identity_image.shape[2] != self.config.resolution or identity_image.shape[3] != self.config.resolution:
            raise ValidationError(
                f"identity image must be {self.config.resolution}x{self.config.resolution}, "
                f"got {identity_image.shape[2]}x{identity_image.shape[3]}"
            )
        if embedding.ndim != 2 or embedding.shape[1] != self.config.embedding_dim:
            raise ValidationError(
                f"expected (B, {self.config.embedding_dim}) speech embedding, got {tuple(embedding.shape)}"
            )
        x = self.fc(embedding).reshape(-1, self.seed_channels, self.SEED_SIZE, self.SEED_SIZE)
        for norm, conv in zip(self.norms, self.blocks):
            x = norm(x, identity_image)
            x = F.leaky_relu(x, 0.2)
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = conv(x)
        x = self.out_norm(x, identity_image)
        x = F.leaky_relu(x, 0.2)
        return torch.tanh(self.out_conv(x))


def generate_frame(identity_image: torch.Tensor, embedding: SpeechEmbedding | torch.Tensor,
                   generator: Stage1Generator) -> torch.Tensor:
    vector = embedding.vector if isinstance(embedding, SpeechEmbedding) else embedding
    return generator(identity_image, vector)


class PatchDiscriminator(nn.Module):
    """PatchGAN over one scale; exposes intermediate features for matching."""

    def __init__(self, in_channels: int, base_channels: int, n_layers: int, sigmoid: bool = True):
        super().__init__()
        self.sigmoid = sigmoid
        layers = []
        ch_in = in_channels
        ch_out = base_channels
        for i in range(n_layers):
            stride = 2 if i < n_layers - 1 else 1
            layers.append(nn.Conv2d(ch_in, ch_out, kernel_size=4, stride=stride, padding=1))
            ch_in = ch_out
            ch_out = min(2 * ch_out, 8 * base_channels)
        self.layers = nn.ModuleList(layers)
        self.score = nn.Conv2d(ch_in, 1, kernel_size=4, stride=1, padding=1)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        features = []
        for layer in self.layers:
            x = F.leaky_relu(layer(x), 0.2)
            features.append(x)
        score = self.score(x)
        if self.sigmoid:
            score = torch.sigmoid(score)
        return score, features


class MultiScaleDiscriminator(nn.Module):
    """Three identical discriminators at full, half and quarter resolution.

    The half- and quarter-scale inputs are exact 2x average poolings of the
    full-scale input.
    """

    N_SCALES = 3

    def __init__(self, in_channels: int, base_channels: int, n_layers: int):
        super().__init__()
        self.scales = nn.ModuleList(
            PatchDiscriminator(in_channels, base_channels, n_layers) for _ in range(self.N_SCALES)
        )

    def forward(self, x: torch.Tensor) -> DiscriminatorOutput:
        score_maps = []
        features = []
        for i, disc in enumerate(self.scales):
            if i > 0:
                x = F.avg_pool2d(x, kernel_size=2, stride=2)
            score, feats = disc(x)
            score_maps.append(score)
            features.append(feats)
        return DiscriminatorOutput(score_maps=score_maps, features=features)


class FrameDiscriminator(MultiScaleDiscriminator):
    """Multi-scale frame discriminator conditioned on the identity image."""

    def __init__(self, config: Stage1Config):
        super().__init__(6, config.disc_channels, config.disc_layers)
        self.config = config

    def discriminate(self, frame: torch.Tensor, identity_image: torch.Tensor) -> DiscriminatorOutput:
        if frame.shape != identity_image.shape:
            raise ValidationError(
                f"frame {tuple(frame.shape)} and identity image {tuple(identity_image.shape)} must match"
            )
        return self(torch.cat([frame, identity_image], dim=1))


def frame_discriminate(frame: torch.Tensor, identity_image: torch.Tensor,
                       disc: FrameDiscriminator) -> DiscriminatorOutput:
    return disc.discriminate(frame, identity_image)


class TemporalDiscriminator(MultiScaleDiscriminator):
    """Multi-scale discriminator over L+1 channel-stacked consecutive frames."""

    def __init__(self, config: Stage1Config):
        self.window_frames = config.temporal_window + 1
        super().__init__(3 * self.window_frames, config.disc_channels, config.disc_layers)
        self.config = config

    def discriminate(self, frame_window: torch.Tensor) -> DiscriminatorOutput:
        expected = 3 * self.window_frames
        if frame_window.ndim != 4 or frame_window.shape[1] != expected:
            raise ValidationError(
                f"temporal window must stack {self.window_frames} frames into {expected} channels, "
                f"got {tuple(frame_window.shape)}"
            )
        return self(frame_window)


def stack_frame_window(frames: list[torch.Tensor] | torch.Tensor) -> torch.Tensor:
    """Channel-concatenate an ordered list of (B, 3, H, W) frames."""
    if isinstance(frames, torch.Tensor):
        return frames
    return torch.cat(list(frames), dim=1)


def temporal_discriminate(frame_window, disc: TemporalDiscriminator) -> DiscriminatorOutput:
    return disc.discriminate(stack_frame_window(frame_window))


class SyncEncoder(nn.Module):
    """Audio-visual synchronization embedder (SyncNet-style).

    The video branch sees five lower-half face crops stacked to 15 channels
    at the sync resolution; the audio branch sees the matching 200 ms of
    waveform as five 40 ms chunks. Both map to one embedding space.
    """

    def __init__(self, config: Stage1Config):
        super().__init__()
        self.config = config
        ch = config.sync_channels
        self.video_net = nn.Sequential(
            nn.Conv2d(15, ch, kernel_size=4, stride=4, padding=0),
            nn.LeakyReLU(0.2),
            nn.Conv2d(ch, ch * 2, kernel_size=4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(ch * 2, ch * 4, kernel_size=4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(ch * 4, ch * 8, kernel_size=4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.AdaptiveAvgPool2d(1),
            nn.Flatten(),
            nn.Linear(ch * 8, config.sync_dim),
        )
        self.audio_net = nn.Sequential(
            nn.Conv1d(config.audio_chunks, ch * 2, kernel_size=9, stride=4, padding=4),
            nn.LeakyReLU(0.2),
            nn.Conv1d(ch * 2, ch * 4, kernel_size=9, stride=4, padding=4),
            nn.LeakyReLU(0.2),
            nn.Conv1d(ch * 4, ch * 8, kernel_size=9, stride=4, padding=4),
            nn.LeakyReLU(0.2),
            nn.AdaptiveAvgPool1d(1),
            nn.Flatten(),
            nn.Linear(ch * 8, config.sync_dim),
        )

    def forward(self, frames_lower_half: torch.Tensor, audio_chunks: torch.Tensor) -> SyncPair:
        cfg = self.config
        if frames_lower_half.ndim == 4:
            frames_lower_half = frames_lower_half.unsqueeze(0)
        if frames_lower_half.ndim != 5 or frames_lower_half.shape[1] != 5 or frames_lower_half.shape[2] != 3:
            raise ValidationError(
                f"expected (B, 5, 3, H, W) lower-half frames, got {tuple(frames_lower_half.shape)}"
            )
        if audio_chunks.ndim == 2:
            audio_chunks = audio_chunks.unsqueeze(0)
        if audio_chunks.ndim != 3 or audio_chunks.shape[1] != cfg.audio_chunks:
            raise ValidationError(
                f"expected (B, {cfg.audio_chunks}, samples) audio chunks, got {tuple(audio_chunks.shape)}"
            )
        b = frames_lower_half.shape[0]
        video = frames_lower_half.reshape(b, 15, *frames_lower_half.shape[3:])
        if video.shape[2] != cfg.sync_resolution or video.shape[3] != cfg.sync_resolution:
            video = F.interpolate(video, size=(cfg.sync_resolution, cfg.sync_resolution),
                                  mode="bilinear", align_corners=False)
        return SyncPair(v=self.video_net(video), a=self.audio_net(audio_chunks))


def sync_embed(frames_lower_half: torch.Tensor, audio_chunks: torch.Tensor, encoder: SyncEncoder) -> SyncPair:
    return encoder(frames_lower_half, audio_chunks)
