"""Injected providers for everything the pipeline deliberately does not train.

Pose estimation, eye-landmark detection, perceptual features, image
embeddings and lip reading are all external capabilities in production.
Each gets a small callable contract plus a deterministic default so the
pipeline is runnable and testable without third-party weights:

  pose        frame -> (yaw, pitch, roll) degrees
  landmarks   frame -> (6, 2) eye points, pixels
  perceptual  images (B, 3, H, W) in [-1, 1] -> list of per-layer features
  embedding   frame (H, W, 3) in [0, 1] -> 1-D feature vector
  lip_reader  TalkingClip -> list of words
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .errors import ConfigError


class FrontalPoseProvider:
    """Reports a perfectly frontal head for every frame."""

    def __call__(self, frame) -> tuple[float, float, float]:
        return (0.0, 0.0, 0.0)


class BrightnessPoseProvider:
    """Pose proxy from mean brightness: darker frames read as more rotated.

    A stand-in for a real head-pose network; it is deterministic and makes
    frame selection depend on content, which is all the pipeline needs.
    """

    def __call__(self, frame) -> tuple[float, float, float]:
        mean = float(np.asarray(frame, dtype=np.float64).mean())
        return (90.0 * (1.0 - mean), 0.0, 0.0)


class StaticLandmarkProvider:
    """Fixed open-eye hexagon placed in the upper-left eye region."""

    def __call__(self, frame) -> np.ndarray:
        frame = np.asarray(frame)
        h, w = frame.shape[0], frame.shape[1]
        cx, cy = 0.3 * w, 0.35 * h
        half_w, half_h = 0.08 * w, 0.03 * h
        return np.array([
            [cx - half_w, cy],
            [cx - half_w / 2, cy - half_h],
            [cx + half_w / 2, cy - half_h],
            [cx + half_w, cy],
            [cx + half_w / 2, cy + half_h],
            [cx - half_w / 2, cy + half_h],
        ])


class FrozenConvFeatureProvider(nn.Module):
    """Perceptual features from a frozen, randomly initialized 3-layer CNN.

    Stands in for pretrained perceptual backbones; a fixed seed makes it
    reproducible across runs.
    """

    def __init__(self, channels: int = 8, seed: int = 0):
        super().__init__()
        generator = torch.Generator().manual_seed(seed)
        layers = []
        in_ch = 3
        for i in range(3):
            out_ch = channels * (2 ** i)
            conv = nn.Conv2d(in_ch, out_ch, 3, stride=2, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=generator) * 0.2)
                conv.bias.zero_()
            layers.append(conv)
            in_ch = out_ch
        self.convs = nn.ModuleList(layers)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, images: torch.Tensor) -> list[torch.Tensor]:
        features = []
        x = images
        for conv in self.convs:
            x = torch.relu(conv(x))
            features.append(x)
        return features


class IdentityFeatureProvider:
    """Returns the image itself as the single feature layer."""

    def __call__(self, images: torch.Tensor) -> list[torch.Tensor]:
        return [images]


class PooledPixelEmbedding:
    """Deterministic image embedding: grayscale, pooled to grid*grid, flattened."""

    def __init__(self, grid: int = 8):
        self.grid = grid
        self.dimension = grid * grid

    def __call__(self, frame) -> np.ndarray:
        frame = np.asarray(frame, dtype=np.float64)
        if frame.ndim == 3:
            frame = frame @ np.array([0.2989, 0.5870, 0.1140])
        h, w = frame.shape
        ys = np.linspace(0, h, self.grid + 1).astype(int)
        xs = np.linspace(0, w, self.grid + 1).astype(int)
        out = np.empty(self.grid * self.grid)
        k = 0
        for i in range(self.grid):
            for j in range(self.grid):
                block = frame[ys[i]:max(ys[i + 1], ys[i] + 1), xs[j]:max(xs[j + 1], xs[j] + 1)]
                out[k] = block.mean()
                k += 1
        return out


class EchoLipReader:
    """Scripted lip reader: returns the transcript stored with the clip."""

    def __call__(self, clip) -> list[str]:
        return list(clip.transcript)


POSE_PROVIDERS = {
    "frontal": FrontalPoseProvider,
    "brightness": BrightnessPoseProvider,
}
LANDMARK_PROVIDERS = {
    "static_hexagon": StaticLandmarkProvider,
}
PERCEPTUAL_PROVIDERS = {
    "frozen_conv": FrozenConvFeatureProvider,
    "identity": IdentityFeatureProvider,
}
EMBEDDING_PROVIDERS = {
    "pooled_pixels": PooledPixelEmbedding,
}
LIP_READERS = {
    "echo": EchoLipReader,
}


def make_provider(kind: str, name: str):
    """Instantiate a registered provider; 'none' yields None (optional slot)."""
    registries = {
        "pose": POSE_PROVIDERS,
        "landmarks": LANDMARK_PROVIDERS,
        "perceptual": PERCEPTUAL_PROVIDERS,
        "embedding": EMBEDDING_PROVIDERS,
        "lip_reader": LIP_READERS,
    }
    if kind not in registries:
        raise ConfigError(f"unknown provider kind {kind!r}")
    if name == "none":
        return None
    registry = registries[kind]
    if name not in registry:
        raise ConfigError(f"unknown {kind} provider {name!r}; known: {sorted(registry)}")
    return registry[name]()
