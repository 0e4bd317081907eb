"""Eye-landmark geometry: the eye aspect ratio and a differentiable regressor.

The six points p1..p6 follow the usual ordering: p1/p4 are the horizontal
eye corners, p2/p3 the upper lid, p6/p5 the lower lid. The aspect ratio

    m = (|p2 - p6| + |p3 - p5|) / |p1 - p4|

drops sharply during a blink and is invariant to translation, rotation and
uniform scaling of the points.

Landmark detectors are injected providers. To let blink terms backpropagate
into a generator, EyeLandmarkHead regresses the six points directly from a
frame; it is fitted on provider-supplied landmarks of real frames and then
evaluated on generated frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import ValidationError


@dataclass
class EyeLandmarkSet:
    """Six 2-D eye points (pixel coordinates) for one frame."""

    points: np.ndarray  # (6, 2), rows are p1..p6

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.shape != (6, 2):
            raise ValidationError(f"expected 6 eye points of 2 coordinates, got {self.points.shape}")
        if not np.all(np.isfinite(self.points)):
            raise ValidationError("eye landmarks contain non-finite coordinates")


def eye_aspect_ratio(landmarks):
    """EAR for one landmark set; torch input stays differentiable.

    Accepts an EyeLandmarkSet, a (6, 2) array, or a (..., 6, 2) torch tensor
    (returning one ratio per leading index).
    """
    if isinstance(landmarks, EyeLandmarkSet):
        pts = landmarks.points
    else:
        pts = landmarks
    if isinstance(pts, torch.Tensor):
        if pts.shape[-2:] != (6, 2):
            raise ValidationError(f"expected (..., 6, 2) landmarks, got {tuple(pts.shape)}")
        p = pts
        horizontal = torch.linalg.vector_norm(p[..., 0, :] - p[..., 3, :], dim=-1)
        if torch.any(horizontal <= 0):
            raise ValidationError("degenerate landmarks: p1 == p4")
        vertical = (
            torch.linalg.vector_norm(p[..., 1, :] - p[..., 5, :], dim=-1)
            + torch.linalg.vector_norm(p[..., 2, :] - p[..., 4, :], dim=-1)
        )
        return vertical / horizontal
    pts = np.asarray(pts, dtype=np.float64)
    if pts.shape != (6, 2):
        raise ValidationError(f"expected (6, 2) landmarks, got {pts.shape}")
    horizontal = np.linalg.norm(pts[0] - pts[3])
    if horizontal <= 0:
        raise ValidationError("degenerate landmarks: p1 == p4")
    vertical = np.linalg.norm(pts[1] - pts[5]) + np.linalg.norm(pts[2] - pts[4])
    return float(vertical / horizontal)


class EyeLandmarkHead(nn.Module):
    """Tiny CNN regressing the six eye points from a frame.

    Outputs pixel coordinates shaped (B, 6, 2). Fitting it on real frames
    against provider landmarks gives generated frames a differentiable path
    from blink losses back to the generator.
    """

    def __init__(self, resolution: int, channels: int = 8):
        super().__init__()
        self.resolution = resolution
        self.net = nn.Sequential(
            nn.Conv2d(3, channels, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(channels, channels * 2, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(channels * 2, channels * 4, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.AdaptiveAvgPool2d(1),
            nn.Flatten(),
            nn.Linear(channels * 4, 12),
        )

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        if frames.ndim != 4 or frames.shape[1] != 3:
            raise ValidationError(f"expected (B, 3, H, W) frames, got {tuple(frames.shape)}")
        coords = self.net(frames).reshape(-1, 6, 2)
        # keep predictions inside the frame, in pixels
        return torch.sigmoid(coords) * self.resolution
