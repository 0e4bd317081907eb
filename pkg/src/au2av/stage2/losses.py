"""Stage-2 losses: least-squares adversarial terms plus the temporal,
identity, attention and lip/blink consistency terms that tie the unpaired
translation to the source video.
"""

from __future__ import annotations

from dataclasses import dataclass
from collections.abc import Sequence

import torch
import torch.nn.functional as F

from ..errors import ValidationError
from ..landmarks import eye_aspect_ratio

LOGIT_CLAMP = 30.0


@dataclass
class Stage2LossWeights:
    """Objective weights; defaults are the published settings."""

    lambda_cam: float = 2000.0
    lambda_recycle: float = 100.0
    lambda_identity: float = 10.0
    lambda_lip: float = 100.0
    lambda_bl: float = 100.0

    def __post_init__(self):
        for name in ("lambda_cam", "lambda_recycle", "lambda_identity", "lambda_lip", "lambda_bl"):
            value = getattr(self, name)
            if not (value >= 0) or value != value:
                raise ValidationError(f"{name} must be finite and >= 0, got {value}")


def _as_list(scores) -> list[torch.Tensor]:
    if isinstance(scores, torch.Tensor):
        return [scores]
    if isinstance(scores, Sequence):
        return list(scores)
    raise ValidationError(f"expected a score tensor or list of them, got {type(scores)!r}")


def lsgan_loss(scores_real, scores_fake, side: str) -> torch.Tensor:
    """Least-squares GAN loss over raw scores, summed over heads.

    discriminator: E[(D(y) - 1)^2] + E[D(G(x))^2]
    generator:     E[(D(G(x)) - 1)^2]
    """
    if side == "discriminator":
        total = 0.0
        for real, fake in zip(_as_list(scores_real), _as_list(scores_fake), strict=True):
            total = total + ((real - 1.0) ** 2).mean() + (fake ** 2).mean()
        return total
    if side == "generator":
        total = 0.0
        for fake in _as_list(scores_fake):
            total = total + ((fake - 1.0) ** 2).mean()
        return total
    raise ValidationError(f"side must be 'generator' or 'discriminator', got {side!r}")


def recycle_loss(frames, g_y, g_x, p_y) -> torch.Tensor:
    """Cross-domain temporal loss for one window of t+1 source frames.

    Translates the first t frames with g_y, predicts the next translated
    frame with p_y, maps it back with g_x, and penalizes the mean squared
    deviation from the true frame t+1.
    """
    frames = list(frames)
    if len(frames) < 2:
        raise ValidationError(f"recycle loss needs at least 2 frames, got {len(frames)}")
    past, target = frames[:-1], frames[-1]
    translated = [_frame_only(g_y(frame)) for frame in past]
    predicted = p_y(translated)
    cycled = _frame_only(g_x(predicted))
    return ((target - cycled) ** 2).mean()


def _frame_only(output):
    """Generators may return (frame, cam_logit, attention); keep the frame."""
    if isinstance(output, tuple):
        return output[0]
    return output


def identity_loss(x: torch.Tensor, generator) -> torch.Tensor:
    """Mean absolute change when a frame passes through a generator."""
    return (x - _frame_only(generator(x))).abs().mean()


def cam_loss(logits_label_one, logits_label_zero, side: str = "generator") -> torch.Tensor:
    """Binary cross-entropy separating the two domains' auxiliary logits.

    The first argument carries the logits that should score 1, the second
    those that should score 0. Generator and discriminator sides share the
    form and differ only in which classifier produced the logits.
    """
    if side not in ("generator", "discriminator"):
        raise ValidationError(f"side must be 'generator' or 'discriminator', got {side!r}")
    ones = torch.clamp(torch.as_tensor(logits_label_one), -LOGIT_CLAMP, LOGIT_CLAMP)
    zeros = torch.clamp(torch.as_tensor(logits_label_zero), -LOGIT_CLAMP, LOGIT_CLAMP)
    loss_one = F.binary_cross_entropy_with_logits(ones, torch.ones_like(ones))
    loss_zero = F.binary_cross_entropy_with_logits(zeros, torch.zeros_like(zeros))
    return loss_one + loss_zero


def lip_sync_loss(x: torch.Tensor, g_s2t, g_t2s) -> torch.Tensor:
    """Cycle-consistency L1 restricted to the lower half of the frame."""
    cycled = _frame_only(g_t2s(_frame_only(g_s2t(x))))
    h = x.shape[-2]
    return (x[..., h // 2:, :] - cycled[..., h // 2:, :]).abs().mean()


def stage2_blink_loss(x: torch.Tensor, cycled_x: torch.Tensor, landmark_head) -> torch.Tensor:
    """L1 EAR difference between a frame and its cycle, via the
    differentiable landmark head."""
    ear_real = eye_aspect_ratio(landmark_head(x))
    ear_cycled = eye_aspect_ratio(landmark_head(cycled_x))
    return (ear_real - ear_cycled).abs().mean()


def predictor_loss(clip, predictor, t: int) -> torch.Tensor:
    """Sum of per-window mean-square next-frame prediction errors.

    A clip of n frames yields n - t windows.
    """
    frames = list(clip)
    if len(frames) < t + 1:
        raise ValidationError(f"clip of {len(frames)} frames is too short for t={t} prediction")
    total = 0.0
    for start in range(len(frames) - t):
        window = frames[start:start + t]
        target = frames[start + t]
        predicted = predictor(window)
        total = total + ((target - predicted) ** 2).mean()
    return total
