"""Stage-1 losses as pure, differentiable functions of network outputs.

Log-form adversarial terms expect sigmoid scores in (0, 1) and are clamped
by a small epsilon so saturated discriminators never produce NaN. Multi-
scale inputs may be a single tensor or a list of per-scale tensors; scales
are summed.
"""

from __future__ import annotations

from dataclasses import dataclass
from collections.abc import Mapping, Sequence

import torch

from ..errors import ValidationError
from ..landmarks import EyeLandmarkSet, eye_aspect_ratio
from .networks import SyncPair

SCORE_EPS = 1e-7

LOSS_NAMES = ("gan", "fm", "pl", "rl", "cl", "tal", "bl")

# Curriculum gating: phase 1 learns image structure, phase 2 adds the
# temporal/sync machinery, phase 3 adds blinks.
PHASE_ACTIVE_LOSSES = {
    1: frozenset({"gan", "fm", "pl"}),
    2: frozenset({"gan", "fm", "pl", "rl", "cl", "tal"}),
    3: frozenset({"gan", "fm", "pl", "rl", "cl", "tal", "bl"}),
}


@dataclass
class Stage1LossWeights:
    """Objective weights. There are no canonical values for these; the
    defaults are package choices and fully config-overridable."""

    lambda_fm: float = 10.0
    lambda_pl: float = 10.0
    lambda_cl: float = 1.0
    lambda_bl: float = 10.0
    margin: float = 1.0

    def __post_init__(self):
        for name in ("lambda_fm", "lambda_pl", "lambda_cl", "lambda_bl"):
            value = getattr(self, name)
            if not (value >= 0) or value != value:
                raise ValidationError(f"{name} must be finite and >= 0, got {value}")
        if not self.margin > 0:
            raise ValidationError(f"margin must be positive, got {self.margin}")

    def objective_weight(self, loss_name: str) -> float:
        return {
            "gan": 1.0,
            "tal": 1.0,
            "fm": self.lambda_fm,
            "pl": self.lambda_pl,
            "rl": 1.0,
            "cl": self.lambda_cl,
            "bl": self.lambda_bl,
        }[loss_name]


def _as_scale_list(scores) -> list[torch.Tensor]:
    if isinstance(scores, torch.Tensor):
        return [scores]
    if isinstance(scores, Sequence):
        return [torch.as_tensor(s, dtype=torch.float64) if not isinstance(s, torch.Tensor) else s
                for s in scores]
    raise ValidationError(f"expected a score tensor or list of them, got {type(scores)!r}")


def _safe_log(scores: torch.Tensor) -> torch.Tensor:
    return torch.log(scores.clamp(SCORE_EPS, 1.0 - SCORE_EPS))


def adversarial_loss(scores_real, scores_fake, side: str) -> torch.Tensor:
    """Log-form GAN loss summed over scales.

    discriminator: -E[log D(x)] - E[log(1 - D(G(z)))]
    generator:     -E[log D(G(z))]   (non-saturating)
    """
    if side == "discriminator":
        total = 0.0
        for real, fake in zip(_as_scale_list(scores_real), _as_scale_list(scores_fake), strict=True):
            total = total - _safe_log(real).mean() - _safe_log(1.0 - fake).mean()
        return total
    if side == "generator":
        total = 0.0
        for fake in _as_scale_list(scores_fake):
            total = total - _safe_log(fake).mean()
        return total
    raise ValidationError(f"side must be 'generator' or 'discriminator', got {side!r}")


def temporal_adversarial_objective(window_scores_real, window_scores_fake) -> torch.Tensor:
    """Smooth-transition objective over a frame window, in maximization form.

    Sums log D(x_i) + log(1 - D(fake_i)) over the window positions; each
    position's scores may themselves be multi-scale.
    """
    reals = list(window_scores_real)
    fakes = list(window_scores_fake)
    if len(reals) != len(fakes):
        raise ValidationError(f"window lengths differ: {len(reals)} real vs {len(fakes)} fake")
    if not reals:
        raise ValidationError("empty score window")
    total = 0.0
    for real, fake in zip(reals, fakes):
        for r, f in zip(_as_scale_list(real), _as_scale_list(fake), strict=True):
            total = total + _safe_log(r).mean() + _safe_log(1.0 - f).mean()
    return total


def temporal_adversarial_loss(window_scores_real, window_scores_fake, L: int | None = None,
                              side: str = "discriminator") -> torch.Tensor:
    """Minimization-form loss for the window objective.

    The window must hold L+1 per-position scores when L is given. The
    discriminator minimizes the negated objective; the generator uses the
    non-saturating per-position form.
    """
    reals = list(window_scores_real)
    fakes = list(window_scores_fake)
    if L is not None and len(fakes) != L + 1:
        raise ValidationError(f"expected {L + 1} window positions, got {len(fakes)} fake")
    if side == "discriminator":
        if L is not None and len(reals) != L + 1:
            raise ValidationError(f"expected {L + 1} window positions, got {len(reals)} real")
        return -temporal_adversarial_objective(reals, fakes)
    if side == "generator":
        if not fakes:
            raise ValidationError("empty score window")
        total = 0.0
        for fake in fakes:
            for f in _as_scale_list(fake):
                total = total - _safe_log(f).mean()
        return total
    raise ValidationError(f"side must be 'generator' or 'discriminator', got {side!r}")


def feature_matching_loss(features_real, features_fake) -> torch.Tensor:
    """Sum over scales and layers of the per-layer mean absolute difference.

    Each layer contributes ||A - B||_1 / N with N the layer's element count.
    """
    if len(features_real) != len(features_fake):
        raise ValidationError(
            f"feature structures differ: {len(features_real)} vs {len(features_fake)} scales"
        )
    # allow a single scale passed as a flat list of tensors
    if features_real and isinstance(features_real[0], torch.Tensor):
        features_real, features_fake = [features_real], [features_fake]
    total = 0.0
    for scale_real, scale_fake in zip(features_real, features_fake):
        if len(scale_real) != len(scale_fake):
            raise ValidationError(
                f"layer counts differ within a scale: {len(scale_real)} vs {len(scale_fake)}"
            )
        for layer_real, layer_fake in zip(scale_real, scale_fake):
            if layer_real.shape != layer_fake.shape:
                raise ValidationError(
                    f"layer shapes differ: {tuple(layer_real.shape)} vs {tuple(layer_fake.shape)}"
                )
            total = total + (layer_real - layer_fake).abs().sum() / layer_real.numel()
    return total


def perceptual_loss(image_a: torch.Tensor, image_b: torch.Tensor, feature_provider,
                    weight: float = 1.0) -> torch.Tensor:
    """Weighted per-layer mean absolute feature difference."""
    feats_a = feature_provider(image_a)
    feats_b = feature_provider(image_b)
    if len(feats_a) != len(feats_b):
        raise ValidationError("feature provider returned mismatched layer counts")
    total = 0.0
    for fa, fb in zip(feats_a, feats_b):
        total = total + (fa - fb).abs().sum() / fa.numel()
    return weight * total


def reconstruction_loss_lower(real_frame: torch.Tensor, generated_frame: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference over the lower half (rows [H/2, H))."""
    if real_frame.shape != generated_frame.shape:
        raise ValidationError(
            f"frame shapes differ: {tuple(real_frame.shape)} vs {tuple(generated_frame.shape)}"
        )
    h = real_frame.shape[-2]
    lower_real = real_frame[..., h // 2:, :]
    lower_fake = generated_frame[..., h // 2:, :]
    return (lower_real - lower_fake).abs().mean()


def contrastive_loss(pairs, labels, margin: float) -> torch.Tensor:
    """(1/2N) sum of y*d^2 + (1-y)*max(margin - d, 0)^2 over sync pairs."""
    if margin <= 0:
        raise ValidationError(f"margin must be positive, got {margin}")
    if isinstance(pairs, SyncPair):
        pairs = [pairs]
    if len(pairs) == 0:
        raise ValidationError("empty pair list")
    distances = torch.cat([pair.distance().reshape(-1) for pair in pairs])
    y = torch.as_tensor(labels, dtype=distances.dtype, device=distances.device).reshape(-1)
    if y.numel() != distances.numel():
        raise ValidationError(f"{distances.numel()} pairs but {y.numel()} labels")
    hinge = torch.clamp(margin - distances, min=0.0)
    terms = y * distances ** 2 + (1.0 - y) * hinge ** 2
    return terms.sum() / (2.0 * distances.numel())


def blink_loss(landmarks_real, landmarks_generated) -> torch.Tensor:
    """L1 difference of the two eye aspect ratios."""
    diff = _as_ear(landmarks_real) - _as_ear(landmarks_generated)
    return diff.abs() if isinstance(diff, torch.Tensor) else abs(diff)


def _as_ear(landmarks):
    if isinstance(landmarks, (EyeLandmarkSet,)) or (
        hasattr(landmarks, "shape") and tuple(landmarks.shape[-2:]) == (6, 2)
    ):
        return eye_aspect_ratio(landmarks)
    if isinstance(landmarks, torch.Tensor):
        return landmarks
    return float(landmarks)


def stage1_objective(losses: Mapping[str, torch.Tensor | float], weights: Stage1LossWeights,
                     phase: int) -> torch.Tensor | float:
    """Weighted sum of the losses active in the given curriculum phase."""
    if phase not in PHASE_ACTIVE_LOSSES:
        raise ValidationError(f"phase must be 1, 2 or 3, got {phase}")
    active = PHASE_ACTIVE_LOSSES[phase]
    missing = sorted(active - set(losses))
    if missing:
        raise ValidationError(f"phase {phase} objective is missing losses: {missing}")
    total = 0.0
    for name in LOSS_NAMES:
        if name in active:
            total = total + weights.objective_weight(name) * losses[name]
    return total
