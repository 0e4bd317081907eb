"""Stage-2 unpaired translation networks.

Generators follow the attentional encoder/decoder recipe: a class-
activation-map module weights the encoder features by what discriminates
the two domains, and the decoder normalizes with AdaLIN, a learned
per-channel blend of instance and layer normalization whose affine terms
come from the attended feature code. Discriminators score frames with a
shallow local head and a deeper global head, each with its own auxiliary
CAM classifier. A UNet temporal predictor forecasts the next frame from
the past t frames and powers the recycle loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import ValidationError

NORM_EPS = 1e-5


@dataclass
class Stage2Config:
    resolution: int = 64
    base_channels: int = 16
    n_res_blocks: int = 4  # split evenly between encoder (IN) and decoder (AdaLIN)
    past_frames: int = 2
    disc_channels: int = 16

    def __post_init__(self):
        if self.resolution < 16 or self.resolution & (self.resolution - 1):
            raise ValidationError(f"resolution must be a power of two >= 16, got {self.resolution}")
        if self.past_frames < 1:
            raise ValidationError(f"past_frames must be >= 1, got {self.past_frames}")


@dataclass
class AdaLinParams:
    """Per-channel blend coefficient and affine terms for one AdaLIN site."""

    rho: torch.Tensor    # (C,) in [0, 1]
    gamma: torch.Tensor  # (C,) or (B, C)
    beta: torch.Tensor   # (C,) or (B, C)


@dataclass
class CamOutput:
    attended_features: torch.Tensor
    attention_map: torch.Tensor  # (B, 1, H, W), rescaled to [0, 1]
    cam_logit: torch.Tensor      # (B, 2): average-pool and max-pool logits


def instance_norm(features: torch.Tensor, eps: float = NORM_EPS) -> torch.Tensor:
    """Standardize each channel of each sample over its spatial extent."""
    mean = features.mean(dim=(2, 3), keepdim=True)
    var = features.var(dim=(2, 3), unbiased=False, keepdim=True)
    return (features - mean) / torch.sqrt(var + eps)


def layer_norm(features: torch.Tensor, eps: float = NORM_EPS) -> torch.Tensor:
    """Standardize each sample over channels and space jointly."""
    mean = features.mean(dim=(1, 2, 3), keepdim=True)
    var = features.var(dim=(1, 2, 3), unbiased=False, keepdim=True)
    return (features - mean) / torch.sqrt(var + eps)


def _per_channel(t: torch.Tensor, batch: int) -> torch.Tensor:
    if t.ndim == 1:
        return t.reshape(1, -1, 1, 1)
    if t.ndim == 2:
        return t.reshape(batch, -1, 1, 1)
    raise ValidationError(f"expected per-channel parameters of 1 or 2 dims, got {t.ndim}")


def adalin(features: torch.Tensor, params: AdaLinParams) -> torch.Tensor:
    """gamma * (rho * IN(f) + (1 - rho) * LN(f)) + beta."""
    if features.ndim != 4:
        raise ValidationError(f"expected (B, C, H, W) features, got {tuple(features.shape)}")
    b = features.shape[0]
    rho = _per_channel(params.rho, b)
    mixed = rho * instance_norm(features) + (1.0 - rho) * layer_norm(features)
    return _per_channel(params.gamma, b) * mixed + _per_channel(params.beta, b)


class AdaLin(nn.Module):
    """AdaLIN site with a learned rho; gamma/beta arrive per forward call."""

    def __init__(self, channels: int, rho_init: float = 0.9):
        super().__init__()
        self.rho = nn.Parameter(torch.full((channels,), rho_init))

    def forward(self, features: torch.Tensor, gamma: torch.Tensor, beta: torch.Tensor) -> torch.Tensor:
        return adalin(features, AdaLinParams(rho=self.rho, gamma=gamma, beta=beta))


def clip_rho(module: nn.Module) -> None:
    """Clamp every AdaLIN blend coefficient back into [0, 1]; call after each
    optimizer step."""
    for sub in module.modules():
        if isinstance(sub, AdaLin):
            sub.rho.data.clamp_(0.0, 1.0)


class CamClassifier(nn.Module):
    """Class-activation attention from average- and max-pooled classifiers.

    The two linear classifiers' weights re-weight the feature channels; the
    weighted maps are fused by a bias-free 1x1 convolution so zero input
    yields a zero attention map while the logits fall back to the biases.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.gap_fc = nn.Linear(channels, 1, bias=True)
        self.gmp_fc = nn.Linear(channels, 1, bias=True)
        self.fuse = nn.Conv2d(2 * channels, channels, kernel_size=1, bias=False)

    def forward(self, features: torch.Tensor) -> CamOutput:
        if features.ndim != 4:
            raise ValidationError(f"expected (B, C, H, W) features, got {tuple(features.shape)}")
        b = features.shape[0]
        gap = F.adaptive_avg_pool2d(features, 1).reshape(b, -1)
        gap_logit = self.gap_fc(gap)
        gap_weighted = features * self.gap_fc.weight.reshape(1, -1, 1, 1)
        gmp = F.adaptive_max_pool2d(features, 1).reshape(b, -1)
        gmp_logit = self.gmp_fc(gmp)
        gmp_weighted = features * self.gmp_fc.weight.reshape(1, -1, 1, 1)
        attended = F.relu(self.fuse(torch.cat([gap_weighted, gmp_weighted], dim=1)))
        heat = attended.abs().sum(dim=1, keepdim=True)
        return CamOutput(
            attended_features=attended,
            attention_map=_rescale_map(heat),
            cam_logit=torch.cat([gap_logit, gmp_logit], dim=1),
        )


def _rescale_map(heat: torch.Tensor) -> torch.Tensor:
    flat = heat.reshape(heat.shape[0], -1)
    lo = flat.min(dim=1).values.reshape(-1, 1, 1, 1)
    hi = flat.max(dim=1).values.reshape(-1, 1, 1, 1)
    span = hi - lo
    rescaled = torch.where(span > 0, (heat - lo) / torch.where(span > 0, span, torch.ones_like(span)),
                           torch.zeros_like(heat))
    # degenerate constant-but-nonzero map: saturate instead of vanishing
    constant_nonzero = (span <= 0) & (hi > 0)
    return torch.where(constant_nonzero, torch.ones_like(rescaled), rescaled)


def cam_attention(features: torch.Tensor, classifier: CamClassifier) -> CamOutput:
    return classifier(features)


class ResBlockIN(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, kernel_size=3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, kernel_size=3, padding=1)

    def forward(self, x):
        out = F.relu(instance_norm(self.conv1(x)))
        out = instance_norm(self.conv2(out))
        return x + out


class ResBlockAdaLin(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, kernel_size=3, padding=1)
        self.norm1 = AdaLin(channels)
        self.conv2 = nn.Conv2d(channels, channels, kernel_size=3, padding=1)
        self.norm2 = AdaLin(channels)

    def forward(self, x, gamma, beta):
        out = F.relu(self.norm1(self.conv1(x), gamma, beta))
        out = self.norm2(self.conv2(out), gamma, beta)
        return x + out


class TranslationGenerator(nn.Module):
    """Attention-driven encoder/decoder generator for one domain direction.

    forward returns (translated frame in [-1, 1], cam_logit, attention_map).
    """

    def __init__(self, config: Stage2Config):
        super().__init__()
        self.config = config
        ngf = config.base_channels
        deep = 4 * ngf
        self.stem = nn.Conv2d(3, ngf, kernel_size=7, padding=3)
        self.down1 = nn.Conv2d(ngf, 2 * ngf, kernel_size=3, stride=2, padding=1)
        self.down2 = nn.Conv2d(2 * ngf, deep, kernel_size=3, stride=2, padding=1)
        n_enc = config.n_res_blocks // 2
        n_dec = config.n_res_blocks - n_enc
        self.enc_blocks = nn.ModuleList(ResBlockIN(deep) for _ in range(n_enc))
        self.cam = CamClassifier(deep)
        self.style = nn.Sequential(
            nn.Linear(deep, deep), nn.ReLU(),
            nn.Linear(deep, deep), nn.ReLU(),
        )
        self.dec_blocks = nn.ModuleList(ResBlockAdaLin(deep) for _ in range(n_dec))
        self.dec_heads = nn.ModuleList(_affine_head(deep, deep) for _ in range(n_dec))
        self.up1 = nn.Conv2d(deep, 2 * ngf, kernel_size=3, padding=1)
        self.up1_norm = AdaLin(2 * ngf)
        self.up1_head = _affine_head(deep, 2 * ngf)
        self.up2 = nn.Conv2d(2 * ngf, ngf, kernel_size=3, padding=1)
        self.up2_norm = AdaLin(ngf)
        self.up2_head = _affine_head(deep, ngf)
        self.out_conv = nn.Conv2d(ngf, 3, kernel_size=7, padding=3)

    def encode(self, frame: torch.Tensor) -> torch.Tensor:
        x = F.relu(instance_norm(self.stem(frame)))
        x = F.relu(instance_norm(self.down1(x)))
        x = F.relu(instance_norm(self.down2(x)))
        for block in self.enc_blocks:
            x = block(x)
        return x

    def forward(self, frame: torch.Tensor):
        if frame.ndim != 4 or frame.shape[1] != 3:
            raise ValidationError(f"expected (B, 3, H, W) frame, got {tuple(frame.shape)}")
        features = self.encode(frame)
        cam = self.cam(features)
        code = self.style(F.adaptive_avg_pool2d(cam.attended_features, 1).flatten(1))
        x = cam.attended_features
        for block, head in zip(self.dec_blocks, self.dec_heads):
            gamma, beta = head(code)
            x = block(x, gamma, beta)
        x = F.interpolate(x, scale_factor=2, mode="nearest")
        gamma, beta = self.up1_head(code)
        x = F.relu(self.up1_norm(self.up1(x), gamma, beta))
        x = F.interpolate(x, scale_factor=2, mode="nearest")
        gamma, beta = self.up2_head(code)
        x = F.relu(self.up2_norm(self.up2(x), gamma, beta))
        return torch.tanh(self.out_conv(x)), cam.cam_logit, cam.attention_map


class _affine_head(nn.Module):
    """Gamma and beta for one AdaLIN site, from the attended feature code."""

    def __init__(self, code_dim: int, channels: int):
        super().__init__()
        self.gamma = nn.Linear(code_dim, channels)
        self.beta = nn.Linear(code_dim, channels)

    def forward(self, code):
        return 1.0 + self.gamma(code), self.beta(code)


def translate(frame: torch.Tensor, generator: TranslationGenerator):
    """Translate a frame across domains; returns (frame, cam_logit, attention_map)."""
    return generator(frame)


class _DiscHead(nn.Module):
    """Conv stack -> CAM -> patch scores (raw, least-squares convention)."""

    def __init__(self, base_channels: int, n_layers: int):
        super().__init__()
        layers = []
        ch_in, ch_out = 3, base_channels
        strides = []
        for i in range(n_layers):
            stride = 2 if i < n_layers - 1 else 1
            layers.append(nn.Conv2d(ch_in, ch_out, kernel_size=4, stride=stride, padding=1))
            strides.append(stride)
            ch_in, ch_out = ch_out, min(2 * ch_out, 8 * base_channels)
        self.layers = nn.ModuleList(layers)
        self.cam = CamClassifier(ch_in)
        self.score = nn.Conv2d(ch_in, 1, kernel_size=4, stride=1, padding=1)
        self.receptive_field = _receptive_field([4] * (n_layers + 1), strides + [1])

    def forward(self, x):
        for layer in self.layers:
            x = F.leaky_relu(layer(x), 0.2)
        cam = self.cam(x)
        return self.score(cam.attended_features), cam.cam_logit


def _receptive_field(kernels, strides) -> int:
    rf, jump = 1, 1
    for k, s in zip(kernels, strides):
        rf += (k - 1) * jump
        jump *= s
    return rf


class Stage2Discriminator(nn.Module):
    """Local (shallow, half-scale) and global (deep, full-frame) critics."""

    def __init__(self, config: Stage2Config, local_layers: int = 2, global_layers: int = 4):
        super().__init__()
        self.local = _DiscHead(config.disc_channels, local_layers)
        self.global_ = _DiscHead(config.disc_channels, global_layers)
        # effective receptive field in frame pixels; half-scale input doubles it
        self.local_rf = 2 * self.local.receptive_field
        self.global_rf = self.global_.receptive_field
        if self.local_rf >= self.global_rf:
            raise ValidationError(
                f"local head must be shallower than global: rf {self.local_rf} >= {self.global_rf}"
            )

    def forward(self, frame: torch.Tensor):
        if frame.ndim != 4 or frame.shape[1] != 3:
            raise ValidationError(f"expected (B, 3, H, W) frame, got {tuple(frame.shape)}")
        local_score, local_cam = self.local(F.avg_pool2d(frame, kernel_size=2, stride=2))
        global_score, global_cam = self.global_(frame)
        return [local_score, global_score], [local_cam, global_cam]


def discriminate(frame: torch.Tensor, disc: Stage2Discriminator):
    """Score a frame; returns ([local, global] score maps, [local, global] cam logits)."""
    return disc(frame)


@dataclass
class PredictorConfig:
    past_frames: int = 2
    frame_shape: tuple[int, int, int] = (3, 64, 64)


class TemporalPredictor(nn.Module):
    """UNet forecasting frame t+1 from the past t frames.

    Encoder level k is concatenated onto decoder level k (skip connections).
    """

    def __init__(self, config: PredictorConfig | Stage2Config):
        super().__init__()
        if isinstance(config, Stage2Config):
            config = PredictorConfig(past_frames=config.past_frames,
                                     frame_shape=(3, config.resolution, config.resolution))
        self.config = config
        t = config.past_frames
        ch = 16
        self.enc1 = nn.Conv2d(3 * t, ch, kernel_size=3, padding=1)
        self.enc2 = nn.Conv2d(ch, 2 * ch, kernel_size=4, stride=2, padding=1)
        self.enc3 = nn.Conv2d(2 * ch, 4 * ch, kernel_size=4, stride=2, padding=1)
        self.mid = nn.Conv2d(4 * ch, 4 * ch, kernel_size=3, padding=1)
        self.dec3 = nn.Conv2d(4 * ch + 4 * ch, 2 * ch, kernel_size=3, padding=1)
        self.dec2 = nn.Conv2d(2 * ch + 2 * ch, ch, kernel_size=3, padding=1)
        self.dec1 = nn.Conv2d(ch + ch, ch, kernel_size=3, padding=1)
        self.out = nn.Conv2d(ch, 3, kernel_size=3, padding=1)

    def forward(self, frames) -> torch.Tensor:
        x = self._stack(frames)
        e1 = F.leaky_relu(self.enc1(x), 0.2)
        e2 = F.leaky_relu(self.enc2(e1), 0.2)
        e3 = F.leaky_relu(self.enc3(e2), 0.2)
        m = F.leaky_relu(self.mid(e3), 0.2)
        d3 = F.leaky_relu(self.dec3(torch.cat([m, e3], dim=1)), 0.2)
        d3 = F.interpolate(d3, scale_factor=2, mode="nearest")
        d2 = F.leaky_relu(self.dec2(torch.cat([d3, e2], dim=1)), 0.2)
        d2 = F.interpolate(d2, scale_factor=2, mode="nearest")
        d1 = F.leaky_relu(self.dec1(torch.cat([d2, e1], dim=1)), 0.2)
        return torch.tanh(self.out(d1))

    def _stack(self, frames) -> torch.Tensor:
        t = self.config.past_frames
        if isinstance(frames, (list, tuple)):
            if len(frames) != t:
                raise ValidationError(f"predictor needs exactly {t} past frames, got {len(frames)}")
            frames = torch.cat(list(frames), dim=1)
        if frames.ndim != 4 or frames.shape[1] != 3 * t:
            raise ValidationError(
                f"expected {t} frames stacked into {3 * t} channels, got {tuple(frames.shape)}"
            )
        return frames


def predict_next(frames, predictor: TemporalPredictor) -> torch.Tensor:
    return predictor(frames)
