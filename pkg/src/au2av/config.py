"""Pipeline configuration: a flat key=value text file with a fixed schema.

Unknown keys are rejected so typos fail fast. The config hash is computed
over the sorted canonical serialization, making it stable under key
reordering; checkpoints record it and generation refuses mismatched pairs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError


def _positive(x):
    return x > 0


def _nonnegative(x):
    return x >= 0


def _unit_interval(x):
    return 0.0 <= x < 1.0


def _power_of_two(x):
    return x >= 16 and (x & (x - 1)) == 0


def _bool(text: str) -> bool:
    if text in ("true", "1", "yes"):
        return True
    if text in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key: (parser, default, validator or None)
SCHEMA = {
    "seed": (int, 0, _nonnegative),
    "resolution": (int, 64, _power_of_two),
    "fps": (float, 25.0, _positive),
    "sample_rate": (int, 16000, _positive),
    "window_ms": (float, 200.0, _positive),

    "providers.pose": (str, "frontal", None),
    "providers.landmarks": (str, "static_hexagon", None),
    "providers.perceptual": (str, "frozen_conv", None),
    "providers.embedding": (str, "pooled_pixels", None),
    "providers.lip_reader": (str, "echo", None),

    "stage1.base_channels": (int, 16, _positive),
    "stage1.embedding_dim": (int, 256, _positive),
    "stage1.temporal_window": (int, 4, _positive),
    "stage1.sync_dim": (int, 256, _positive),
    "stage1.sync_resolution": (int, 224, _positive),
    "stage1.sync_channels": (int, 8, _positive),
    "stage1.disc_channels": (int, 16, _positive),
    "stage1.disc_layers": (int, 3, _positive),
    "stage1.lambda_fm": (float, 10.0, _nonnegative),
    "stage1.lambda_pl": (float, 10.0, _nonnegative),
    "stage1.lambda_cl": (float, 1.0, _nonnegative),
    "stage1.lambda_bl": (float, 10.0, _nonnegative),
    "stage1.margin": (float, 1.0, _positive),
    "stage1.lr": (float, 0.002, _positive),
    "stage1.beta1": (float, 0.0, _unit_interval),
    "stage1.beta2": (float, 0.90, _unit_interval),
    "stage1.constant_epochs": (int, 50, _nonnegative),
    "stage1.decay_epochs": (int, 100, _positive),
    "stage1.epochs": (int, 3, _positive),
    "stage1.steps_per_epoch": (int, 0, _nonnegative),  # 0: one step per clip
    "stage1.phase_override": (int, 0, lambda x: x in (0, 1, 2, 3)),
    "stage1.stabilization_rel_epsilon": (float, 0.01, _positive),
    "stage1.stabilization_patience": (int, 5, _positive),
    "stage1.sync_pretrain_steps": (int, 30, _nonnegative),
    "stage1.sync_adversarial": (_bool, False, None),

    "stage2.base_channels": (int, 16, _positive),
    "stage2.n_res_blocks": (int, 4, _positive),
    "stage2.past_frames": (int, 2, _positive),
    "stage2.disc_channels": (int, 16, _positive),
    "stage2.lambda_cam": (float, 2000.0, _nonnegative),
    "stage2.lambda_recycle": (float, 100.0, _nonnegative),
    "stage2.lambda_identity": (float, 10.0, _nonnegative),
    "stage2.lambda_lip": (float, 100.0, _nonnegative),
    "stage2.lambda_bl": (float, 100.0, _nonnegative),
    "stage2.lr": (float, 0.0001, _positive),
    "stage2.beta1": (float, 0.5, _unit_interval),
    "stage2.beta2": (float, 0.999, _unit_interval),
    "stage2.constant_epochs": (int, 50, _nonnegative),
    "stage2.decay_epochs": (int, 100, _positive),
    "stage2.epochs": (int, 3, _positive),
    "stage2.steps_per_epoch": (int, 0, _nonnegative),
    "stage2.identity_on_source": (_bool, False, None),

    "adapt.epochs": (int, 5, _nonnegative),
    "adapt.lr": (float, 0.002, _positive),
}


@dataclass
class PipelineConfig:
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        merged = {key: default for key, (_, default, _) in SCHEMA.items()}
        for key, value in self.values.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = value
        for key, value in merged.items():
            _, _, validator = SCHEMA[key]
            if validator is not None and not validator(value):
                raise ConfigError(f"config key {key!r} has invalid value {value!r}")
        self.values = merged

    def __getitem__(self, key: str):
        try:
            return self.values[key]
        except KeyError:
            raise ConfigError(f"unknown config key {key!r}") from None

    def serialize(self) -> str:
        lines = []
        for key in sorted(self.values):
            value = self.values[key]
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        """Digest of every key except the seed, so a --seed override stays
        compatible with existing checkpoints."""
        lines = [line for line in self.serialize().splitlines() if not line.startswith("seed=")]
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:16]

    def save(self, path) -> None:
        Path(path).write_text(self.serialize())

    def with_overrides(self, **overrides) -> "PipelineConfig":
        values = dict(self.values)
        for key, value in overrides.items():
            values[key.replace("__", ".")] = value
        return PipelineConfig(values=values)


def parse_config_text(text: str) -> PipelineConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        parser, _, _ = SCHEMA[key]
        try:
            values[key] = parser(raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    return PipelineConfig(values=values)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text())
