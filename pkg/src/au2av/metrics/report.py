"""Clip-level evaluation: run every computable metric and collect the
results, provenance and skips into one serializable report."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..errors import ValidationError
from ..landmarks import eye_aspect_ratio
from .blinks import blinks_per_sec
from .distances import acd
from .image_quality import cpbd, psnr, ssim
from .kid import kid
from .wer import wer

METRIC_ORDER = (
    "psnr", "ssim", "cpbd", "kid_x100", "acd_cosine", "acd_euclidean",
    "blinks_per_sec", "wer",
)


@dataclass
class MetricEntry:
    name: str
    value: float | None = None
    std: float | None = None
    skipped: bool = False
    provider: str | None = None
    note: str = ""


@dataclass
class MetricReport:
    entries: list[MetricEntry] = field(default_factory=list)
    inputs: dict = field(default_factory=dict)
    config_hash: str = ""

    def __getitem__(self, name: str) -> MetricEntry:
        for entry in self.entries:
            if entry.name == name:
                return entry
        raise KeyError(name)

    def to_json(self) -> str:
        return json.dumps(
            {"entries": [asdict(e) for e in self.entries],
             "inputs": self.inputs,
             "config_hash": self.config_hash},
            indent=2, sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        data = json.loads(text)
        return cls(
            entries=[MetricEntry(**e) for e in data["entries"]],
            inputs=data["inputs"],
            config_hash=data["config_hash"],
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "MetricReport":
        return cls.from_json(Path(path).read_text())

    def table(self) -> str:
        lines = [f"{'metric':<16} {'value':>12} {'std':>10}  note"]
        for name in METRIC_ORDER:
            try:
                entry = self[name]
            except KeyError:
                continue
            if entry.skipped:
                lines.append(f"{name:<16} {'skipped':>12} {'-':>10}  {entry.note}")
            else:
                std = f"{entry.std:.4f}" if entry.std is not None else "-"
                value = "inf" if entry.value == math.inf else f"{entry.value:.4f}"
                lines.append(f"{name:<16} {value:>12} {std:>10}  {entry.note}")
        return "\n".join(lines)


def _provider_name(provider) -> str:
    return type(provider).__name__


def evaluate_clip(generated, reference, providers: dict | None = None,
                  config_hash: str = "", kid_seed: int = 0) -> MetricReport:
    """Score a generated clip against its reference.

    providers may carry 'embedding' (KID, ACD), 'landmarks' (blink rate) and
    'lip_reader' (WER); metrics whose provider is missing are reported as
    skipped rather than silently dropped.
    """
    providers = providers or {}
    if len(generated.frames) != len(reference.frames):
        raise ValidationError(
            f"paired metrics need matched frame counts: generated {len(generated.frames)} "
            f"vs reference {len(reference.frames)}"
        )
    entries = []

    mse_pairs = [(g, r) for g, r in zip(generated.frames, reference.frames)]
    total_psnr = psnr(
        _stack([g for g, _ in mse_pairs]),
        _stack([r for _, r in mse_pairs]),
        max_value=1.0,
    )
    entries.append(MetricEntry("psnr", value=total_psnr, note="dB, pooled MSE over all frames"))

    ssim_values = [ssim(g, r) for g, r in mse_pairs]
    entries.append(MetricEntry("ssim", value=float(_mean(ssim_values))))

    entries.append(MetricEntry("cpbd", value=float(_mean([cpbd(f) for f in generated.frames]))))

    embedding = providers.get("embedding")
    if embedding is None:
        entries.append(MetricEntry("kid_x100", skipped=True, note="no embedding provider"))
        entries.append(MetricEntry("acd_cosine", skipped=True, note="no embedding provider"))
        entries.append(MetricEntry("acd_euclidean", skipped=True, note="no embedding provider"))
    else:
        real_feats = [embedding(f) for f in reference.frames]
        fake_feats = [embedding(f) for f in generated.frames]
        value, std = kid(real_feats, fake_feats, seed=kid_seed)
        entries.append(MetricEntry("kid_x100", value=100.0 * value, std=100.0 * std,
                                   provider=_provider_name(embedding)))
        result = acd(generated.frames, reference.frames[0], embedding)
        entries.append(MetricEntry(
            "acd_cosine", value=result.cosine, provider=_provider_name(embedding),
            note=f"threshold 0.02: {'pass' if result.cosine_ok else 'fail'}"))
        entries.append(MetricEntry(
            "acd_euclidean", value=result.euclidean, provider=_provider_name(embedding),
            note=f"threshold 0.20: {'pass' if result.euclidean_ok else 'fail'}"))

    landmarks = providers.get("landmarks")
    if landmarks is None:
        entries.append(MetricEntry("blinks_per_sec", skipped=True, note="no landmark provider"))
    else:
        ears = [eye_aspect_ratio(landmarks(f)) for f in generated.frames]
        entries.append(MetricEntry("blinks_per_sec", value=blinks_per_sec(ears, generated.fps),
                                   provider=_provider_name(landmarks)))

    lip_reader = providers.get("lip_reader")
    if lip_reader is None:
        entries.append(MetricEntry("wer", skipped=True, note="no lip-reader provider"))
    else:
        reference_words = lip_reader(reference)
        hypothesis_words = lip_reader(generated)
        if reference_words:
            entries.append(MetricEntry("wer", value=wer(reference_words, hypothesis_words),
                                       provider=_provider_name(lip_reader)))
        else:
            entries.append(MetricEntry("wer", skipped=True, provider=_provider_name(lip_reader),
                                       note="lip reader produced no reference words"))

    inputs = {
        "generated": {"name": generated.name, "frames": len(generated.frames), "fps": generated.fps},
        "reference": {"name": reference.name, "frames": len(reference.frames), "fps": reference.fps},
    }
    return MetricReport(entries=entries, inputs=inputs, config_hash=config_hash)


def _stack(frames):
    import numpy as np
    return np.stack(frames)


def _mean(values):
    return sum(values) / len(values)
