import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

torch.set_num_threads(1)  # bit-stable reductions for the determinism tests

from au2av.config import PipelineConfig  # noqa: E402
from au2av.media import AudioClip, TalkingClip  # noqa: E402


def smooth_face_frames(n=5, res=64, seed=0, mouth_motion=True):
    """Smooth gradient 'face' with a moving bright blob in the lower half."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:res, 0:res] / res
    tint = rng.uniform(0.8, 1.2, size=3)
    base = 0.25 + 0.5 * np.stack([
        tint[0] * (0.6 * yy + 0.2 * xx),
        tint[1] * (0.5 - 0.3 * yy + 0.3 * xx),
        tint[2] * (0.4 + 0.2 * np.sin(3 * xx)),
    ], axis=-1)
    frames = []
    for i in range(n):
        f = base.copy()
        if mouth_motion:
            mouth_x = 0.5 + 0.08 * np.sin(i * 1.3)
            blob = np.exp(-(((xx - mouth_x) ** 2 + (yy - 0.78) ** 2) / 0.004))
            f = f + 0.35 * blob[..., None] * np.array([1.0, 0.2, 0.2]) * (0.5 + 0.5 * np.sin(i * 2.1))
        frames.append(np.clip(f, 0, 1).astype(np.float32))
    return frames


def tone_audio(seconds=1.0, rate=16000, freq=440.0, seed=0):
    t = np.arange(int(seconds * rate)) / rate
    modulated = 0.3 * np.sin(2 * np.pi * freq * t) * (1 + 0.5 * np.sin(2 * np.pi * 5 * t))
    return AudioClip(modulated.astype(np.float32), rate)


def make_clip(n_frames=5, res=64, seed=0, fps=25.0, with_audio=True, name="clip",
              transcript=()):
    audio = tone_audio(seconds=n_frames / fps, freq=300.0 + 40 * seed, seed=seed) if with_audio else None
    return TalkingClip(frames=smooth_face_frames(n_frames, res, seed), fps=fps,
                       audio=audio, name=name, transcript=list(transcript))


TOY_STAGE1 = {
    "resolution": 64,
    "stage1.base_channels": 8,
    "stage1.embedding_dim": 32,
    "stage1.sync_dim": 32,
    "stage1.sync_resolution": 64,
    "stage1.sync_channels": 4,
    "stage1.disc_channels": 8,
    "stage1.sync_pretrain_steps": 10,
}

TOY_STAGE2 = {
    "resolution": 64,
    "stage2.base_channels": 8,
    "stage2.disc_channels": 8,
}


@pytest.fixture
def toy_config():
    return PipelineConfig(values={**TOY_STAGE1, **TOY_STAGE2})
