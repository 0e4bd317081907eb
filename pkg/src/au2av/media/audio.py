"""Audio ingestion and per-video-frame windowing.

Audio is carried as mono float32 in [-1, 1] at a canonical 16 kHz. Each
video frame gets one overlapping 200 ms window centered on the frame's
timestamp; the waveform is zero-padded by half a window at both ends so
every frame, including the first and last, owns a full-width window.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from ..errors import ValidationError
from .mfcc import MfccWindow, compute_mfcc

CANONICAL_SAMPLE_RATE = 16_000
CANONICAL_WINDOW_MS = 200.0


@dataclass
class AudioClip:
    """Mono waveform with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1:
            raise ValidationError(f"audio must be mono 1-D, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise ValidationError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.size == 0:
            raise ValidationError("audio clip is empty")
        if not np.all(np.isfinite(self.samples)):
            raise ValidationError("audio contains non-finite samples")

    @property
    def duration_seconds(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class AudioWindowSequence:
    """One MFCC window per video frame, plus the framing geometry."""

    windows: list[MfccWindow]
    stride_samples: int
    window_samples: int
    raw_windows: np.ndarray = field(repr=False, default=None)  # (n_frames, window_samples)

    def __len__(self) -> int:
        return len(self.windows)


def load_audio(path, target_rate: int = CANONICAL_SAMPLE_RATE) -> AudioClip:
    """Read a PCM WAV file, downmix to mono and resample to target_rate."""
    path = Path(path)
    with wave.open(str(path), "rb") as wav:
        n_channels = wav.getnchannels()
        sample_width = wav.getsampwidth()
        rate = wav.getframerate()
        n_frames = wav.getnframes()
        raw = wav.readframes(n_frames)
    if n_frames == 0:
        raise ValidationError(f"zero-length audio: {path}")
    if sample_width == 2:
        data = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    elif sample_width == 1:
        data = (np.frombuffer(raw, dtype=np.uint8).astype(np.float32) - 128.0) / 128.0
    elif sample_width == 4:
        data = np.frombuffer(raw, dtype="<i4").astype(np.float32) / 2147483648.0
    else:
        raise ValidationError(f"unsupported PCM sample width {sample_width} in {path}")
    if n_channels > 1:
        data = data.reshape(-1, n_channels).mean(axis=1)
    if rate != target_rate:
        g = np.gcd(int(target_rate), int(rate))
        data = resample_poly(data.astype(np.float64), target_rate // g, rate // g)
        data = data.astype(np.float32)
    return AudioClip(samples=data, sample_rate=target_rate)


def write_wav(path, clip: AudioClip) -> None:
    """Write a clip as PCM-16 mono WAV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pcm = np.clip(clip.samples, -1.0, 1.0)
    pcm = (pcm * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(clip.sample_rate)
        wav.writeframes(pcm.tobytes())


def frame_count_for(clip: AudioClip, fps: float) -> int:
    """Number of video frames the clip covers: round(duration * fps)."""
    return int(round(clip.duration_seconds * fps))


def slice_audio_windows(clip: AudioClip, fps: float, window_ms: float = CANONICAL_WINDOW_MS) -> np.ndarray:
    """Cut one raw window per video frame, centered on the frame timestamp.

    Window i spans [i*stride - W/2, i*stride + W/2) of the waveform, where
    stride = round(sample_rate / fps) and W = window_ms worth of samples.
    The waveform is zero-padded by W/2 at both ends, so in the padded signal
    window i is simply padded[i*stride : i*stride + W].

    Returns an array of shape (n_frames, W).
    """
    if fps <= 0:
        raise ValidationError(f"fps must be positive, got {fps}")
    if window_ms <= 0:
        raise ValidationError(f"window_ms must be positive, got {window_ms}")
    stride = int(round(clip.sample_rate / fps))
    window = int(round(window_ms * clip.sample_rate / 1000.0))
    window += window % 2  # even, so the half-window pad is exact
    if clip.samples.size < window:
        raise ValidationError(
            f"clip of {clip.samples.size} samples is shorter than one "
            f"{window}-sample window; refusing to frame it"
        )
    n_frames = frame_count_for(clip, fps)
    half = window // 2
    padded = np.concatenate([
        np.zeros(half, dtype=np.float32),
        clip.samples,
        np.zeros(half, dtype=np.float32),
    ])
    out = np.empty((n_frames, window), dtype=np.float32)
    for i in range(n_frames):
        start = i * stride
        out[i] = padded[start:start + window]
    return out


def frame_audio_windows(clip: AudioClip, fps: float, window_ms: float = CANONICAL_WINDOW_MS) -> AudioWindowSequence:
    """Slice per-frame windows and compute their MFCC matrices."""
    raw = slice_audio_windows(clip, fps, window_ms)
    stride = int(round(clip.sample_rate / fps))
    windows = [
        MfccWindow(coefficients=compute_mfcc(raw[i], clip.sample_rate), center_frame_index=i)
        for i in range(raw.shape[0])
    ]
    return AudioWindowSequence(
        windows=windows,
        stride_samples=stride,
        window_samples=raw.shape[1],
        raw_windows=raw,
    )
