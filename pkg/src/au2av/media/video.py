"""Frame-sequence ingestion, face-region cropping and unpaired stream setup.

Clips live on disk as directories of zero-padded PNG frames
(frame_000001.png ascending) plus a sidecar WAV and a key=value manifest.
In memory frames are float32 arrays of shape (H, W, 3) in [0, 1]; the
[-1, 1] convention exists only at network boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import ProviderError, ValidationError
from .audio import AudioClip, load_audio, write_wav

FRAME_PATTERN = "frame_{:06d}.png"
MANIFEST_NAME = "manifest.txt"


@dataclass
class TalkingClip:
    """Ordered frames at a fixed rate, optionally with aligned audio."""

    frames: list[np.ndarray]
    fps: float
    audio: AudioClip | None = None
    name: str = ""
    transcript: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.fps <= 0:
            raise ValidationError(f"fps must be positive, got {self.fps}")
        if not self.frames:
            raise ValidationError("clip has no frames")
        frames = []
        shape = None
        for i, frame in enumerate(self.frames):
            arr = np.asarray(frame, dtype=np.float32)
            if arr.ndim != 3 or arr.shape[2] != 3:
                raise ValidationError(f"frame {i} must be (H, W, 3), got {arr.shape}")
            if shape is None:
                shape = arr.shape
            elif arr.shape != shape:
                raise ValidationError(f"frame {i} has shape {arr.shape}, expected {shape}")
            if arr.min() < -1e-6 or arr.max() > 1.0 + 1e-6:
                raise ValidationError(f"frame {i} pixel values outside [0, 1]")
            frames.append(np.clip(arr, 0.0, 1.0))
        self.frames = frames

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return self.frames[0].shape

    @property
    def duration_seconds(self) -> float:
        return len(self.frames) / self.fps

    def has_temporal_window(self, window_len: int) -> bool:
        """Whether the clip is long enough for losses over window_len frames."""
        return len(self.frames) >= window_len


@dataclass
class FaceRegion:
    """A crop, flagged when it is the canonical lower half."""

    image: np.ndarray
    is_lower_half: bool = False


def crop_lower_half(frame: np.ndarray) -> FaceRegion:
    """Rows [H/2, H), all columns. Odd heights replicate the bottom row first."""
    frame = np.asarray(frame)
    if frame.ndim not in (2, 3):
        raise ValidationError(f"expected an image array, got shape {frame.shape}")
    h = frame.shape[0]
    if h % 2 == 1:
        frame = np.concatenate([frame, frame[-1:]], axis=0)
        h += 1
    return FaceRegion(image=frame[h // 2:], is_lower_half=True)


def read_manifest(clip_dir) -> dict[str, str]:
    path = Path(clip_dir) / MANIFEST_NAME
    if not path.exists():
        raise ValidationError(f"missing manifest: {path}")
    entries = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"malformed manifest line in {path}: {line!r}")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    return entries


def write_manifest(clip_dir, entries: dict[str, str]) -> None:
    path = Path(clip_dir) / MANIFEST_NAME
    lines = [f"{key}={entries[key]}" for key in entries]
    path.write_text("\n".join(lines) + "\n")


def load_video(path, fps: float = 25.0) -> TalkingClip:
    """Load a clip from a directory of PNG frames (manifest optional).

    With a manifest present, fps / audio_path / transcript come from it and
    the fps argument is ignored.
    """
    clip_dir = Path(path)
    if not clip_dir.is_dir():
        raise ValidationError(f"not a clip directory: {clip_dir}")
    frame_paths = sorted(clip_dir.glob("frame_*.png"))
    if not frame_paths:
        raise ValidationError(f"no frames found under {clip_dir}")
    frames = []
    for frame_path in frame_paths:
        with Image.open(frame_path) as img:
            frames.append(np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0)
    shapes = {f.shape for f in frames}
    if len(shapes) > 1:
        raise ValidationError(f"mixed frame sizes in {clip_dir}: {sorted(shapes)}")

    audio = None
    transcript: list[str] = []
    if (clip_dir / MANIFEST_NAME).exists():
        manifest = read_manifest(clip_dir)
        fps = float(manifest.get("fps", fps))
        declared = manifest.get("frame_count")
        if declared is not None and int(declared) != len(frames):
            raise ValidationError(
                f"{clip_dir}: manifest declares {declared} frames, found {len(frames)}"
            )
        audio_path = manifest.get("audio_path", "")
        if audio_path:
            audio = load_audio(clip_dir / audio_path)
        transcript = manifest.get("transcript", "").split()
    return TalkingClip(frames=frames, fps=fps, audio=audio, name=clip_dir.name, transcript=transcript)


def write_clip(clip: TalkingClip, out_dir) -> Path:
    """Write frames, sidecar WAV and manifest; returns the clip directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(clip.frames):
        img = Image.fromarray((np.clip(frame, 0.0, 1.0) * 255.0).round().astype(np.uint8))
        img.save(out_dir / FRAME_PATTERN.format(i + 1))
    entries = {"fps": f"{clip.fps:g}", "frame_count": str(len(clip.frames)), "audio_path": ""}
    if clip.audio is not None:
        write_wav(out_dir / "audio.wav", clip.audio)
        entries["audio_path"] = "audio.wav"
    if clip.transcript:
        entries["transcript"] = " ".join(clip.transcript)
    write_manifest(out_dir, entries)
    return out_dir


def select_aligned_identity_frame(clip: TalkingClip, pose_provider) -> np.ndarray:
    """Frame minimizing |yaw| + |pitch| + |roll|; earliest frame wins ties."""
    best_index = None
    best_score = None
    failures = []
    for i, frame in enumerate(clip.frames):
        try:
            yaw, pitch, roll = pose_provider(frame)
        except Exception as exc:  # provider is third-party code
            failures.append((i, exc))
            continue
        score = abs(yaw) + abs(pitch) + abs(roll)
        if best_score is None or score < best_score:
            best_score = score
            best_index = i
    if best_index is None:
        raise ProviderError(
            f"pose provider failed on all {len(clip.frames)} frames; first error: {failures[0][1]!r}"
        )
    return clip.frames[best_index]


def list_clip_dirs(domain_dir) -> list[Path]:
    domain_dir = Path(domain_dir)
    if not domain_dir.is_dir():
        raise ValidationError(f"not a directory: {domain_dir}")
    return sorted(d for d in domain_dir.iterdir() if d.is_dir() and any(d.glob("frame_*.png")))


def make_unpaired_streams(dir_a, dir_b) -> tuple[list[TalkingClip], list[TalkingClip]]:
    """Ordered clip streams for two domains; no pairing across streams."""
    streams = []
    for domain_dir in (dir_a, dir_b):
        clip_dirs = list_clip_dirs(domain_dir)
        if not clip_dirs:
            raise ValidationError(f"no clips found under {domain_dir}")
        streams.append([load_video(d) for d in clip_dirs])
    return streams[0], streams[1]
