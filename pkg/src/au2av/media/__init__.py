from .audio import (
    CANONICAL_SAMPLE_RATE,
    CANONICAL_WINDOW_MS,
    AudioClip,
    AudioWindowSequence,
    frame_audio_windows,
    frame_count_for,
    load_audio,
    slice_audio_windows,
    write_wav,
)
from .mfcc import MfccWindow, compute_mfcc
from .video import (
    FaceRegion,
    TalkingClip,
    crop_lower_half,
    list_clip_dirs,
    load_video,
    make_unpaired_streams,
    read_manifest,
    select_aligned_identity_frame,
    write_clip,
    write_manifest,
)

__all__ = [
    "CANONICAL_SAMPLE_RATE",
    "CANONICAL_WINDOW_MS",
    "AudioClip",
    "AudioWindowSequence",
    "FaceRegion",
    "MfccWindow",
    "TalkingClip",
    "compute_mfcc",
    "crop_lower_half",
    "frame_audio_windows",
    "frame_count_for",
    "list_clip_dirs",
    "load_audio",
    "load_video",
    "make_unpaired_streams",
    "read_manifest",
    "select_aligned_identity_frame",
    "slice_audio_windows",
    "write_clip",
    "write_manifest",
    "write_wav",
]
