"""Blink rate from an eye-aspect-ratio signal.

A blink is a run of at least `consecutive_min` frames below the threshold
that then recovers above it; shorter dips are treated as detector noise.
"""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError

EAR_THRESHOLD = 0.2
CONSECUTIVE_MIN = 2


def count_blinks(ear_series, threshold: float = EAR_THRESHOLD,
                 consecutive_min: int = CONSECUTIVE_MIN) -> int:
    series = np.asarray(ear_series, dtype=np.float64)
    if series.ndim != 1:
        raise ValidationError(f"EAR series must be 1-D, got shape {series.shape}")
    blinks = 0
    run = 0
    for value in series:
        if value < threshold:
            run += 1
        else:
            if run >= consecutive_min:
                blinks += 1
            run = 0
    return blinks


def blinks_per_sec(ear_series, fps: float, threshold: float = EAR_THRESHOLD,
                   consecutive_min: int = CONSECUTIVE_MIN) -> float:
    series = np.asarray(ear_series, dtype=np.float64)
    if series.size < 3:
        raise ValidationError(f"EAR series needs at least 3 frames, got {series.size}")
    if fps <= 0:
        raise ValidationError(f"fps must be positive, got {fps}")
    duration = series.size / fps
    return count_blinks(series, threshold, consecutive_min) / duration
