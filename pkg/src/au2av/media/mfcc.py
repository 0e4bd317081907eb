"""MFCC extraction for a single audio window.

Standard pipeline: 25 ms Hamming sub-frames at a 10 ms hop, power spectrum,
26-band mel filterbank, log (floored so silence stays finite), DCT-II, keep
the first 13 cepstral coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dct, rfft

from ..errors import ValidationError

N_COEFFICIENTS = 13
N_MEL_FILTERS = 26
SUBFRAME_MS = 25.0
HOP_MS = 10.0
N_FFT = 512
LOG_FLOOR = 1e-10


@dataclass
class MfccWindow:
    """MFCC matrix for one per-frame audio window."""

    coefficients: np.ndarray  # (time_steps, 13)
    center_frame_index: int

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=np.float32)
        if self.coefficients.ndim != 2 or self.coefficients.shape[1] != N_COEFFICIENTS:
            raise ValidationError(
                f"MFCC matrix must be (time_steps, {N_COEFFICIENTS}), got {self.coefficients.shape}"
            )
        if not np.all(np.isfinite(self.coefficients)):
            raise ValidationError("MFCC matrix contains non-finite values")


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate: int, n_fft: int = N_FFT, n_filters: int = N_MEL_FILTERS) -> np.ndarray:
    """Triangular mel filterbank, shape (n_filters, n_fft // 2 + 1)."""
    low, high = hz_to_mel(0.0), hz_to_mel(sample_rate / 2.0)
    mel_points = np.linspace(low, high, n_filters + 2)
    hz_points = mel_to_hz(mel_points)
    bins = np.floor((n_fft + 1) * hz_points / sample_rate).astype(int)
    bank = np.zeros((n_filters, n_fft // 2 + 1))
    for j in range(n_filters):
        left, center, right = bins[j], bins[j + 1], bins[j + 2]
        for k in range(left, center):
            if center > left:
                bank[j, k] = (k - left) / (center - left)
        for k in range(center, right):
            if right > center:
                bank[j, k] = (right - k) / (right - center)
    return bank


def compute_mfcc(window_samples, sample_rate: int) -> np.ndarray:
    """MFCC matrix (time_steps, 13) for one audio window.

    Deterministic for a fixed input; all-zero input yields a finite constant
    matrix (the log is floored), never NaN.
    """
    samples = np.asarray(window_samples, dtype=np.float64)
    if samples.ndim != 1 or samples.size == 0:
        raise ValidationError(f"expected a nonempty 1-D sample window, got shape {samples.shape}")
    frame_len = int(round(SUBFRAME_MS * sample_rate / 1000.0))
    hop = int(round(HOP_MS * sample_rate / 1000.0))
    if samples.size < frame_len:
        # single short sub-frame, zero-padded to the analysis length
        samples = np.pad(samples, (0, frame_len - samples.size))
    n_steps = 1 + (samples.size - frame_len) // hop
    window_fn = np.hamming(frame_len)
    bank = mel_filterbank(sample_rate)
    coeffs = np.empty((n_steps, N_COEFFICIENTS))
    for t in range(n_steps):
        frame = samples[t * hop: t * hop + frame_len] * window_fn
        spectrum = rfft(frame, n=N_FFT)
        power = (np.abs(spectrum) ** 2) / N_FFT
        energies = bank @ power
        log_energies = np.log(np.maximum(energies, LOG_FLOOR))
        coeffs[t] = dct(log_energies, type=2, norm="ortho")[:N_COEFFICIENTS]
    return coeffs.astype(np.float32)
