"""Full-reference and no-reference image quality metrics: PSNR, SSIM, CPBD."""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import gaussian_filter

from ..errors import ValidationError

SSIM_SIGMA = 1.5
SSIM_TRUNCATE = 3.5
SSIM_WINDOW = 2 * int(SSIM_TRUNCATE * SSIM_SIGMA + 0.5) + 1  # 11
SSIM_K1 = 0.01
SSIM_K2 = 0.03

# Just-noticeable-blur parameterization for CPBD
CPBD_BETA = 3.6
CPBD_JNB_WIDTH_LOW_CONTRAST = 5.0   # luminance contrast <= 50 (8-bit scale)
CPBD_JNB_WIDTH_HIGH_CONTRAST = 3.0
CPBD_CONTRAST_KNEE = 50.0
CPBD_BLUR_PROBABILITY_JND = 0.63
CPBD_EDGE_THRESHOLD = 0.1  # fraction of the maximum gradient magnitude

GRAY_WEIGHTS = np.array([0.2989, 0.5870, 0.1140])


def to_grayscale(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        if image.shape[2] != 3:
            raise ValidationError(f"expected (H, W) or (H, W, 3) image, got {image.shape}")
        return image @ GRAY_WEIGHTS
    if image.ndim != 2:
        raise ValidationError(f"expected (H, W) or (H, W, 3) image, got {image.shape}")
    return image


def psnr(a: np.ndarray, b: np.ndarray, max_value: float = 1.0) -> float:
    """10 * log10(max^2 / MSE); identical inputs return +inf."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_value ** 2 / mse)


def ssim(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> float:
    """Mean local structural similarity with an 11x11 Gaussian window.

    Color inputs are converted to luminance first. Standard stabilizers
    C1 = (0.01 L)^2, C2 = (0.03 L)^2.
    """
    gray_a = to_grayscale(a)
    gray_b = to_grayscale(b)
    if gray_a.shape != gray_b.shape:
        raise ValidationError(f"image shapes differ: {gray_a.shape} vs {gray_b.shape}")
    if min(gray_a.shape) < SSIM_WINDOW:
        raise ValidationError(
            f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {gray_a.shape}"
        )
    filt = dict(sigma=SSIM_SIGMA, truncate=SSIM_TRUNCATE, mode="reflect")
    ux = gaussian_filter(gray_a, **filt)
    uy = gaussian_filter(gray_b, **filt)
    uxx = gaussian_filter(gray_a * gray_a, **filt)
    uyy = gaussian_filter(gray_b * gray_b, **filt)
    uxy = gaussian_filter(gray_a * gray_b, **filt)
    vx = uxx - ux * ux
    vy = uyy - uy * uy
    vxy = uxy - ux * uy
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    s = ((2 * ux * uy + c1) * (2 * vxy + c2)) / ((ux ** 2 + uy ** 2 + c1) * (vx + vy + c2))
    pad = (SSIM_WINDOW - 1) // 2
    return float(s[pad:-pad, pad:-pad].mean())


def cpbd(image: np.ndarray) -> float:
    """Cumulative probability of blur detection; higher means sharper.

    Horizontal-gradient edge pixels get a Marziliano-style width (distance
    between the flanking local extrema along the row); each width is
    compared to the just-noticeable-blur width for the local contrast and
    the score is the fraction of edges whose blur-detection probability
    stays below the JND level. An edge-free image scores 0.
    """
    gray = to_grayscale(image)
    if gray.max() <= 1.0 + 1e-9:
        gray = gray * 255.0
    h, w = gray.shape
    grad = np.zeros_like(gray)
    grad[:, 1:-1] = (gray[:, 2:] - gray[:, :-2]) / 2.0
    magnitude = np.abs(grad)
    peak = magnitude.max()
    if peak <= 1e-12:
        return 0.0
    threshold = CPBD_EDGE_THRESHOLD * peak
    blur_probabilities = []
    for r in range(h):
        row = gray[r]
        row_mag = magnitude[r]
        for c in range(1, w - 1):
            if row_mag[c] < threshold:
                continue
            if row_mag[c] < row_mag[c - 1] or row_mag[c] < row_mag[c + 1]:
                continue  # keep only local maxima of the gradient
            width, contrast = _edge_width(row, c)
            if width == 0:
                continue
            jnb = CPBD_JNB_WIDTH_LOW_CONTRAST if contrast <= CPBD_CONTRAST_KNEE \
                else CPBD_JNB_WIDTH_HIGH_CONTRAST
            blur_probabilities.append(1.0 - math.exp(-abs(width / jnb) ** CPBD_BETA))
    if not blur_probabilities:
        return 0.0
    probs = np.asarray(blur_probabilities)
    return float(np.mean(probs <= CPBD_BLUR_PROBABILITY_JND))


def _edge_width(row: np.ndarray, c: int) -> tuple[int, float]:
    """Pixels between the local extrema flanking an edge at column c."""
    rising = row[c + 1] >= row[c - 1]
    left = c
    while left > 0:
        step_up = row[left - 1] < row[left]
        if step_up != rising:
            break
        if row[left - 1] == row[left]:
            break
        left -= 1
    right = c
    n = row.size
    while right < n - 1:
        step_up = row[right + 1] > row[right]
        if step_up != rising:
            break
        if row[right + 1] == row[right]:
            break
        right += 1
    width = right - left
    contrast = abs(float(row[right]) - float(row[left]))
    return width, contrast
