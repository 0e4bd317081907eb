from .blinks import blinks_per_sec, count_blinks
from .distances import ACD_COSINE_THRESHOLD, ACD_EUCLIDEAN_THRESHOLD, AcdResult, acd
from .image_quality import cpbd, psnr, ssim, to_grayscale
from .kid import kid, mmd2_unbiased, polynomial_kernel
from .report import METRIC_ORDER, MetricEntry, MetricReport, evaluate_clip
from .wer import edit_distance, wer

__all__ = [
    "ACD_COSINE_THRESHOLD",
    "ACD_EUCLIDEAN_THRESHOLD",
    "AcdResult",
    "METRIC_ORDER",
    "MetricEntry",
    "MetricReport",
    "acd",
    "blinks_per_sec",
    "count_blinks",
    "cpbd",
    "edit_distance",
    "evaluate_clip",
    "kid",
    "mmd2_unbiased",
    "polynomial_kernel",
    "psnr",
    "ssim",
    "to_grayscale",
    "wer",
]
