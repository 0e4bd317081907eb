"""Average content distance: how far generated frames drift from the
reference identity in an embedding space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ProviderError

ACD_COSINE_THRESHOLD = 0.02
ACD_EUCLIDEAN_THRESHOLD = 0.20


@dataclass
class AcdResult:
    cosine: float
    euclidean: float
    cosine_ok: bool
    euclidean_ok: bool


def acd(frames_generated, reference_image, provider) -> AcdResult:
    """Mean cosine and euclidean distance of each frame's embedding to the
    reference embedding, with pass/fail flags at the published thresholds."""
    try:
        reference = np.asarray(provider(reference_image), dtype=np.float64)
    except Exception as exc:
        raise ProviderError(f"embedding provider failed on the reference image: {exc!r}") from exc
    cosines = []
    euclids = []
    failed = []
    for i, frame in enumerate(frames_generated):
        try:
            emb = np.asarray(provider(frame), dtype=np.float64)
        except Exception as exc:
            failed.append((i, repr(exc)))
            continue
        euclids.append(float(np.linalg.norm(emb - reference)))
        if np.array_equal(emb, reference):
            cosines.append(0.0)
            continue
        denom = np.linalg.norm(emb) * np.linalg.norm(reference)
        if denom == 0:
            cosines.append(1.0)
        else:
            cosines.append(float(max(0.0, 1.0 - float(emb @ reference) / denom)))
    if failed:
        raise ProviderError(f"embedding provider failed on frames {[i for i, _ in failed]}: {failed[0][1]}")
    if not cosines:
        raise ProviderError("no frames to embed")
    cos_mean = float(np.mean(cosines))
    euc_mean = float(np.mean(euclids))
    return AcdResult(
        cosine=cos_mean,
        euclidean=euc_mean,
        cosine_ok=cos_mean <= ACD_COSINE_THRESHOLD,
        euclidean_ok=euc_mean <= ACD_EUCLIDEAN_THRESHOLD,
    )
