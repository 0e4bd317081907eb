"""Word error rate: edit-distance errors normalized by reference length."""

from __future__ import annotations

from ..errors import ValidationError


def edit_distance(reference: list[str], hypothesis: list[str]) -> int:
    """Minimal substitutions + deletions + insertions turning reference into
    hypothesis."""
    n, m = len(reference), len(hypothesis)
    previous = list(range(m + 1))
    for i in range(1, n + 1):
        current = [i] + [0] * m
        for j in range(1, m + 1):
            substitution = previous[j - 1] + (reference[i - 1] != hypothesis[j - 1])
            current[j] = min(substitution, previous[j] + 1, current[j - 1] + 1)
        previous = current
    return previous[m]


def wer(reference_words, hypothesis_words) -> float:
    """Edit distance divided by reference length; can exceed 1.0."""
    reference = list(reference_words)
    hypothesis = list(hypothesis_words)
    if not reference:
        raise ValidationError("reference word list is empty")
    return edit_distance(reference, hypothesis) / len(reference)
