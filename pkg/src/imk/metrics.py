"""Text-entry metrics: minimum edit distances, CER, WER, WPM and
character accuracy.

CER divides the minimum character distance by the reference length in
characters; WER does the same at word level. Both are percentages and may
exceed 100. WPM is (characters - 1) / minutes / average word length.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

WPM_CHARS_PER_WORD = 5.0  # text-entry convention for average word length


class MetricError(ValueError):
    """Undefined metric (e.g. empty reference)."""


@dataclass(frozen=True)
class EditDistanceResult:
    distance: int
    insertions: int
    deletions: int
    substitutions: int

    def __post_init__(self):
        if self.distance != self.insertions + self.deletions + self.substitutions:
            raise ValueError("operation counts must sum to the distance")


def edit_distance(a: Sequence, b: Sequence) -> EditDistanceResult:
    """Levenshtein distance with unit costs between two sequences.

    Returns the distance together with the operation counts of one optimal
    alignment transforming ``a`` into ``b``.
    """
    n, m = len(a), len(b)
    # dist[i][j]: distance between a[:i] and b[:j]
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dist[i][0] = i
    for j in range(1, m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        ai = a[i - 1]
        row = dist[i]
        prev = dist[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (ai != b[j - 1])
            dele = prev[j] + 1
            ins = row[j - 1] + 1
            row[j] = min(sub, dele, ins)

    # Backtrace one optimal alignment to attribute operations.
    i, j = n, m
    ins = dele = sub = 0
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + (a[i - 1] != b[j - 1]):
            sub += a[i - 1] != b[j - 1]
            i -= 1
            j -= 1
        elif i > 0 and dist[i][j] == dist[i - 1][j] + 1:
            dele += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditDistanceResult(dist[n][m], ins, dele, sub)


def char_distance(a: str, b: str) -> EditDistanceResult:
    """Minimum character distance between two strings."""
    return edit_distance(a, b)


def words(s: str) -> list[str]:
    """Tokenize on the single space separator, dropping empty tokens."""
    return [w for w in s.split(" ") if w]


def word_distance(a: str, b: str) -> EditDistanceResult:
    """Minimum word distance between two strings."""
    return edit_distance(words(a), words(b))


def cer(hyp: str, ref: str) -> float:
    """Character error rate in percent: 100 * char_distance / len(ref)."""
    if not ref:
        raise MetricError("CER undefined for empty reference")
    return 100.0 * char_distance(hyp, ref).distance / len(ref)


def wer(hyp: str, ref: str) -> float:
    """Word error rate in percent: 100 * word_distance / word count of ref."""
    ref_words = words(ref)
    if not ref_words:
        raise MetricError("WER undefined for reference without words")
    return 100.0 * edit_distance(words(hyp), ref_words).distance / len(ref_words)


def wpm(n_chars: int, minutes: float, chars_per_word: float = WPM_CHARS_PER_WORD) -> float:
    """Words per minute: |n_chars - 1| / minutes / chars_per_word."""
    if minutes <= 0:
        raise MetricError(f"elapsed minutes must be positive, got {minutes}")
    if chars_per_word <= 0:
        raise MetricError(f"chars_per_word must be positive, got {chars_per_word}")
    return abs(n_chars - 1) / minutes / chars_per_word


def char_accuracy(hyp: Sequence, ref: Sequence) -> float:
    """Position-wise accuracy of two equal-length sequences."""
    if len(hyp) != len(ref):
        raise MetricError(f"length mismatch: {len(hyp)} vs {len(ref)}")
    if not ref:
        raise MetricError("accuracy undefined for empty sequences")
    return sum(h == r for h, r in zip(hyp, ref)) / len(ref)


def corpus_error_rates(pairs: Sequence[tuple[str, str]]) -> tuple[float, float]:
    """Micro-averaged (CER%, WER%) over (hypothesis, reference) pairs.

    Total edit distance divided by total reference length, not a mean of
    per-sentence rates.
    """
    if not pairs:
        raise MetricError("no pairs to score")
    char_dist = char_len = word_dist = word_len = 0
    for hyp, ref in pairs:
        if not ref:
            raise MetricError("CER undefined for empty reference")
        ref_words = words(ref)
        if not ref_words:
            raise MetricError("WER undefined for reference without words")
        char_dist += char_distance(hyp, ref).distance
        char_len += len(ref)
        word_dist += edit_distance(words(hyp), ref_words).distance
        word_len += len(ref_words)
    return 100.0 * char_dist / char_len, 100.0 * word_dist / word_len
