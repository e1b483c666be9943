"""Word-level text normalization, edit distance, WER and rank helpers.

Normalization policy (fixed, not configurable):

1. NFC-compose the input.
2. Lowercase with ``str.lower``.
3. Delete every character whose Unicode category starts with ``P``
   (punctuation) or ``C`` (control/format/unassigned). Deleted, not replaced
   by a space, so ``"don't"`` stays one token (``"dont"``).
4. Split on whitespace.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True)
class TokenSeq:
    tokens: tuple[str, ...]
    normalized: bool = True

    def __post_init__(self):
        for tok in self.tokens:
            if not tok or any(ch.isspace() for ch in tok):
                raise ValueError(f"invalid token {tok!r}")

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True)
class WERBreakdown:
    substitutions: int
    insertions: int
    deletions: int
    ref_len: int
    wer: float

    @property
    def edits(self) -> int:
        return self.substitutions + self.insertions + self.deletions


def _keep(ch: str) -> bool:
    cat = unicodedata.category(ch)
    return not (cat[0] == "P" or cat[0] == "C") or ch.isspace()


def normalize_and_tokenize(text: str) -> TokenSeq:
    text = unicodedata.normalize("NFC", text).lower()
    cleaned = "".join(ch for ch in text if _keep(ch))
    return TokenSeq(tuple(cleaned.split()), normalized=True)


def normalize_text(text: str) -> str:
    """Normalized form of ``text`` as a single space-joined string."""
    return normalize_and_tokenize(text).text


def _as_tokens(seq: TokenSeq | Sequence[str]) -> tuple[str, ...]:
    if isinstance(seq, TokenSeq):
        return seq.tokens
    return tuple(seq)


def align(ref: Sequence[str], hyp: Sequence[str]) -> tuple[int, int, int]:
    """Minimal unit-cost alignment of ``hyp`` against ``ref``.

    Returns ``(substitutions, insertions, deletions)``. On ties the backtrace
    prefers the diagonal move, then deletion, then insertion.
    """
    n, m = len(ref), len(hyp)
    # dist[i][j]: edit distance between ref[:i] and hyp[:j]
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        dist[i][0] = i
    for j in range(m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        row, prev = dist[i], dist[i - 1]
        r = ref[i - 1]
        for j in range(1, m + 1):
            diag = prev[j - 1] + (r != hyp[j - 1])
            row[j] = min(diag, prev[j] + 1, row[j - 1] + 1)

    subs = ins = dels = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            subs += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i > 0 and dist[i][j] == dist[i - 1][j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return subs, ins, dels


def edit_distance(a: TokenSeq | Sequence[str], b: TokenSeq | Sequence[str]) -> int:
    return sum(align(_as_tokens(a), _as_tokens(b)))


def wer(reference: TokenSeq | Sequence[str], hypothesis: TokenSeq | Sequence[str]) -> WERBreakdown:
    """Word error rate of ``hypothesis`` against ``reference``.

    An empty reference yields ``wer = len(hypothesis)`` (every hypothesis
    token counts as one insertion, undivided); empty vs empty is 0.
    """
    ref, hyp = _as_tokens(reference), _as_tokens(hypothesis)
    subs, ins, dels = align(ref, hyp)
    if ref:
        rate = (subs + ins + dels) / len(ref)
    else:
        rate = float(ins)
    return WERBreakdown(subs, ins, dels, len(ref), rate)


def symmetric_distance(a: TokenSeq | Sequence[str], b: TokenSeq | Sequence[str]) -> float:
    """Edit distance normalized by the longer sequence; 0 when both are empty."""
    a, b = _as_tokens(a), _as_tokens(b)
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return edit_distance(a, b) / longest


def rank_by_score(scores: Sequence[float], higher_is_better: bool) -> np.ndarray:
    """Fractional ranks with rank 1 for the best entry; ties share the mean rank."""
    values = np.asarray(scores, dtype=np.float64)
    if values.size == 0:
        raise ValueError("rank_by_score needs at least one score")
    return rankdata(-values if higher_is_better else values, method="average")
