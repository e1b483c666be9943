"""Character n-gram language model with add-k smoothing (perplexity baseline).

Texts are normalized, left-padded with ``order - 1`` start symbols and
terminated by one end symbol; the end symbol is predicted, start symbols only
appear as context. Characters never seen in training map to an unknown
symbol. Probabilities are

    p(c | ctx) = (count(ctx, c) + k) / (count(ctx) + k * V)

with ``V`` = observed symbols (including the end symbol) + 1 for unknown.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from . import container
from .textmetrics import normalize_text

BOS = "\x02"
EOS = "\x03"
UNK = "\x00"


@dataclass
class NgramLM:
    order: int = 5
    smoothing_k: float = 0.1
    counts: dict[str, dict[str, int]] = field(default_factory=dict)
    vocab: frozenset[str] = frozenset({UNK})

    def __post_init__(self):
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")
        if not self.smoothing_k > 0:
            raise ValueError(f"smoothing_k must be > 0, got {self.smoothing_k}")
        self._totals = {ctx: sum(nxt.values()) for ctx, nxt in self.counts.items()}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def prob(self, char: str, context: str) -> float:
        if char not in self.vocab:
            char = UNK
        nxt = self.counts.get(context)
        hits = nxt.get(char, 0) if nxt else 0
        total = self._totals.get(context, 0)
        return (hits + self.smoothing_k) / (total + self.smoothing_k * self.vocab_size)

    def events(self, text: str) -> list[tuple[str, str]]:
        return list(_events(normalize_text(text), self.order))


def _events(norm: str, order: int) -> Iterable[tuple[str, str]]:
    """(context, next symbol) for every predicted position."""
    symbols = BOS * (order - 1) + norm + EOS
    for i in range(order - 1, len(symbols)):
        yield symbols[i - order + 1:i], symbols[i]


def fit(corpus: Sequence[str], order: int = 5, smoothing_k: float = 0.1) -> NgramLM:
    if not corpus:
        raise ValueError("cannot fit a language model on an empty corpus")
    counts: dict[str, dict[str, int]] = defaultdict(lambda: defaultdict(int))
    vocab = {UNK}
    for text in corpus:
        for ctx, ch in _events(normalize_text(text), order):
            counts[ctx][ch] += 1
            vocab.add(ch)
    frozen = {ctx: dict(nxt) for ctx, nxt in counts.items()}
    return NgramLM(order, smoothing_k, frozen, frozenset(vocab))


def perplexity(lm: NgramLM, text: str) -> float:
    """exp of the mean negative log-probability over all predicted positions.

    An empty text still predicts the end symbol, so it is scored over one
    position.
    """
    events = lm.events(text)
    nll = -sum(math.log(lm.prob(ch, ctx)) for ctx, ch in events)
    return math.exp(nll / len(events))


def quality_score(lm: NgramLM, text: str) -> float:
    """Higher-is-better score: negative log perplexity."""
    return -math.log(perplexity(lm, text))


def save_lm(path: str | Path, lm: NgramLM) -> None:
    header = {
        "order": lm.order,
        "smoothing_k": lm.smoothing_k,
        "vocab": sorted(lm.vocab),
        "counts": {ctx: dict(sorted(nxt.items())) for ctx, nxt in sorted(lm.counts.items())},
    }
    container.write(path, "ngram-lm", header, {})


def load_lm(path: str | Path) -> NgramLM:
    kind, header, _ = container.read(path)
    if kind != "ngram-lm":
        raise container.ContainerError(f"{path}: expected an n-gram LM, found {kind!r}")
    return NgramLM(header["order"], header["smoothing_k"],
                   {ctx: dict(nxt) for ctx, nxt in header["counts"].items()},
                   frozenset(header["vocab"]))
