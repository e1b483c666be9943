"""Pair corpora for pairwise quality ranking.

Self-supervised pairs come from hypotheses of one utterance ordered by a
quality level (lower level = better). Supervised pairs are formed across
utterances by pairing each hypothesis with a shuffled partner and labelling
by reference WER.
"""

from __future__ import annotations

import enum
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np

from .textmetrics import normalize_and_tokenize, normalize_text, symmetric_distance

log = logging.getLogger(__name__)


class Origin(str, enum.Enum):
    SELF = "self"
    SUP = "sup"


@dataclass(frozen=True)
class Hypothesis:
    utt_id: str
    source_id: str
    text: str
    level: int | None = None
    ref_wer: float | None = None

    def __post_init__(self):
        if self.level is not None and self.level < 0:
            raise ValueError(f"negative level for {self.utt_id}/{self.source_id}")
        if self.ref_wer is not None and self.ref_wer < 0:
            raise ValueError(f"negative ref_wer for {self.utt_id}/{self.source_id}")


@dataclass(frozen=True)
class RankedPair:
    pos_text: str
    neg_text: str
    weight: float
    origin: Origin = Origin.SELF
    # not serialized; only used to keep an utterance on one side of a split
    utt_id: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.pos_text == self.neg_text:
            raise ValueError("pair elements must differ")
        if not self.weight >= 0:
            raise ValueError(f"pair weight must be >= 0, got {self.weight}")

    def to_json(self) -> dict:
        return {"pos": self.pos_text, "neg": self.neg_text,
                "weight": self.weight, "origin": self.origin.value}

    @classmethod
    def from_json(cls, obj: Mapping) -> "RankedPair":
        return cls(obj["pos"], obj["neg"], float(obj["weight"]), Origin(obj["origin"]))


@dataclass
class PairBatch:
    pairs: list[RankedPair]
    seed_tag: int | None = None

    def __len__(self) -> int:
        return len(self.pairs)


class CorpusError(ValueError):
    pass


def group_by_utterance(hyps: Iterable[Hypothesis]) -> dict[str, list[Hypothesis]]:
    grouped: dict[str, list[Hypothesis]] = defaultdict(list)
    for h in hyps:
        grouped[h.utt_id].append(h)
    return dict(grouped)


def _unique_by_level(utt_id: str, hyps: Sequence[Hypothesis]) -> list[tuple[int, str, str]]:
    """(level, normalized, raw) per unique normalized text, lowest level kept."""
    best: dict[str, tuple[int, str]] = {}
    by_level: dict[int, str] = {}
    for h in hyps:
        if h.level is None:
            raise CorpusError(f"utterance {utt_id}: hypothesis from {h.source_id} has no level")
        norm = normalize_text(h.text)
        seen = by_level.setdefault(h.level, norm)
        if seen != norm:
            raise CorpusError(
                f"utterance {utt_id}: level {h.level} has two different texts")
        if norm not in best or h.level < best[norm][0]:
            best[norm] = (h.level, h.text)
    return sorted((lvl, norm, raw) for norm, (lvl, raw) in best.items())


def build_self_pairs(hyps_by_utt: Mapping[str, Sequence[Hypothesis]]) -> list[RankedPair]:
    """Every pair of distinct texts within an utterance, better level first.

    Utterances are visited in sorted order so the output is deterministic.
    """
    pairs = []
    for utt_id in sorted(hyps_by_utt):
        unique = _unique_by_level(utt_id, hyps_by_utt[utt_id])
        toks = {norm: normalize_and_tokenize(norm) for _, norm, _ in unique}
        for (lvl_a, norm_a, raw_a), (lvl_b, norm_b, raw_b) in combinations(unique, 2):
            # unique is sorted by level and levels are distinct per text
            assert lvl_a < lvl_b
            w = symmetric_distance(toks[norm_a], toks[norm_b])
            pairs.append(RankedPair(raw_a, raw_b, w, Origin.SELF, utt_id))
    return pairs


def _pair_key(pair: RankedPair) -> tuple[str, str]:
    return normalize_text(pair.pos_text), normalize_text(pair.neg_text)


def drop_inconsistent(pairs: Sequence[RankedPair]) -> list[RankedPair]:
    """Remove every pair whose reverse orientation also occurs in the corpus.

    Matching is global (across utterances) on normalized text.
    """
    keys = [_pair_key(p) for p in pairs]
    present = set(keys)
    return [p for p, (a, b) in zip(pairs, keys) if (b, a) not in present]


def split_train_valid(pairs: Sequence[RankedPair], valid_fraction: float = 0.2,
                      seed: int = 0) -> tuple[list[RankedPair], list[RankedPair]]:
    """Seeded split by utterance so no utterance lands on both sides."""
    if not 0 < valid_fraction < 1:
        raise ValueError(f"valid_fraction must be in (0, 1), got {valid_fraction}")
    utts = sorted({p.utt_id for p in pairs}, key=str)
    if len(utts) < 2:
        raise CorpusError(f"need at least 2 utterances to split, got {len(utts)}")
    n_valid = min(max(int(round(valid_fraction * len(utts))), 1), len(utts) - 1)
    order = np.random.default_rng(seed).permutation(len(utts))
    valid_utts = {utts[i] for i in order[:n_valid]}
    train = [p for p in pairs if p.utt_id not in valid_utts]
    valid = [p for p in pairs if p.utt_id in valid_utts]
    return train, valid


def pair_by_permutation(batch: Sequence[Hypothesis], perm: Sequence[int],
                        balance_weight: float = 1.0) -> list[RankedPair]:
    pairs = []
    for i, j in enumerate(perm):
        a, b = batch[i], batch[j]
        if i == j or a.ref_wer == b.ref_wer:
            continue
        pos, neg = (a, b) if a.ref_wer < b.ref_wer else (b, a)
        if pos.text == neg.text:
            continue
        pairs.append(RankedPair(pos.text, neg.text, balance_weight, Origin.SUP, pos.utt_id))
    return pairs


def form_supervised_batch(batch: Sequence[Hypothesis], seed: int | np.random.Generator,
                          balance_weight: float = 1.0) -> PairBatch:
    """Pair a supervised mini-batch with a shuffled copy of itself.

    Positive is the hypothesis with lower reference WER; equal-WER pairs,
    self-pairs and identical texts are discarded.
    """
    if len(batch) < 2:
        raise ValueError("supervised batch needs at least 2 hypotheses")
    missing = [h.utt_id for h in batch if h.ref_wer is None]
    if missing:
        raise CorpusError(f"hypotheses without ref_wer: {missing[:5]}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    perm = rng.permutation(len(batch))
    pairs = pair_by_permutation(batch, perm, balance_weight)
    if not pairs:
        log.warning("supervised batch of %d produced no pairs", len(batch))
    return PairBatch(pairs, seed if isinstance(seed, int) else None)

