"""Correlation of a quality metric with WER ranks and WER scores.

``vs_rank``: inside each utterance, hypotheses are ranked by WER (ascending)
and by metric score (descending); the per-utterance rank pairs are pooled
over all utterances with at least two hypotheses and correlated.

``vs_score``: the negated metric score is correlated with raw WER over all
hypotheses, so a working metric yields positive coefficients.

Constant inputs make a coefficient undefined; it is reported as ``None``.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .pairset import Hypothesis
from .textmetrics import normalize_and_tokenize, rank_by_score, wer

COEFFICIENTS = ("pearson", "spearman", "kendall")


@dataclass(frozen=True)
class ScoredHypothesis:
    utt_id: str
    source_id: str
    metric_score: float
    wer: float | None = None

    def __post_init__(self):
        if not math.isfinite(self.metric_score):
            raise ValueError(f"non-finite score for {self.utt_id}/{self.source_id}")
        if self.wer is not None and self.wer < 0:
            raise ValueError(f"negative WER for {self.utt_id}/{self.source_id}")

    def to_json(self) -> dict:
        out = {"utt": self.utt_id, "source": self.source_id, "score": self.metric_score}
        if self.wer is not None:
            out["wer"] = self.wer
        return out

    @classmethod
    def from_json(cls, obj) -> "ScoredHypothesis":
        return cls(str(obj["utt"]), str(obj["source"]), float(obj["score"]),
                   None if obj.get("wer") is None else float(obj["wer"]))


@dataclass
class CorrelationReport:
    vs_rank: dict[str, float | None]
    vs_score: dict[str, float | None]
    n_utterances: int
    n_hypotheses: int
    n_excluded_single: int = 0
    n_rank_pairs: int = 0

    def to_json(self) -> dict:
        return asdict(self)

    def table(self, title: str = "") -> str:
        def fmt(v):
            return "    n/a" if v is None else f"{v:7.4f}"
        head = f"{'':10s}" + "".join(f"{c:>10s}" for c in COEFFICIENTS)
        lines = [title] if title else []
        lines.append(head)
        for name, block in (("vs_rank", self.vs_rank), ("vs_score", self.vs_score)):
            lines.append(f"{name:10s}" + "".join(f"{fmt(block[c]):>10s}" for c in COEFFICIENTS))
        lines.append(f"utterances={self.n_utterances} hypotheses={self.n_hypotheses} "
                     f"single-hypothesis utterances excluded from vs_rank={self.n_excluded_single}")
        return "\n".join(lines)


def _prepare(x: Sequence[float], y: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise ValueError("correlation needs at least 2 observations")
    return x, y


def _constant(v: np.ndarray) -> bool:
    return bool(np.all(v == v[0]))


def pearson(x: Sequence[float], y: Sequence[float]) -> float | None:
    x, y = _prepare(x, y)
    if _constant(x) or _constant(y):
        return None
    return float(stats.pearsonr(x, y).statistic)


def spearman(x: Sequence[float], y: Sequence[float]) -> float | None:
    x, y = _prepare(x, y)
    return pearson(stats.rankdata(x), stats.rankdata(y))


def kendall(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Tie-corrected Kendall tau-b."""
    x, y = _prepare(x, y)
    if _constant(x) or _constant(y):
        return None
    return float(stats.kendalltau(x, y, variant="b").statistic)


def correlations(x: Sequence[float], y: Sequence[float]) -> dict[str, float | None]:
    return {"pearson": pearson(x, y), "spearman": spearman(x, y), "kendall": kendall(x, y)}


def _undefined() -> dict[str, None]:
    return dict.fromkeys(COEFFICIENTS)


def evaluate(scored: Iterable[ScoredHypothesis]) -> CorrelationReport:
    scored = list(scored)
    if not scored:
        raise ValueError("nothing to evaluate")
    missing = sorted({s.utt_id for s in scored if s.wer is None})
    if missing:
        raise ValueError(f"WER missing for utterances: {missing[:10]}")

    by_utt: dict[str, list[ScoredHypothesis]] = defaultdict(list)
    for s in scored:
        by_utt[s.utt_id].append(s)

    wer_ranks, metric_ranks = [], []
    excluded = 0
    for utt in sorted(by_utt):
        group = by_utt[utt]
        if len(group) < 2:
            excluded += 1
            continue
        wer_ranks.append(rank_by_score([g.wer for g in group], higher_is_better=False))
        metric_ranks.append(rank_by_score([g.metric_score for g in group], higher_is_better=True))

    n_rank = sum(len(r) for r in wer_ranks)
    vs_rank = correlations(np.concatenate(metric_ranks), np.concatenate(wer_ranks)) \
        if n_rank >= 2 else _undefined()
    if len(scored) >= 2:
        vs_score = correlations([-s.metric_score for s in scored], [s.wer for s in scored])
    else:
        vs_score = _undefined()
    return CorrelationReport(vs_rank, vs_score, len(by_utt), len(scored), excluded, n_rank)


def write_report(path, report: CorrelationReport, extra: dict | None = None) -> None:
    doc = report.to_json()
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_scorer(path) -> tuple[str, Callable[[Sequence[str]], np.ndarray]]:
    """Load a ranker or n-gram LM container as a higher-is-better text scorer."""
    from . import baseline, container, model

    kind, _, _ = container.read(path)
    if kind == "ranker":
        params, cfg = model.load_model(path)
        return kind, lambda texts: model.score_many(list(texts), params, cfg)
    if kind == "ngram-lm":
        lm = baseline.load_lm(path)
        return kind, lambda texts: np.array([baseline.quality_score(lm, t) for t in texts])
    raise container.ContainerError(f"{path}: unknown model kind {kind!r}")


def score_corpus(hyps: Sequence[Hypothesis], scorer: Callable[[Sequence[str]], np.ndarray],
                 refs: Mapping[str, str] | None = None) -> list[ScoredHypothesis]:
    """Score every hypothesis; attach WER when references are given.

    Output is sorted by (utt_id, source_id).
    """
    ordered = sorted(hyps, key=lambda h: (h.utt_id, h.source_id))
    wers: list[float | None] = [None] * len(ordered)
    if refs is not None:
        missing = sorted({h.utt_id for h in ordered if h.utt_id not in refs})
        if missing:
            raise KeyError(f"no reference for utterances: {', '.join(missing[:20])}"
                           + (" ..." if len(missing) > 20 else ""))
        ref_tokens = {u: normalize_and_tokenize(t) for u, t in refs.items()}
        wers = [wer(ref_tokens[h.utt_id], normalize_and_tokenize(h.text)).wer for h in ordered]
    scores = scorer([h.text for h in ordered])
    return [ScoredHypothesis(h.utt_id, h.source_id, float(s), w)
            for h, s, w in zip(ordered, scores, wers)]
