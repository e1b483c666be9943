"""Siamese quality scorer: hashed character n-gram encoder + two-layer head.

A text is normalized, padded as ``"^" + text + "$"``, and every character
n-gram of the configured orders is hashed with 8-byte BLAKE2b (little-endian
integer, masked to ``hash_dim - 1``) into a sparse count vector. The encoder
is a linear map of that vector (by default scaled by 1/sqrt of its total
count, so the embedding does not grow linearly with text length); the head is

    logit = w2 . dropout(act(emb @ w1 + b1)) + b2

Both elements of a pair are scored by the same parameters, so the pair
probability only depends on the logit difference.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from . import container
from .textmetrics import normalize_text

BOS, EOS = "^", "$"


@dataclass(frozen=True)
class EncoderConfig:
    ngram_orders: tuple[int, ...] = (2, 3, 4)
    hash_dim: int = 2 ** 18
    embed_dim: int = 256
    hidden_dim: int = 32
    dropout: float = 0.10
    activation: str = "tanh"
    # count-vector scaling before the encoder: "sum" (raw counts), "sqrt"
    # (divide by sqrt of the total count) or "mean" (divide by the total)
    pooling: str = "sqrt"
    seed: int = 0
    # when set, the hashed encoder is bypassed for vectors read from this JSONL
    embeddings_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "ngram_orders", tuple(sorted(set(self.ngram_orders))))
        if self.hash_dim < 1 or self.hash_dim & (self.hash_dim - 1):
            raise ValueError(f"hash_dim must be a power of two, got {self.hash_dim}")
        if not 0 <= self.dropout < 1:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if min(self.embed_dim, self.hidden_dim) < 1 or not self.ngram_orders \
                or min(self.ngram_orders) < 1:
            raise ValueError("dimensions and n-gram orders must be >= 1")
        if self.activation not in ("tanh", "relu"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.pooling not in ("sum", "sqrt", "mean"):
            raise ValueError(f"unknown pooling {self.pooling!r}")

    def to_json(self) -> dict:
        d = asdict(self)
        d["ngram_orders"] = list(self.ngram_orders)
        return d

    @classmethod
    def from_json(cls, obj: Mapping) -> "EncoderConfig":
        known = {f.name for f in fields(cls)}
        d = {k: v for k, v in obj.items() if k in known}
        d["ngram_orders"] = tuple(d.get("ngram_orders", (2, 3, 4)))
        return cls(**d)


@dataclass
class RankerParams:
    encoder: np.ndarray  # (hash_dim, embed_dim); (0, embed_dim) with external embeddings
    w1: np.ndarray       # (embed_dim, hidden_dim)
    b1: np.ndarray       # (hidden_dim,)
    w2: np.ndarray       # (hidden_dim, 1)
    b2: float = 0.0
    external: dict[str, np.ndarray] | None = field(default=None, repr=False)

    TENSORS = ("encoder", "w1", "b1", "w2")

    def copy(self) -> "RankerParams":
        return RankerParams(self.encoder.copy(), self.w1.copy(), self.b1.copy(),
                            self.w2.copy(), float(self.b2), self.external)

    def check(self, cfg: EncoderConfig) -> None:
        enc_rows = 0 if cfg.embeddings_path else cfg.hash_dim
        expected = {
            "encoder": (enc_rows, cfg.embed_dim),
            "w1": (cfg.embed_dim, cfg.hidden_dim),
            "b1": (cfg.hidden_dim,),
            "w2": (cfg.hidden_dim, 1),
        }
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ValueError(f"{name} has shape {got}, config expects {shape}")

    def all_finite(self) -> bool:
        return all(np.isfinite(getattr(self, n)).all() for n in self.TENSORS) \
            and math.isfinite(self.b2)


def init_params(cfg: EncoderConfig, encoder_scale: float = 0.01) -> RankerParams:
    rng = np.random.default_rng(cfg.seed)
    rows = 0 if cfg.embeddings_path else cfg.hash_dim
    encoder = rng.normal(0.0, encoder_scale, size=(rows, cfg.embed_dim))
    lim1 = 1.0 / math.sqrt(cfg.embed_dim)
    lim2 = 1.0 / math.sqrt(cfg.hidden_dim)
    w1 = rng.uniform(-lim1, lim1, size=(cfg.embed_dim, cfg.hidden_dim))
    w2 = rng.uniform(-lim2, lim2, size=(cfg.hidden_dim, 1))
    params = RankerParams(encoder, w1, np.zeros(cfg.hidden_dim), w2, 0.0)
    if cfg.embeddings_path:
        params.external = load_external_embeddings(cfg.embeddings_path, cfg.embed_dim)
    return params


def zero_params(cfg: EncoderConfig) -> RankerParams:
    rows = 0 if cfg.embeddings_path else cfg.hash_dim
    return RankerParams(np.zeros((rows, cfg.embed_dim)), np.zeros((cfg.embed_dim, cfg.hidden_dim)),
                        np.zeros(cfg.hidden_dim), np.zeros((cfg.hidden_dim, 1)), 0.0)


# -- features ---------------------------------------------------------------

def hash_ngram(gram: str, hash_dim: int) -> int:
    digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") & (hash_dim - 1)


def char_ngrams(text: str, orders: Sequence[int]) -> list[str]:
    norm = normalize_text(text)
    if not norm:
        return []
    padded = BOS + norm + EOS
    return [padded[i:i + n] for n in orders for i in range(len(padded) - n + 1)]


def featurize(text: str, cfg: EncoderConfig) -> dict[int, int]:
    feats: dict[int, int] = {}
    for gram in char_ngrams(text, cfg.ngram_orders):
        idx = hash_ngram(gram, cfg.hash_dim)
        feats[idx] = feats.get(idx, 0) + 1
    return feats


class FeatureCache:
    """Memoized sparse features for repeated texts during training."""

    def __init__(self, cfg: EncoderConfig):
        self.cfg = cfg
        self._store: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def get(self, text: str) -> tuple[np.ndarray, np.ndarray]:
        hit = self._store.get(text)
        if hit is None:
            feats = featurize(text, self.cfg)
            idx = np.fromiter(sorted(feats), dtype=np.int64, count=len(feats))
            cnt = np.array([feats[i] for i in idx.tolist()], dtype=np.float64)
            if len(cnt) and self.cfg.pooling != "sum":
                total = cnt.sum()
                cnt = cnt / (np.sqrt(total) if self.cfg.pooling == "sqrt" else total)
            hit = self._store[text] = (idx, cnt)
        return hit

    def matrix(self, texts: Sequence[str]) -> tuple[sp.csr_matrix, np.ndarray]:
        """Row-per-text matrix over the local column set, and that column set."""
        parts = [self.get(t) for t in texts]
        indptr = np.zeros(len(texts) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(i) for i, _ in parts])
        if indptr[-1] == 0:
            return sp.csr_matrix((len(texts), 0)), np.zeros(0, dtype=np.int64)
        idx = np.concatenate([i for i, _ in parts])
        cnt = np.concatenate([c for _, c in parts])
        cols, local = np.unique(idx, return_inverse=True)
        X = sp.csr_matrix((cnt, local, indptr), shape=(len(texts), len(cols)))
        return X, cols


# -- forward / backward -----------------------------------------------------

@dataclass
class Tape:
    texts: Sequence[str]
    X: sp.csr_matrix | None
    cols: np.ndarray
    emb: np.ndarray
    pre: np.ndarray
    hid: np.ndarray
    mask: np.ndarray | None
    logits: np.ndarray


@dataclass
class Gradients:
    encoder_rows: np.ndarray
    encoder_vals: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float

    def encoder_dense(self, hash_dim: int) -> np.ndarray:
        out = np.zeros((hash_dim, self.encoder_vals.shape[1]))
        out[self.encoder_rows] = self.encoder_vals
        return out

    def scaled(self, c: float) -> "Gradients":
        return Gradients(self.encoder_rows, self.encoder_vals * c, self.w1 * c,
                         self.b1 * c, self.w2 * c, self.b2 * c)

    def __add__(self, other: "Gradients") -> "Gradients":
        rows = np.union1d(self.encoder_rows, other.encoder_rows)
        vals = np.zeros((len(rows), self.w1.shape[0]))
        vals[np.searchsorted(rows, self.encoder_rows)] += self.encoder_vals
        vals[np.searchsorted(rows, other.encoder_rows)] += other.encoder_vals
        return Gradients(rows, vals, self.w1 + other.w1, self.b1 + other.b1,
                         self.w2 + other.w2, self.b2 + other.b2)

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in
                   (self.encoder_vals, self.w1, self.b1, self.w2)) and math.isfinite(self.b2)


def _activate(pre: np.ndarray, kind: str) -> np.ndarray:
    return np.tanh(pre) if kind == "tanh" else np.maximum(pre, 0.0)


def _activate_grad(pre: np.ndarray, hid: np.ndarray, kind: str) -> np.ndarray:
    return 1.0 - hid * hid if kind == "tanh" else (pre > 0).astype(np.float64)


def _embed(texts: Sequence[str], params: RankerParams, cfg: EncoderConfig,
           cache: FeatureCache | None):
    if params.external is not None:
        emb = np.stack([lookup_embedding(params.external, t, cfg.embed_dim) for t in texts]) \
            if texts else np.zeros((0, cfg.embed_dim))
        return emb, None, np.zeros(0, dtype=np.int64)
    cache = cache if cache is not None else FeatureCache(cfg)
    X, cols = cache.matrix(texts)
    emb = np.asarray(X @ params.encoder[cols]) if len(cols) else np.zeros((len(texts), cfg.embed_dim))
    return emb, X, cols


def forward(texts: Sequence[str], params: RankerParams, cfg: EncoderConfig,
            train_mode: bool = False, rng: np.random.Generator | None = None,
            cache: FeatureCache | None = None) -> Tape:
    emb, X, cols = _embed(texts, params, cfg, cache)
    pre = emb @ params.w1 + params.b1
    hid = _activate(pre, cfg.activation)
    mask = None
    if train_mode and cfg.dropout > 0:
        if rng is None:
            raise ValueError("train-mode scoring needs a seeded generator")
        keep = 1.0 - cfg.dropout
        mask = (rng.random(hid.shape) < keep) / keep
        dropped = hid * mask
    else:
        dropped = hid
    logits = (dropped @ params.w2)[:, 0] + params.b2
    if not np.isfinite(logits).all():
        bad = int(np.flatnonzero(~np.isfinite(logits))[0])
        raise FloatingPointError(
            f"non-finite logit for text {texts[bad]!r}: "
            f"max|emb|={np.abs(emb[bad]).max() if emb.size else 0:.3g}, "
            f"max|pre|={np.abs(pre[bad]).max():.3g}")
    return Tape(texts, X, cols, emb, pre, hid, mask, logits)


def backward(tape: Tape, g_logits: np.ndarray, params: RankerParams,
             cfg: EncoderConfig) -> Gradients:
    """Gradient of ``sum(g_logits * logits)`` with respect to every tensor."""
    g = np.asarray(g_logits, dtype=np.float64)[:, None]
    dropped = tape.hid * tape.mask if tape.mask is not None else tape.hid
    g_w2 = dropped.T @ g
    g_b2 = float(g.sum())
    g_hid = g @ params.w2.T
    if tape.mask is not None:
        g_hid = g_hid * tape.mask
    g_pre = g_hid * _activate_grad(tape.pre, tape.hid, cfg.activation)
    g_w1 = tape.emb.T @ g_pre
    g_b1 = g_pre.sum(axis=0)
    if tape.X is not None and len(tape.cols):
        g_emb = g_pre @ params.w1.T
        rows, vals = tape.cols, np.asarray(tape.X.T @ g_emb)
    else:
        rows, vals = np.zeros(0, dtype=np.int64), np.zeros((0, cfg.embed_dim))
    return Gradients(rows, vals, g_w1, g_b1, g_w2, g_b2)


def score(text: str, params: RankerParams, cfg: EncoderConfig, train_mode: bool = False,
          rng: np.random.Generator | None = None) -> float:
    return float(forward([text], params, cfg, train_mode, rng).logits[0])


def score_many(texts: Sequence[str], params: RankerParams, cfg: EncoderConfig,
               chunk: int = 2048) -> np.ndarray:
    """Eval-mode logits for many texts, chunked to bound memory."""
    cache = FeatureCache(cfg)
    out = [forward(texts[i:i + chunk], params, cfg, cache=cache).logits
           for i in range(0, len(texts), chunk)]
    return np.concatenate(out) if out else np.zeros(0)


def sigmoid(x):
    # split by sign to avoid overflow in exp
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def pair_probability(pos_logit: float, neg_logit: float) -> float:
    """Probability that the first element is the better one."""
    return sigmoid(pos_logit - neg_logit)


# -- external embeddings ----------------------------------------------------

def load_external_embeddings(path: str | Path, embed_dim: int | None = None) -> dict[str, np.ndarray]:
    table: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            vec = np.asarray(obj["vec"], dtype=np.float64)
            if embed_dim is not None and vec.shape != (embed_dim,):
                raise ValueError(
                    f"{path}:{lineno}: embedding dimension {vec.shape[0]} != configured {embed_dim}")
            table[obj["text"]] = vec
    return table


def lookup_embedding(table: Mapping[str, np.ndarray], text: str, embed_dim: int) -> np.ndarray:
    try:
        vec = table[text]
    except KeyError:
        raise KeyError(f"no external embedding for text {text!r}") from None
    if vec.shape != (embed_dim,):
        raise ValueError(f"embedding for {text!r} has dimension {vec.shape[0]}, expected {embed_dim}")
    return vec


# -- persistence ------------------------------------------------------------

def save_model(path: str | Path, params: RankerParams, cfg: EncoderConfig) -> None:
    tensors = {name: getattr(params, name) for name in RankerParams.TENSORS}
    tensors["b2"] = np.array([params.b2])
    container.write(path, "ranker", {"config": cfg.to_json()}, tensors)


def load_model(path: str | Path) -> tuple[RankerParams, EncoderConfig]:
    kind, header, tensors = container.read(path)
    if kind != "ranker":
        raise container.ContainerError(f"{path}: expected a ranker model, found {kind!r}")
    cfg = EncoderConfig.from_json(header["config"])
    params = RankerParams(tensors["encoder"], tensors["w1"], tensors["b1"], tensors["w2"],
                          float(tensors["b2"][0]))
    if cfg.embeddings_path:
        params.external = load_external_embeddings(cfg.embeddings_path, cfg.embed_dim)
    params.check(cfg)
    return params, cfg

