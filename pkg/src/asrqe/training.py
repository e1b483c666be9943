"""Pairwise log-loss objectives, exact gradients, and the training loop.

Every pair contributes ``-w * log(sigmoid(M(pos) - M(neg)))``; self-supervised
pairs are weighted by the symmetric word edit distance between the two texts,
supervised pairs by a class-balancing weight (1.0 by default). The semi-
supervised objective mixes the two with ``alpha * sup + (1 - alpha) * self``.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from .model import (EncoderConfig, FeatureCache, Gradients, RankerParams, backward,
                    forward, init_params, sigmoid)
from .pairset import (Hypothesis, Origin, PairBatch, RankedPair, form_supervised_batch)

log = logging.getLogger(__name__)

LOG_FLOOR = math.log(1e-12)


class Mode(str, enum.Enum):
    SELF = "self"
    SEMI = "semi"


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.5
    batch_size: int = 128
    learning_rate: float = 1e-3
    momentum: float = 0.9
    max_epochs: int = 20
    patience: int = 3
    seed: int = 0
    mode: Mode = Mode.SELF
    balance_weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.batch_size < 1 or self.patience < 1 or self.max_epochs < 0:
            raise ValueError("batch_size and patience must be >= 1, max_epochs >= 0")
        if self.learning_rate < 0 or not 0 <= self.momentum < 1:
            raise ValueError("learning_rate must be >= 0 and momentum in [0, 1)")


@dataclass
class LossReport:
    loss_self: float
    loss_sup: float | None
    loss_total: float
    pair_accuracy: float


class DivergenceError(FloatingPointError):
    pass


def _pairs_of(batch: PairBatch | Sequence[RankedPair]) -> Sequence[RankedPair]:
    return batch.pairs if isinstance(batch, PairBatch) else batch


def _check_origin(pairs: Sequence[RankedPair], origin: Origin) -> None:
    if not pairs:
        raise ValueError("loss of an empty batch is undefined")
    for p in pairs:
        if p.origin is not origin:
            raise ValueError(f"expected {origin.value} pairs, found {p.origin.value}")
        if origin is Origin.SELF and not 0 <= p.weight <= 1:
            raise ValueError(f"self-supervised weight {p.weight} outside [0, 1]")


def log_sigmoid(d: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -np.asarray(d, dtype=np.float64))


def pair_objective(pairs: Sequence[RankedPair], params: RankerParams, cfg: EncoderConfig,
                   train_mode: bool = False, rng: np.random.Generator | None = None,
                   cache: FeatureCache | None = None, need_grad: bool = False):
    """Mean weighted pairwise log-loss; returns ``(loss, accuracy, grads|None)``."""
    n = len(pairs)
    if n == 0:
        raise ValueError("loss of an empty batch is undefined")
    texts = [p.pos_text for p in pairs] + [p.neg_text for p in pairs]
    tape = forward(texts, params, cfg, train_mode, rng, cache)
    diff = tape.logits[:n] - tape.logits[n:]
    weights = np.fromiter((p.weight for p in pairs), dtype=np.float64, count=n)
    ls = log_sigmoid(diff)
    loss = float(-(weights * np.maximum(ls, LOG_FLOOR)).sum() / n)
    acc = float(np.mean(diff > 0))
    if not need_grad:
        return loss, acc, None
    # d/d(diff) of -w*log(sigmoid(diff)) is -w*sigmoid(-diff); zero where clamped
    g_diff = np.where(ls < LOG_FLOOR, 0.0, -weights * sigmoid(-diff)) / n
    grads = backward(tape, np.concatenate([g_diff, -g_diff]), params, cfg)
    if not grads.all_finite():
        raise DivergenceError("non-finite gradient")
    return loss, acc, grads


def self_loss(batch, params: RankerParams, cfg: EncoderConfig,
              cache: FeatureCache | None = None) -> float:
    pairs = _pairs_of(batch)
    _check_origin(pairs, Origin.SELF)
    return pair_objective(pairs, params, cfg, cache=cache)[0]


def sup_loss(batch, params: RankerParams, cfg: EncoderConfig,
             cache: FeatureCache | None = None) -> float:
    pairs = _pairs_of(batch)
    _check_origin(pairs, Origin.SUP)
    return pair_objective(pairs, params, cfg, cache=cache)[0]


def combine(alpha: float, loss_sup: float, loss_self: float) -> float:
    return alpha * loss_sup + (1.0 - alpha) * loss_self


def combined_loss(self_batch, sup_batch, params: RankerParams, cfg: EncoderConfig,
                  alpha: float = 0.5, cache: FeatureCache | None = None) -> LossReport:
    self_pairs, sup_pairs = _pairs_of(self_batch), _pairs_of(sup_batch)
    _check_origin(self_pairs, Origin.SELF)
    _check_origin(sup_pairs, Origin.SUP)
    ls, acc_self, _ = pair_objective(self_pairs, params, cfg, cache=cache)
    lp, acc_sup, _ = pair_objective(sup_pairs, params, cfg, cache=cache)
    n_self, n_sup = len(self_pairs), len(sup_pairs)
    acc = (acc_self * n_self + acc_sup * n_sup) / (n_self + n_sup)
    return LossReport(ls, lp, combine(alpha, lp, ls), acc)


def loss_and_grad(self_batch, params: RankerParams, cfg: EncoderConfig,
                  sup_batch=None, alpha: float = 0.5, train_mode: bool = False,
                  rng: np.random.Generator | None = None,
                  cache: FeatureCache | None = None) -> tuple[LossReport, Gradients]:
    """Loss report and gradient of the self-only or semi-supervised objective.

    With ``train_mode`` the dropout masks are drawn once from ``rng`` and
    shared by the loss and its gradient.
    """
    self_pairs = _pairs_of(self_batch)
    _check_origin(self_pairs, Origin.SELF)
    ls, acc, g_self = pair_objective(self_pairs, params, cfg, train_mode, rng, cache, True)
    sup_pairs = _pairs_of(sup_batch) if sup_batch is not None else []
    if not sup_pairs:
        return LossReport(ls, None, ls, acc), g_self
    _check_origin(sup_pairs, Origin.SUP)
    lp, acc_sup, g_sup = pair_objective(sup_pairs, params, cfg, train_mode, rng, cache, True)
    n_self, n_sup = len(self_pairs), len(sup_pairs)
    report = LossReport(ls, lp, combine(alpha, lp, ls),
                        (acc * n_self + acc_sup * n_sup) / (n_self + n_sup))
    return report, g_sup.scaled(alpha) + g_self.scaled(1.0 - alpha)


def grad(self_batch, params: RankerParams, cfg: EncoderConfig, sup_batch=None,
         alpha: float = 0.5, train_mode: bool = False,
         rng: np.random.Generator | None = None) -> Gradients:
    return loss_and_grad(self_batch, params, cfg, sup_batch, alpha, train_mode, rng)[1]


class MomentumSGD:
    """Heavy-ball SGD with lazily applied updates for untouched encoder rows.

    An encoder row whose gradient is zero for ``k`` steps moves by
    ``-lr * v * (mu + ... + mu**k)`` and its velocity decays to ``mu**k * v``.
    That closed form is applied before the row is next read (:meth:`sync`)
    or on :meth:`flush`, so sparse steps cost only the active rows while the
    trajectory equals dense momentum exactly.
    """

    def __init__(self, params: RankerParams, lr: float, momentum: float = 0.9):
        self.lr, self.mu = lr, momentum
        self.t = 0
        self.v_enc = np.zeros_like(params.encoder)
        self.last = np.zeros(params.encoder.shape[0], dtype=np.int64)
        self.v_dense = {n: np.zeros_like(getattr(params, n)) for n in ("w1", "b1", "w2")}
        self.v_b2 = 0.0

    def _catch_up(self, params: RankerParams, rows: np.ndarray, upto: int) -> None:
        k = upto - self.last[rows]
        stale = k > 0
        if not stale.any():
            return
        rows, k = rows[stale], k[stale].astype(np.float64)
        decay = self.mu ** k
        travelled = self.mu * (1.0 - decay) / (1.0 - self.mu)
        params.encoder[rows] -= self.lr * travelled[:, None] * self.v_enc[rows]
        self.v_enc[rows] *= decay[:, None]
        self.last[rows] = upto

    def sync(self, params: RankerParams, rows: np.ndarray) -> None:
        """Apply pending updates to ``rows`` so a forward pass sees current values."""
        self._catch_up(params, np.asarray(rows, dtype=np.int64), self.t)

    def step(self, params: RankerParams, grads: Gradients) -> None:
        self.t += 1
        for name, v in self.v_dense.items():
            v *= self.mu
            v += getattr(grads, name)
            getattr(params, name)[...] -= self.lr * v
        self.v_b2 = self.mu * self.v_b2 + grads.b2
        params.b2 -= self.lr * self.v_b2
        rows = grads.encoder_rows
        if len(rows):
            self._catch_up(params, rows, self.t - 1)
            self.v_enc[rows] = self.mu * self.v_enc[rows] + grads.encoder_vals
            params.encoder[rows] -= self.lr * self.v_enc[rows]
            self.last[rows] = self.t

    def flush(self, params: RankerParams) -> None:
        self._catch_up(params, np.arange(len(self.last)), self.t)


def evaluate_pairs(pairs: Sequence[RankedPair], params: RankerParams, cfg: EncoderConfig,
                   cache: FeatureCache | None = None, chunk: int = 2048) -> tuple[float, float]:
    """Eval-mode mean weighted log-loss and pair accuracy over a pair set."""
    total_loss = total_correct = 0.0
    for i in range(0, len(pairs), chunk):
        part = pairs[i:i + chunk]
        loss, acc, _ = pair_objective(part, params, cfg, cache=cache)
        total_loss += loss * len(part)
        total_correct += acc * len(part)
    return total_loss / len(pairs), total_correct / len(pairs)


def _active_rows(batch: Sequence[RankedPair], sup_batch: PairBatch | None,
                 cache: FeatureCache) -> np.ndarray:
    pairs = list(batch) + (sup_batch.pairs if sup_batch is not None else [])
    idx = [cache.get(t)[0] for p in pairs for t in (p.pos_text, p.neg_text)]
    return np.unique(np.concatenate(idx)) if idx else np.zeros(0, dtype=np.int64)


def _supervised_batches(stream: Sequence[Hypothesis], size: int, balance_weight: float,
                        rng: np.random.Generator) -> Iterator[PairBatch]:
    """Endless supervised pair batches; the stream is reshuffled on every pass."""
    while True:
        order = rng.permutation(len(stream))
        for i in range(0, len(order), size):
            chunk = [stream[j] for j in order[i:i + size]]
            if len(chunk) >= 2:
                yield form_supervised_batch(chunk, rng, balance_weight)


def train(train_pairs: Sequence[RankedPair], valid_pairs: Sequence[RankedPair],
          supervised: Sequence[Hypothesis] | None, tcfg: TrainConfig, ecfg: EncoderConfig,
          params: RankerParams | None = None,
          on_epoch: Callable[[dict], None] | None = None) -> tuple[RankerParams, list[dict]]:
    """Train with early stopping on the validation self-supervised loss.

    Returns the parameters with the lowest recorded validation loss and one
    log record per epoch.
    """
    if not train_pairs or not valid_pairs:
        raise ValueError("training and validation pair sets must be nonempty")
    semi = tcfg.mode is Mode.SEMI
    if semi != bool(supervised):
        raise ValueError("a supervised stream is required in semi mode and only there")

    rng = np.random.default_rng(tcfg.seed)
    params = init_params(ecfg) if params is None else params.copy()
    params.check(ecfg)
    cache = FeatureCache(ecfg)
    opt = MomentumSGD(params, tcfg.learning_rate, tcfg.momentum)
    sup_iter = _supervised_batches(supervised, tcfg.batch_size, tcfg.balance_weight, rng) \
        if semi else None

    best, best_loss, since_best = params.copy(), math.inf, 0
    history: list[dict] = []
    for epoch in range(1, tcfg.max_epochs + 1):
        started = time.perf_counter()
        order = rng.permutation(len(train_pairs))
        sums = {"self": 0.0, "sup": 0.0, "total": 0.0}
        n_steps = n_sup_steps = 0
        try:
            for i in range(0, len(order), tcfg.batch_size):
                batch = [train_pairs[j] for j in order[i:i + tcfg.batch_size]]
                sup_batch = next(sup_iter) if semi else None
                opt.sync(params, _active_rows(batch, sup_batch, cache))
                report, grads = loss_and_grad(batch, params, ecfg, sup_batch, tcfg.alpha,
                                              train_mode=True, rng=rng, cache=cache)
                opt.step(params, grads)
                sums["self"] += report.loss_self
                sums["total"] += report.loss_total
                if report.loss_sup is not None:
                    sums["sup"] += report.loss_sup
                    n_sup_steps += 1
                n_steps += 1
            opt.flush(params)
            valid_loss, valid_acc = evaluate_pairs(valid_pairs, params, ecfg, cache)
        except FloatingPointError as exc:
            log.error("epoch %d diverged (%s); keeping best parameters", epoch, exc)
            history.append({"epoch": epoch, "aborted": str(exc)})
            break
        record = {
            "epoch": epoch,
            "loss_self": sums["self"] / n_steps,
            "loss_sup": sums["sup"] / n_sup_steps if n_sup_steps else None,
            "loss_total": sums["total"] / n_steps,
            "valid_loss": valid_loss,
            "pair_acc": valid_acc,
            "seconds": time.perf_counter() - started,
        }
        history.append(record)
        if on_epoch:
            on_epoch(record)
        if not math.isfinite(valid_loss):
            log.error("validation loss is %s at epoch %d; stopping", valid_loss, epoch)
            break
        if valid_loss < best_loss:
            best, best_loss, since_best = params.copy(), valid_loss, 0
        else:
            since_best += 1
            if since_best >= tcfg.patience:
                break
    return best, history
