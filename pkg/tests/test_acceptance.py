"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria 6-9 share one set of end-to-end benchmark runs (three seeds, Self
and Semi rankers plus the n-gram baseline) built by a module fixture; the
determinism check repeats those runs in a second directory.
"""

import dataclasses
import itertools
import math
import time

import numpy as np
import pytest

from asrqe.benchmark import BenchmarkConfig, numbers_only, run_seed
from asrqe.evalsuite import kendall, pearson, spearman
from asrqe.model import EncoderConfig, FeatureCache, forward, init_params, pair_probability
from asrqe.pairset import Origin, RankedPair
from asrqe.synth import VOCABULARY
from asrqe.textmetrics import wer
from asrqe.training import combined_loss, loss_and_grad, pair_objective, self_loss, sup_loss
from gradcheck import analytic_vector, max_relative_error, numeric_vector
from oracles import kendall_enumerate, pearson_formula, prefix_edit_distance, spearman_ranked

SEEDS = (1, 2, 3)


def test_c1_wer_matches_brute_force_oracle(criterion):
    seqs = [s for n in range(6) for s in itertools.product("abc", repeat=n)]
    expected = {}
    for r in seqs:
        for h in seqs:
            d = prefix_edit_distance(r, h)
            expected[r, h] = d / len(r) if r else float(len(h))
    start = time.perf_counter()
    mismatches = sum(wer(r, h).wer != expected[r, h] for r in seqs for h in seqs)
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 10
    criterion(1, ok, f"{len(expected)} pairs, {mismatches} mismatches, {elapsed:.2f}s (< 10s)")
    assert ok


def _random_vectors(rng, count):
    for i in range(count):
        n = int(rng.integers(2, 51))
        if i % 2:
            x = rng.integers(0, max(2, n // 3), n).astype(float)
            y = rng.integers(0, max(2, n // 4), n).astype(float)
        else:
            x, y = rng.normal(size=n), rng.normal(size=n)
        yield x.tolist(), y.tolist()


def test_c2_correlations_match_oracles(criterion):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst, undefined_mismatch = 0.0, 0
    for x, y in _random_vectors(rng, 200):
        for got, want in ((pearson(x, y), pearson_formula(x, y)),
                          (spearman(x, y), spearman_ranked(x, y)),
                          (kendall(x, y), kendall_enumerate(x, y))):
            if got is None or want is None:
                undefined_mismatch += (got is None) != (want is None)
            else:
                worst = max(worst, abs(got - want))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-9 and undefined_mismatch == 0 and elapsed < 5
    criterion(2, ok, f"max |diff| {worst:.2e} (< 1e-9), {elapsed:.2f}s (< 5s)")
    assert ok


def _phrase_pairs(rng, n, origin):
    out = []
    while len(out) < n:
        a = " ".join(rng.choice(VOCABULARY[:40], rng.integers(1, 6)))
        b = " ".join(rng.choice(VOCABULARY[:40], rng.integers(1, 6)))
        if a != b:
            w = float(rng.random()) if origin is Origin.SELF else 1.0
            out.append(RankedPair(a, b, w, origin))
    return out


def test_c3_gradients_match_finite_differences(criterion):
    base = EncoderConfig(hash_dim=64, embed_dim=4, hidden_dim=3, dropout=0.0)
    start = time.perf_counter()
    worst = {"self": 0.0, "sup": 0.0, "semi": 0.0}
    for point in range(3):
        cfg = dataclasses.replace(base, seed=100 + point)
        params = init_params(cfg, encoder_scale=0.5)
        rng = np.random.default_rng(point)
        s, u = _phrase_pairs(rng, 8, Origin.SELF), _phrase_pairs(rng, 8, Origin.SUP)
        cache = FeatureCache(cfg)
        checks = {
            "self": (lambda p: self_loss(s, p, cfg, cache), loss_and_grad(s, params, cfg)[1]),
            "sup": (lambda p: sup_loss(u, p, cfg, cache),
                    pair_objective(u, params, cfg, need_grad=True)[2]),
            "semi": (lambda p: combined_loss(s, u, p, cfg, 0.5, cache).loss_total,
                     loss_and_grad(s, params, cfg, u, 0.5)[1]),
        }
        for name, (loss, g) in checks.items():
            err = max_relative_error(analytic_vector(g, cfg), numeric_vector(loss, params, 1e-5))
            worst[name] = max(worst[name], err)
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) < 1e-4 and elapsed < 30
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    criterion(3, ok, f"max relative error {detail} (< 1e-4), {elapsed:.1f}s (< 30s)")
    assert ok


def test_c4_loss_identities(criterion):
    cfg = EncoderConfig(hash_dim=256, embed_dim=8, hidden_dim=4, dropout=0.0, seed=3)
    params = init_params(cfg, encoder_scale=0.5)
    rng = np.random.default_rng(4)
    s, u = _phrase_pairs(rng, 20, Origin.SELF), _phrase_pairs(rng, 20, Origin.SUP)
    rep = combined_loss(s, u, params, cfg, alpha=0.5)
    gap_mean = abs(rep.loss_total - (rep.loss_self + rep.loss_sup) / 2)
    flat = dataclasses.replace(params)
    flat.w2 = np.zeros_like(params.w2)
    gap_ln2 = abs(self_loss([RankedPair("a cat", "a dog", 1.0)], flat, cfg) - math.log(2))
    ok = gap_mean < 1e-12 and gap_ln2 < 1e-12
    criterion(4, ok, f"|L - mean| {gap_mean:.1e}, |L - ln2| {gap_ln2:.1e} (< 1e-12)")
    assert ok


def test_c5_siamese_antisymmetry(criterion):
    cfg = EncoderConfig(seed=17)
    params = init_params(cfg, encoder_scale=0.5)
    rng = np.random.default_rng(5)
    a = [" ".join(rng.choice(VOCABULARY, rng.integers(1, 12))) for _ in range(1000)]
    b = [" ".join(rng.choice(VOCABULARY, rng.integers(1, 12))) for _ in range(1000)]
    la, lb = forward(a, params, cfg).logits, forward(b, params, cfg).logits
    worst = max(abs(pair_probability(x, y) + pair_probability(y, x) - 1) for x, y in zip(la, lb))
    ok = worst < 1e-12
    criterion(5, ok, f"1000 pairs, max |P(a>b) + P(b>a) - 1| = {worst:.1e} (< 1e-12)")
    assert ok


@pytest.fixture(scope="module")
def bench(tmp_path_factory):
    root = tmp_path_factory.mktemp("bench")
    return {s: run_seed(s, root / f"seed{s}") for s in SEEDS}


@pytest.mark.slow
def test_c6_self_supervised_end_to_end(bench, criterion):
    rows, ok = [], True
    for s in SEEDS:
        r = bench[s]
        t = r["seconds"]
        runtime = t["data"] + t["train_self"] + t["eval_self"]
        acc, rho = r["self"]["pair_accuracy"], r["self"]["vs_rank"]["spearman"]
        ok &= acc >= 0.90 and rho >= 0.7 and runtime <= 600
        rows.append(f"seed {s}: acc {acc:.4f}, vs_rank spearman {rho:.4f}, {runtime:.0f}s")
    criterion(6, ok, "; ".join(rows) + " (>= 0.90, >= 0.7, <= 600s)")
    assert ok


@pytest.mark.slow
def test_c7_semi_beats_self_on_wer_scores(bench, criterion):
    gains = [bench[s]["semi"]["vs_score"]["spearman"] - bench[s]["self"]["vs_score"]["spearman"]
             for s in SEEDS]
    mean = float(np.mean(gains))
    ok = mean >= 0.05
    criterion(7, ok, f"vs_score spearman gain per seed {[round(g, 4) for g in gains]}, "
                     f"mean {mean:.4f} (>= 0.05)")
    assert ok


@pytest.mark.slow
def test_c8_self_beats_perplexity_baseline(bench, criterion):
    margins = [bench[s]["self"]["vs_rank"]["pearson"] - bench[s]["baseline"]["vs_rank"]["pearson"]
               for s in SEEDS]
    ok = all(m >= 0.1 for m in margins)
    criterion(8, ok, f"vs_rank pearson margin per seed {[round(m, 4) for m in margins]} (>= 0.1 each)")
    assert ok


@pytest.mark.slow
def test_c9_rerun_is_bit_identical(bench, tmp_path_factory, criterion):
    root = tmp_path_factory.mktemp("bench_again")
    again = {s: run_seed(s, root / f"seed{s}") for s in SEEDS}
    same_numbers = all(numbers_only(again[s]) == numbers_only(bench[s]) for s in SEEDS)
    first_root = tmp_path_factory.getbasetemp()
    models_same = True
    for s in SEEDS:
        for name in ("self.bin", "semi.bin", "ngram_lm.bin"):
            a = next(first_root.glob(f"bench*/seed{s}/models/{name}")).read_bytes()
            b = (root / f"seed{s}" / "models" / name).read_bytes()
            models_same &= a == b
    ok = same_numbers and models_same
    criterion(9, ok, f"numbers identical: {same_numbers}, model files identical: {models_same}")
    assert ok
