"""Synthetic benchmark: Self vs Semi ranker vs n-gram perplexity baseline.

Runs the whole pipeline through the CLI for one seed: synthesize a corpus
with a held-out test split, build self-supervised pairs, train Self and Semi
rankers, fit the baseline, then score and correlate everything on the test
split. Results are plain dicts so they can be compared across reruns.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .cli import main as cli_main


@dataclass(frozen=True)
class BenchmarkConfig:
    n_utts: int = 2000
    noise_rates: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
    test_frac: float = 0.2
    valid_frac: float = 0.2
    sup_hypotheses: int = 5000
    # one CPU, a few GB of RAM: smaller tables and a larger step than the library defaults
    hash_dim: int = 2 ** 16
    embed_dim: int = 32
    learning_rate: float = 0.3
    epochs: int = 20
    patience: int = 3
    alpha: float = 0.5
    lm_order: int = 5
    lm_k: float = 0.1
    modes: tuple[str, ...] = field(default=("self", "semi"))


class StepFailed(RuntimeError):
    pass


def _run(argv: list[str]) -> None:
    code = cli_main([str(a) for a in argv])
    if code != 0:
        raise StepFailed(f"asrqe {' '.join(map(str, argv))} exited with {code}")


def _head_lines(src: Path, dst: Path, n: int) -> None:
    with open(src, encoding="utf-8") as fh:
        lines = [line for _, line in zip(range(n), fh)]
    if len(lines) < n:
        raise StepFailed(f"{src} has only {len(lines)} lines, {n} requested")
    with open(dst, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)


def run_seed(seed: int, workdir: str | Path, cfg: BenchmarkConfig = BenchmarkConfig()) -> dict:
    """Run the pipeline for one seed under ``workdir`` and return all numbers."""
    wd = Path(workdir)
    wd.mkdir(parents=True, exist_ok=True)
    rates = ",".join(repr(r) for r in cfg.noise_rates)
    corpus, pairs, models, scored = wd / "corpus", wd / "pairs", wd / "models", wd / "scored"
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    _run(["synth", "--out-dir", corpus, "--n-utts", cfg.n_utts, "--noise-rates", rates,
          "--test-frac", cfg.test_frac, "--seed", seed])
    _run(["gen-pairs", "--hyps", corpus / "hyps.jsonl", "--out", pairs,
          "--valid-frac", cfg.valid_frac, "--seed", seed])
    timings["data"] = time.perf_counter() - t0

    if "semi" in cfg.modes:
        # disjoint utterances with references; ref_wer is computed by the trainer
        n_sup_utts = -(-cfg.sup_hypotheses // len(cfg.noise_rates))
        sup = wd / "sup"
        _run(["synth", "--out-dir", sup, "--n-utts", n_sup_utts, "--noise-rates", rates,
              "--test-frac", 0, "--prefix", "sup", "--seed", seed + 7919])
        _head_lines(sup / "hyps.jsonl", sup / "stream.jsonl", cfg.sup_hypotheses)

    test_hyps, test_refs = corpus / "test_hyps.jsonl", corpus / "test_refs.jsonl"
    results: dict = {"seed": seed, "config": asdict(cfg)}
    for mode in cfg.modes:
        model = models / f"{mode}.bin"
        argv = ["train", "--train", pairs / "train_pairs.jsonl",
                "--valid", pairs / "valid_pairs.jsonl", "--mode", mode,
                "--alpha", cfg.alpha, "--lr", cfg.learning_rate, "--epochs", cfg.epochs,
                "--patience", cfg.patience, "--hash-dim", cfg.hash_dim,
                "--embed-dim", cfg.embed_dim, "--seed", seed, "--out-model", model]
        if mode == "semi":
            argv += ["--sup", wd / "sup" / "stream.jsonl", "--sup-refs", wd / "sup" / "refs.jsonl"]
        t0 = time.perf_counter()
        _run(argv)
        timings[f"train_{mode}"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        results[mode] = _score_and_eval(model, test_hyps, test_refs, scored / mode)
        acc_path = scored / mode / "pair_acc.json"
        _run(["pair-acc", "--model", model, "--hyps", test_hyps, "--out", acc_path])
        results[mode]["pair_accuracy"] = json.loads(acc_path.read_text())["pair_accuracy"]
        timings[f"eval_{mode}"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    lm = models / "ngram_lm.bin"
    _run(["baseline", "--corpus", corpus / "hyps.jsonl", "--order", cfg.lm_order,
          "--k", cfg.lm_k, "--out-model", lm])
    results["baseline"] = _score_and_eval(lm, test_hyps, test_refs, scored / "baseline")
    timings["baseline"] = time.perf_counter() - t0
    results["seconds"] = timings
    return results


def _score_and_eval(model: Path, hyps: Path, refs: Path, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    _run(["score", "--model", model, "--hyps", hyps, "--refs", refs, "--out", out / "scored.jsonl"])
    _run(["eval", "--scored", out / "scored.jsonl", "--report", out / "report.json"])
    report = json.loads((out / "report.json").read_text())
    return {"vs_rank": report["vs_rank"], "vs_score": report["vs_score"]}


def numbers_only(result: dict) -> dict:
    """Drop wall-clock timings so two runs can be compared for equality."""
    return {k: v for k, v in result.items() if k != "seconds"}
