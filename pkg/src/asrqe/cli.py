"""Command-line entry point: ``asrqe <command> ...``.

Every command writes exactly one manifest JSON next to its outputs and takes
all randomness from its ``--seed``. Errors go to stderr prefixed with
``asrqe-error:`` (exit 1) or ``asrqe-usage-error:`` (exit 2).
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import json
import logging
import math
import shlex
import sys
from pathlib import Path
from typing import Sequence

from . import __version__, baseline, container, synth
from .evalsuite import evaluate, load_scorer, score_corpus, write_report
from .jsonl import (FormatError, hypothesis_record, read_hypotheses, read_pairs,
                    read_references, read_scored, write_jsonl)
from .model import EncoderConfig, init_params, load_model, save_model
from .pairset import (CorpusError, build_self_pairs, drop_inconsistent, group_by_utterance,
                      split_train_valid)
from .textmetrics import normalize_and_tokenize, wer
from .training import Mode, TrainConfig, evaluate_pairs, train

log = logging.getLogger("asrqe")


class CLIError(Exception):
    pass


class UsageError(CLIError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


class Manifest:
    def __init__(self, command: str, argv: Sequence[str], args: argparse.Namespace):
        self.data = {
            "command": command,
            "argv": list(argv),
            "config": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
            "seed": getattr(args, "seed", None),
            "format_version": container.FORMAT_VERSION,
            "tool_version": __version__,
            "inputs": {},
            "outputs": {},
            "started": _now(),
        }

    def write(self, path: Path, **extra) -> None:
        self.data.update(extra)
        self.data["finished"] = _now()
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")


def _manifest_for_file(path: Path) -> Path:
    return path.with_name(path.name + ".manifest.json")


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


# -- commands -----------------------------------------------------------------

def cmd_synth(args, manifest: Manifest) -> None:
    rates = args.noise_rates
    if args.levels is not None and args.levels != len(rates):
        raise UsageError(f"--levels {args.levels} but {len(rates)} noise rates given")
    try:
        synth.validate_rates(rates)
    except ValueError as exc:
        raise UsageError(str(exc))
    if not 0 <= args.test_frac < 1:
        raise UsageError("--test-frac must be in [0, 1)")
    hyps, refs = synth.generate(args.n_utts, rates, args.seed, prefix=args.prefix)
    utts = sorted(refs)
    n_test = int(round(args.test_frac * len(utts)))
    test_utts = set(utts[len(utts) - n_test:]) if n_test else set()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"hyps": out / "hyps.jsonl", "refs": out / "refs.jsonl"}
    write_jsonl(files["hyps"], (hypothesis_record(h) for h in hyps if h.utt_id not in test_utts))
    write_jsonl(files["refs"], ({"utt": u, "text": refs[u]} for u in utts if u not in test_utts))
    if test_utts:
        files["test_hyps"] = out / "test_hyps.jsonl"
        files["test_refs"] = out / "test_refs.jsonl"
        write_jsonl(files["test_hyps"], (hypothesis_record(h) for h in hyps if h.utt_id in test_utts))
        write_jsonl(files["test_refs"], ({"utt": u, "text": refs[u]} for u in utts if u in test_utts))
    print(f"utterances: {len(utts) - n_test} train, {n_test} test; levels: {len(rates)}")
    manifest.write(out / "manifest.json", outputs={k: str(v) for k, v in files.items()})


def cmd_gen_pairs(args, manifest: Manifest) -> None:
    hyps = read_hypotheses(args.hyps)
    pairs = build_self_pairs(group_by_utterance(hyps))
    kept = drop_inconsistent(pairs)
    dropped = len(pairs) - len(kept)
    train_pairs, valid_pairs = split_train_valid(kept, args.valid_frac, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = {"train": out / "train_pairs.jsonl", "valid": out / "valid_pairs.jsonl"}
    write_jsonl(files["train"], (p.to_json() for p in train_pairs))
    write_jsonl(files["valid"], (p.to_json() for p in valid_pairs))
    counts = {"generated": len(pairs), "dropped_inconsistent": dropped,
              "train": len(train_pairs), "valid": len(valid_pairs)}
    print(" ".join(f"{k}={v}" for k, v in counts.items()))
    manifest.write(out / "manifest.json", inputs={"hyps": args.hyps},
                   outputs={k: str(v) for k, v in files.items()}, counts=counts)


def _supervised_stream(args):
    hyps = read_hypotheses(args.sup)
    if all(h.ref_wer is not None for h in hyps):
        return hyps
    if not args.sup_refs:
        raise UsageError("--sup records lack ref_wer; pass --sup-refs to compute it")
    refs = read_references(args.sup_refs)
    missing = sorted({h.utt_id for h in hyps if h.utt_id not in refs})
    if missing:
        raise CLIError(f"no reference for supervised utterances: {', '.join(missing[:20])}")
    out = []
    for h in hyps:
        if h.ref_wer is None:
            h = dataclasses.replace(h, ref_wer=wer(normalize_and_tokenize(refs[h.utt_id]),
                                                   normalize_and_tokenize(h.text)).wer)
        out.append(h)
    return out


def cmd_train(args, manifest: Manifest) -> None:
    if not 0 <= args.alpha <= 1:
        raise UsageError(f"--alpha must be in [0, 1], got {args.alpha}")
    if args.mode == "semi" and not args.sup:
        raise UsageError("--mode semi requires --sup")
    if args.mode == "self" and args.sup:
        raise UsageError("--sup is only used with --mode semi")
    try:
        ecfg = EncoderConfig(ngram_orders=tuple(args.ngram_orders), hash_dim=args.hash_dim,
                             embed_dim=args.embed_dim, hidden_dim=args.hidden_dim,
                             dropout=args.dropout, activation=args.activation,
                             pooling=args.pooling, seed=args.seed,
                             embeddings_path=args.embeddings)
        tcfg = TrainConfig(alpha=args.alpha, batch_size=args.batch, learning_rate=args.lr,
                           momentum=args.momentum, max_epochs=args.epochs,
                           patience=args.patience, seed=args.seed, mode=Mode(args.mode),
                           balance_weight=args.balance_weight)
    except ValueError as exc:
        raise UsageError(str(exc))
    train_pairs = read_pairs(args.train)
    valid_pairs = read_pairs(args.valid)
    supervised = _supervised_stream(args) if args.mode == "semi" else None

    out_model = Path(args.out_model)
    out_model.parent.mkdir(parents=True, exist_ok=True)
    log_path = out_model.with_name(out_model.name + ".log.jsonl")

    def report(rec):
        print(f"epoch {rec['epoch']:3d}  train {rec['loss_total']:.5f}  "
              f"valid {rec['valid_loss']:.5f}  pair_acc {rec['pair_acc']:.4f}", flush=True)

    params, history = train(train_pairs, valid_pairs, supervised, tcfg, ecfg,
                            init_params(ecfg), on_epoch=report)
    save_model(out_model, params, ecfg)
    write_jsonl(log_path, history)
    if history and "aborted" in history[-1]:
        raise CLIError(f"training diverged: {history[-1]['aborted']} (best parameters saved)")
    best = min((r["valid_loss"] for r in history if "valid_loss" in r), default=math.nan)
    manifest.write(_manifest_for_file(out_model),
                   inputs={"train": args.train, "valid": args.valid, "sup": args.sup,
                           "sup_refs": args.sup_refs},
                   outputs={"model": str(out_model), "log": str(log_path)},
                   encoder=ecfg.to_json(), epochs_run=len(history), best_valid_loss=best)


def cmd_score(args, manifest: Manifest) -> None:
    kind, scorer = load_scorer(args.model)
    hyps = read_hypotheses(args.hyps)
    refs = read_references(args.refs) if args.refs else None
    try:
        scored = score_corpus(hyps, scorer, refs)
    except KeyError as exc:
        raise CLIError(exc.args[0])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_jsonl(out, (s.to_json() for s in scored))
    print(f"scored {len(scored)} hypotheses with {kind} model")
    manifest.write(_manifest_for_file(out), inputs={"model": args.model, "hyps": args.hyps,
                                                    "refs": args.refs},
                   outputs={"scored": str(out)}, model_kind=kind)


def cmd_eval(args, manifest: Manifest) -> None:
    scored = read_scored(args.scored)
    if not scored:
        raise CLIError(f"{args.scored}: no scored hypotheses")
    if any(s.wer is None for s in scored):
        raise CLIError(f"{args.scored}: records without a wer column; score with --refs")
    report = evaluate(scored)
    out = Path(args.report)
    out.parent.mkdir(parents=True, exist_ok=True)
    extra = {"title": args.title} if args.title else None
    write_report(out, report, extra)
    print(report.table(args.title or ""))
    manifest.write(_manifest_for_file(out), inputs={"scored": args.scored},
                   outputs={"report": str(out)})


def cmd_pair_acc(args, manifest: Manifest) -> None:
    params, cfg = load_model(args.model)
    if args.pairs:
        pairs = read_pairs(args.pairs)
    else:
        pairs = drop_inconsistent(build_self_pairs(group_by_utterance(read_hypotheses(args.hyps))))
    if not pairs:
        raise CLIError("no pairs to evaluate")
    loss, acc = evaluate_pairs(pairs, params, cfg)
    result = {"pairs": len(pairs), "pair_accuracy": acc, "loss_self": loss}
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"pairs={len(pairs)} pair_accuracy={acc:.4f} loss={loss:.5f}")
    manifest.write(_manifest_for_file(out), inputs={"model": args.model, "hyps": args.hyps,
                                                    "pairs": args.pairs},
                   outputs={"result": str(out)})


def cmd_baseline(args, manifest: Manifest) -> None:
    texts = sorted({h.text for h in read_hypotheses(args.corpus)})
    if args.refs_corpus:
        texts = sorted(set(texts) | set(read_references(args.refs_corpus).values()))
    try:
        lm = baseline.fit(texts, args.order, args.k)
    except ValueError as exc:
        raise CLIError(str(exc))
    out = Path(args.out_model)
    out.parent.mkdir(parents=True, exist_ok=True)
    baseline.save_lm(out, lm)
    print(f"fitted order-{lm.order} character LM on {len(texts)} texts, vocabulary {lm.vocab_size}")
    manifest.write(_manifest_for_file(out), inputs={"corpus": args.corpus},
                   outputs={"model": str(out)})


def cmd_rerun(args, manifest: Manifest | None) -> None:
    data = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    argv = data.get("argv")
    if not argv:
        raise CLIError(f"{args.manifest}: manifest has no argv")
    print("re-running: asrqe " + shlex.join(argv))
    code = main(argv)
    if code:
        raise CLIError(f"re-run exited with status {code}")


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="asrqe", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"asrqe {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic quality-ordered corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-utts", type=int, default=2000)
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--noise-rates", type=_float_list, default=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    p.add_argument("--test-frac", type=float, default=0.2)
    p.add_argument("--prefix", default="utt")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gen-pairs", help="build self-supervised train/valid pairs")
    p.add_argument("--hyps", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--valid-frac", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_pairs)

    p = sub.add_parser("train", help="train the Siamese ranker")
    p.add_argument("--train", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--sup", help="supervised hypotheses JSONL (semi mode)")
    p.add_argument("--sup-refs", help="references for --sup when ref_wer is absent")
    p.add_argument("--mode", choices=["self", "semi"], default="self")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--balance-weight", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-model", required=True)
    p.add_argument("--ngram-orders", type=_int_list, default=[2, 3, 4])
    p.add_argument("--hash-dim", type=int, default=EncoderConfig.hash_dim)
    p.add_argument("--embed-dim", type=int, default=EncoderConfig.embed_dim)
    p.add_argument("--hidden-dim", type=int, default=EncoderConfig.hidden_dim)
    p.add_argument("--dropout", type=float, default=EncoderConfig.dropout)
    p.add_argument("--activation", choices=["tanh", "relu"], default="tanh")
    p.add_argument("--pooling", choices=["sum", "sqrt", "mean"], default=EncoderConfig.pooling)
    p.add_argument("--embeddings", help="external embeddings JSONL (bypasses the encoder)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score hypotheses with a ranker or n-gram LM")
    p.add_argument("--model", required=True)
    p.add_argument("--hyps", required=True)
    p.add_argument("--refs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="correlate scores with WER ranks and WER scores")
    p.add_argument("--scored", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--title", default="")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pair-acc", help="pairwise ranking accuracy of a ranker")
    p.add_argument("--model", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--hyps", help="build self-supervised pairs from these hypotheses")
    src.add_argument("--pairs", help="existing pairs JSONL")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pair_acc)

    p = sub.add_parser("baseline", help="fit the character n-gram perplexity baseline")
    p.add_argument("--corpus", required=True, help="hypotheses JSONL whose texts are the corpus")
    p.add_argument("--refs-corpus", help="optionally add reference texts to the corpus")
    p.add_argument("--order", type=int, default=5)
    p.add_argument("--k", type=float, default=0.1)
    p.add_argument("--out-model", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("rerun", help="re-execute the command recorded in a manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        manifest = None if args.command == "rerun" else Manifest(args.command, argv, args)
        args.func(args, manifest)
    except UsageError as exc:
        print(f"asrqe-usage-error: {exc}", file=sys.stderr)
        return 2
    except (CLIError, FormatError, CorpusError, container.ContainerError, ValueError,
            OSError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"asrqe-error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
