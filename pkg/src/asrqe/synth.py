"""Seeded synthetic corpus of quality-ordered ASR-like hypotheses.

Clean sentences come from a small template grammar. Each hypothesis level
applies word corruption at its own rate. The corruption draws are shared
across levels (one uniform draw and one corruption per token), so the set of
corrupted tokens at a level is a superset of the set at every lower-rate
level: a noisier level never fixes an error a cleaner one made.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .pairset import Hypothesis

DETERMINERS = ["the", "a", "this", "that", "every", "some", "my", "your", "our", "their",
               "his", "her", "one", "another", "each", "no"]
ADJECTIVES = ["small", "large", "quiet", "bright", "heavy", "early", "simple", "careful",
              "modern", "ancient", "narrow", "gentle", "rapid", "golden", "hidden", "local",
              "strange", "silver", "honest", "nervous", "patient", "famous", "empty", "warm",
              "cold", "broken", "tired", "happy", "angry", "young", "old", "new", "green",
              "wooden", "busy", "lonely", "clever", "polite", "dusty", "distant", "private",
              "public", "curious", "wild", "soft", "sharp", "rich", "poor", "proud", "calm",
              "dark", "clean", "wet", "dry", "tall", "short", "friendly", "serious", "famous",
              "fresh", "sweet", "bitter", "loud", "shy", "brave", "foreign", "northern"]
NOUNS = ["teacher", "river", "market", "window", "doctor", "garden", "engine", "letter",
         "station", "village", "student", "picture", "kitchen", "mountain", "captain",
         "farmer", "bridge", "report", "museum", "library", "council", "journey", "machine",
         "painter", "harbor", "meeting", "customer", "forest", "problem", "answer", "bottle",
         "camera", "pocket", "ticket", "island", "valley", "office", "factory", "hospital",
         "airport", "theater", "uncle", "sister", "neighbor", "soldier", "pilot", "singer",
         "writer", "lawyer", "nurse", "driver", "baker", "sailor", "guest", "child", "horse",
         "rabbit", "basket", "blanket", "candle", "carpet", "mirror", "pencil", "wallet",
         "jacket", "coffee", "dinner", "holiday", "weekend", "season", "country", "city",
         "street", "corner", "castle", "temple", "tower", "ocean", "desert", "storm", "letter",
         "message", "question", "story", "song", "lesson", "contract", "budget", "project",
         "company", "manager", "engineer", "scientist", "partner", "friend", "stranger"]
VERBS = ["opened", "visited", "painted", "repaired", "described", "carried", "followed",
         "watched", "ordered", "explained", "cleaned", "discovered", "finished", "remembered",
         "collected", "answered", "moved", "checked", "covered", "reached", "bought", "sold",
         "found", "lost", "built", "broke", "signed", "wrote", "read", "heard", "saw",
         "called", "helped", "invited", "protected", "measured", "borrowed", "returned",
         "washed", "packed", "delivered", "noticed", "studied", "ignored", "praised",
         "recorded", "shared", "tested", "handled", "welcomed"]
INTRANSITIVE = ["arrived", "waited", "smiled", "returned", "disappeared", "agreed",
                "stopped", "laughed", "worked", "listened", "slept", "danced", "cried",
                "shouted", "stayed", "left", "paused", "failed", "improved", "complained"]
ADVERBS = ["slowly", "quickly", "yesterday", "again", "carefully", "today", "finally",
           "suddenly", "quietly", "early", "later", "often", "rarely", "together", "alone",
           "outside", "upstairs", "tonight", "recently", "politely", "happily", "badly"]
PREPOSITIONS = ["near", "behind", "under", "beside", "across", "inside", "around", "past",
                "with", "without", "from", "after", "before", "during", "above", "below"]
CONJUNCTIONS = ["and", "but", "because", "while", "although", "so", "when", "until"]
SUBJECT_PRONOUNS = ["she", "he", "they", "we", "i", "you", "nobody", "everyone"]
FUNCTION_WORDS = ["the", "a", "and", "of", "to", "it", "is", "in", "that", "so"]
LETTERS = "abcdefghijklmnopqrstuvwxyz"
# substitution kinds: same-category real word, recurring confusion, fresh misspelling
SUBSTITUTION_MIX = (0.2, 0.7, 0.1)
# error kinds: substitution, deletion, insertion
ERROR_MIX = (0.4, 0.4, 0.2)


def _pick(rng: np.random.Generator, words: Sequence[str]) -> str:
    return words[int(rng.integers(len(words)))]


def _noun_phrase(rng, depth: int = 0) -> list[str]:
    words = [_pick(rng, DETERMINERS)] if rng.random() < 0.85 else []
    for _ in range(int(rng.integers(0, 4))):
        words.append(_pick(rng, ADJECTIVES))
    words.append(_pick(rng, NOUNS))
    if depth < 2 and rng.random() < 0.35:
        words += [_pick(rng, PREPOSITIONS)] + _noun_phrase(rng, depth + 1)
    return words


def _subject(rng) -> list[str]:
    return [_pick(rng, SUBJECT_PRONOUNS)] if rng.random() < 0.3 else _noun_phrase(rng)


def _clause(rng) -> list[str]:
    words = _subject(rng)
    if rng.random() < 0.7:
        words += [_pick(rng, VERBS)] + _noun_phrase(rng)
    else:
        words.append(_pick(rng, INTRANSITIVE))
    while rng.random() < 0.35:
        words.insert(int(rng.integers(len(words) + 1)), _pick(rng, ADVERBS))
    return words


def sentence(rng: np.random.Generator) -> list[str]:
    words = _clause(rng)
    while rng.random() < 0.45:
        words += [_pick(rng, CONJUNCTIONS)] + _clause(rng)
    return words


def misspell(word: str, rng: np.random.Generator) -> str:
    """One character-level edit that changes the word."""
    while True:
        op = int(rng.integers(4))
        pos = int(rng.integers(len(word)))
        if op == 0:
            out = word[:pos] + _pick(rng, LETTERS) + word[pos + 1:]
        elif op == 1 and len(word) > 1:
            out = word[:pos] + word[pos + 1:]
        elif op == 2:
            out = word[:pos] + _pick(rng, LETTERS) + word[pos:]
        elif op == 3 and len(word) > 1:
            pos = min(pos, len(word) - 2)
            out = word[:pos] + word[pos + 1] + word[pos] + word[pos + 2:]
        else:
            continue
        if out != word:
            return out


VOCABULARY = sorted(set(DETERMINERS + ADJECTIVES + NOUNS + VERBS + INTRANSITIVE + ADVERBS
                        + PREPOSITIONS + CONJUNCTIONS + SUBJECT_PRONOUNS))


# real words outside the grammar; recurring misrecognitions map onto these
CONFUSION_POOL = [
    "liver", "marked", "widow", "garten", "engage", "better", "nation", "pillage", "student",
    "pitcher", "chicken", "fountain", "captive", "farther", "fridge", "import", "muse",
    "liberty", "counsel", "journal", "machete", "pointer", "harper", "meaning", "custom",
    "foreign", "probe", "answered", "opening", "visor", "pained", "prepared", "describe",
    "carrot", "fellow", "washed", "border", "explain", "clean", "recovered", "finish",
    "remember", "collect", "answer", "move", "chuck", "cover", "ridge", "arrive", "weighted",
    "smile", "return", "appeared", "agree", "stop", "laugh", "work", "listen", "slow",
    "quick", "yes", "gain", "careful", "day", "final", "sudden", "quite", "ear", "knee",
    "behold", "thunder", "besides", "cross", "insight", "round", "passed", "ant", "butter",
    "cause", "wile", "all", "though", "sea", "hay", "there", "way", "eye", "ewe", "hall",
    "tall", "lodge", "quite", "bride", "heavy", "hurly", "sample", "carefree", "modem",
    "anchor", "arrow", "gentile", "rabbit", "golden", "hidden", "vocal", "strangle", "sliver",
    "honey", "nervy", "patent", "famish", "empire", "worm", "this", "thus", "that", "hat",
    "very", "sum", "mine", "yore", "hour", "there", "teach", "cheer", "market", "window",
]


def _confusion_table(seed: int = 20230301, per_word: int = 2) -> dict[str, tuple[str, ...]]:
    # fixed per-word stand-ins for near-homophone misrecognitions
    rng = np.random.default_rng(seed)
    pool = sorted(set(CONFUSION_POOL) - set(VOCABULARY))
    table = {}
    for w in VOCABULARY:
        alts: list[str] = []
        while len(alts) < per_word:
            alt = _pick(rng, pool)
            if alt != w and alt not in alts:
                alts.append(alt)
        table[w] = tuple(alts)
    return table


CONFUSIONS = _confusion_table()


CATEGORIES = [DETERMINERS, ADJECTIVES, NOUNS, VERBS, INTRANSITIVE, ADVERBS, PREPOSITIONS,
              CONJUNCTIONS, SUBJECT_PRONOUNS]
_CATEGORY_OF = {w: cat for cat in CATEGORIES for w in cat}


def substitute(word: str, rng: np.random.Generator,
               mix: Sequence[float] = SUBSTITUTION_MIX) -> str:
    """Real-word swap within the word's category, recurring confusion, or misspelling."""
    kind = int(rng.choice(3, p=mix))
    category = _CATEGORY_OF.get(word)
    if kind == 0 and category and len(category) > 1:
        while True:
            other = _pick(rng, category)
            if other != word:
                return other
    alts = CONFUSIONS.get(word)
    if kind <= 1 and alts:
        return _pick(rng, alts)
    return misspell(word, rng)


@dataclass(frozen=True)
class TokenNoise:
    draw: float      # token is corrupted at every level whose rate exceeds this
    kind: str        # "sub", "del" or "ins"
    replacement: str


def plan_noise(words: Sequence[str], rng: np.random.Generator,
               error_mix: Sequence[float] = ERROR_MIX,
               substitution_mix: Sequence[float] = SUBSTITUTION_MIX) -> list[TokenNoise]:
    plan = []
    for w in words:
        draw = float(rng.random())
        kind = ("sub", "del", "ins")[int(rng.choice(3, p=error_mix))]
        if kind == "sub":
            repl = substitute(w, rng, substitution_mix)
        elif kind == "ins":
            repl = _pick(rng, FUNCTION_WORDS)
        else:
            repl = ""
        plan.append(TokenNoise(draw, kind, repl))
    return plan


def apply_noise(words: Sequence[str], plan: Sequence[TokenNoise], rate: float) -> list[str]:
    out = []
    for w, noise in zip(words, plan):
        if noise.draw >= rate:
            out.append(w)
        elif noise.kind == "sub":
            out.append(noise.replacement)
        elif noise.kind == "ins":
            out += [w, noise.replacement]
    return out


def validate_rates(rates: Sequence[float]) -> None:
    if not rates:
        raise ValueError("at least one noise rate is required")
    if any(not 0 <= r <= 1 for r in rates):
        raise ValueError(f"noise rates must lie in [0, 1]: {list(rates)}")
    if any(b <= a for a, b in zip(rates, rates[1:])):
        raise ValueError(f"noise rates must be strictly increasing: {list(rates)}")


def generate(n_utts: int, rates: Sequence[float], seed: int, prefix: str = "utt",
             error_mix: Sequence[float] = ERROR_MIX,
             substitution_mix: Sequence[float] = SUBSTITUTION_MIX,
             ) -> tuple[list[Hypothesis], dict[str, str]]:
    """Hypotheses (one per level per utterance) and reference texts."""
    validate_rates(rates)
    rng = np.random.default_rng(seed)
    hyps, refs = [], {}
    width = max(5, len(str(n_utts - 1)))
    for u in range(n_utts):
        utt = f"{prefix}{u:0{width}d}"
        words = sentence(rng)
        plan = plan_noise(words, rng, error_mix, substitution_mix)
        refs[utt] = " ".join(words)
        for level, rate in enumerate(rates):
            text = " ".join(apply_noise(words, plan, rate))
            hyps.append(Hypothesis(utt, f"level{level}", text, level))
    return hyps, refs
