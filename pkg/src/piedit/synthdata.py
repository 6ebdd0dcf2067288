"""Synthetic error generation from clean text, plus a toy spelling task.

A sentence receives ``errorCount ~ multinoulli(error_count_probs)`` errors,
each of a type drawn from ``error_type_probs``:

* AppendError drops a word (the model must learn to append it back),
* VerbError swaps a verb for another form of the same verb,
* ReplaceError overwrites a word with a spurious word,
* DeleteError inserts a spurious word (the model must learn to delete it).

Errors are applied one after another to the evolving sentence.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .editspace.tokens import BOS, EOS
from .editspace.transforms import Family, default_table

APPEND, VERB, REPLACE, DELETE = "AppendError", "VerbError", "ReplaceError", "DeleteError"
ERROR_TYPES = (APPEND, VERB, REPLACE, DELETE)
DEFAULT_COUNT_PROBS = (0.05, 0.07, 0.25, 0.35, 0.28)
DEFAULT_TYPE_PROBS = (0.30, 0.25, 0.25, 0.20)

DEFAULT_SPURIOUS = (
    ("the", 10), ("a", 8), ("to", 7), ("of", 6), ("in", 6), ("and", 5), ("is", 4), ("that", 4),
    ("for", 4), ("it", 4), ("on", 3), ("with", 3), ("as", 3), ("was", 3), ("be", 3), ("at", 2),
    ("by", 2), ("an", 2), ("this", 2), ("have", 2), ("from", 2), ("are", 2), ("has", 2),
    (",", 4), (".", 2), ("some", 1), ("very", 1), ("will", 1), ("can", 1), ("there", 1),
)

SEED_VERBS = (
    "walk", "talk", "play", "work", "look", "want", "need", "help", "start", "call", "ask", "seem",
    "turn", "show", "move", "live", "believe", "use", "like", "love", "hope", "change", "study",
    "try", "carry", "worry", "interact", "visit", "open", "learn", "listen", "finish", "watch",
    "wish", "pass", "stay", "enjoy", "happen", "travel", "answer", "decide", "arrive", "create",
)

_VERB_SUFFIXES = {"s", "es", "d", "ed", "ing", "ied", "ies"}


class SynthConfigError(ValueError):
    pass


def validate_probs(probs, name="probabilities"):
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise SynthConfigError(f"{name}: expected a non-empty vector")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise SynthConfigError(f"{name}: entries must be finite and non-negative")
    if abs(p.sum() - 1.0) > 1e-9:
        raise SynthConfigError(f"{name}: sums to {p.sum():.12g}, expected 1 within 1e-9")
    return p


def sample_multinoulli(probs, rng):
    """Inverse-CDF draw of an index from ``probs`` using one uniform variate."""
    p = validate_probs(probs)
    cdf = np.cumsum(p)
    k = int(np.searchsorted(cdf, rng.random(), side="right"))
    # guard against cdf[-1] < 1 through rounding; never land on a zero-mass tail
    return min(k, int(np.flatnonzero(p)[-1]))


def verb_forms(verb, table=None):
    """Inflections of ``verb`` reachable by the verb-like suffix rules."""
    table = default_table() if table is None else table
    forms = {verb}
    for rule in table:
        if rule.family in (Family.ADD_SUFFIX, Family.REPLACE_SUFFIX) and rule.suffix_to in _VERB_SUFFIXES:
            out = rule.apply(verb)
            if out is not None:
                forms.add(out)
    return forms


def default_verb_lexicon(verbs=SEED_VERBS, table=None):
    """Map every form of every seed verb to the other forms of that verb."""
    lexicon = {}
    for v in verbs:
        forms = sorted(verb_forms(v, table))
        for f in forms:
            lexicon.setdefault(f, set()).update(g for g in forms if g != f)
    return {w: sorted(alts) for w, alts in sorted(lexicon.items()) if alts}


@dataclass
class SynthConfig:
    error_count_probs: tuple = DEFAULT_COUNT_PROBS
    error_type_probs: tuple = DEFAULT_TYPE_PROBS
    spurious_words: list = field(default_factory=lambda: list(DEFAULT_SPURIOUS))
    verb_lexicon: dict = field(default_factory=default_verb_lexicon)
    seed: int = 0

    def __post_init__(self):
        self.error_count_probs = tuple(float(v) for v in self.error_count_probs)
        self.error_type_probs = tuple(float(v) for v in self.error_type_probs)
        self.spurious_words = [(str(w), float(c)) for w, c in self.spurious_words]
        self.validate()

    def validate(self):
        validate_probs(self.error_count_probs, "error_count_probs")
        tp = validate_probs(self.error_type_probs, "error_type_probs")
        if len(tp) != len(ERROR_TYPES):
            raise SynthConfigError(f"error_type_probs needs {len(ERROR_TYPES)} entries")
        if (tp[2] > 0 or tp[3] > 0) and not self.spurious_words:
            raise SynthConfigError("spurious word list is empty but Replace/Delete errors are enabled")
        if tp[1] > 0 and not self.verb_lexicon:
            raise SynthConfigError("verb lexicon is empty but VerbError is enabled")
        weights = np.array([c for _, c in self.spurious_words])
        if weights.size and (np.any(weights < 0) or weights.sum() <= 0):
            raise SynthConfigError("spurious word weights must be non-negative with a positive sum")

    @property
    def spurious_probs(self):
        w = np.array([c for _, c in self.spurious_words], dtype=np.float64)
        return w / w.sum()

    def to_json(self):
        return {
            "error_count_probs": list(self.error_count_probs),
            "error_type_probs": list(self.error_type_probs),
            "spurious_words": [[w, c] for w, c in self.spurious_words],
            "verb_lexicon": self.verb_lexicon,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj):
        return cls(**obj)


def load_config(path):
    """JSON config; ``spurious_words``/``verb_lexicon`` may be given as TSV paths."""
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    if isinstance(obj.get("spurious_words"), str):
        obj["spurious_words"] = read_spurious_tsv(os.path.join(base, obj["spurious_words"]))
    if isinstance(obj.get("verb_lexicon"), str):
        obj["verb_lexicon"] = read_verb_tsv(os.path.join(base, obj["verb_lexicon"]))
    return SynthConfig.from_json(obj)


def read_spurious_tsv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE) if r]
    if rows and rows[0][0] == "word":
        rows = rows[1:]
    return [(r[0], float(r[1]) if len(r) > 1 else 1.0) for r in rows]


def write_spurious_tsv(words, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("word\tweight\n")
        for w, c in words:
            fh.write(f"{w}\t{c:g}\n")


def read_verb_tsv(path):
    """Rows ``verb<TAB>form1<TAB>form2...``."""
    lexicon = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE):
            if len(r) >= 2 and r[0] != "verb":
                lexicon[r[0]] = [f for f in r[1:] if f]
    return lexicon


def write_verb_tsv(lexicon, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("verb\tforms\n")
        for v, forms in lexicon.items():
            fh.write("\t".join([v, *forms]) + "\n")


# ------------------------------------------------------------- corruption


def _strip(tokens):
    tokens = list(tokens)
    wrapped = len(tokens) >= 2 and tokens[0] == BOS and tokens[-1] == EOS
    return (tokens[1:-1] if wrapped else tokens), wrapped


def corrupt_sentence(clean, cfg: SynthConfig, rng):
    """Return (noisy tokens, list of applied-error records).

    Boundary markers, when present, are kept in place.  Each record is a
    dict with ``type``, ``position`` and, where relevant, ``word``/``old``;
    an error that cannot be applied carries ``skipped: True``.
    """
    words, wrapped = _strip(clean)
    if not words:
        raise ValueError("sentence has no tokens to corrupt")
    applied = []
    count = sample_multinoulli(cfg.error_count_probs, rng)
    types = [ERROR_TYPES[sample_multinoulli(cfg.error_type_probs, rng)] for _ in range(count)]
    for kind in types:
        if kind == APPEND:
            if len(words) <= 1:
                applied.append({"type": kind, "skipped": True})
                continue
            pos = int(rng.integers(len(words)))
            applied.append({"type": kind, "position": pos, "old": words.pop(pos)})
        elif kind == DELETE:
            pos = int(rng.integers(len(words) + 1))
            w = _spurious(cfg, rng)
            words.insert(pos, w)
            applied.append({"type": kind, "position": pos, "word": w})
        elif kind == REPLACE:
            pos = int(rng.integers(len(words)))
            w = _spurious(cfg, rng)
            applied.append({"type": kind, "position": pos, "old": words[pos], "word": w})
            words[pos] = w
        else:
            verbs = [i for i, w in enumerate(words) if cfg.verb_lexicon.get(w)]
            if not verbs:
                applied.append({"type": kind, "skipped": True})
                continue
            pos = verbs[int(rng.integers(len(verbs)))]
            alts = cfg.verb_lexicon[words[pos]]
            w = alts[int(rng.integers(len(alts)))]
            applied.append({"type": kind, "position": pos, "old": words[pos], "word": w})
            words[pos] = w
    noisy = [BOS, *words, EOS] if wrapped else words
    return noisy, applied


def _spurious(cfg, rng):
    return cfg.spurious_words[sample_multinoulli(cfg.spurious_probs, rng)][0]


def line_rng(seed, lineno):
    """Independent stream per line, so output does not depend on processing order."""
    return np.random.default_rng([int(seed), int(lineno)])


@dataclass
class SynthStats:
    lines: int = 0
    corrupted: int = 0
    histogram: Counter = field(default_factory=Counter)
    skipped: Counter = field(default_factory=Counter)
    count_histogram: Counter = field(default_factory=Counter)

    def to_json(self):
        return {
            "lines": self.lines,
            "corrupted": self.corrupted,
            "error_types": dict(self.histogram),
            "skipped": dict(self.skipped),
            "error_counts": {str(k): v for k, v in sorted(self.count_histogram.items())},
        }


def corrupt_lines(lines, cfg: SynthConfig, stats=None):
    """Yield (noisy line, clean line) for whitespace-tokenised clean lines."""
    stats = SynthStats() if stats is None else stats
    for lineno, line in enumerate(lines):
        clean = line.split()
        stats.lines += 1
        if not clean:
            yield "", ""
            continue
        noisy, applied = corrupt_sentence(clean, cfg, line_rng(cfg.seed, lineno))
        stats.count_histogram[len(applied)] += 1
        for rec in applied:
            (stats.skipped if rec.get("skipped") else stats.histogram)[rec["type"]] += 1
        stats.corrupted += noisy != clean
        yield " ".join(noisy), " ".join(clean)


def generate_corpus(clean_path, cfg: SynthConfig, out_src, out_tgt, progress=None, every=10000):
    """Stream ``clean_path`` into aligned noisy (source) / clean (target) files."""
    stats = SynthStats()
    tmp = []
    try:
        handles = []
        for dest in (out_src, out_tgt):
            fd, path = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(dest)), suffix=".tmp")
            tmp.append(path)
            handles.append(os.fdopen(fd, "w", encoding="utf-8"))
        with open(clean_path, encoding="utf-8") as fin, handles[0] as fs, handles[1] as ft:
            lines = (ln.rstrip("\n") for ln in fin)
            for k, (noisy, clean) in enumerate(corrupt_lines(lines, cfg, stats), 1):
                fs.write(noisy + "\n")
                ft.write(clean + "\n")
                if progress is not None and k % every == 0:
                    progress(k, stats)
        os.replace(tmp[0], out_src)
        os.replace(tmp[1], out_tgt)
    finally:
        for path in tmp:
            if os.path.exists(path):
                os.unlink(path)
    return stats


# --------------------------------------------------------- toy spell task

_ONSETS = ("b", "c", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "br", "st", "tr", "pl", "gr", "sh", "ch")
_NUCLEI = ("a", "e", "i", "o", "u", "ai", "ea", "ou")
_CODAS = ("", "", "n", "r", "s", "t", "l", "m", "nd", "st")
ALPHABET = "abcdefghijklmnopqrstuvwxyz"


def _deletion_variants(word, depth=2):
    out = {word}
    frontier = {word}
    for _ in range(depth):
        frontier = {w[:i] + w[i + 1 :] for w in frontier for i in range(len(w))}
        out |= frontier
    return out


def make_lexicon(size, rng, min_len=4, max_len=10, separated=True):
    """``size`` distinct pronounceable pseudo-words.

    With ``separated``, no two words share a variant obtained by deleting
    up to two characters, which implies an edit distance of at least 3
    between any two words: every single-character misspelling then has
    exactly one nearest lexicon word.
    """
    words = []
    taken = set()
    while len(words) < size:
        syllables = int(rng.integers(1, 4))
        w = "".join(
            _ONSETS[rng.integers(len(_ONSETS))] + _NUCLEI[rng.integers(len(_NUCLEI))] + _CODAS[rng.integers(len(_CODAS))]
            for _ in range(syllables)
        )
        if not min_len <= len(w) <= max_len:
            continue
        variants = _deletion_variants(w) if separated else {w}
        if taken.isdisjoint(variants):
            taken |= variants
            words.append(w)
    return sorted(words)


def misspell(word, rng, alphabet=ALPHABET):
    """One random character insertion, deletion or substitution."""
    kind = int(rng.integers(3))
    if kind == 0:
        pos = int(rng.integers(len(word) + 1))
        return word[:pos] + alphabet[rng.integers(len(alphabet))] + word[pos:]
    pos = int(rng.integers(len(word)))
    if kind == 1:
        return word[:pos] + word[pos + 1 :]
    choices = [c for c in alphabet if c != word[pos]]
    return word[:pos] + choices[rng.integers(len(choices))] + word[pos + 1 :]


def spell_pairs(lexicon, count, rng, unique=True):
    """``count`` (misspelled, correct) pairs.

    A misspelling never equals a lexicon word; with ``unique`` every
    misspelling occurs once, so no input has two different corrections.
    """
    known = set(lexicon)
    seen = set()
    out = []
    while len(out) < count:
        w = lexicon[rng.integers(len(lexicon))]
        noisy = misspell(w, rng)
        if not noisy or noisy in known or (unique and noisy in seen):
            continue
        seen.add(noisy)
        out.append((noisy, w))
    return out


def make_spell_task(lexicon_size=1000, train=8000, test=1000, dev=0, seed=0):
    """Lexicon plus train/dev/test misspelling pairs with no misspelling shared between splits."""
    rng = np.random.default_rng(seed)
    lexicon = make_lexicon(lexicon_size, rng)
    pairs = spell_pairs(lexicon, train + dev + test, rng)
    return lexicon, pairs[:train], pairs[train : train + dev], pairs[train + dev :]
