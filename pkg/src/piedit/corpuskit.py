"""Parallel-corpus loading and evaluation metrics.

``edit_prf`` compares multisets of compiled edits against a shared source.
It is a simplified stand-in for span-based scorers, so its numbers are only
directionally comparable to published F0.5 figures.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field

from .editspace import AnyInsert, DiffConfig, detokenize, encode_line, seq2edits
from .editspace.edits import C
from .editspace.tokens import WORD, check_mode

log = logging.getLogger(__name__)


class CorpusError(ValueError):
    pass


@dataclass
class ParallelCorpus:
    pairs: list = field(default_factory=list)  # [(source tokens, target tokens)], boundary-wrapped
    mode: str = WORD
    skipped_empty: int = 0

    def __len__(self):
        return len(self.pairs)

    @property
    def sources(self):
        return [x for x, _ in self.pairs]

    @property
    def targets(self):
        return [y for _, y in self.pairs]


def read_lines(path):
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n").rstrip("\r") for line in fh]


def load_parallel(src_path, tgt_path, mode=WORD):
    """Tokenise and wrap aligned source/target files; lines empty on either side are skipped."""
    check_mode(mode)
    src, tgt = read_lines(src_path), read_lines(tgt_path)
    if len(src) != len(tgt):
        raise CorpusError(f"line-count mismatch: {src_path} has {len(src)} lines, {tgt_path} has {len(tgt)}")
    corpus = ParallelCorpus(mode=mode)
    for lineno, (s, t) in enumerate(zip(src, tgt), 1):
        if not s.strip() or not t.strip():
            corpus.skipped_empty += 1
            log.warning("skipping empty line %d", lineno)
            continue
        corpus.pairs.append((encode_line(s, mode), encode_line(t, mode)))
    return corpus


def load_lines(path, mode=WORD):
    """Wrapped token sequences of the non-empty lines of ``path``."""
    return [encode_line(line, mode) for line in read_lines(path) if line.strip()]


def _text(seq, mode):
    return seq if isinstance(seq, str) else detokenize(seq, mode)


def word_accuracy(predictions, gold, mode=WORD):
    """Fraction of sequences equal to their reference after detokenisation."""
    if len(predictions) != len(gold):
        raise CorpusError(f"{len(predictions)} predictions for {len(gold)} references")
    if not gold:
        return 0.0
    hits = sum(" ".join(_text(p, mode).split()) == " ".join(_text(g, mode).split()) for p, g in zip(predictions, gold))
    return hits / len(gold)


def f_beta(precision, recall, beta=0.5):
    b2 = beta * beta
    denom = b2 * precision + recall
    return 0.0 if denom == 0 else (1.0 + b2) * precision * recall / denom


@dataclass
class EvalReport:
    precision: float = 0.0
    recall: float = 0.0
    f05: float = 0.0
    word_accuracy: float | None = None
    counts: dict = field(default_factory=lambda: {"true_positives": 0, "proposed": 0, "gold": 0})
    beta: float = 0.5

    def to_json(self):
        out = asdict(self)
        out.pop("beta")
        return out

    def dumps(self):
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def prf_from_counts(tp, proposed, gold, beta=0.5):
    precision = tp / proposed if proposed else 0.0
    recall = tp / gold if gold else 0.0
    return EvalReport(
        precision=precision,
        recall=recall,
        f05=f_beta(precision, recall, beta),
        counts={"true_positives": int(tp), "proposed": int(proposed), "gold": int(gold)},
        beta=beta,
    )


def edit_triples(edits):
    """Multiset of non-copy (position, op, argument) triples."""
    out = Counter()
    for pos, e in enumerate(edits):
        if e.kind == C:
            continue
        out[(pos, e.kind, e.arg if e.rule is None else e.rule)] += 1
    return out


def edit_prf(pred_edits, gold_edits, beta=0.5):
    """Precision/recall/F_beta over per-sentence multisets of non-copy edits."""
    if len(pred_edits) != len(gold_edits):
        raise CorpusError(f"{len(pred_edits)} predicted edit sequences for {len(gold_edits)} gold sequences")
    tp = proposed = gold = 0
    for p, g in zip(pred_edits, gold_edits):
        pm, gm = edit_triples(p), edit_triples(g)
        tp += sum((pm & gm).values())
        proposed += sum(pm.values())
        gold += sum(gm.values())
    return prf_from_counts(tp, proposed, gold, beta)


def edits_against_source(sources, targets, table, cfg=DiffConfig(), mode=WORD):
    """Compile edits from each source to its target with an unrestricted insert dictionary."""
    return [seq2edits(x, y, AnyInsert(), table, cfg, mode) for x, y in zip(sources, targets)]


def evaluate(sources, predictions, gold, table, mode=WORD, beta=0.5):
    """Edit-level P/R/F plus whole-sequence accuracy; all arguments are wrapped token sequences."""
    pred_e = edits_against_source(sources, predictions, table, mode=mode)
    gold_e = edits_against_source(sources, gold, table, mode=mode)
    report = edit_prf(pred_e, gold_e, beta)
    report.word_accuracy = word_accuracy(predictions, gold, mode)
    return report
