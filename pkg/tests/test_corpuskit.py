import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from piedit.corpuskit import (
    CorpusError,
    EvalReport,
    edit_prf,
    evaluate,
    f_beta,
    load_lines,
    load_parallel,
    prf_from_counts,
    word_accuracy,
)
from piedit.editspace import CHAR, COPY, DELETE, WORD, append, default_table, detokenize, encode_line, replace, transform


def _files(tmp_path, src, tgt):
    (tmp_path / "src.txt").write_text("".join(s + "\n" for s in src))
    (tmp_path / "tgt.txt").write_text("".join(t + "\n" for t in tgt))
    return str(tmp_path / "src.txt"), str(tmp_path / "tgt.txt")


# ---------------------------------------------------------------- loading


def test_two_line_fixture_round_trips(tmp_path):
    src = ["He still won race !", "the cat sat"]
    tgt = ["However , he still won !", "the cat sat ."]
    corpus = load_parallel(*_files(tmp_path, src, tgt))
    assert len(corpus) == 2
    assert corpus.sources[0] == ("[", "He", "still", "won", "race", "!", "]")
    assert [detokenize(x, WORD) for x in corpus.sources] == src
    assert [detokenize(y, WORD) for y in corpus.targets] == tgt


def test_char_mode_tokens(tmp_path):
    corpus = load_parallel(*_files(tmp_path, ["cat"], ["cart"]), mode=CHAR)
    assert corpus.sources[0] == ("[", "c", "a", "t", "]")
    assert detokenize(corpus.targets[0], CHAR) == "cart"


def test_line_count_mismatch_names_both_counts(tmp_path):
    src, tgt = _files(tmp_path, ["a", "b", "c"], ["a", "b"])
    with pytest.raises(CorpusError, match=r"3 lines.*2"):
        load_parallel(src, tgt)


def test_empty_lines_are_skipped_and_counted(tmp_path, caplog):
    corpus = load_parallel(*_files(tmp_path, ["a b", "", "c"], ["a b", "x", "c"]))
    assert len(corpus) == 2 and corpus.skipped_empty == 1
    assert "empty line 2" in caplog.text


def test_load_lines_skips_blank(tmp_path):
    (tmp_path / "p.txt").write_text("a b\n\nc\n")
    assert load_lines(str(tmp_path / "p.txt")) == [("[", "a", "b", "]"), ("[", "c", "]")]


# ---------------------------------------------------------------- metrics


def test_word_accuracy():
    gold = ["the cat", "a dog", "it ran", "we sat"]
    assert word_accuracy(gold, gold) == 1.0
    assert word_accuracy(["the cat", "a dog", "it ran", "we sit"], gold) == 0.75
    assert word_accuracy([encode_line("the  cat", WORD)], ["the cat"]) == 1.0
    with pytest.raises(CorpusError):
        word_accuracy(gold[:3], gold)


def test_f05_formula_against_published_triple():
    assert f_beta(0.661, 0.430, 0.5) == pytest.approx(0.597, abs=5e-4)
    assert f_beta(0.0, 0.0) == 0.0
    assert f_beta(1.0, 1.0) == 1.0


def test_identical_nonempty_edits_score_one():
    edits = [[COPY, DELETE, append("the")], [replace("x"), COPY]]
    report = edit_prf(edits, edits)
    assert (report.precision, report.recall, report.f05) == (1.0, 1.0, 1.0)
    assert report.counts == {"true_positives": 3, "proposed": 3, "gold": 3}


def test_no_proposed_edits_scores_zero():
    report = edit_prf([[COPY, COPY]], [[COPY, DELETE]])
    assert (report.precision, report.recall, report.f05) == (0.0, 0.0, 0.0)
    assert report.counts["proposed"] == 0 and report.counts["gold"] == 1


def test_copies_are_not_counted_and_positions_matter():
    report = edit_prf([[DELETE, COPY]], [[COPY, DELETE]])
    assert report.counts == {"true_positives": 0, "proposed": 1, "gold": 1}


def test_report_json_keys():
    obj = json.loads(prf_from_counts(1, 2, 4).dumps())
    assert set(obj) == {"precision", "recall", "f05", "word_accuracy", "counts"}
    assert obj["precision"] == 0.5 and obj["recall"] == 0.25


def brute_force_true_positives(pred, gold):
    """Greedy one-to-one matching of non-copy (position, edit) items by exhaustive scan."""
    left = [(k, e) for k, e in enumerate(gold) if e != COPY]
    tp = 0
    for k, e in enumerate(pred):
        if e == COPY:
            continue
        for j, item in enumerate(left):
            if item == (k, e):
                del left[j]
                tp += 1
                break
    return tp


EDITS = [COPY, DELETE, append("a"), append("b"), replace("a"), transform(0), transform(1)]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 5), min_size=1, max_size=4), st.integers(0, 2**31))
def test_counts_match_brute_force_oracle(lengths, seed):
    rng = np.random.default_rng(seed)
    pred, gold = [], []
    for n in lengths:
        pred.append([EDITS[k] for k in rng.integers(0, len(EDITS), n)])
        gold.append([EDITS[k] for k in rng.integers(0, len(EDITS), n)])
    report = edit_prf(pred, gold)
    assert report.counts["true_positives"] == sum(brute_force_true_positives(p, g) for p, g in zip(pred, gold))
    assert report.counts["proposed"] == sum(e != COPY for p in pred for e in p)
    assert report.counts["gold"] == sum(e != COPY for g in gold for e in g)
    assert 0.0 <= report.f05 <= 1.0
    swapped = edit_prf(gold, pred)
    assert swapped.counts["true_positives"] == report.counts["true_positives"]


def test_evaluate_combines_edit_and_sequence_scores():
    wrap = lambda s: encode_line(s, WORD)  # noqa: E731
    sources = [wrap("he go home"), wrap("the cat")]
    gold = [wrap("he goes home"), wrap("the cat")]
    report = evaluate(sources, [wrap("he goes home"), wrap("a cat")], gold, default_table())
    assert isinstance(report, EvalReport)
    assert report.word_accuracy == 0.5
    assert report.counts == {"true_positives": 1, "proposed": 2, "gold": 1}
    assert report.recall == 1.0 and report.precision == 0.5
