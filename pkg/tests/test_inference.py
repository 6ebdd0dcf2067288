import csv
import io
import json

import numpy as np
import pytest

from piedit.editspace import COPY, WORD, append, apply_edits, replace, wrap
from piedit.inference import (
    BENCH_COLUMNS,
    InferenceConfig,
    assign_buckets,
    decode_latency_bench,
    ensemble_predict,
    predict_batch,
    refine_batch,
    refine_iteratively,
    replay_trace,
    write_traces,
)
from piedit.model import ModelConfig, PieModel, Vocab


class StubModel:
    """Counts forward passes; ``rule(tokens) -> edits`` decides the prediction."""

    table = []
    mode = WORD

    def __init__(self, rule):
        self.rule = rule
        self.forward_passes = 0

    def predict(self, sequences):
        self.forward_passes += 1
        return [self.rule(tuple(s)) for s in sequences]


def identity(x):
    return [COPY] * len(x)


def swap_ab(x):
    """A -> B -> A: replaces every 'a' with 'b' and every 'b' with 'a'."""
    return [replace({"a": "b", "b": "a"}[t]) if t in ("a", "b") else COPY for t in x]


def grow(x):
    """Never settles: appends one more word every round."""
    return [append("more") if k == len(x) - 2 else COPY for k in range(len(x))]


def test_fixed_point_stops_after_one_round():
    model = StubModel(identity)
    x = wrap(["the", "cat"])
    final, trace = refine_iteratively(model, x)
    assert final == x
    assert trace.rounds_used == 1
    assert trace.changed == [False]
    assert model.forward_passes == 1


def test_two_cycle_stub_stops_at_round_three():
    model = StubModel(swap_ab)
    x = wrap(["a", "x"])
    final, trace = refine_iteratively(model, x, InferenceConfig(max_iterations=4))
    assert trace.rounds_used == 3
    assert trace.sequences == [wrap(["b", "x"]), wrap(["a", "x"]), wrap(["b", "x"])]
    assert final == wrap(["b", "x"])


@pytest.mark.parametrize("cap", [1, 2, 4, 7])
def test_never_settling_model_hits_the_cap(cap):
    model = StubModel(grow)
    final, trace = refine_iteratively(model, wrap(["w"]), InferenceConfig(max_iterations=cap))
    assert trace.rounds_used == cap
    assert len(final) == 3 + cap
    assert model.forward_passes == cap


def test_batch_rounds_decode_unfinished_sentences_together():
    model = StubModel(lambda x: grow(x) if "go" in x else identity(x))
    sequences = [wrap(["go"]), wrap(["stay"]), wrap(["go", "on"])]
    finals, traces = refine_batch(model, sequences, InferenceConfig(max_iterations=3))
    assert [t.rounds_used for t in traces] == [3, 1, 3]
    assert finals[1] == sequences[1]
    assert model.forward_passes == 3


def test_trace_replay_reproduces_recorded_rounds():
    model = StubModel(swap_ab)
    _, trace = refine_iteratively(model, wrap(["a", "b", "a"]))
    assert replay_trace(trace, [], WORD) == trace.sequences


def test_trace_json_lines(tmp_path):
    model = StubModel(grow)
    _, trace = refine_iteratively(model, wrap(["w"]), InferenceConfig(max_iterations=2))
    path = tmp_path / "t.jsonl"
    write_traces([trace], str(path))
    obj = json.loads(path.read_text().splitlines()[0])
    assert obj["rounds_used"] == 2
    assert obj["rounds"][0]["output"] == ["[", "w", "more", "]"]
    assert obj["rounds"][0]["edits"][1] == {"pos": 1, "op": "A", "arg": "more"}


def test_output_too_long_for_the_model_ends_refinement():
    model = StubModel(grow)
    model.config = type("Cfg", (), {"max_positions": 5})()
    final, trace = refine_iteratively(model, wrap(["w"]), InferenceConfig(max_iterations=4))
    assert trace.rounds_used == 3
    assert len(final) == 6


def test_invalid_config():
    with pytest.raises(ValueError):
        InferenceConfig(max_iterations=0)


def test_assign_buckets():
    assert assign_buckets([3, 8, 9, 16, 100], [8, 16, 32]) == [0, 0, 1, 1, 2]


# ------------------------------------------------------- real tiny model


def tiny_model(seed=0):
    words = ["the", "cat", "sat", "on", "mat", "a", "dog"]
    vocab = Vocab.build([wrap(words)], [])
    cfg = ModelConfig(num_layers=1, hidden_size=16, intermediate_size=32, num_heads=2, max_positions=80, initializer_range=0.5)
    return PieModel(cfg, vocab, ["the", "a"], [], mode=WORD, seed=seed)


def sentence(rng, n):
    words = ["the", "cat", "sat", "on", "mat", "a", "dog"]
    return wrap([words[k] for k in rng.integers(0, len(words), n - 2)])


@pytest.mark.parametrize("length", [8, 16, 32, 64])
def test_forward_passes_equal_rounds_at_every_length(length):
    model = tiny_model()
    rng = np.random.default_rng(length)
    for _ in range(3):
        before = model.forward_passes
        _, trace = refine_iteratively(model, sentence(rng, length))
        assert model.forward_passes - before == trace.rounds_used <= 4


def test_one_iteration_equals_one_round_of_edits():
    model = tiny_model(3)
    x = sentence(np.random.default_rng(0), 10)
    final, trace = refine_iteratively(model, x, InferenceConfig(max_iterations=1))
    assert final == apply_edits(x, predict_batch(model, [x])[0], [], WORD)
    assert trace.rounds_used == 1


def test_ensemble_of_identical_models_matches_single_model():
    model = tiny_model(1)
    xs = [sentence(np.random.default_rng(k), 6 + k) for k in range(3)]
    assert ensemble_predict([model, model], xs) == model.predict(xs)


def test_bench_csv_schema_and_pass_scaling():
    model = tiny_model()
    rng = np.random.default_rng(0)
    corpus = [sentence(rng, n) for n in (8, 8, 16, 16, 32, 32, 64, 64)]
    report = decode_latency_bench(model, corpus, [8, 16, 32, 64])
    rows = list(csv.DictReader(io.StringIO(report.to_csv())))
    assert tuple(rows[0]) == BENCH_COLUMNS
    assert len(rows) == 4
    assert all(float(r["mean_passes"]) <= 4 for r in rows)
    base = report.baseline_mean_passes
    assert all(b2 > b1 for b1, b2 in zip(base, base[1:]))
    assert base[-1] / base[0] > 4
