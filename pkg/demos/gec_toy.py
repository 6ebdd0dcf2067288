"""Toy grammatical error correction, end to end.

Clean sentences come from a small template grammar; the synthetic error
generator corrupts them.  A small edit model is trained on the pairs and
decoded with iterative refinement on held-out sentences.  The script prints
edit-level F0.5, whole-sentence accuracy, the mean number of refinement
rounds (the full-scale GEC system reported about 2.7 rounds per sentence,
for comparison only) and a few per-round traces.

    python demos/gec_toy.py --epochs 15
"""

import argparse
import time

import numpy as np

from piedit.corpuskit import evaluate
from piedit.editspace import build_insert_dictionary, default_table, detokenize, encode_line, payload_tokens
from piedit.inference import InferenceConfig, describe, refine_batch
from piedit.model import ModelConfig, PieModel, Vocab
from piedit.synthdata import SynthConfig, corrupt_sentence, line_rng
from piedit.training import TrainConfig, compile_examples, train

SUBJECTS = ["she", "he", "the boy", "my sister", "the teacher", "our friend", "the dog", "a student"]
PLURAL_SUBJECTS = ["they", "we", "the boys", "my parents", "the students"]
VERBS = ["walk", "play", "look", "work", "talk", "jump", "interact", "listen"]
TAILS = ["in the park", "with a friend", "at the school", "on the road", "for an hour", "with the team", "after the class"]


def clean_sentences(count, rng):
    capacity = (2 * len(SUBJECTS) + len(PLURAL_SUBJECTS)) * len(VERBS) * len(TAILS)
    if count > capacity:
        raise SystemExit(f"the template grammar only yields {capacity} distinct sentences, asked for {count}")
    out = set()
    while len(out) < count:
        tail = TAILS[rng.integers(len(TAILS))]
        verb = VERBS[rng.integers(len(VERBS))]
        k = rng.integers(3)
        if k == 0:
            s = f"{SUBJECTS[rng.integers(len(SUBJECTS))]} {verb}s {tail} ."
        elif k == 1:
            s = f"{PLURAL_SUBJECTS[rng.integers(len(PLURAL_SUBJECTS))]} {verb} {tail} ."
        else:
            s = f"{SUBJECTS[rng.integers(len(SUBJECTS))]} has {verb}ed {tail} ."
        out.add(s[0].upper() + s[1:])
    return sorted(out)


def corrupt(sentences, seed):
    cfg = SynthConfig(seed=seed)
    pairs = []
    for k, s in enumerate(sentences):
        noisy, _ = corrupt_sentence(s.split(), cfg, line_rng(seed, k))
        pairs.append((encode_line(" ".join(noisy)), encode_line(s)))
    return pairs


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sentences", type=int, default=900)
    ap.add_argument("--dev", type=int, default=100)
    ap.add_argument("--epochs", type=int, default=15)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    sentences = clean_sentences(args.sentences + args.dev, rng)
    rng.shuffle(sentences)
    train_pairs = corrupt(sentences[args.dev :], args.seed)
    dev_pairs = corrupt(sentences[: args.dev], args.seed + 1)

    table = default_table()
    inserts = build_insert_dictionary(train_pairs, M=500, q=2)
    vocab = Vocab.build([x for x, _ in train_pairs] + [y for _, y in train_pairs], [t for w in inserts.words for t in payload_tokens(w)])
    cfg = ModelConfig(num_layers=2, hidden_size=64, intermediate_size=128, num_heads=4, max_positions=40, dropout=0.0, attention_dropout=0.0)
    model = PieModel(cfg, vocab, inserts.words, table, seed=args.seed)
    examples = compile_examples(train_pairs, model)
    print(f"{len(train_pairs)} training pairs, {len(inserts)} inserts, {len(model.space)} edits, {model.parameter_count()} parameters")

    t0 = time.perf_counter()
    train(model, examples, TrainConfig(batch_size=32, learning_rate=2e-3, epochs=args.epochs, warmup_steps=50, schedule="linear", seed=args.seed),
          on_epoch=lambda rec, m: print(f"epoch {rec['epoch']:2d}  loss {rec['loss']:.4f}  label acc {rec['label_accuracy']:.4f}"))
    print(f"trained in {time.perf_counter() - t0:.0f} s")

    sources = [x for x, _ in dev_pairs]
    gold = [y for _, y in dev_pairs]
    for iters in (1, 4):
        finals, traces = refine_batch(model, sources, InferenceConfig(max_iterations=iters))
        report = evaluate(sources, finals, gold, table)
        rounds = np.mean([t.rounds_used for t in traces])
        print(f"I={iters}: P {report.precision:.3f}  R {report.recall:.3f}  F0.5 {report.f05:.3f}  "
              f"sentence acc {report.word_accuracy:.3f}  mean rounds {rounds:.2f} (large-scale GEC: 2.7)")

    print("\nsample refinement traces:")
    shown = [k for k, t in enumerate(traces) if t.rounds_used > 1 and any(t.changed)] or list(range(len(traces)))
    for k in shown[:5]:
        print(describe(traces[k]))
        print(f"reference: {detokenize(gold[k])}\n")


if __name__ == "__main__":
    main()
