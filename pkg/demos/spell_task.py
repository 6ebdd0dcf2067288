"""Character-level spelling correction on a generated task.

A lexicon of pseudo-words is generated, each training and test input is a
lexicon word with one random character inserted, deleted or substituted, and
no misspelling is shared between splits.  The model uses the spelling
configuration (4 layers, 200 hidden, 400 intermediate, 4 heads, dropout 0.1,
the 26 lowercase letters as append/replace payloads, one refinement round)
and reports whole-word test accuracy after every epoch.

    python demos/spell_task.py --epochs 20
    python demos/spell_task.py --lexicon 200 --train 1600 --test 200 --hidden 64 --layers 2
"""

import argparse
import time

from piedit.corpuskit import word_accuracy
from piedit.editspace import CHAR, encode_line
from piedit.inference import InferenceConfig, refine_batch
from piedit.model import ModelConfig, PieModel, Vocab
from piedit.synthdata import make_spell_task
from piedit.training import TrainConfig, compile_examples, train

LETTERS = list("abcdefghijklmnopqrstuvwxyz")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--lexicon", type=int, default=1000)
    ap.add_argument("--train", type=int, default=8000)
    ap.add_argument("--test", type=int, default=1000)
    ap.add_argument("--layers", type=int, default=4)
    ap.add_argument("--hidden", type=int, default=200)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--learning-rate", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    lexicon, train_words, _, test_words = make_spell_task(args.lexicon, args.train, args.test, 0, seed=args.seed)
    enc = lambda pairs: [(encode_line(a, CHAR), encode_line(b, CHAR)) for a, b in pairs]  # noqa: E731
    train_pairs, test_pairs = enc(train_words), enc(test_words)
    print("sample pairs:", ", ".join(f"{a}->{b}" for a, b in train_words[:5]))

    vocab = Vocab.build([x for x, _ in train_pairs] + [y for _, y in train_pairs], LETTERS)
    cfg = ModelConfig(num_layers=args.layers, hidden_size=args.hidden, intermediate_size=2 * args.hidden, num_heads=4,
                      max_positions=40, dropout=0.1, attention_dropout=0.1)
    model = PieModel(cfg, vocab, LETTERS, [], mode=CHAR, seed=args.seed)
    examples = compile_examples(train_pairs, model)
    print(f"{len(lexicon)} words, {len(train_pairs)} train / {len(test_pairs)} test, {model.parameter_count()} parameters")

    sources, gold = [x for x, _ in test_pairs], [y for _, y in test_pairs]

    def on_epoch(record, m):
        finals, _ = refine_batch(m, sources, InferenceConfig(max_iterations=1, batch_size=500, record_rounds=False))
        print(f"epoch {record['epoch']:2d}  loss {record['loss']:.4f}  label acc {record['label_accuracy']:.4f}  "
              f"test word acc {word_accuracy(finals, gold, CHAR):.3f}  ({record['seconds']:.0f} s)", flush=True)

    t0 = time.process_time()
    train(model, examples, TrainConfig(batch_size=32, learning_rate=args.learning_rate, warmup_steps=200, schedule="linear",
                                       epochs=args.epochs, copy_weight=1.0, seed=args.seed), on_epoch=on_epoch)
    print(f"{(time.process_time() - t0) / 60:.1f} CPU-minutes")


if __name__ == "__main__":
    main()
