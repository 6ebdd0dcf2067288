"""Command-line entry point: ``piedit <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric divergence
(including a failed gradient check).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from multiprocessing import Pool

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, load_checkpoint
from .corpuskit import CorpusError, edit_prf, edits_against_source, load_lines, load_parallel, read_lines, word_accuracy
from .editspace import (
    DiffConfig,
    EditError,
    InputTooLongError,
    InsertDictionary,
    TokenError,
    TransformTableError,
    apply_edits,
    build_insert_dictionary,
    default_table,
    detokenize,
    edits_to_record,
    payload_tokens,
    read_edit_lines,
    read_table,
    seq2edits,
    write_table,
)
from .inference import InferenceConfig, decode_latency_bench, refine_batch
from .model import ModelConfig, PieModel, Vocab
from .numcore import DivergenceError, grad_check, ops
from .synthdata import SynthConfig, SynthConfigError, generate_corpus, load_config
from .training import TrainConfig, examples_from_edits, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3
DATA_ERRORS = (
    CorpusError,
    TokenError,
    EditError,
    CheckpointError,
    TransformTableError,
    SynthConfigError,
    InputTooLongError,
    OSError,
    json.JSONDecodeError,
    KeyError,
    ValueError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------ helpers


def _atomic_text(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _load_json(path):
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise ValueError(f"{path}: expected a JSON object")
    return obj


def _table(path):
    return read_table(path) if path else default_table()


def _config_digest(args):
    items = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    blob = json.dumps(items, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def _header(args):
    print(f"piedit {__version__} | seed={args.seed} | config={_config_digest(args)}", file=sys.stderr)


def _compile_one(job):
    x, y, inserts, table, mode = job
    return seq2edits(x, y, inserts, table, DiffConfig(), mode)


def _compile_all(pairs, inserts, table, mode, threads):
    jobs = [(x, y, inserts, table, mode) for x, y in pairs]
    if threads > 1 and len(jobs) > 1:
        with Pool(threads) as pool:
            return pool.map(_compile_one, jobs, chunksize=max(1, len(jobs) // (4 * threads)))
    return [_compile_one(j) for j in jobs]


# -------------------------------------------------------------- subcommands


def cmd_build_dicts(args):
    corpus = load_parallel(args.src, args.tgt, args.mode)
    inserts = build_insert_dictionary(corpus.pairs, M=args.M, q=args.q, mode=args.mode)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(args.out_inserts)), suffix=".tmp")
    os.close(fd)
    try:
        inserts.to_tsv(tmp)
        os.replace(tmp, args.out_inserts)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    if args.transforms:
        fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(args.transforms)), suffix=".tmp")
        os.close(fd)
        try:
            write_table(default_table(), tmp)
            os.replace(tmp, args.transforms)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
    print(f"{len(inserts)} inserts from {len(corpus)} pairs -> {args.out_inserts}")
    return EXIT_OK


def cmd_extract_edits(args):
    corpus = load_parallel(args.src, args.tgt, args.mode)
    inserts = InsertDictionary.from_tsv(args.inserts, mode=args.mode)
    table = _table(args.transforms)
    edits = _compile_all(corpus.pairs, inserts, table, args.mode, args.threads)
    exact = sum(apply_edits(x, e, table, args.mode) == tuple(y) for (x, y), e in zip(corpus.pairs, edits))
    lines = "".join(json.dumps(edits_to_record(e), ensure_ascii=False) + "\n" for e in edits)
    _atomic_text(args.out, lines)
    rate = 100.0 * exact / len(edits) if edits else 100.0
    print(f"reconstruction rate: {rate:.2f}% ({exact}/{len(edits)})")
    return EXIT_OK


def cmd_synth(args):
    cfg = load_config(args.config) if args.config else SynthConfig()
    if args.seed_given or not args.config:
        cfg.seed = args.seed

    def progress(k, stats):
        print(f"{k} lines", file=sys.stderr)

    stats = generate_corpus(args.clean, cfg, args.out_src, args.out_tgt, progress=progress)
    print(json.dumps(stats.to_json(), sort_keys=True))
    return EXIT_OK


def _model_config(args, sequences):
    overrides = _load_json(args.model_config)
    if "max_positions" not in overrides:
        longest = max(len(s) for s in sequences)
        overrides["max_positions"] = max(40, longest + 16)
    overrides["precision"] = args.precision or overrides.get("precision", "single")
    return ModelConfig(**overrides)


def cmd_train(args):
    table = _table(args.transforms)
    if args.tgt:
        corpus = load_parallel(args.src, args.tgt, args.mode)
        sources, targets = corpus.sources, corpus.targets
    else:
        sources, targets = load_lines(args.src, args.mode), []
    if args.inserts:
        inserts = InsertDictionary.from_tsv(args.inserts, mode=args.mode)
    elif targets:
        inserts = build_insert_dictionary(list(zip(sources, targets)), mode=args.mode)
    else:
        raise UsageError("--edits without --tgt needs --inserts")
    if args.edits:
        edits = read_edit_lines(args.edits)
        if len(edits) != len(sources):
            raise CorpusError(f"{len(edits)} edit lines for {len(sources)} source lines")
    else:
        edits = _compile_all(list(zip(sources, targets)), inserts, table, args.mode, args.threads)

    extra = [t for w in inserts.words for t in payload_tokens(w, args.mode)]
    vocab = Vocab.build(sources + targets, extra)
    model = PieModel(_model_config(args, sources), vocab, inserts.words, table, mode=args.mode, seed=args.seed)

    tcfg = _load_json(args.train_config)
    tcfg.setdefault("seed", args.seed)
    tcfg.setdefault("head_mode", model.config.head_mode)
    for key in ("epochs", "batch_size", "learning_rate", "copy_weight"):
        value = getattr(args, key)
        if value is not None:
            tcfg[key] = value
    cfg = TrainConfig(**tcfg)
    examples = examples_from_edits(sources, edits, model)
    os.makedirs(args.out_dir, exist_ok=True)
    log_path = os.path.join(args.out_dir, "train_log.jsonl")
    with open(log_path, "w", encoding="utf-8") as log:
        result = train(model, examples, cfg, out_dir=args.out_dir, log=log)
    for rec in result.history:
        print(json.dumps(rec))
    print(f"checkpoint: {os.path.join(args.out_dir, 'last.pie')}")
    return EXIT_OK


def cmd_predict(args):
    ckpt = load_checkpoint(args.checkpoint)
    model = ckpt.model
    sequences = load_lines(args.input, model.mode)
    cfg = InferenceConfig(max_iterations=args.iters, batch_size=args.batch_size, record_rounds=bool(args.trace))
    finals, traces = refine_batch(model, sequences, cfg)
    _atomic_text(args.out, "".join(detokenize(s, model.mode) + "\n" for s in finals))
    if args.trace:
        _atomic_text(args.trace, "".join(json.dumps(t.to_json(), ensure_ascii=False) + "\n" for t in traces))
    rounds = [t.rounds_used for t in traces]
    print(f"{len(finals)} sequences, mean rounds {np.mean(rounds) if rounds else 0:.3f}")
    return EXIT_OK


def cmd_eval(args):
    pred, gold = read_lines(args.pred), read_lines(args.gold)
    if len(pred) != len(gold):
        raise CorpusError(f"line-count mismatch: {args.pred} has {len(pred)} lines, {args.gold} has {len(gold)}")
    out = {"word_accuracy": word_accuracy(pred, gold, args.mode)}
    if args.metric == "edit-f05":
        if not args.src:
            raise UsageError("--metric edit-f05 needs --src")
        src = read_lines(args.src)
        if len(src) != len(gold):
            raise CorpusError(f"line-count mismatch: {args.src} has {len(src)} lines, {args.gold} has {len(gold)}")
        from .editspace import encode_line

        enc = lambda lines: [encode_line(s, args.mode) for s in lines]
        table = _table(args.transforms)
        report = edit_prf(
            edits_against_source(enc(src), enc(pred), table, mode=args.mode),
            edits_against_source(enc(src), enc(gold), table, mode=args.mode),
        )
        report.word_accuracy = out["word_accuracy"]
        out = report.to_json()
    text = json.dumps(out, indent=2, sort_keys=True)
    if args.out:
        _atomic_text(args.out, text + "\n")
    print(text)
    return EXIT_OK


def cmd_bench(args):
    model = load_checkpoint(args.checkpoint).model
    sequences = load_lines(args.input, model.mode)
    buckets = [int(b) for b in args.buckets.split(",") if b.strip()]
    if not buckets:
        raise UsageError("--buckets needs at least one bound")
    report = decode_latency_bench(model, sequences, buckets, InferenceConfig(max_iterations=args.iters), baseline=not args.no_baseline)
    report.write(args.out_csv)
    sys.stdout.write(report.to_csv())
    return EXIT_OK


def cmd_grad_check(args):
    overrides = {"num_layers": 2, "hidden_size": 16, "intermediate_size": 32, "num_heads": 2, "max_positions": 12, "initializer_range": 0.3}
    overrides.update(_load_json(args.model_config))
    overrides.update(precision="double", dropout=0.0, attention_dropout=0.0)
    cfg = ModelConfig(**overrides)
    rng = np.random.default_rng(args.seed)
    letters = list("abcdef")
    vocab = Vocab.build([letters])
    inserts = ["a", "b", "c d"] if cfg.head_mode == "factorized" else ["a", "b"]
    model = PieModel(cfg, vocab, inserts, default_table()[:4], mode="word", seed=args.seed)
    seqs = [("[", *rng.choice(letters, size=n), "]") for n in (3, 5)]
    ids, lengths = model.batch_ids(seqs)
    gold = rng.integers(0, len(model.space), size=ids.shape)
    valid = (np.arange(ids.shape[1])[None, :] < lengths[:, None]).astype(float)

    def loss():
        return ops.weighted_cross_entropy(model.logits(ids, lengths), gold, valid)

    report = grad_check(loss, model.params, tolerance=args.tolerance, probes=args.probes, seed=args.seed)
    print(report.summary())
    print(f"max relative error {report.worst:.3e} (tolerance {args.tolerance:g}): {'PASS' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_DIVERGED


# ------------------------------------------------------------------ parser


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    common.add_argument("--threads", type=int, default=1, help="workers for sentence-parallel stages")
    common.add_argument("--precision", choices=("single", "double"), default=None)
    common.add_argument("--mode", choices=("word", "char"), default="word", help="tokenisation mode")

    parser = _Parser(prog="piedit", description="Parallel iterative edit models for local sequence transduction.")
    parser.add_argument("--version", action="version", version=f"piedit {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def add(name, func, help):
        p = sub.add_parser(name, parents=[common], help=help, description=help)
        p.set_defaults(func=func)
        return p

    p = add("build-dicts", cmd_build_dicts, "build the insert dictionary from a parallel corpus")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--M", type=int, default=1000)
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--out-inserts", required=True)
    p.add_argument("--transforms", help="also write the transformation table used to this path")

    p = add("extract-edits", cmd_extract_edits, "compile edit sequences (JSON lines)")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--inserts", required=True)
    p.add_argument("--transforms", help="transformation table TSV (default: built-in)")
    p.add_argument("--out", required=True)

    p = add("synth", cmd_synth, "corrupt clean text into a synthetic parallel corpus")
    p.add_argument("--clean", required=True)
    p.add_argument("--config", help="JSON generator config")
    p.add_argument("--out-src", required=True)
    p.add_argument("--out-tgt", required=True)

    p = add("train", cmd_train, "train an edit model")
    p.add_argument("--edits", help="edit JSON lines aligned with --src")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt")
    p.add_argument("--inserts", help="insert dictionary TSV (default: built from --src/--tgt)")
    p.add_argument("--transforms")
    p.add_argument("--model-config")
    p.add_argument("--train-config")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--copy-weight", type=float)

    p = add("predict", cmd_predict, "decode with iterative refinement")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--iters", type=int, default=4)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", help="write per-round traces as JSON lines")

    p = add("eval", cmd_eval, "score predictions against references")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--metric", choices=("word-acc", "edit-f05"), default="word-acc")
    p.add_argument("--src", help="sources (needed for edit-f05)")
    p.add_argument("--transforms")
    p.add_argument("--out", help="also write the JSON report here")

    p = add("bench", cmd_bench, "decode-latency benchmark per length bucket")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--buckets", default="8,16,32,64", help="comma-separated length upper bounds")
    p.add_argument("--iters", type=int, default=4)
    p.add_argument("--no-baseline", action="store_true")
    p.add_argument("--out-csv", required=True)

    p = add("grad-check", cmd_grad_check, "finite-difference check of the model gradients")
    p.add_argument("--model-config")
    p.add_argument("--probes", type=int, default=10)
    p.add_argument("--tolerance", type=float, default=1e-4)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    _header(args)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"piedit: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"piedit: numeric divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except DATA_ERRORS as exc:
        print(f"piedit: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
