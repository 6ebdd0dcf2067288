"""Parallel edit decoding, iterative refinement and the decode-latency benchmark.

Any object with ``predict(sequences) -> [edits]``, ``table``, ``mode`` and a
``forward_passes`` counter can be decoded; :class:`~piedit.model.PieModel`
is the real one, tests use hand-built stubs.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from .editspace import apply_edits, edits_to_record, format_edits
from .model import edit_distribution
from .numcore import no_grad

BENCH_COLUMNS = ("bucket_mean_length", "mean_ms", "mean_rounds", "mean_passes", "baseline_mean_ms")


@dataclass
class InferenceConfig:
    max_iterations: int = 4
    batch_size: int = 64
    record_rounds: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class RefinementTrace:
    source: tuple
    sequences: list = field(default_factory=list)  # output of each round
    edits: list = field(default_factory=list)  # edits predicted in each round
    changed: list = field(default_factory=list)  # output differs from that round's input
    rounds_used: int = 0

    def to_json(self):
        return {
            "source": list(self.source),
            "rounds_used": self.rounds_used,
            "rounds": [
                {"output": list(s), "changed": c, "edits": edits_to_record(e)["edits"]}
                for s, c, e in zip(self.sequences, self.changed, self.edits)
            ],
        }


def predict_edits(model, x):
    """Most probable edit per token of ``x`` (one encoder pass)."""
    return model.predict([tuple(x)])[0]


def predict_batch(model, sequences, batch_size=64):
    out = []
    for start in range(0, len(sequences), batch_size):
        out.extend(model.predict([tuple(s) for s in sequences[start : start + batch_size]]))
    return out


def _should_stop(out, current, outputs, max_length=None):
    """Fixed point (output equals this round's input) or a repeat of an earlier round's output.

    An output longer than the model accepts also ends refinement: it is kept
    as the result but cannot be decoded again.
    """
    too_long = max_length is not None and len(out) > max_length
    return out == current or out in outputs or too_long


def refine_iteratively(model, x, cfg=InferenceConfig()):
    """Apply the model to its own output until a fixed point, a cycle, or ``max_iterations``.

    Returns (final sequence, RefinementTrace); the final sequence is the
    output of the last round run.
    """
    final, traces = refine_batch(model, [x], cfg)
    return final[0], traces[0]


def refine_batch(model, sequences, cfg=InferenceConfig()):
    """Refine many sequences; every round decodes all unfinished ones in parallel batches."""
    current = [tuple(s) for s in sequences]
    traces = [RefinementTrace(source=s) for s in current]
    seen = [set() for _ in current]
    active = list(range(len(current)))
    max_length = getattr(getattr(model, "config", None), "max_positions", None)
    for _ in range(cfg.max_iterations):
        if not active:
            break
        edits = predict_batch(model, [current[i] for i in active], cfg.batch_size)
        still = []
        for i, e in zip(active, edits):
            out = apply_edits(current[i], e, model.table, model.mode)
            tr = traces[i]
            tr.rounds_used += 1
            tr.changed.append(out != current[i])
            if cfg.record_rounds:
                tr.sequences.append(out)
                tr.edits.append(e)
            stop = _should_stop(out, current[i], seen[i], max_length)
            seen[i].add(out)
            current[i] = out
            if not stop:
                still.append(i)
        active = still
    return current, traces


def replay_trace(trace, table, mode):
    """Re-apply the recorded edits round by round; returns the reproduced sequences."""
    x, out = trace.source, []
    for e in trace.edits:
        x = apply_edits(x, e, table, mode)
        out.append(x)
    return out


def write_traces(traces, path):
    _atomic_write(path, "".join(json.dumps(t.to_json(), ensure_ascii=False) + "\n" for t in traces))


# ---------------------------------------------------------------- ensemble


def ensemble_predict(models, sequences):
    """Average the edit distributions of several checkpoints sharing one edit space."""
    first = models[0]
    for m in models[1:]:
        if m.inserts != first.inserts or len(m.table) != len(first.table):
            raise ValueError("ensemble members must share the insert dictionary and transform table")
    ids, lengths = first.batch_ids(sequences)
    total = None
    with no_grad():
        for m in models:
            probs, _ = edit_distribution(m.logits(ids, lengths).data)
            total = probs if total is None else total + probs
    best = np.argmax(total, axis=-1)
    return [[first.space.op(k) for k in best[b, : lengths[b]]] for b in range(len(sequences))]


# --------------------------------------------------------------- benchmark


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)  # dicts keyed by BENCH_COLUMNS
    baseline_mean_passes: list = field(default_factory=list)
    bucket_bounds: list = field(default_factory=list)
    counts: list = field(default_factory=list)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=BENCH_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: f"{row[k]:.6g}" for k in BENCH_COLUMNS})
        return buf.getvalue()

    def write(self, path):
        _atomic_write(path, self.to_csv())


def assign_buckets(lengths, bounds):
    """Index of the first bound >= length; lengths above every bound go to the last bucket."""
    bounds = sorted(bounds)
    return [min(int(np.searchsorted(bounds, n, side="left")), len(bounds) - 1) for n in lengths]


def simulated_sequential(model, x, target_length):
    """Emulate autoregressive cost: one encoder pass per output token over the growing prefix."""
    with no_grad():
        for t in range(1, target_length + 1):
            prefix = tuple(x[: min(t, len(x))])
            ids, lengths = model.batch_ids([prefix])
            model.encode(ids, lengths, with_units=False)
    return target_length


def decode_latency_bench(model, corpus, length_buckets, cfg=InferenceConfig(), baseline=True, clock=time.perf_counter):
    """Per-bucket mean wall-clock decode time, refinement rounds and encoder passes.

    ``length_buckets`` are upper bounds on sentence length in tokens
    (boundary markers included).  Timing covers predict + apply only.  The
    sequential baseline emits as many tokens as the input has, since local
    transduction outputs are about as long as their inputs.
    """
    bounds = sorted(int(b) for b in length_buckets)
    corpus = [tuple(x) for x in corpus]
    which = assign_buckets([len(x) for x in corpus], bounds)
    per = {k: {"len": [], "ms": [], "rounds": [], "passes": [], "base_ms": [], "base_passes": []} for k in range(len(bounds))}
    for x, k in zip(corpus, which):
        start_passes = model.forward_passes
        t0 = clock()
        out, trace = refine_iteratively(model, x, cfg)
        elapsed = clock() - t0
        passes = model.forward_passes - start_passes
        acc = per[k]
        acc["len"].append(len(x))
        acc["ms"].append(elapsed * 1000.0)
        acc["rounds"].append(trace.rounds_used)
        acc["passes"].append(passes)
        if baseline:
            t0 = clock()
            acc["base_passes"].append(simulated_sequential(model, x, len(x)))
            acc["base_ms"].append((clock() - t0) * 1000.0)
    report = BenchReport()
    for k, bound in enumerate(bounds):
        acc = per[k]
        if not acc["len"]:
            continue
        report.bucket_bounds.append(bound)
        report.counts.append(len(acc["len"]))
        report.rows.append(
            {
                "bucket_mean_length": float(np.mean(acc["len"])),
                "mean_ms": float(np.mean(acc["ms"])),
                "mean_rounds": float(np.mean(acc["rounds"])),
                "mean_passes": float(np.mean(acc["passes"])),
                "baseline_mean_ms": float(np.mean(acc["base_ms"])) if acc["base_ms"] else float("nan"),
            }
        )
        report.baseline_mean_passes.append(float(np.mean(acc["base_passes"])) if acc["base_passes"] else float("nan"))
    return report


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def describe(trace):
    lines = [" ".join(trace.source)]
    for k, (s, e) in enumerate(zip(trace.sequences, trace.edits), 1):
        lines.append(f"round {k}: {format_edits(e)}  ->  {' '.join(s)}")
    return "\n".join(lines)
