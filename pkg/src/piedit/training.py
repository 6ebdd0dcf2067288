"""Supervised training of the edit labeller with a copy-weighted cross-entropy."""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .checkpoint import save_checkpoint
from .editspace import DiffConfig, EditError, seq2edits
from .editspace.edits import C
from .model import FACTORIZED
from .numcore import DivergenceError, OptimizerState, adam_step, backward, ops

GEC_COPY_WEIGHT = 0.4
SPELL_COPY_WEIGHT = 1.0


@dataclass
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 2e-5
    epochs: int = 1
    copy_weight: float = GEC_COPY_WEIGHT
    seed: int = 0
    head_mode: str = FACTORIZED
    warmup_steps: int = 0
    schedule: str = "constant"  # or "linear": decay to zero at the last step
    bucket_size: int = 0  # examples per length-sorted pool; 0 means the whole corpus
    max_seconds: Optional[float] = None

    def __post_init__(self):
        if not self.copy_weight > 0:
            raise ValueError(f"copy_weight must be positive, got {self.copy_weight}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.schedule not in ("constant", "linear"):
            raise ValueError(f"unknown schedule {self.schedule!r}")

    def to_dict(self):
        return asdict(self)


@dataclass
class Example:
    tokens: tuple
    labels: np.ndarray  # edit indices, one per token


@dataclass
class TrainResult:
    history: list = field(default_factory=list)
    optimizer: Optional[OptimizerState] = None
    checkpoints: list = field(default_factory=list)
    stopped_early: bool = False


# ------------------------------------------------------------------ labels


def gold_indices(gold, space):
    """Edit-space indices for a gold edit sequence; EditError when not representable."""
    return np.array([space.index(e) for e in gold], dtype=np.int64)


def compile_examples(pairs, model, cfg=DiffConfig()):
    """Compile (x, y) token pairs into training examples with the model's dictionaries."""
    inserts = set(model.inserts)
    out = []
    for x, y in pairs:
        edits = seq2edits(x, y, inserts, model.table, cfg, model.mode)
        out.append(Example(tuple(x), gold_indices(edits, model.space)))
    return out


def examples_from_edits(sequences, edits, model):
    return [Example(tuple(x), gold_indices(e, model.space)) for x, e in zip(sequences, edits)]


def label_weights(labels, copy_weight, valid=None):
    """``copy_weight`` on COPY labels (index 0), 1 elsewhere, 0 on padding."""
    labels = np.asarray(labels)
    w = np.where(labels == 0, copy_weight, 1.0)
    if valid is not None:
        w = w * valid
    return w


def edit_label_loss(logits, gold, copy_weight=GEC_COPY_WEIGHT, space=None, valid=None):
    """Summed ``-w_i log Pr(e_i | x)`` with ``w_i = copy_weight`` for copy labels.

    ``gold`` is either an array of edit indices or a sequence of EditOps (then
    ``space`` maps them to indices).  ``valid`` masks out padding positions.
    """
    if not copy_weight > 0:
        raise ValueError(f"copy_weight must be positive, got {copy_weight}")
    if space is not None and len(gold) and not isinstance(gold[0], (int, np.integer)):
        gold = gold_indices(gold, space)
    gold = np.asarray(gold, dtype=np.int64)
    logits = ops.as_tensor(logits)
    if logits.shape[:-1] != gold.shape:
        raise ValueError(f"{gold.shape} gold labels for logits of shape {logits.shape}")
    num_edits = logits.shape[-1]
    if gold.size and (gold.min() < 0 or gold.max() >= num_edits):
        raise EditError(f"gold edit index outside edit space of size {num_edits}")
    return ops.weighted_cross_entropy(logits, gold, label_weights(gold, copy_weight, valid))


# ---------------------------------------------------------------- batching


def make_batches(examples, batch_size, rng, bucket_size=0):
    """Shuffle, sort each pool by length, cut into batches and shuffle batch order."""
    order = rng.permutation(len(examples))
    pool = len(order) if bucket_size <= 0 else bucket_size
    batches = []
    for start in range(0, len(order), pool):
        chunk = order[start : start + pool]
        lengths = np.array([len(examples[i].tokens) for i in chunk])
        chunk = chunk[np.argsort(lengths, kind="stable")]
        batches.extend(chunk[b : b + batch_size] for b in range(0, len(chunk), batch_size))
    return [batches[k] for k in rng.permutation(len(batches))]


def pad_batch(model, examples):
    ids, lengths = model.batch_ids([e.tokens for e in examples])
    labels = np.zeros(ids.shape, dtype=np.int64)
    valid = np.zeros(ids.shape)
    for b, e in enumerate(examples):
        labels[b, : len(e.labels)] = e.labels
        valid[b, : len(e.labels)] = 1.0
    return ids, lengths, labels, valid


def learning_rate_at(cfg, step, total_steps=None):
    """Linear warmup, then constant or linearly decaying to zero at ``total_steps``."""
    if cfg.warmup_steps and step < cfg.warmup_steps:
        return cfg.learning_rate * (step + 1) / cfg.warmup_steps
    if cfg.schedule == "linear" and total_steps:
        span = max(total_steps - cfg.warmup_steps, 1)
        return cfg.learning_rate * max(total_steps - step, 0) / span
    return cfg.learning_rate


# ------------------------------------------------------------------- train


def train_step(model, optimizer, batch, cfg, total_steps=None):
    """One Adam step on a padded batch; returns (loss sum, positions, correct labels)."""
    ids, lengths, labels, valid = batch
    for p in model.params.values():
        p.zero_grad()
    logits = model.logits(ids, lengths, training=True)
    loss = edit_label_loss(logits, labels, cfg.copy_weight, valid=valid)
    total = float(loss.data)
    if not math.isfinite(total):
        raise DivergenceError(f"non-finite loss {total} at step {optimizer.step + 1}")
    positions = float(valid.sum())
    backward(ops.scale(loss, 1.0 / positions))
    adam_step(model.params, optimizer, learning_rate_at(cfg, optimizer.step, total_steps))
    correct = float(((logits.data.argmax(axis=-1) == labels) * valid).sum())
    return total, positions, correct


def evaluate_labels(model, examples, copy_weight, batch_size=256):
    """Mean weighted loss and label accuracy without updates."""
    from .numcore import no_grad

    loss = positions = correct = 0.0
    with no_grad():
        for start in range(0, len(examples), batch_size):
            ids, lengths, labels, valid = pad_batch(model, examples[start : start + batch_size])
            logits = model.logits(ids, lengths)
            loss += float(edit_label_loss(logits, labels, copy_weight, valid=valid).data)
            positions += valid.sum()
            correct += float(((logits.data.argmax(axis=-1) == labels) * valid).sum())
    return loss / max(positions, 1.0), correct / max(positions, 1.0)


def train(
    model,
    examples,
    cfg: TrainConfig,
    out_dir=None,
    log=None,
    on_epoch: Optional[Callable] = None,
    optimizer: Optional[OptimizerState] = None,
):
    """Train ``model`` in place.

    Per epoch a JSON object {epoch, loss, label_accuracy, seconds} is written
    to ``log`` (a text stream) and, when ``out_dir`` is given, a checkpoint
    ``epoch{k}.pie`` plus ``last.pie``.  ``on_epoch(record, model)`` may
    return True to stop early.  A non-finite loss or gradient raises
    DivergenceError; checkpoints already written are left untouched.
    """
    if not examples:
        raise ValueError("empty training corpus")
    if cfg.head_mode != model.config.head_mode:
        raise ValueError(f"train config head_mode {cfg.head_mode!r} != model head_mode {model.config.head_mode!r}")
    for e in examples:
        if len(e.labels) != len(e.tokens):
            raise ValueError("example labels and tokens differ in length")
        if e.labels.size and e.labels.max() >= len(model.space):
            raise EditError("gold edit not representable in the model's edit space")
    rng = np.random.default_rng(cfg.seed)
    model.rng = np.random.default_rng([cfg.seed, 1])
    optimizer = optimizer or OptimizerState(learning_rate=cfg.learning_rate)
    result = TrainResult(optimizer=optimizer)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        if cfg.epochs == 0:
            result.checkpoints.append(save_checkpoint(os.path.join(out_dir, "last.pie"), model, optimizer))
    per_epoch = -(-len(examples) // cfg.batch_size) if cfg.bucket_size <= 0 else sum(
        -(-min(cfg.bucket_size, len(examples) - s) // cfg.batch_size) for s in range(0, len(examples), cfg.bucket_size)
    )
    total_steps = optimizer.step + per_epoch * cfg.epochs
    started = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        loss_sum = positions = correct = 0.0
        for idx in make_batches(examples, cfg.batch_size, rng, cfg.bucket_size):
            batch = pad_batch(model, [examples[i] for i in idx])
            l, n, c = train_step(model, optimizer, batch, cfg, total_steps)
            loss_sum, positions, correct = loss_sum + l, positions + n, correct + c
        record = {
            "epoch": epoch,
            "loss": loss_sum / positions,
            "label_accuracy": correct / positions,
            "seconds": time.perf_counter() - t0,
        }
        stop = bool(on_epoch(record, model)) if on_epoch is not None else False
        result.history.append(record)
        if log is not None:
            log.write(json.dumps(record) + "\n")
            log.flush()
        if out_dir is not None:
            path = save_checkpoint(os.path.join(out_dir, f"epoch{epoch}.pie"), model, optimizer, {"epoch": epoch})
            save_checkpoint(os.path.join(out_dir, "last.pie"), model, optimizer, {"epoch": epoch})
            result.checkpoints.append(path)
        if stop or (cfg.max_seconds is not None and time.perf_counter() - started > cfg.max_seconds):
            result.stopped_early = epoch < cfg.epochs
            break
    return result
