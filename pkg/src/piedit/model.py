"""Transformer edit labeller with replace/append units and factorised edit logits.

Besides the usual token stream ``h``, every position ``i`` carries a
*replace unit* ``r_i`` (mask embedding + position ``i``) and an *append
unit* ``a_i`` (mask embedding + the mean of positions ``i`` and ``i+1``).
The units run through the same layers with the same weights, but:

* ``h_i`` attends to every ``h_j`` and never to a unit,
* ``r_i`` attends to ``h_j`` for ``j != i`` and to itself,
* ``a_i`` attends to every ``h_j`` and to itself.

``h`` is computed exactly as a plain encoder would compute it, so adding the
units never changes the token states.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .editspace import BOS, EOS, EditError, EditOp, InputTooLongError, payload_tokens
from .editspace.edits import A, C, D, R, T
from .numcore import Parameter, no_grad
from .numcore import ops

PAD, UNK, MASK = "[PAD]", "[UNK]", "[MASK]"
SPECIALS = (PAD, UNK, MASK, BOS, EOS)

FACTORIZED = "factorized"
DEFAULT = "default"


@dataclass
class ModelConfig:
    num_layers: int = 4
    hidden_size: int = 200
    intermediate_size: int = 400
    num_heads: int = 4
    max_positions: int = 40
    vocab_size: int = 0
    num_inserts: int = 0
    num_transforms: int = 0
    dropout: float = 0.1
    attention_dropout: float = 0.1
    initializer_range: float = 0.02
    layer_norm_eps: float = 1e-12
    head_mode: str = FACTORIZED
    precision: str = "single"

    def __post_init__(self):
        if self.hidden_size % self.num_heads:
            raise ValueError(f"hidden_size {self.hidden_size} not divisible by num_heads {self.num_heads}")
        if self.head_mode not in (FACTORIZED, DEFAULT):
            raise ValueError(f"unknown head_mode {self.head_mode!r}")
        if self.precision not in ("single", "double"):
            raise ValueError(f"unknown precision {self.precision!r}")

    @property
    def dtype(self):
        return np.float32 if self.precision == "single" else np.float64

    @property
    def num_edits(self):
        return 2 + self.num_transforms + 2 * self.num_inserts

    def to_dict(self):
        return asdict(self)


class Vocab:
    """Token <-> id map; ids 0..4 are the special tokens."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[: len(SPECIALS)]) != SPECIALS:
            tokens = list(SPECIALS) + [t for t in tokens if t not in SPECIALS]
        self.tokens = tokens
        self._ids = {t: i for i, t in enumerate(tokens)}
        if len(self._ids) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")

    @classmethod
    def build(cls, sequences, extra=()):
        seen = dict.fromkeys(SPECIALS)
        for seq in sequences:
            seen.update(dict.fromkeys(seq))
        seen.update(dict.fromkeys(extra))
        return cls(seen)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, tok):
        return tok in self._ids

    def id(self, tok):
        return self._ids.get(tok, self._ids[UNK])

    def encode(self, seq):
        return [self.id(t) for t in seq]

    @property
    def pad_id(self):
        return self._ids[PAD]

    @property
    def mask_id(self):
        return self._ids[MASK]


class EditSpace:
    """Index layout ``[C, D, T_0..T_{k-1}, A(w_0).., R(w_0)..]``."""

    def __init__(self, inserts, num_transforms, mode="word"):
        self.inserts = list(inserts)
        self.num_transforms = int(num_transforms)
        self.mode = mode
        self._ins = {w: k for k, w in enumerate(self.inserts)}

    def __len__(self):
        return 2 + self.num_transforms + 2 * len(self.inserts)

    @property
    def append_offset(self):
        return 2 + self.num_transforms

    @property
    def replace_offset(self):
        return 2 + self.num_transforms + len(self.inserts)

    def index(self, op):
        kind = op.kind
        if kind == C:
            return 0
        if kind == D:
            return 1
        if kind == T:
            if not 0 <= op.rule < self.num_transforms:
                raise EditError(f"transformation {op.rule} outside edit space of {self.num_transforms}")
            return 2 + op.rule
        if op.arg not in self._ins:
            raise EditError(f"insert {op.arg!r} is not in the model's insert dictionary")
        base = self.append_offset if kind == A else self.replace_offset
        return base + self._ins[op.arg]

    def op(self, index):
        index = int(index)
        if index == 0:
            return EditOp(C)
        if index == 1:
            return EditOp(D)
        if index < self.append_offset:
            return EditOp(T, rule=index - 2)
        if index < self.replace_offset:
            return EditOp(A, arg=self.inserts[index - self.append_offset])
        if index < len(self):
            return EditOp(R, arg=self.inserts[index - self.replace_offset])
        raise EditError(f"edit index {index} outside edit space of size {len(self)}")

    def copy_score_mask(self):
        """1 where the edit's logit includes the copy score phi(x_i).h_i."""
        m = np.zeros(len(self))
        m[0] = 1.0
        m[2 : self.replace_offset] = 1.0
        return m


def edit_unit_mask(n):
    """Boolean (3n, 3n) mask over [h_1..h_n, r_1..r_n, a_1..a_n]; entry (q, k) true if q may attend k."""
    return _stream_masks(np.array([n]), n)[0]


def _stream_masks(lengths, width):
    """Masks for a padded batch: [B, 3N, 3N], padding keys excluded."""
    B, N = len(lengths), width
    idx = np.arange(N)
    valid = idx[None, :] < lengths[:, None]  # [B, N]
    mask = np.zeros((B, 3 * N, 3 * N), dtype=bool)
    mask[:, :N, :N] = valid[:, None, :]
    off_diag = ~np.eye(N, dtype=bool)
    mask[:, N : 2 * N, :N] = valid[:, None, :] & off_diag[None]
    mask[:, 2 * N :, :N] = valid[:, None, :]
    mask[:, N + idx, N + idx] = True
    mask[:, 2 * N + idx, 2 * N + idx] = True
    return mask


class PieModel:
    """Parameters plus forward computation; ``forward_passes`` counts encoder runs."""

    def __init__(self, config, vocab, inserts, table, mode="word", seed=0):
        self.config = config
        self.vocab = vocab
        self.inserts = list(inserts)
        self.table = list(table)
        self.mode = mode
        self.space = EditSpace(self.inserts, len(self.table), mode)
        config.vocab_size = len(vocab)
        config.num_inserts = len(self.inserts)
        config.num_transforms = len(self.table)
        self.rng = np.random.default_rng(seed)
        self.params = self._init_params(np.random.default_rng(seed))
        self.forward_passes = 0
        self._payload_ids, self._payload_mask = self._payload_matrix()

    # ----------------------------------------------------------- parameters

    def _init_params(self, rng):
        cfg = self.config
        dt, H, F = cfg.dtype, cfg.hidden_size, cfg.intermediate_size
        std = cfg.initializer_range

        def normal(*shape):
            return (rng.standard_normal(shape) * std).astype(dt)

        p = {}

        def add(name, value):
            p[name] = Parameter(value, name)

        add("embeddings.token", normal(cfg.vocab_size, H))
        add("embeddings.position", normal(cfg.max_positions, H))
        add("embeddings.ln.gain", np.ones(H, dt))
        add("embeddings.ln.bias", np.zeros(H, dt))
        for k in range(cfg.num_layers):
            pre = f"layer{k}."
            for proj in ("query", "key", "value", "output"):
                add(pre + f"attn.{proj}.weight", normal(H, H))
                add(pre + f"attn.{proj}.bias", np.zeros(H, dt))
            add(pre + "attn_ln.gain", np.ones(H, dt))
            add(pre + "attn_ln.bias", np.zeros(H, dt))
            add(pre + "ffn.in.weight", normal(H, F))
            add(pre + "ffn.in.bias", np.zeros(F, dt))
            add(pre + "ffn.out.weight", normal(F, H))
            add(pre + "ffn.out.bias", np.zeros(H, dt))
            add(pre + "ffn_ln.gain", np.ones(H, dt))
            add(pre + "ffn_ln.bias", np.zeros(H, dt))
        if cfg.head_mode == FACTORIZED:
            add("head.theta", normal(len(self.space), H))
        else:
            add("head.W", normal(len(self.space), H))
        return p

    def head_parameter_names(self):
        return [n for n in self.params if n.startswith("head.")]

    def encoder_parameter_count(self):
        return sum(p.data.size for n, p in self.params.items() if not n.startswith("head."))

    def parameter_count(self):
        return sum(p.data.size for p in self.params.values())

    def _payload_matrix(self):
        toks = [payload_tokens(w, self.mode) for w in self.inserts]
        q = max((len(t) for t in toks), default=1)
        ids = np.full((len(toks), q), self.vocab.pad_id, dtype=np.int64)
        mask = np.zeros((len(toks), q, 1), dtype=self.config.dtype)
        for k, t in enumerate(toks):
            ids[k, : len(t)] = self.vocab.encode(t)
            mask[k, : len(t)] = 1.0
        return ids, mask

    # -------------------------------------------------------------- batching

    def batch_ids(self, sequences):
        """Pad token sequences to one width; returns (ids [B, N], lengths [B])."""
        lengths = np.array([len(s) for s in sequences], dtype=np.int64)
        if lengths.min(initial=1) < 1:
            raise ValueError("empty sequence")
        width = int(lengths.max())
        if width > self.config.max_positions:
            raise InputTooLongError(
                f"sequence of {width} tokens exceeds max_positions={self.config.max_positions}"
            )
        ids = np.full((len(sequences), width), self.vocab.pad_id, dtype=np.int64)
        for b, s in enumerate(sequences):
            ids[b, : len(s)] = self.vocab.encode(s)
        return ids, lengths

    # --------------------------------------------------------------- forward

    def _dropout(self, x, training, rate=None):
        rate = self.config.dropout if rate is None else rate
        return ops.dropout(x, rate, self.rng, training)

    def _split_heads(self, x):
        B, L, H = x.shape
        nh = self.config.num_heads
        return ops.transpose(ops.reshape(x, (B, L, nh, H // nh)), (0, 2, 1, 3))

    def _merge_heads(self, x):
        B, nh, L, dh = x.shape
        return ops.reshape(ops.transpose(x, (0, 2, 1, 3)), (B, L, nh * dh))

    def _linear(self, x, name):
        return ops.add_bias(ops.matmul(x, self.params[name + ".weight"]), self.params[name + ".bias"])

    def _attend(self, q, k, v, mask, training):
        if training and self.config.attention_dropout > 0:
            scores = ops.scale(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(q.shape[-1]))
            probs = self._dropout(ops.softmax_rows(scores, mask), training, self.config.attention_dropout)
            return ops.matmul(probs, v)
        return ops.masked_attention(q, k, v, mask)

    def _post_attention(self, x, ctx, pre, training):
        out = self._dropout(self._linear(self._merge_heads(ctx), pre + "attn.output"), training)
        eps = self.config.layer_norm_eps
        x = ops.layer_norm(ops.add(x, out), self.params[pre + "attn_ln.gain"], self.params[pre + "attn_ln.bias"], eps)
        hidden = ops.gelu(self._linear(x, pre + "ffn.in"))
        out = self._dropout(self._linear(hidden, pre + "ffn.out"), training)
        return ops.layer_norm(ops.add(x, out), self.params[pre + "ffn_ln.gain"], self.params[pre + "ffn_ln.bias"], eps)

    def _layer(self, k, h, units, masks, training):
        pre = f"layer{k}."
        qh = self._split_heads(self._linear(h, pre + "attn.query"))
        kh = self._split_heads(self._linear(h, pre + "attn.key"))
        vh = self._split_heads(self._linear(h, pre + "attn.value"))
        new_h = self._post_attention(h, self._attend(qh, kh, vh, masks[0], training), pre, training)
        if units is None:
            return new_h, None
        qu = self._split_heads(self._linear(units, pre + "attn.query"))
        ku = self._split_heads(self._linear(units, pre + "attn.key"))
        vu = self._split_heads(self._linear(units, pre + "attn.value"))
        keys = ops.concat([kh, ku], axis=2)
        values = ops.concat([vh, vu], axis=2)
        ctx = self._attend(qu, keys, values, masks[1], training)
        return new_h, self._post_attention(units, ctx, pre, training)

    def _embed(self, x, training):
        eps = self.config.layer_norm_eps
        x = ops.layer_norm(x, self.params["embeddings.ln.gain"], self.params["embeddings.ln.bias"], eps)
        return self._dropout(x, training)

    def unit_inputs(self, lengths, width):
        """Pre-encoder unit rows [B, 2N, H]: mask embedding + position (r), + mean of positions i, i+1 (a)."""
        tok = self.params["embeddings.token"]
        pos_table = self.params["embeddings.position"]
        B, N = len(lengths), width
        positions = np.broadcast_to(np.arange(N), (B, N))
        mask_vec = ops.embedding_lookup(tok, np.full((B, N), self.vocab.mask_id))
        r0 = ops.add(mask_vec, ops.embedding_lookup(pos_table, positions))
        following = np.minimum(positions + 1, (np.asarray(lengths) - 1)[:, None])
        following = np.maximum(following, positions)  # last real index (and padding) uses its own position
        between = ops.scale(
            ops.add(ops.embedding_lookup(pos_table, positions), ops.embedding_lookup(pos_table, following)), 0.5
        )
        return ops.concat([r0, ops.add(mask_vec, between)], axis=1)

    def encode(self, ids, lengths, with_units=True, training=False, unit_inputs=None):
        """Run the encoder; returns (h, r, a) with r = a = None when ``with_units`` is false.

        ``unit_inputs`` replaces the default [B, 2N, H] unit rows (used to
        probe that the token stream never reads them).
        """
        ids = np.asarray(ids)
        lengths = np.asarray(lengths)
        B, N = ids.shape
        if N > self.config.max_positions:
            raise InputTooLongError(f"sequence of {N} tokens exceeds max_positions={self.config.max_positions}")
        self.forward_passes += 1
        tok = self.params["embeddings.token"]
        pos_table = self.params["embeddings.position"]
        positions = np.broadcast_to(np.arange(N), (B, N))
        h0 = ops.add(ops.embedding_lookup(tok, ids), ops.embedding_lookup(pos_table, positions))
        h = self._embed(h0, training)

        full = _stream_masks(lengths, N)
        masks = (full[:, None, :N, :N], full[:, None, N:, :] if with_units else None)
        units = None
        if with_units:
            rows = self.unit_inputs(lengths, N) if unit_inputs is None else unit_inputs
            units = self._embed(rows, training)

        for k in range(self.config.num_layers):
            h, units = self._layer(k, h, units, masks, training)
        if not with_units:
            return h, None, None
        r = ops.getitem(units, (slice(None), slice(0, N)))
        a = ops.getitem(units, (slice(None), slice(N, 2 * N)))
        return h, r, a

    def phi_inserts(self):
        """Summed token embeddings of every insert payload, [M, H]."""
        tok = self.params["embeddings.token"]
        rows = ops.mul(ops.embedding_lookup(tok, self._payload_ids), self._payload_mask)
        return ops.sum(rows, axis=1)

    def factorized_logits(self, h, r, a, ids):
        """Edit logits [B, N, |E|], layout as in :class:`EditSpace`."""
        theta = self.params["head.theta"]
        phi_x = ops.embedding_lookup(self.params["embeddings.token"], np.asarray(ids))
        base = ops.matmul(h, ops.transpose(theta))
        copy = ops.sum(ops.mul(phi_x, h), axis=-1, keepdims=True)
        coef = self.space.copy_score_mask().astype(self.config.dtype)
        logits = ops.add(base, ops.mul(copy, coef))
        if not self.inserts:
            return logits
        phi_w = ops.transpose(self.phi_inserts())
        appends = ops.matmul(a, phi_w)
        own = ops.sum(ops.mul(phi_x, r), axis=-1, keepdims=True)
        replaces = ops.sub(ops.matmul(r, phi_w), own)
        B, N, _ = h.shape
        lead = np.zeros((B, N, self.space.append_offset), dtype=self.config.dtype)
        return ops.add(logits, ops.concat([lead, appends, replaces], axis=-1))

    def default_logits(self, h):
        return ops.matmul(h, ops.transpose(self.params["head.W"]))

    def logits(self, ids, lengths, training=False):
        if self.config.head_mode == FACTORIZED:
            h, r, a = self.encode(ids, lengths, with_units=True, training=training)
            return self.factorized_logits(h, r, a, ids)
        h, _, _ = self.encode(ids, lengths, with_units=False, training=training)
        return self.default_logits(h)

    # ------------------------------------------------------------- inference

    def predict(self, sequences):
        """Most probable edit per token for each sequence, one encoder pass per batch."""
        ids, lengths = self.batch_ids(sequences)
        with no_grad():
            logits = self.logits(ids, lengths).data
        _, best = edit_distribution(logits)
        return [[self.space.op(k) for k in best[b, : lengths[b]]] for b in range(len(sequences))]

    def state_arrays(self):
        return {n: p.data for n, p in self.params.items()}

    def load_arrays(self, arrays):
        missing = set(self.params) - set(arrays)
        extra = set(arrays) - set(self.params)
        if missing or extra:
            raise ValueError(f"parameter mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for n, p in self.params.items():
            if arrays[n].shape != p.data.shape:
                raise ValueError(f"{n}: shape {arrays[n].shape} != {p.data.shape}")
            p.data = np.array(arrays[n], dtype=p.data.dtype)
            p.zero_grad()


def edit_distribution(logits):
    """Row-wise softmax and argmax; ties go to the lower edit index."""
    logits = np.asarray(logits, dtype=np.float64)
    z = logits - logits.max(axis=-1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=-1, keepdims=True)
    return p, np.argmax(logits, axis=-1)
