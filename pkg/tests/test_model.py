import numpy as np
import pytest

from oracles import scalar_logits
from piedit.editspace import EditError, EditOp, InputTooLongError, append, default_table, replace, transform
from piedit.model import (
    DEFAULT,
    FACTORIZED,
    MASK,
    EditSpace,
    ModelConfig,
    PieModel,
    Vocab,
    edit_distribution,
    edit_unit_mask,
)
from piedit.numcore import grad_check, no_grad, ops

LETTERS = list("abcdefgh")
TABLE = default_table()[:3]


def tiny(head_mode=FACTORIZED, hidden=16, layers=2, heads=2, inserts=("a", "b", "c d"), seed=0, init=0.3, **kw):
    cfg = ModelConfig(
        num_layers=layers,
        hidden_size=hidden,
        intermediate_size=2 * hidden,
        num_heads=heads,
        max_positions=70,
        head_mode=head_mode,
        precision="double",
        initializer_range=init,
        **kw,
    )
    vocab = Vocab.build([LETTERS])
    return PieModel(cfg, vocab, list(inserts), TABLE, mode="word", seed=seed)


def sentences(rng, lengths):
    return [("[", *rng.choice(LETTERS, size=n - 2), "]") for n in lengths]


# ------------------------------------------------------------ edit space


def test_edit_space_layout_round_trips():
    space = EditSpace(["a", "b"], 3)
    assert len(space) == 2 + 3 + 2 * 2
    ops_ = [EditOp("C"), EditOp("D"), transform(0), transform(2), append("a"), append("b"), replace("a"), replace("b")]
    for k, e in enumerate(ops_):
        idx = space.index(e)
        assert space.op(idx) == e
    assert [space.index(e) for e in ops_] == [0, 1, 2, 4, 5, 6, 7, 8]


def test_edit_space_rejects_unknown_insert_and_rule():
    space = EditSpace(["a"], 2)
    with pytest.raises(EditError):
        space.index(append("zzz"))
    with pytest.raises(EditError):
        space.index(transform(5))
    with pytest.raises(EditError):
        space.op(len(space))


# ----------------------------------------------------------- attention masks


def test_edit_unit_mask_n3_by_hand():
    T, F = True, False
    expected = np.array(
        [
            # h1 h2 h3  r1 r2 r3  a1 a2 a3
            [T, T, T, F, F, F, F, F, F],  # h1
            [T, T, T, F, F, F, F, F, F],
            [T, T, T, F, F, F, F, F, F],
            [F, T, T, T, F, F, F, F, F],  # r1: other tokens and itself
            [T, F, T, F, T, F, F, F, F],
            [T, T, F, F, F, T, F, F, F],
            [T, T, T, F, F, F, T, F, F],  # a1: all tokens and itself
            [T, T, T, F, F, F, F, T, F],
            [T, T, T, F, F, F, F, F, T],
        ]
    )
    assert np.array_equal(edit_unit_mask(3), expected)


def test_edit_unit_mask_n1_replace_unit_sees_only_itself():
    m = edit_unit_mask(1)
    assert np.array_equal(m, [[True, False, False], [False, True, False], [True, False, True]])


def test_single_token_sequence_runs():
    model = tiny()
    with no_grad():
        logits = model.logits(*model.batch_ids([("[",)]))
    assert logits.shape == (1, 1, len(model.space))
    assert np.all(np.isfinite(logits.data))


def test_replace_unit_first_layer_attention_by_hand():
    """One layer, one head: r_1's context is the softmax-weighted values of h_2..h_n and r_1."""
    model = tiny(layers=1, heads=1, hidden=4)
    rng = np.random.default_rng(3)
    (seq,) = sentences(rng, [5])
    ids, lengths = model.batch_ids([seq])
    p = {n: t.data for n, t in model.params.items()}

    def ln(x, g, b):
        mu = x.mean(-1, keepdims=True)
        var = ((x - mu) ** 2).mean(-1, keepdims=True)
        return (x - mu) / np.sqrt(var + model.config.layer_norm_eps) * g + b

    emb = p["embeddings.token"][ids[0]] + p["embeddings.position"][:5]
    h0 = ln(emb, p["embeddings.ln.gain"], p["embeddings.ln.bias"])
    r0 = ln(p["embeddings.token"][model.vocab.mask_id] + p["embeddings.position"][0], p["embeddings.ln.gain"], p["embeddings.ln.bias"])
    lin = lambda x, name: x @ p[f"layer0.attn.{name}.weight"] + p[f"layer0.attn.{name}.bias"]
    q = lin(r0, "query")
    keys = np.vstack([lin(h0[1:], "key"), lin(r0, "key")])
    vals = np.vstack([lin(h0[1:], "value"), lin(r0, "value")])
    s = keys @ q / np.sqrt(4)
    w = np.exp(s - s.max())
    ctx = (w / w.sum()) @ vals
    x = ln(r0 + lin(ctx, "output"), p["layer0.attn_ln.gain"], p["layer0.attn_ln.bias"])
    from scipy.special import erf

    z = x @ p["layer0.ffn.in.weight"] + p["layer0.ffn.in.bias"]
    hid = 0.5 * z * (1 + erf(z / np.sqrt(2)))
    r1 = ln(x + hid @ p["layer0.ffn.out.weight"] + p["layer0.ffn.out.bias"], p["layer0.ffn_ln.gain"], p["layer0.ffn_ln.bias"])
    with no_grad():
        _, r, _ = model.encode(ids, lengths)
    assert np.allclose(r.data[0, 0], r1, rtol=1e-10, atol=1e-12)


# ----------------------------------------------------------- mask isolation


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_token_stream_ignores_unit_inputs(seed):
    model = tiny(seed=seed)
    rng = np.random.default_rng(seed)
    ids, lengths = model.batch_ids(sentences(rng, [6, 9, 4]))
    B, N = ids.shape
    H = model.config.hidden_size
    with no_grad():
        h_rand, r_rand, _ = model.encode(ids, lengths, unit_inputs=rng.standard_normal((B, 2 * N, H)))
        h_zero, r_zero, _ = model.encode(ids, lengths, unit_inputs=np.zeros((B, 2 * N, H)))
        h_plain, r_none, _ = model.encode(ids, lengths, with_units=False)
    assert r_none is None
    assert np.array_equal(h_rand.data, h_zero.data)
    assert np.array_equal(h_rand.data, h_plain.data)
    assert not np.allclose(r_rand.data, r_zero.data)


def test_padding_does_not_change_real_positions():
    model = tiny()
    rng = np.random.default_rng(5)
    short, long_ = sentences(rng, [4, 9])
    with no_grad():
        alone = model.logits(*model.batch_ids([short])).data[0]
        padded = model.logits(*model.batch_ids([short, long_])).data[0, :4]
    assert np.allclose(alone, padded, rtol=1e-10, atol=1e-12)


def test_parameter_economy():
    fac, plain = tiny(FACTORIZED), tiny(DEFAULT)
    assert fac.encoder_parameter_count() == plain.encoder_parameter_count()
    assert fac.head_parameter_names() == ["head.theta"]
    head = fac.parameter_count() - fac.encoder_parameter_count()
    assert head == len(fac.space) * fac.config.hidden_size
    assert plain.parameter_count() - plain.encoder_parameter_count() == head


# --------------------------------------------------- factorized logit oracle


def test_factorized_logits_match_scalar_oracle_on_100_fixtures():
    model = tiny(hidden=4, heads=1, layers=1)
    payload_ids = [model.vocab.encode(w.split(" ")) for w in model.inserts]
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(1, 7))
        for name in ("embeddings.token", "head.theta"):
            model.params[name].data = rng.standard_normal(model.params[name].shape)
        x_ids = rng.integers(0, len(model.vocab), size=(1, n))
        h, r, a = (rng.standard_normal((1, n, 4)) for _ in range(3))
        got = model.factorized_logits(ops.as_tensor(h), ops.as_tensor(r), ops.as_tensor(a), x_ids).data[0]
        want = scalar_logits(
            model.params["head.theta"].data, model.params["embeddings.token"].data, x_ids[0], h[0], r[0], a[0],
            payload_ids, len(model.table),
        )
        worst = max(worst, float(np.max(np.abs(got - want) / np.maximum(np.abs(want), 1e-12))))
    assert worst < 1e-6


def test_insert_embedding_is_sum_of_payload_tokens():
    model = tiny()
    emb = model.params["embeddings.token"].data
    phi = model.phi_inserts().data
    assert np.allclose(phi[2], emb[model.vocab.id("c")] + emb[model.vocab.id("d")], rtol=1e-14)
    assert np.allclose(phi[0], emb[model.vocab.id("a")], rtol=1e-14)


def test_mask_token_is_a_vocabulary_row():
    model = tiny()
    assert model.vocab.tokens[model.vocab.mask_id] == MASK
    assert "embeddings.mask" not in model.params


# ------------------------------------------------------------ default head


def test_default_head_with_zero_weights_is_uniform():
    model = tiny(DEFAULT)
    model.params["head.W"].data[:] = 0.0
    rng = np.random.default_rng(0)
    with no_grad():
        logits = model.logits(*model.batch_ids(sentences(rng, [5]))).data
    probs, best = edit_distribution(logits)
    assert np.allclose(probs, 1.0 / len(model.space), rtol=1e-12)
    assert np.all(best == 0)


def test_argmax_ties_go_to_lowest_index_and_softmax_is_shift_invariant():
    logits = np.array([[1.0, 3.0, 3.0, 0.5]])
    probs, best = edit_distribution(logits)
    assert best[0] == 1
    shifted, _ = edit_distribution(logits + 123.0)
    assert np.allclose(probs, shifted, rtol=1e-12)


# ------------------------------------------------------------ end to end


@pytest.mark.parametrize("head_mode", [FACTORIZED, DEFAULT])
def test_end_to_end_gradients(head_mode):
    model = tiny(head_mode)
    rng = np.random.default_rng(1)
    ids, lengths = model.batch_ids(sentences(rng, [5, 7]))
    gold = rng.integers(0, len(model.space), size=ids.shape)
    valid = (np.arange(ids.shape[1])[None] < lengths[:, None]).astype(float)
    report = grad_check(lambda: ops.weighted_cross_entropy(model.logits(ids, lengths), gold, valid), model.params, probes=8)
    assert report.passed, report.summary()


def test_predict_uses_one_forward_pass_per_batch():
    model = tiny()
    rng = np.random.default_rng(0)
    before = model.forward_passes
    edits = model.predict(sentences(rng, [4, 12, 30]))
    assert model.forward_passes - before == 1
    assert [len(e) for e in edits] == [4, 12, 30]


def test_too_long_input_is_rejected():
    model = tiny()
    with pytest.raises(InputTooLongError):
        model.batch_ids([("[",) + ("a",) * 80 + ("]",)])


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(hidden_size=10, num_heads=3)
    with pytest.raises(ValueError):
        ModelConfig(head_mode="other")


def test_dropout_only_in_training():
    model = tiny(dropout=0.5, attention_dropout=0.5)
    rng = np.random.default_rng(2)
    ids, lengths = model.batch_ids(sentences(rng, [6]))
    with no_grad():
        a = model.logits(ids, lengths).data
        b = model.logits(ids, lengths).data
        c = model.logits(ids, lengths, training=True).data
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)
