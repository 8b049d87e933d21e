import csv

import numpy as np
import pytest

from nextpp import autodiff as ad
from nextpp.attention import (
    AttentionBlockParams,
    cross_attention_block,
    export_attention,
    init_attention_params,
    self_attention_block,
)
from nextpp.rng import Rng

from helpers import check_gradients

D = 8


def make_block(rng, heads=2):
    return init_attention_params(D, heads, 1, rng).self_blocks[0]


def reference_block(x_q, x_kv, block):
    """Independent dense reference: per-head masked softmax attention."""
    heads = block.head_count
    hd = D // heads
    q = x_q @ block.wq.data
    k = x_kv @ block.wk.data
    v = x_kv @ block.wv.data
    n = x_q.shape[0]
    merged = np.zeros((n, D))
    for h in range(heads):
        qh, kh, vh = (m[:, h * hd : (h + 1) * hd] for m in (q, k, v))
        for i in range(n):
            scores = np.array([qh[i] @ kh[j] / np.sqrt(hd) for j in range(i + 1)])
            w = np.exp(scores - scores.max())
            w /= w.sum()
            merged[i, h * hd : (h + 1) * hd] = sum(w[j] * vh[j] for j in range(i + 1))
    attn = merged @ block.wo.data
    pre = x_q + attn
    mean = pre.mean(axis=1, keepdims=True)
    var = pre.var(axis=1, keepdims=True)
    normed = (pre - mean) / np.sqrt(var + 1e-8)
    return normed * block.ln_gain.data + block.ln_bias.data


def test_single_event_weight_is_one():
    block = make_block(Rng(0))
    out, weights = self_attention_block(ad.Tensor(np.random.default_rng(0).normal(size=(1, D))), block)
    for w in weights:
        assert np.array_equal(w, [[1.0]])
    assert out.shape == (1, D)


def test_two_identical_rows_split_weight_evenly():
    block = make_block(Rng(1))
    x = np.tile(np.linspace(-1, 1, D), (2, 1))
    _, weights = self_attention_block(ad.Tensor(x), block)
    for w in weights:
        assert np.allclose(w[1], [0.5, 0.5], rtol=0, atol=1e-12)


def test_self_attention_matches_dense_reference():
    rng = Rng(7)
    block = make_block(rng)
    x = np.random.default_rng(5).normal(size=(3, D))
    out, _ = self_attention_block(ad.Tensor(x), block)
    assert np.allclose(out.data, reference_block(x, x, block), rtol=1e-10, atol=1e-10)


def test_cross_attention_matches_dense_reference():
    rng = Rng(8)
    block = make_block(rng)
    o = np.random.default_rng(6).normal(size=(3, D))
    a = np.random.default_rng(7).normal(size=(3, D))
    out, _ = cross_attention_block(ad.Tensor(o), ad.Tensor(a), block)
    assert np.allclose(out.data, reference_block(o, a, block), rtol=1e-10, atol=1e-10)


def test_cross_attention_single_row():
    block = make_block(Rng(2))
    o = np.random.default_rng(1).normal(size=(1, D))
    a = np.random.default_rng(2).normal(size=(1, D))
    out, weights = cross_attention_block(ad.Tensor(o), ad.Tensor(a), block)
    for w in weights:
        assert np.array_equal(w, [[1.0]])
    assert np.allclose(out.data, reference_block(o, a, block), rtol=1e-12, atol=1e-12)


def test_zero_value_projection_passthrough():
    rng = Rng(3)
    block = make_block(rng)
    block.wv.data = np.zeros((D, D))
    o = np.random.default_rng(3).normal(size=(4, D))
    a = np.random.default_rng(4).normal(size=(4, D))
    out, _ = cross_attention_block(ad.Tensor(o), ad.Tensor(a), block)
    normed = ad.layer_norm(ad.Tensor(o)) * block.ln_gain + block.ln_bias
    assert np.allclose(out.data, normed.data, rtol=0, atol=1e-14)


def test_causality_perturbing_future_rows():
    rng = Rng(4)
    block = make_block(rng)
    base = np.random.default_rng(8).normal(size=(5, D))
    out_base, _ = self_attention_block(ad.Tensor(base), block)
    for j in range(1, 5):
        bumped = base.copy()
        bumped[j] += 10.0
        out_bump, _ = self_attention_block(ad.Tensor(bumped), block)
        assert np.array_equal(out_base.data[:j], out_bump.data[:j]), f"row < {j} changed"


def test_softmax_rows_normalised_and_masked():
    rng = Rng(5)
    params = init_attention_params(D, 2, 2, rng)
    x = np.random.default_rng(9).normal(size=(6, D))
    stream = ad.Tensor(x)
    for block in params.self_blocks:
        stream, weights = self_attention_block(stream, block)
        for w in weights:
            assert np.allclose(w.sum(axis=1), 1.0, rtol=0, atol=1e-9)
            assert np.array_equal(np.triu(w, k=1), np.zeros_like(w))


def test_layer_norm_rows_standardised():
    x = np.random.default_rng(10).normal(size=(7, D)) * 3.0 + 1.5
    y = ad.layer_norm(ad.Tensor(x)).data
    assert np.all(np.abs(y.mean(axis=1)) < 1e-6)
    assert np.all(np.abs(y.var(axis=1) - 1.0) < 1e-6)


def test_dropout_only_with_rng_and_training():
    rng = Rng(6)
    block = make_block(rng)
    x = np.random.default_rng(11).normal(size=(4, D))
    out1, _ = self_attention_block(ad.Tensor(x), block, dropout_p=0.5, rng=Rng(1))
    out2, _ = self_attention_block(ad.Tensor(x), block, dropout_p=0.5, rng=Rng(1))
    out3, _ = self_attention_block(ad.Tensor(x), block, dropout_p=0.5, rng=Rng(2))
    assert np.array_equal(out1.data, out2.data)  # same seed, same mask
    assert not np.array_equal(out1.data, out3.data)


def test_attention_gradients_match_finite_differences():
    x = np.random.default_rng(12).normal(size=(4, D))

    def build(ps):
        block = AttentionBlockParams(
            wq=ps["wq"], wk=ps["wk"], wv=ps["wv"], wo=ps["wo"],
            ln_gain=ps["gain"], ln_bias=ps["bias"], head_count=2,
        )
        out, _ = self_attention_block(ad.Tensor(x), block)
        return (out * out).sum()

    nprng = np.random.default_rng(13)
    params = {
        "wq": ad.param(nprng.normal(size=(D, D)) * 0.4),
        "wk": ad.param(nprng.normal(size=(D, D)) * 0.4),
        "wv": ad.param(nprng.normal(size=(D, D)) * 0.4),
        "wo": ad.param(nprng.normal(size=(D, D)) * 0.4),
        "gain": ad.param(np.ones(D)),
        "bias": ad.param(np.zeros(D)),
    }
    check_gradients(build, params, rtol=1e-4, sample=6, rng=Rng(3))


def test_export_attention_csv(tmp_path):
    rng = Rng(9)
    params = init_attention_params(D, 2, 2, rng)
    x = np.random.default_rng(14).normal(size=(3, D))
    stream = ad.Tensor(x)
    maps = []
    for block in params.self_blocks:
        stream, weights = self_attention_block(stream, block)
        maps.append(weights)
    path = tmp_path / "attn.csv"
    export_attention(maps, path)
    with open(path) as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    assert reader.fieldnames == ["layer", "head", "query", "key", "weight"]
    assert len(rows) == 2 * 2 * 3 * 3
    sums = {}
    for row in rows:
        key = (row["layer"], row["head"], row["query"])
        sums[key] = sums.get(key, 0.0) + float(row["weight"])
        if int(row["key"]) > int(row["query"]):
            assert float(row["weight"]) == 0.0
    for value in sums.values():
        assert abs(value - 1.0) <= 1e-9


def test_export_single_event(tmp_path):
    rng = Rng(10)
    params = init_attention_params(D, 1, 1, rng)
    x = np.random.default_rng(15).normal(size=(1, D))
    _, weights = self_attention_block(ad.Tensor(x), params.self_blocks[0])
    path = tmp_path / "one.csv"
    export_attention([weights], path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "layer,head,query,key,weight"
    assert lines[1] == "0,0,0,0,1"
