import numpy as np
import pytest

from nextpp import autodiff as ad
from nextpp.embedding import EmbeddingParams, embed_sequence, init_embedding_params, temporal_encoding, temporal_encoding_rows
from nextpp.errors import ContractError
from nextpp.events import EventSequence
from nextpp.rng import Rng


def test_encoding_at_zero():
    assert np.allclose(temporal_encoding(0.0, 4), [1.0, 0.0, 1.0, 0.0], rtol=0, atol=0)


def test_encoding_at_pi_dim_two():
    out = temporal_encoding(np.pi, 2)
    assert abs(out[0] - np.cos(np.pi)) < 1e-15
    assert abs(out[1] - 3.14159e-4) < 1e-9  # sin(pi / 10000)


def test_encoding_component_rule():
    # odd l: cos with exponent (l-1)/D; even l: sin with exponent l/D
    t, dim = 2.7, 6
    out = temporal_encoding(t, dim)
    for l in range(1, dim + 1):
        if l % 2 == 1:
            expected = np.cos(t / 10000.0 ** ((l - 1) / dim))
        else:
            expected = np.sin(t / 10000.0 ** (l / dim))
        assert abs(out[l - 1] - expected) < 1e-15


def test_encoding_bounded():
    rng = Rng(3)
    for t in rng.uniform((100,)) * 1e4:
        out = temporal_encoding(t, 8)
        assert np.all(out >= -1.0) and np.all(out <= 1.0)


def test_encoding_rows_match_scalar():
    times = [0.5, 1.5, 9.25]
    rows = temporal_encoding_rows(times, 10)
    for i, t in enumerate(times):
        assert np.array_equal(rows[i], temporal_encoding(t, 10))


def test_encoding_rejects_odd_dim():
    with pytest.raises(ContractError):
        temporal_encoding(1.0, 3)
    with pytest.raises(ContractError):
        EmbeddingParams(mark_matrix=ad.param(np.zeros((2, 3))), model_dim=3)


def test_zero_mark_matrix_gives_pure_time_encoding():
    params = EmbeddingParams(mark_matrix=ad.param(np.zeros((3, 8))), model_dim=8)
    seq = EventSequence.make([1.0, 2.0], [0, 2], 3)
    emb = embed_sequence(seq, params)
    assert np.array_equal(emb.data, temporal_encoding_rows(seq.times, 8))


def test_equal_mark_and_time_rows_identical():
    # same (time, mark) pair across two sequences embeds identically
    params = init_embedding_params(4, 8, Rng(0))
    a = embed_sequence(EventSequence.make([3.0, 7.0], [2, 1], 4), params)
    b = embed_sequence(EventSequence.make([1.0, 3.0], [0, 2], 4), params)
    assert np.array_equal(a.data[0], b.data[1])  # both are (t=3.0, m=2)
    assert np.array_equal(a.data, embed_sequence(EventSequence.make([3.0, 7.0], [2, 1], 4), params).data)


def test_gradient_counts_mark_occurrences():
    params = init_embedding_params(3, 6, Rng(1))
    seq = EventSequence.make([1.0, 2.0, 3.0, 4.0], [1, 0, 1, 1], 3)
    emb = embed_sequence(seq, params)
    emb.sum().backward()
    grad = params.mark_matrix.grad
    assert np.array_equal(grad[0], np.full(6, 1.0))
    assert np.array_equal(grad[1], np.full(6, 3.0))
    assert np.array_equal(grad[2], np.zeros(6))


def test_mark_out_of_table_rejected():
    params = init_embedding_params(2, 4, Rng(0))
    seq = EventSequence.make([1.0], [3], 4)  # valid for dataset M=4, not for table M=2
    with pytest.raises(ContractError):
        embed_sequence(seq, params)


def test_permuted_marks_with_permuted_table_equivariant():
    rng = Rng(5)
    params = init_embedding_params(4, 8, rng)
    perm = np.array([2, 0, 3, 1])
    permuted = EmbeddingParams(mark_matrix=ad.param(params.mark_matrix.data[perm]), model_dim=8)
    seq = EventSequence.make([1.0, 2.5, 4.0], [0, 3, 2], 4)
    # relabel marks through the inverse permutation: permuted_table[inv[m]] == table[m]
    inv = np.argsort(perm)
    relabeled = EventSequence.make(seq.times, inv[seq.marks], 4)
    a = embed_sequence(seq, params)
    b = embed_sequence(relabeled, permuted)
    assert np.array_equal(a.data, b.data)
