"""Embedding lookups: single-sequence vs batched parity and bounds checks."""

import numpy as np
import pytest

from kbert.autodiff import Tensor
from kbert.embedding import EmbeddingTables, embed, embed_batch, init_tables
from kbert.injector import FlatSequence
from kbert.tokenizer import Token


def make_seq(ids, soft, segments):
    n = len(ids)
    return FlatSequence(
        tokens=[Token(i, f"t{i}") for i in ids],
        soft_pos=list(soft),
        segments=list(segments),
        branch_ids=[0] * n,
        trunk_pos=list(range(n)),
    )


def test_init_tables_deterministic_and_shaped(small_config):
    a = init_tables(small_config, vocab_size=11, seed=3)
    b = init_tables(small_config, vocab_size=11, seed=3)
    c = init_tables(small_config, vocab_size=11, seed=4)
    assert a.token.shape == (11, 16)
    assert a.position.shape == (32, 16)
    assert a.segment.shape == (2, 16)
    np.testing.assert_array_equal(a.token, b.token)
    assert not np.array_equal(a.token, c.token)
    assert a.hidden == 16 and a.max_soft_pos == 32


def test_embed_sums_three_rows(rng):
    tables = EmbeddingTables(
        token=rng.standard_normal((6, 4)),
        position=rng.standard_normal((8, 4)),
        segment=rng.standard_normal((2, 4)),
    )
    seq = make_seq(ids=[2, 5], soft=[0, 3], segments=[0, 1])
    out = embed(seq, tables)
    np.testing.assert_array_equal(out[0], tables.token[2] + tables.position[0] + tables.segment[0])
    np.testing.assert_array_equal(out[1], tables.token[5] + tables.position[3] + tables.segment[1])


def test_same_soft_position_embeds_identically(rng):
    tables = EmbeddingTables(
        token=rng.standard_normal((6, 4)),
        position=rng.standard_normal((8, 4)),
        segment=rng.standard_normal((2, 4)),
    )
    # Same (token, soft, segment) at different hard positions: rows equal.
    seq = make_seq(ids=[3, 1, 3], soft=[2, 0, 2], segments=[0, 0, 0])
    out = embed(seq, tables)
    np.testing.assert_array_equal(out[0], out[2])


def test_embed_batch_bitwise_matches_embed(rng):
    tables = EmbeddingTables(
        token=rng.standard_normal((9, 5)),
        position=rng.standard_normal((7, 5)),
        segment=rng.standard_normal((2, 5)),
    )
    seq = make_seq(ids=[1, 8, 0, 4], soft=[0, 1, 2, 1], segments=[0, 0, 1, 1])
    single = embed(seq, tables)
    batched = embed_batch(
        Tensor(tables.token),
        Tensor(tables.position),
        Tensor(tables.segment),
        seq.token_ids()[None, :],
        np.asarray(seq.soft_pos)[None, :],
        np.asarray(seq.segments)[None, :],
    )
    assert batched.data.shape == (1, 4, 5)
    assert batched.data[0].tobytes() == single.tobytes()


def test_position_overflow_raises(rng):
    tables = EmbeddingTables(
        token=rng.standard_normal((6, 4)),
        position=rng.standard_normal((3, 4)),
        segment=rng.standard_normal((2, 4)),
    )
    seq = make_seq(ids=[0, 1], soft=[0, 3], segments=[0, 0])
    with pytest.raises(ValueError, match="position overflow"):
        embed(seq, tables)
    with pytest.raises(ValueError, match="position overflow"):
        embed_batch(
            Tensor(tables.token),
            Tensor(tables.position),
            Tensor(tables.segment),
            np.array([[0, 1]]),
            np.array([[0, 3]]),
            np.array([[0, 0]]),
        )
