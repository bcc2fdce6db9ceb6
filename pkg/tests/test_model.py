"""Input-preparation pipeline: ablation switches and length handling."""

import numpy as np
import pytest

from kbert.config import Ablation, ModelConfig
from kbert.injector import NEG_INF
from kbert.kg import QueryLimits
from kbert.model import KBertModel, prepare_input, prepare_tokens
from kbert.tokenizer import UNK_ID, build_vocab

SENT = "Tim Cook is visiting Beijing now"


def make_model(**kwargs):
    corpus = [SENT, "CEO Apple capital China is_a City"]
    defaults = dict(layers=2, heads=2, hidden=16, d_ff=32, max_seq_len=32)
    defaults.update(kwargs)
    return KBertModel.init(ModelConfig(**defaults), build_vocab(corpus, min_count=1), seed=0)


def test_prepare_input_full_pipeline(city_kg):
    prep = prepare_input(make_model(), SENT, city_kg)
    assert len(prep) == 13
    assert prep.positions.tolist() == [0, 1, 2, 3, 4, 3, 4, 5, 6, 7, 6, 7, 6]
    assert prep.visible.shape == (13, 13)
    assert prep.ids.dtype == np.int64
    assert len(prep.tree.branches) == 3


def test_ablation_no_kg_drops_branches(city_kg):
    prep = prepare_input(make_model(), SENT, city_kg, Ablation(use_kg=False))
    assert len(prep) == 7  # [CLS] + 6 words
    assert prep.tree.branches == []
    assert prep.positions.tolist() == list(range(7))
    assert np.all(prep.visible == 0.0)  # no branches -> nothing to hide


def test_ablation_no_soft_position_uses_hard(city_kg):
    prep = prepare_input(make_model(), SENT, city_kg, Ablation(use_soft_position=False))
    assert prep.positions.tolist() == list(range(13))
    # the mask is untouched by the position ablation
    assert prep.visible[0, 4] == NEG_INF


def test_ablation_no_visible_matrix_zeroes_mask(city_kg):
    prep = prepare_input(make_model(), SENT, city_kg, Ablation(use_visible_matrix=False))
    assert np.all(prep.visible == 0.0)
    # soft positions still reflect the tree
    assert prep.positions.tolist() == [0, 1, 2, 3, 4, 3, 4, 5, 6, 7, 6, 7, 6]


def test_no_kg_argument_equals_use_kg_false(city_kg):
    model = make_model()
    a = prepare_input(model, SENT, None)
    b = prepare_input(model, SENT, city_kg, Ablation(use_kg=False))
    np.testing.assert_array_equal(a.ids, b.ids)
    np.testing.assert_array_equal(a.positions, b.positions)
    np.testing.assert_array_equal(a.visible, b.visible)


def test_sequence_budget_drops_branches_before_trunk(city_kg):
    prep = prepare_input(make_model(max_seq_len=9), SENT, city_kg)
    # 7 trunk + one 2-token branch fits; later-anchored branches dropped
    assert len(prep) == 9
    assert len(prep.tree.branches) == 1
    assert [t.surface for t in prep.tree.branches[0].tokens] == ["CEO", "Apple"]


def test_trunk_truncated_when_alone_too_long(city_kg):
    prep = prepare_input(make_model(max_seq_len=4), SENT, city_kg)
    assert len(prep) == 4
    assert [t.surface for t in prep.seq.tokens] == ["[CLS]", "Tim", "Cook", "is"]


def test_query_limits_flow_through(city_kg):
    prep = prepare_input(make_model(), SENT, city_kg, limits=QueryLimits(max_triples_per_entity=1))
    assert len(prep.tree.branches) == 2  # one per matched entity


def test_prepare_tokens_one_token_per_string(city_kg):
    model = make_model()
    prep = prepare_tokens(model, ["Tim", "Cook", "is", "visiting", "Beijing", "now"], city_kg)
    assert [t.surface for t in prep.seq.tokens][:3] == ["[CLS]", "Tim", "Cook"]
    assert len(prep) == 13  # same layout as the text pipeline here
    unk = prepare_tokens(model, ["unseen-token"], None)
    assert unk.ids[1] == UNK_ID


def test_prepare_tokens_keeps_strings_atomic_in_char_mode(city_kg):
    model = make_model(tokenize_mode="char")
    prep = prepare_tokens(model, ["Tim", "Cook"], None)
    # pre-split strings are not re-split into characters
    assert [t.surface for t in prep.seq.tokens] == ["[CLS]", "Tim", "Cook"]


def test_pair_text_reaches_segments(city_kg):
    prep = prepare_input(make_model(), "Tim Cook", city_kg, text_b="visiting Beijing")
    assert 1 in prep.segments
    surfaces = [t.surface for t in prep.seq.tokens]
    assert "[SEP]" in surfaces
