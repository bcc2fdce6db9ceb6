"""Vocabulary construction and tokenization round-trips."""

from collections import Counter

import pytest
from hypothesis import given, strategies as st

from kbert.tokenizer import (
    CLS_ID,
    MASK_ID,
    PAD_ID,
    SEP_ID,
    SPECIAL_TOKENS,
    UNK_ID,
    Token,
    Tokenizer,
    Vocabulary,
    build_vocab,
    split_text,
)


def test_special_ids_are_dense_and_first():
    assert (PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID) == (0, 1, 2, 3, 4)
    vocab = build_vocab(["a b"], min_count=1)
    assert vocab.tokens[:5] == list(SPECIAL_TOKENS)


def test_split_whitespace_collapses_runs():
    assert split_text("  a\tb \n c ", "whitespace") == ["a", "b", "c"]


def test_split_char_drops_spaces_keeps_unicode():
    assert split_text("北京 很大", "char") == ["北", "京", "很", "大"]


def test_split_unknown_mode():
    with pytest.raises(ValueError):
        split_text("x", "sentencepiece")


def test_build_vocab_orders_by_count_then_lexicographic():
    corpus = ["b b b a a c", "a z z"]
    vocab = build_vocab(corpus, min_count=1)
    # a:3 b:3 z:2 c:1 -> count desc, ties lexicographic
    assert vocab.tokens[5:] == ["a", "b", "z", "c"]


def test_build_vocab_min_count_matches_independent_recount():
    corpus = ["p q q r r r", "q r s"]
    counts = Counter()
    for line in corpus:
        counts.update(line.split())
    vocab = build_vocab(corpus, min_count=2)
    kept = {t for t in vocab.tokens[5:]}
    assert kept == {tok for tok, c in counts.items() if c >= 2}


def test_build_vocab_empty_corpus():
    with pytest.raises(ValueError, match="empty corpus"):
        build_vocab([], min_count=1)


def test_vocabulary_requires_specials_first():
    with pytest.raises(ValueError):
        Vocabulary(["a", "b"])


def test_vocabulary_rejects_duplicates():
    with pytest.raises(ValueError):
        Vocabulary(list(SPECIAL_TOKENS) + ["a", "a"])


def test_unknown_surface_maps_to_unk():
    vocab = build_vocab(["hello world"], min_count=1)
    assert vocab.lookup("hello") > UNK_ID
    assert vocab.lookup("missing") == UNK_ID


def test_vocab_save_load_round_trip(tmp_path):
    vocab = build_vocab(["alpha beta beta"], min_count=1)
    path = tmp_path / "vocab.txt"
    vocab.save(path)
    again = Vocabulary.load(path)
    assert again.tokens == vocab.tokens


def test_tokenizer_round_trip_city_sentence(city_tokenizer):
    toks = city_tokenizer.tokenize("Tim Cook is visiting Beijing now")
    assert [t.surface for t in toks] == ["Tim", "Cook", "is", "visiting", "Beijing", "now"]
    assert city_tokenizer.detokenize(toks) == "Tim Cook is visiting Beijing now"


def test_char_tokenizer_detokenizes_without_spaces():
    vocab = build_vocab(["北京"], min_count=1, mode="char")
    tok = Tokenizer(vocab, "char")
    tokens = tok.tokenize("北京")
    assert [t.id for t in tokens] != [UNK_ID, UNK_ID]
    assert tok.detokenize(tokens) == "北京"


def test_special_helper_returns_known_token(city_tokenizer):
    cls = city_tokenizer.special("[CLS]")
    assert cls == Token(CLS_ID, "[CLS]")
    with pytest.raises(ValueError):
        city_tokenizer.special("[BOGUS]")


@given(
    st.lists(
        st.text(alphabet="abcxyz", min_size=1, max_size=5), min_size=1, max_size=8
    )
)
def test_whitespace_tokenize_preserves_surfaces(words):
    vocab = build_vocab([" ".join(words)], min_count=1)
    tok = Tokenizer(vocab, "whitespace")
    assert [t.surface for t in tok.tokenize(" ".join(words))] == words


@given(st.text(alphabet="ab 北运", min_size=0, max_size=20))
def test_char_tokenize_drops_exactly_whitespace(text):
    surfaces = [t for t in split_text(text, "char")]
    assert surfaces == [ch for ch in text if not ch.isspace()]
