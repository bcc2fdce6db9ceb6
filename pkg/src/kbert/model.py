"""Model container and the text -> encoder-input pipeline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import Ablation, ModelConfig
from .encoder import init_params
from .injector import (
    FlatSequence,
    SentenceTree,
    build_trunk,
    fit_to_length,
    flatten,
    k_inject,
    visible_matrix,
)
from .kg import KnowledgeGraph, QueryLimits, k_query
from .tokenizer import Token, Tokenizer, Vocabulary


class KBertModel:
    """Vocabulary, configuration, and every trainable tensor of the encoder."""

    def __init__(self, config: ModelConfig, vocab: Vocabulary, params: dict[str, np.ndarray]):
        config.validate()
        self.config = config
        self.vocab = vocab
        self.params = params
        self.tokenizer = Tokenizer(vocab, config.tokenize_mode)

    @classmethod
    def init(cls, config: ModelConfig, vocab: Vocabulary, seed: int) -> "KBertModel":
        return cls(config, vocab, init_params(config, len(vocab), seed))


@dataclass
class PreparedInput:
    """Arrays for one example, ready to batch into the encoder."""

    ids: np.ndarray  # (n,) token ids
    positions: np.ndarray  # (n,) indices into the position table
    segments: np.ndarray  # (n,) 0/1
    visible: np.ndarray  # (n, n) additive mask
    seq: FlatSequence
    tree: SentenceTree

    def __len__(self) -> int:
        return len(self.ids)


def prepare_input(
    model: KBertModel,
    text: str,
    kg: KnowledgeGraph | None,
    ablation: Ablation = Ablation(),
    limits: QueryLimits = QueryLimits(),
    text_b: str | None = None,
) -> PreparedInput:
    """Tokenize, query, inject, flatten, and mask one input.

    Ablation switches: with use_kg off (or no KG given) the tree has no
    branches; with use_soft_position off the position column holds hard
    positions; with use_visible_matrix off the mask is all zeros.
    """
    trunk = build_trunk(model.tokenizer, text, text_b)
    return prepare_trunk(model, trunk, kg, ablation, limits)


def prepare_tokens(
    model: KBertModel,
    tokens: list[str],
    kg: KnowledgeGraph | None,
    ablation: Ablation = Ablation(),
    limits: QueryLimits = QueryLimits(),
) -> PreparedInput:
    """Like :func:`prepare_input` but for pre-split tokens (tagging input).

    Each given string becomes exactly one trunk token, so tag alignment
    survives regardless of tokenize mode.
    """
    trunk = [model.tokenizer.special("[CLS]")] + [
        Token(model.vocab.lookup(s), s) for s in tokens
    ]
    return prepare_trunk(model, trunk, kg, ablation, limits)


def prepare_trunk(
    model: KBertModel,
    trunk: list[Token],
    kg: KnowledgeGraph | None,
    ablation: Ablation,
    limits: QueryLimits,
) -> PreparedInput:
    if kg is not None and ablation.use_kg:
        matches = k_query(trunk, kg, limits, model.config.tokenize_mode)
    else:
        matches = []
    tree = k_inject(trunk, matches, model.tokenizer)
    tree = fit_to_length(tree, model.config.max_seq_len)
    seq = flatten(tree)
    visible = visible_matrix(seq, tree)
    if not ablation.use_visible_matrix:
        visible = np.zeros_like(visible)
    n = len(seq)
    positions = np.arange(n) if not ablation.use_soft_position else np.asarray(seq.soft_pos)
    return PreparedInput(
        ids=seq.token_ids(),
        positions=positions.astype(np.int64),
        segments=np.asarray(seq.segments, dtype=np.int64),
        visible=visible,
        seq=seq,
        tree=tree,
    )
