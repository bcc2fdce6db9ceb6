"""Token + soft-position + segment embedding of a flattened sequence."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .config import ModelConfig
from .injector import FlatSequence

INIT_STD = 0.02


@dataclass
class EmbeddingTables:
    """Trainable lookup tables; rows are hidden-size vectors."""

    token: np.ndarray  # (vocab, H)
    position: np.ndarray  # (max_soft_pos, H)
    segment: np.ndarray  # (2, H)

    @property
    def hidden(self) -> int:
        return self.token.shape[1]

    @property
    def max_soft_pos(self) -> int:
        return self.position.shape[0]


def init_tables(config: ModelConfig, vocab_size: int, seed: int) -> EmbeddingTables:
    """Seeded normal(0, 0.02^2) initialization; position table covers max_seq_len."""
    config.validate()
    rng = np.random.default_rng(seed)
    return EmbeddingTables(
        token=rng.normal(0.0, INIT_STD, (vocab_size, config.hidden)),
        position=rng.normal(0.0, INIT_STD, (config.max_seq_len, config.hidden)),
        segment=rng.normal(0.0, INIT_STD, (2, config.hidden)),
    )


def embed(seq: FlatSequence, tables: EmbeddingTables) -> np.ndarray:
    """Sum the three lookups per element, ordered by hard position.

    Hard position influences only the row order of the result; two elements
    with the same (token id, soft position, segment) embed identically.
    """
    soft = np.asarray(seq.soft_pos)
    if soft.size and soft.max() >= tables.max_soft_pos:
        raise ValueError(
            f"position overflow: soft position {soft.max()} >= table size {tables.max_soft_pos}"
        )
    ids = seq.token_ids()
    seg = np.asarray(seq.segments)
    return tables.token[ids] + tables.position[soft] + tables.segment[seg]


def embed_batch(
    token_t: ad.Tensor,
    position_t: ad.Tensor,
    segment_t: ad.Tensor,
    ids: np.ndarray,
    soft: np.ndarray,
    seg: np.ndarray,
) -> ad.Tensor:
    """Differentiable batched version of :func:`embed` over (batch, n) index arrays.

    Performs the same three lookups and the same left-to-right addition, so
    its values match ``embed`` bitwise for a single sequence.
    """
    if soft.size and soft.max() >= position_t.data.shape[0]:
        raise ValueError(
            f"position overflow: soft position {soft.max()} >= table size {position_t.data.shape[0]}"
        )
    return ad.add(
        ad.add(ad.embedding(token_t, ids), ad.embedding(position_t, soft)),
        ad.embedding(segment_t, seg),
    )
