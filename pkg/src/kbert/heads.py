"""Task heads over the encoder output and the single-example forward pass."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .config import Ablation
from .embedding import INIT_STD, embed_batch
from .encoder import encoder_forward, wrap_params
from .kg import KnowledgeGraph, QueryLimits
from .model import KBertModel, PreparedInput, prepare_input, prepare_tokens
from .tokenizer import SPECIAL_TOKENS

HEAD_KINDS = ("classify", "tag")


@dataclass
class TaskHead:
    """Linear projection from hidden size to class/tag count.

    ``classify`` reads only the [CLS] row; ``tag`` reads the trunk token
    rows (never branch rows) and emits one logit row per original token.
    """

    kind: str
    labels: list[str]
    params: dict[str, np.ndarray]  # head.w (hidden, C), head.b (C,)

    def __post_init__(self) -> None:
        if self.kind not in HEAD_KINDS:
            raise ValueError(f"unknown head kind {self.kind!r}")
        if len(self.labels) < 2:
            raise ValueError("a head needs at least 2 classes")

    @property
    def num_classes(self) -> int:
        return len(self.labels)


def init_head(kind: str, labels: list[str], hidden: int, seed: int) -> TaskHead:
    rng = np.random.default_rng(seed)
    params = {
        "head.w": rng.normal(0.0, INIT_STD, (hidden, len(labels))),
        "head.b": np.zeros(len(labels)),
    }
    return TaskHead(kind=kind, labels=list(labels), params=params)


def classify_logits(h_final: ad.Tensor, head_params: dict[str, ad.Tensor]) -> ad.Tensor:
    """(batch, n, H) -> (batch, C) from the [CLS] row at hard position 0."""
    cls_rows = ad.take_index(h_final, 0, axis=1)
    return ad.add(ad.matmul(cls_rows, head_params["head.w"]), head_params["head.b"])


def tag_logits(h_final: ad.Tensor, head_params: dict[str, ad.Tensor]) -> ad.Tensor:
    """(batch, n, H) -> (batch, n, C); callers select trunk positions."""
    return ad.add(ad.matmul(h_final, head_params["head.w"]), head_params["head.b"])


def word_positions(prep: PreparedInput) -> list[int]:
    """Hard positions of trunk tokens that carry a tag (specials excluded)."""
    return [
        i
        for i, (tp, tok) in enumerate(zip(prep.seq.trunk_pos, prep.seq.tokens))
        if tp >= 0 and tok.surface not in SPECIAL_TOKENS
    ]


def forward_task(
    model: KBertModel,
    head: TaskHead,
    text: str | list[str],
    kg: KnowledgeGraph | None,
    ablation: Ablation = Ablation(),
    limits: QueryLimits = QueryLimits(),
) -> np.ndarray:
    """Run the full pipeline on one input and return logits.

    ``classify`` returns (C,); ``tag`` returns (n_tokens, C) aligned with
    the original sentence tokens.  ``text`` may be a pre-split token list
    for tagging input.
    """
    if isinstance(text, list):
        prep = prepare_tokens(model, text, kg, ablation, limits)
    else:
        prep = prepare_input(model, text, kg, ablation, limits)
    params = wrap_params(model.params, trainable=False)
    head_params = wrap_params(head.params, trainable=False)
    h0 = embed_batch(
        params["embed.token"],
        params["embed.position"],
        params["embed.segment"],
        prep.ids[None, :],
        prep.positions[None, :],
        prep.segments[None, :],
    )
    final, _ = encoder_forward(h0, prep.visible[None], params, model.config)
    if head.kind == "classify":
        return classify_logits(final, head_params).data[0]
    logits = tag_logits(final, head_params).data[0]
    return logits[word_positions(prep)]
