"""Sentence-tree construction, flattening, and the visible matrix.

Querying hands back entity matches; injection hangs one depth-1 branch per
(match, triple) pair off the matched trunk span.  Flattening emits trunk
tokens in order, splicing each branch in right after the last token of its
anchor.  Every emitted element carries two position indices:

  hard position  -- its index in emission order, used only for matrix and
                    row addressing;
  soft position  -- the structural index used for position embeddings.
                    Branch tokens continue counting from their anchor, and
                    the trunk token after the anchor reuses the same next
                    index, so distinct tokens can share a soft position.

The visible matrix is an additive n-by-n mask over hard positions: 0 where
two tokens may attend to each other, a large negative constant where not.
Trunk tokens all see each other; a branch token sees its own branch and the
trunk tokens of its anchor span; nothing else.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kg import EntityMatch
from .tokenizer import SEP, Token, Tokenizer

# Finite stand-in for -inf: keeps softmax free of NaNs while still driving
# masked attention weights to exact zero after exponentiation.
NEG_INF = -1.0e9


@dataclass(frozen=True)
class Branch:
    """A depth-1 branch: relation+tail tokens hanging off a trunk span."""

    anchor_start: int
    anchor_end: int  # exclusive
    relation: tuple[Token, ...]
    tail: tuple[Token, ...]

    @property
    def tokens(self) -> tuple[Token, ...]:
        return self.relation + self.tail


@dataclass
class SentenceTree:
    """Trunk tokens plus branches sorted by anchor start."""

    trunk: list[Token]
    branches: list[Branch]

    def validate(self) -> None:
        n = len(self.trunk)
        starts = [b.anchor_start for b in self.branches]
        if starts != sorted(starts):
            raise ValueError("branches not sorted by anchor start")
        for b in self.branches:
            if not (0 <= b.anchor_start < b.anchor_end <= n):
                raise ValueError(f"anchor span [{b.anchor_start}, {b.anchor_end}) outside trunk")
            if not b.tokens:
                raise ValueError("empty branch")


@dataclass
class FlatSequence:
    """Flattened emission of a sentence tree; hard position == list index."""

    tokens: list[Token]
    soft_pos: list[int]
    segments: list[int]  # 0 = A, 1 = B
    branch_ids: list[int]  # 0 = trunk, k > 0 = k-th branch
    trunk_pos: list[int]  # index into the trunk, or -1 for branch tokens

    def __len__(self) -> int:
        return len(self.tokens)

    def token_ids(self) -> np.ndarray:
        return np.array([t.id for t in self.tokens], dtype=np.int64)


def build_trunk(
    tokenizer: Tokenizer, text: str, text_b: str | None = None
) -> list[Token]:
    """[CLS] + tokens, with [SEP] + second-sentence tokens when paired."""
    trunk = [tokenizer.special("[CLS]")] + tokenizer.tokenize(text)
    if text_b is not None:
        trunk += [tokenizer.special("[SEP]")] + tokenizer.tokenize(text_b)
    return trunk


def k_inject(
    sentence_tokens: list[Token],
    matches: list[EntityMatch],
    tokenizer: Tokenizer,
) -> SentenceTree:
    """Attach one branch per (match, triple) pair to the sentence.

    Relation and tail strings are tokenized with the model's tokenizer.
    The trunk is taken as given; matches must be disjoint.
    """
    ordered = sorted(matches, key=lambda m: m.start)
    prev_end = 0
    for m in ordered:
        if m.start < prev_end:
            raise ValueError("overlapping entity spans")
        prev_end = m.end
    branches = [
        Branch(
            anchor_start=m.start,
            anchor_end=m.end,
            relation=tuple(tokenizer.tokenize(t.relation)),
            tail=tuple(tokenizer.tokenize(t.tail)),
        )
        for m in ordered
        for t in m.triples
    ]
    tree = SentenceTree(trunk=list(sentence_tokens), branches=branches)
    tree.validate()
    return tree


def fit_to_length(tree: SentenceTree, max_seq_len: int) -> SentenceTree:
    """Shrink a tree until its flattened length fits.

    Branches are dropped whole, last-anchored first; the trunk is truncated
    only once no branches remain.
    """
    branches = list(tree.branches)
    total = len(tree.trunk) + sum(len(b.tokens) for b in branches)
    while total > max_seq_len and branches:
        victim = max(range(len(branches)), key=lambda i: (branches[i].anchor_start, i))
        total -= len(branches[victim].tokens)
        branches.pop(victim)
    trunk = tree.trunk
    if total > max_seq_len:
        trunk = trunk[:max_seq_len]
    return SentenceTree(trunk=trunk, branches=branches)


def flatten(tree: SentenceTree) -> FlatSequence:
    """Emit the tree as a flat sequence with soft positions and segments.

    Trunk token t has soft position t.  A branch anchored at a span ending
    with soft position p emits its tokens at p+1, p+2, ...; each branch on
    the same anchor restarts at p+1.  Segment A covers everything up to and
    including the first [SEP], B everything after; branch tokens inherit
    their anchor's segment.
    """
    tree.validate()
    sep_index = next(
        (i for i, t in enumerate(tree.trunk) if t.surface == SEP), len(tree.trunk)
    )
    by_attach: dict[int, list[int]] = {}
    for k, b in enumerate(tree.branches):
        by_attach.setdefault(b.anchor_end - 1, []).append(k)

    tokens: list[Token] = []
    soft: list[int] = []
    segments: list[int] = []
    branch_ids: list[int] = []
    trunk_pos: list[int] = []

    for t, tok in enumerate(tree.trunk):
        seg = 0 if t <= sep_index else 1
        tokens.append(tok)
        soft.append(t)
        segments.append(seg)
        branch_ids.append(0)
        trunk_pos.append(t)
        for k in by_attach.get(t, ()):
            branch = tree.branches[k]
            for offset, btok in enumerate(branch.tokens):
                tokens.append(btok)
                soft.append(t + 1 + offset)
                segments.append(seg)
                branch_ids.append(k + 1)
                trunk_pos.append(-1)
    return FlatSequence(tokens, soft, segments, branch_ids, trunk_pos)


def visible_matrix(seq: FlatSequence, tree: SentenceTree) -> np.ndarray:
    """Additive mask over hard positions: 0 = visible, NEG_INF = blocked.

    Visible pairs: trunk with trunk, same branch with itself, and a branch
    token with the trunk tokens of its own anchor span.
    """
    n = len(seq)
    bid = np.array(seq.branch_ids)
    tpos = np.array(seq.trunk_pos)
    trunk = bid == 0
    visible = (trunk[:, None] & trunk[None, :]) | (bid[:, None] == bid[None, :])
    for k, branch in enumerate(tree.branches):
        in_branch = bid == k + 1
        in_anchor = trunk & (tpos >= branch.anchor_start) & (tpos < branch.anchor_end)
        visible |= in_branch[:, None] & in_anchor[None, :]
        visible |= in_anchor[:, None] & in_branch[None, :]
    return np.where(visible, 0.0, NEG_INF)
