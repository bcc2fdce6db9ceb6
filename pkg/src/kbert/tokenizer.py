"""Vocabulary handling and whitespace/character tokenization.

A vocabulary is an ordered list of unique token strings with dense 0-based
ids; the first five ids are always the special tokens [PAD], [UNK], [CLS],
[SEP], [MASK] in that order.  Word-level input splits on whitespace runs,
character-level input splits into unicode scalars with whitespace dropped.
Sub-word segmentation is deliberately out of scope.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP, MASK)
PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = range(5)


@dataclass(frozen=True)
class Token:
    """A vocabulary id paired with the surface string it came from.

    The surface is kept even for [UNK]-mapped tokens so that entity matching
    and detokenization can work on the original text.
    """

    id: int
    surface: str


def split_text(text: str, mode: str) -> list[str]:
    """Split raw text into token surfaces without consulting a vocabulary."""
    if mode == "whitespace":
        return text.split()
    if mode == "char":
        return [ch for ch in text if not ch.isspace()]
    raise ValueError(f"unknown tokenize mode {mode!r}")


class Vocabulary:
    """Immutable token-string <-> id mapping with reserved special ids."""

    def __init__(self, tokens: list[str]):
        if tuple(tokens[:5]) != SPECIAL_TOKENS:
            raise ValueError(
                "vocabulary must start with the special tokens "
                f"{list(SPECIAL_TOKENS)}"
            )
        self._tokens = list(tokens)
        self._index = {tok: i for i, tok in enumerate(self._tokens)}
        if len(self._index) != len(self._tokens):
            raise ValueError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, surface: str) -> bool:
        return surface in self._index

    def lookup(self, surface: str) -> int:
        """Id of a surface string; unknown surfaces map to [UNK]."""
        return self._index.get(surface, UNK_ID)

    def to_string(self, token_id: int) -> str:
        return self._tokens[token_id]

    @property
    def tokens(self) -> list[str]:
        return list(self._tokens)

    def save(self, path: str | Path) -> None:
        """One token per line, line number == id."""
        Path(path).write_text("\n".join(self._tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(lines)


def build_vocab(corpus: list[str], min_count: int, mode: str = "whitespace") -> Vocabulary:
    """Build a vocabulary from raw text.

    Keeps every token occurring at least ``min_count`` times, ordered by
    descending count with lexicographic tie-breaks, after the five specials.
    """
    if not corpus:
        raise ValueError("empty corpus")
    counts: Counter[str] = Counter()
    for text in corpus:
        counts.update(split_text(text, mode))
    kept = [
        tok
        for tok, c in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        if c >= min_count and tok not in SPECIAL_TOKENS
    ]
    return Vocabulary(list(SPECIAL_TOKENS) + kept)


class Tokenizer:
    """Text <-> token-sequence conversion over a fixed vocabulary.

    The mode is fixed per instance; tokenization is pure and deterministic.
    """

    def __init__(self, vocab: Vocabulary, mode: str = "whitespace"):
        if mode not in ("char", "whitespace"):
            raise ValueError(f"unknown tokenize mode {mode!r}")
        self.vocab = vocab
        self.mode = mode

    def tokenize(self, text: str) -> list[Token]:
        return [Token(self.vocab.lookup(s), s) for s in split_text(text, self.mode)]

    def detokenize(self, tokens: list[Token]) -> str:
        joiner = " " if self.mode == "whitespace" else ""
        return joiner.join(t.surface for t in tokens)

    def special(self, surface: str) -> Token:
        if surface not in SPECIAL_TOKENS:
            raise ValueError(f"{surface!r} is not a special token")
        return Token(self.vocab.lookup(surface), surface)
