"""Knowledge-graph triple store and in-sentence entity querying.

Triples are (head, relation, tail) strings loaded from a UTF-8 TSV file,
indexed by head entity name.  Querying scans a token sequence left to right
and greedily takes the longest entity name starting at each position, so
matched spans never overlap.  Matching is over surface strings: windows of
token surfaces are re-joined (with a space in whitespace mode, directly in
char mode) and compared against head names, case-insensitively in
whitespace mode and case-sensitively in char mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .tokenizer import SPECIAL_TOKENS, Token, split_text

MIN_ENTITY_LEN = 2


class KgFormatError(ValueError):
    """Raised for a KG file line that is not exactly three tab-separated columns."""


@dataclass(frozen=True)
class Triple:
    head: str
    relation: str
    tail: str

    def validate(self) -> None:
        if not (self.head and self.relation and self.tail):
            raise ValueError(f"triple has an empty field: {self}")
        if len(self.head) < MIN_ENTITY_LEN or len(self.tail) < MIN_ENTITY_LEN:
            raise ValueError(f"entity name shorter than {MIN_ENTITY_LEN}: {self}")
        for part in (self.head, self.relation, self.tail):
            if "\t" in part or "\n" in part:
                raise ValueError(f"triple field contains tab/newline: {self}")


def _passes_refinement(head: str, relation: str, tail: str) -> bool:
    try:
        Triple(head, relation, tail).validate()
    except ValueError:
        return False
    return True


@dataclass(frozen=True)
class QueryLimits:
    """Caps keeping injected sequences bounded."""

    max_triples_per_entity: int = 2
    max_entities_per_sentence: int = 8


@dataclass
class EntityMatch:
    """One matched entity occurrence: trunk span [start, end) plus its triples."""

    start: int
    end: int
    entity: str
    triples: list[Triple]


class KnowledgeGraph:
    """Immutable triple collection with a head-name index.

    ``dropped`` counts input rows discarded by the refinement rules
    (entity name shorter than 2 characters, tab/newline in a field, or an
    empty field).
    """

    def __init__(self, triples: list[Triple], dropped: int = 0):
        for t in triples:
            t.validate()
        self.triples = list(triples)
        self.dropped = dropped
        self.index: dict[str, list[Triple]] = {}
        for t in self.triples:
            self.index.setdefault(t.head, []).append(t)
        self._matchers: dict[str, _Matcher] = {}

    @property
    def entity_count(self) -> int:
        return len(self.index)

    def matcher(self, mode: str) -> "_Matcher":
        if mode not in self._matchers:
            self._matchers[mode] = _Matcher(self, mode)
        return self._matchers[mode]


@dataclass
class _Matcher:
    """Head-name lookup keyed by normalized surface, built once per mode."""

    kg: KnowledgeGraph
    mode: str
    by_key: dict[str, str] = field(default_factory=dict)
    max_tokens: int = 0

    def __post_init__(self) -> None:
        for head in self.kg.index:
            n_tokens = len(split_text(head, self.mode))
            if n_tokens == 0:
                continue
            key = self.normalize(split_text(head, self.mode))
            # First head in file order wins if two names normalize identically.
            self.by_key.setdefault(key, head)
            self.max_tokens = max(self.max_tokens, n_tokens)

    def normalize(self, surfaces: list[str]) -> str:
        joined = " ".join(surfaces) if self.mode == "whitespace" else "".join(surfaces)
        return joined.lower() if self.mode == "whitespace" else joined


def load_kg(path: str | Path) -> KnowledgeGraph:
    """Load a TSV file of head<TAB>relation<TAB>tail rows.

    ``#``-prefixed comment lines and blank lines are skipped; rows failing
    refinement are dropped and counted; any other column count raises
    KgFormatError with the line number.
    """
    path = Path(path)
    triples: list[Triple] = []
    dropped = 0
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise KgFormatError(
                    f"{path}:{lineno}: expected 3 tab-separated columns, got {len(cols)}"
                )
            head, relation, tail = cols
            if _passes_refinement(head, relation, tail):
                triples.append(Triple(head, relation, tail))
            else:
                dropped += 1
    return KnowledgeGraph(triples, dropped=dropped)


def k_query(
    sentence_tokens: list[Token],
    kg: KnowledgeGraph,
    limits: QueryLimits = QueryLimits(),
    mode: str = "whitespace",
) -> list[EntityMatch]:
    """Find entity occurrences in a token sequence and fetch their triples.

    Greedy longest-match, left to right, non-overlapping.  Windows touching
    a special token never match.  Per occurrence at most
    ``limits.max_triples_per_entity`` triples are returned, in KG file
    order; at most ``limits.max_entities_per_sentence`` matches overall.
    """
    if limits.max_triples_per_entity < 1:
        raise ValueError("max_triples_per_entity must be >= 1")
    matcher = kg.matcher(mode)
    matches: list[EntityMatch] = []
    special = [t.surface in SPECIAL_TOKENS for t in sentence_tokens]
    n = len(sentence_tokens)
    i = 0
    while i < n and len(matches) < limits.max_entities_per_sentence:
        if special[i]:
            i += 1
            continue
        hit = None
        for width in range(min(matcher.max_tokens, n - i), 0, -1):
            if any(special[i : i + width]):
                continue
            key = matcher.normalize([t.surface for t in sentence_tokens[i : i + width]])
            entity = matcher.by_key.get(key)
            if entity is not None:
                hit = (width, entity)
                break
        if hit is None:
            i += 1
            continue
        width, entity = hit
        triples = kg.index[entity][: limits.max_triples_per_entity]
        matches.append(EntityMatch(start=i, end=i + width, entity=entity, triples=triples))
        i += width
    return matches
