"""Dataset records and file loaders.

Classification files are UTF-8 TSV with ``text<TAB>label`` per line.
Tagging files are CoNLL-style: ``token<TAB>tag`` lines with blank lines
separating sentences.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path


@dataclass
class ExampleRecord:
    """One training/evaluation example.

    Classification: ``text`` plus a ``label`` name; heads map names to
    indices.  Tagging: aligned ``tokens`` and ``tags`` (label stays None).
    """

    text: str | None = None
    label: str | None = None
    tokens: list[str] | None = None
    tags: list[str] | None = None

    def validate(self, labels: list[str] | None = None) -> None:
        if self.tokens is not None:
            if not self.tokens or self.tags is None or len(self.tokens) != len(self.tags):
                raise ValueError("tagging example needs aligned non-empty tokens/tags")
        else:
            if not self.text:
                raise ValueError("classification example needs non-empty text")
            if not self.label:
                raise ValueError("classification example needs a label")
            if labels is not None and self.label not in labels:
                raise ValueError(f"label {self.label!r} not in {labels}")


def load_classification_tsv(path: str | Path) -> tuple[list[ExampleRecord], list[str]]:
    """Read text/label rows; returns examples plus the sorted label names."""
    rows: list[tuple[str, str]] = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        cols = raw.split("\t")
        if len(cols) != 2:
            raise ValueError(f"{path}:{lineno}: expected text<TAB>label, got {len(cols)} columns")
        rows.append((cols[0], cols[1]))
    labels = sorted({label for _, label in rows})
    examples = [ExampleRecord(text=text, label=label) for text, label in rows]
    return examples, labels


def load_conll(path: str | Path) -> tuple[list[ExampleRecord], list[str]]:
    """Read token/tag sentences; returns examples plus the sorted tag set."""
    examples: list[ExampleRecord] = []
    tokens: list[str] = []
    tags: list[str] = []

    def flush() -> None:
        if tokens:
            examples.append(ExampleRecord(tokens=list(tokens), tags=list(tags)))
            tokens.clear()
            tags.clear()

    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            flush()
            continue
        cols = raw.split("\t")
        if len(cols) != 2:
            raise ValueError(f"{path}:{lineno}: expected token<TAB>tag, got {len(cols)} columns")
        tokens.append(cols[0])
        tags.append(cols[1])
    flush()
    tag_set = sorted({t for ex in examples for t in ex.tags or []})
    return examples, tag_set
