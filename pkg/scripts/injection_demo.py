#!/usr/bin/env python3
"""Walk one sentence through matching, injection, flattening, and masking.

Prints the sentence tree, the soft-position row, and a 0/1 rendering of
the visible matrix for the bundled sample KG.

Usage:
    python scripts/injection_demo.py [--text SENTENCE] [--kg PATH]
"""

from __future__ import annotations

import argparse
from pathlib import Path

from kbert.config import ModelConfig
from kbert.kg import QueryLimits, k_query, load_kg
from kbert.injector import build_trunk, fit_to_length, flatten, k_inject, visible_matrix
from kbert.tokenizer import Tokenizer, build_vocab

DEFAULT_KG = Path(__file__).resolve().parent.parent / "data" / "sample_kg_en.tsv"


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--text", default="Tim Cook is visiting Beijing now")
    ap.add_argument("--kg", default=str(DEFAULT_KG))
    args = ap.parse_args()

    config = ModelConfig()
    kg = load_kg(args.kg)
    corpus = [args.text] + [f"{t.relation} {t.tail}" for t in kg.triples]
    vocab = build_vocab(corpus, min_count=1, mode=config.tokenize_mode)
    tokenizer = Tokenizer(vocab, config.tokenize_mode)

    trunk = build_trunk(tokenizer, args.text)
    matches = k_query(trunk, kg, QueryLimits(), config.tokenize_mode)
    print(f"input: {args.text}")
    print(f"matches: {[(m.entity, m.start, m.end) for m in matches]}")
    tree = fit_to_length(k_inject(trunk, matches, tokenizer), config.max_seq_len)
    for b in tree.branches:
        anchor = " ".join(t.surface for t in tree.trunk[b.anchor_start : b.anchor_end])
        rel = " ".join(t.surface for t in b.relation)
        tail = " ".join(t.surface for t in b.tail)
        print(f"  branch at {anchor!r}: {rel} -> {tail}")
    seq = flatten(tree)
    m = visible_matrix(seq, tree)

    width = max(len(t.surface) for t in seq.tokens) + 1
    print("\ntoken".ljust(width + 1), "hard soft  visibility row (1=visible)")
    for i, (tok, soft) in enumerate(zip(seq.tokens, seq.soft_pos)):
        row = "".join("1" if v == 0.0 else "." for v in m[i])
        print(tok.surface.ljust(width), f"{i:4d} {soft:4d}  {row}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
