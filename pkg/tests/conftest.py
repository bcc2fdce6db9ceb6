"""Shared fixtures and the acceptance-criteria reporting hook."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from kbert.config import ModelConfig
from kbert.kg import KnowledgeGraph, Triple
from kbert.tokenizer import Tokenizer, build_vocab

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
GOLDEN_DIR = Path(__file__).resolve().parent / "golden"

# filled in by test_acceptance.py, printed after the run
ACCEPTANCE_RESULTS: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        status, desc = ACCEPTANCE_RESULTS[num]
        line = f"criterion {num:2d} {status}  {desc}"
        terminalreporter.write_line(line)


@pytest.fixture
def city_kg() -> KnowledgeGraph:
    return KnowledgeGraph(
        [
            Triple("Cook", "CEO", "Apple"),
            Triple("Beijing", "capital", "China"),
            Triple("Beijing", "is_a", "City"),
        ]
    )


@pytest.fixture
def city_tokenizer() -> Tokenizer:
    corpus = [
        "Tim Cook is visiting Beijing now",
        "CEO Apple capital China is_a City",
    ]
    return Tokenizer(build_vocab(corpus, min_count=1), "whitespace")


@pytest.fixture
def small_config() -> ModelConfig:
    return ModelConfig(layers=2, heads=2, hidden=16, d_ff=32, max_seq_len=32)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
