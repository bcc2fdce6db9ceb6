"""Synthetic probe tasks that make knowledge injection measurable at desk scale.

Two generators:

* clean probe — the label is the category of the entity sitting at trunk
  slot 3, and that category is only reachable through KG branches.  Test
  entities never appear in training, so a model without the KG cannot beat
  chance, while branch-carrying models can read the category token.
  Entities drag 1-2 triples of varying length, so flattened (hard)
  positions of the label slot drift from sentence to sentence while soft
  positions stay fixed.
* misleading probe — the label keyword is plainly in the trunk, but every
  filler token carries triples whose tails are *wrong* keywords.  With the
  visible matrix off those fakes are indistinguishable from the real one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import Ablation, ModelConfig, TrainConfig
from .data import ExampleRecord
from .kg import KnowledgeGraph, Triple
from .model import KBertModel
from .heads import TaskHead, init_head
from .tokenizer import build_vocab
from .trainer import evaluate, train

N_CLASSES = 4
LABEL_SLOT = 3  # trunk position of the entity whose category is the label
N_SLOTS = 5


@dataclass
class ProbeData:
    """One generated world: datasets, its KG, and a vocabulary corpus."""

    train: list[ExampleRecord]
    test: list[ExampleRecord]
    kg: KnowledgeGraph
    labels: list[str]
    corpus: list[str] = field(default_factory=list)


def _round_robin_labels(n: int, rng: np.random.Generator) -> np.ndarray:
    """Exactly balanced class sequence in random order."""
    labels = np.arange(n) % N_CLASSES
    rng.shuffle(labels)
    return labels


def build_clean_probe(
    seed: int,
    n_train: int = 2000,
    n_test: int = 500,
    n_entities: int = 2500,
) -> ProbeData:
    # Entity pools are large enough that almost every entity is seen at most
    # once per split: the label is unreachable by memorizing entity tokens,
    # so only the branch route (category tail behind the anchor) remains.
    rng = np.random.default_rng(seed)
    junk_pool = [f"jx{i:02d}" for i in range(10)]
    triples: list[Triple] = []

    def make_entities(prefix: str) -> list[tuple[str, int]]:
        entities = []
        for i in range(n_entities):
            name = f"{prefix}{i:04d}"
            cls = i % N_CLASSES
            entities.append((name, cls))
            triples.append(Triple(name, "is_a", f"cat{cls}"))
            # 0-2 junk triples with 1-3 token tails vary each branch's length,
            # which spreads flattened positions without touching soft ones
            for _ in range(int(rng.integers(0, 3))):
                tail = " ".join(rng.choice(junk_pool, size=rng.integers(1, 4)))
                triples.append(Triple(name, "re1", tail))
        return entities

    train_entities = make_entities("tr")
    test_entities = make_entities("te")

    def make_split(pool: list[tuple[str, int]], n: int) -> list[ExampleRecord]:
        by_class: dict[int, list[str]] = {c: [] for c in range(N_CLASSES)}
        for name, cls in pool:
            by_class[cls].append(name)
        records = []
        for cls in _round_robin_labels(n, rng):
            slots = [pool[rng.integers(len(pool))][0] for _ in range(N_SLOTS)]
            slots[LABEL_SLOT - 1] = by_class[cls][rng.integers(len(by_class[cls]))]
            records.append(ExampleRecord(text=" ".join(slots), label=f"c{cls}"))
        return records

    train = make_split(train_entities, n_train)
    test = make_split(test_entities, n_test)
    kg = KnowledgeGraph(triples)
    corpus = [ex.text for ex in train + test]
    corpus += [f"{t.relation} {t.tail}" for t in triples]
    return ProbeData(train, test, kg, [f"c{i}" for i in range(N_CLASSES)], corpus)


def build_misleading_probe(
    seed: int,
    n_train: int = 2000,
    n_test: int = 500,
    n_fillers: int = 40,
) -> ProbeData:
    # Every filler drags two wrong-keyword triples, so a run that can see
    # branch tails from everywhere drowns the one real keyword in fakes.
    rng = np.random.default_rng(seed)
    fillers = [f"mf{i:02d}" for i in range(n_fillers)]
    triples: list[Triple] = []
    for name in fillers:
        for _ in range(2):
            triples.append(Triple(name, "hint", f"key{rng.integers(N_CLASSES)}"))

    def make_split(n: int) -> list[ExampleRecord]:
        records = []
        for cls in _round_robin_labels(n, rng):
            length = int(rng.integers(5, 9))
            tokens = [fillers[rng.integers(n_fillers)] for _ in range(length)]
            tokens[rng.integers(length)] = f"key{cls}"
            records.append(ExampleRecord(text=" ".join(tokens), label=f"c{cls}"))
        return records

    train = make_split(n_train)
    test = make_split(n_test)
    kg = KnowledgeGraph(triples)
    corpus = [ex.text for ex in train + test]
    corpus += [f"{t.relation} {t.tail}" for t in triples]
    return ProbeData(train, test, kg, [f"c{i}" for i in range(N_CLASSES)], corpus)


def probe_model(
    data: ProbeData, seed: int, config: ModelConfig | None = None
) -> tuple[KBertModel, TaskHead]:
    """Fresh model + classification head over the probe's vocabulary."""
    config = config or ModelConfig()
    vocab = build_vocab(data.corpus, min_count=1, mode=config.tokenize_mode)
    model = KBertModel.init(config, vocab, seed=seed + 101)
    head = init_head("classify", data.labels, config.hidden, seed=seed + 211)
    return model, head


def run_cell(
    data: ProbeData,
    ablation: Ablation,
    seed: int,
    epochs: int = 3,
    lr: float = 1e-3,
    batch_size: int = 32,
    config: ModelConfig | None = None,
) -> dict:
    """Train one (dataset, ablation) cell from scratch and score the test set."""
    model, head = probe_model(data, seed, config)
    cfg = TrainConfig(
        lr=lr, batch_size=batch_size, epochs=epochs, seed=seed + 307, ablation=ablation
    )
    _, history = train(model, head, data.train, None, data.kg, cfg)
    score = evaluate(model, head, data.test, data.kg, ablation)
    return {
        "accuracy": score["accuracy"],
        "final_train_loss": history[-1]["train_loss"],
        "history": history,
    }


CELLS = {
    "full": Ablation(),
    "no_visible_matrix": Ablation(use_visible_matrix=False),
    "no_kg": Ablation(use_kg=False),
    "no_kg_no_visible_matrix": Ablation(use_kg=False, use_visible_matrix=False),
    "no_soft_position": Ablation(use_soft_position=False),
}

# the 2x2 kg x visible-matrix table reported by the probe command
DEFAULT_CELLS = ("full", "no_visible_matrix", "no_kg", "no_kg_no_visible_matrix")


def run_probe_experiment(
    misleading: bool = False,
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4),
    n_train: int = 2000,
    n_test: int = 500,
    epochs: int = 3,
    cells: tuple[str, ...] = DEFAULT_CELLS,
) -> list[dict]:
    """All requested ablation cells across seeds; one result row per run."""
    rows = []
    for seed in seeds:
        build = build_misleading_probe if misleading else build_clean_probe
        data = build(seed, n_train=n_train, n_test=n_test)
        for name in cells:
            result = run_cell(data, CELLS[name], seed, epochs=epochs)
            rows.append(
                {
                    "probe": "misleading" if misleading else "clean",
                    "cell": name,
                    "seed": seed,
                    "accuracy": result["accuracy"],
                    "final_train_loss": result["final_train_loss"],
                }
            )
    return rows


def summarize(rows: list[dict]) -> dict[str, float]:
    """Mean test accuracy per cell name."""
    acc: dict[str, list[float]] = {}
    for row in rows:
        acc.setdefault(row["cell"], []).append(row["accuracy"])
    return {name: float(np.mean(vals)) for name, vals in acc.items()}
