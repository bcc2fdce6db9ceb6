"""Classification accuracy and exact-span BIO evaluation."""

from __future__ import annotations


def bio_spans(tags: list[str]) -> set[tuple[int, int, str]]:
    """Extract (start, end, type) spans from a BIO tag sequence.

    B-X always opens a span; I-X extends a running span of the same type,
    otherwise it opens a new one (conlleval-style fallback for stray I-).
    """
    spans: set[tuple[int, int, str]] = set()
    start, current = -1, ""

    def close(end: int) -> None:
        nonlocal start, current
        if start >= 0:
            spans.add((start, end, current))
        start, current = -1, ""

    for i, tag in enumerate(tags):
        if tag.startswith("B-"):
            close(i)
            start, current = i, tag[2:]
        elif tag.startswith("I-"):
            if start < 0 or tag[2:] != current:
                close(i)
                start, current = i, tag[2:]
        else:
            close(i)
    close(len(tags))
    return spans


def evaluate_ner(
    predictions: list[list[str]], gold: list[list[str]]
) -> tuple[float, float, float]:
    """Exact-span precision, recall, F1 over aligned tag sequences.

    Zero denominators yield 0 by convention.
    """
    if len(predictions) != len(gold):
        raise ValueError(f"{len(predictions)} predictions vs {len(gold)} gold sequences")
    n_pred = n_gold = n_correct = 0
    for i, (pred_tags, gold_tags) in enumerate(zip(predictions, gold)):
        if len(pred_tags) != len(gold_tags):
            raise ValueError(f"sequence {i}: length {len(pred_tags)} vs {len(gold_tags)}")
        pred_spans = bio_spans(pred_tags)
        gold_spans = bio_spans(gold_tags)
        n_pred += len(pred_spans)
        n_gold += len(gold_spans)
        n_correct += len(pred_spans & gold_spans)
    precision = n_correct / n_pred if n_pred else 0.0
    recall = n_correct / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def accuracy(predictions: list[int], gold: list[int]) -> float:
    if len(predictions) != len(gold):
        raise ValueError("prediction/gold length mismatch")
    if not gold:
        return 0.0
    return sum(p == g for p, g in zip(predictions, gold)) / len(gold)
