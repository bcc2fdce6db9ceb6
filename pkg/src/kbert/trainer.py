"""Fine-tuning loop: batch encoding, Adam updates, and evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .config import Ablation, TrainConfig
from .data import ExampleRecord
from .embedding import embed_batch
from .encoder import encoder_forward, wrap_params
from .heads import TaskHead, classify_logits, forward_task, tag_logits, word_positions
from .injector import NEG_INF
from .kg import KnowledgeGraph, QueryLimits
from .metrics import accuracy, evaluate_ner
from .model import KBertModel, prepare_input, prepare_tokens
from .tokenizer import PAD_ID


class TrainingError(RuntimeError):
    """Raised when optimization produces a non-finite loss."""


@dataclass
class EncodedExample:
    """One example after the injection pipeline, ready to collate."""

    ids: np.ndarray
    positions: np.ndarray
    segments: np.ndarray
    visible: np.ndarray
    label: int | None = None  # classify
    tag_ids: np.ndarray | None = None  # tag: (n,) indices, 0 where unweighted
    tag_weights: np.ndarray | None = None  # tag: (n,) 1.0 at tagged positions
    word_pos: list[int] = field(default_factory=list)
    n_tokens: int = 0  # original sentence length (tag)

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class Batch:
    ids: np.ndarray  # (b, m)
    positions: np.ndarray
    segments: np.ndarray
    visible: np.ndarray  # (b, m, m)
    labels: np.ndarray | None = None  # (b,)
    tag_ids: np.ndarray | None = None  # (b, m)
    tag_weights: np.ndarray | None = None


def _label_index(head: TaskHead) -> dict[str, int]:
    return {name: i for i, name in enumerate(head.labels)}


def encode_example(
    model: KBertModel,
    head: TaskHead,
    ex: ExampleRecord,
    kg: KnowledgeGraph | None,
    ablation: Ablation = Ablation(),
    limits: QueryLimits = QueryLimits(),
) -> EncodedExample:
    """Run the injection pipeline once and attach gold targets."""
    index = _label_index(head)
    if head.kind == "classify":
        assert ex.text is not None
        prep = prepare_input(model, ex.text, kg, ablation, limits)
        if ex.label is not None and ex.label not in index:
            raise ValueError(f"unknown label {ex.label!r}; head knows {head.labels}")
        label = index[ex.label] if ex.label is not None else None
        return EncodedExample(
            ids=prep.ids,
            positions=prep.positions,
            segments=prep.segments,
            visible=prep.visible,
            label=label,
        )

    assert ex.tokens is not None
    prep = prepare_tokens(model, ex.tokens, kg, ablation, limits)
    n = len(prep.ids)
    tag_ids = np.zeros(n, dtype=np.int64)
    weights = np.zeros(n, dtype=np.float64)
    positions = word_positions(prep)
    if ex.tags is not None:
        for i in positions:
            # trunk position t maps to sentence token t-1 ([CLS] sits at 0)
            tag = ex.tags[prep.seq.trunk_pos[i] - 1]
            if tag not in index:
                raise ValueError(f"unknown tag {tag!r}; head knows {head.labels}")
            tag_ids[i] = index[tag]
            weights[i] = 1.0
    return EncodedExample(
        ids=prep.ids,
        positions=prep.positions,
        segments=prep.segments,
        visible=prep.visible,
        tag_ids=tag_ids,
        tag_weights=weights,
        word_pos=positions,
        n_tokens=len(ex.tokens),
    )


def collate(batch: list[EncodedExample]) -> Batch:
    """Pad to a common length.

    Pad rows of the visible matrix keep a 0 on the diagonal (a row that is
    all -1e9 would soften into a uniform distribution instead of zeros);
    pad columns stay invisible to real tokens, so padding never leaks.
    """
    b = len(batch)
    m = max(len(e) for e in batch)
    ids = np.full((b, m), PAD_ID, dtype=np.int64)
    positions = np.zeros((b, m), dtype=np.int64)
    segments = np.zeros((b, m), dtype=np.int64)
    visible = np.full((b, m, m), NEG_INF, dtype=np.float64)
    visible[:, np.arange(m), np.arange(m)] = 0.0
    has_labels = all(e.label is not None for e in batch)
    labels = np.zeros(b, dtype=np.int64) if has_labels else None
    has_tags = all(e.tag_ids is not None for e in batch)
    tag_ids = np.zeros((b, m), dtype=np.int64) if has_tags else None
    tag_weights = np.zeros((b, m), dtype=np.float64) if has_tags else None
    for i, e in enumerate(batch):
        n = len(e)
        ids[i, :n] = e.ids
        positions[i, :n] = e.positions
        segments[i, :n] = e.segments
        visible[i, :n, :n] = e.visible
        if has_labels:
            labels[i] = e.label
        if has_tags:
            tag_ids[i, :n] = e.tag_ids
            tag_weights[i, :n] = e.tag_weights
    return Batch(ids, positions, segments, visible, labels, tag_ids, tag_weights)


def forward_batch(
    model: KBertModel,
    head: TaskHead,
    batch: Batch,
    trainable: bool,
    rng: np.random.Generator | None = None,
) -> tuple[ad.Tensor | None, ad.Tensor, dict[str, ad.Tensor], dict[str, ad.Tensor]]:
    """Build the graph for one batch; loss is None when targets are absent."""
    params = wrap_params(model.params, trainable)
    head_params = wrap_params(head.params, trainable)
    h0 = embed_batch(
        params["embed.token"],
        params["embed.position"],
        params["embed.segment"],
        batch.ids,
        batch.positions,
        batch.segments,
    )
    drop_rng = rng if trainable and model.config.dropout > 0 else None
    if drop_rng is not None:
        h0 = ad.dropout(h0, model.config.dropout, drop_rng)
    final, _ = encoder_forward(h0, batch.visible, params, model.config, drop_rng)
    if head.kind == "classify":
        logits = classify_logits(final, head_params)
        loss = ad.cross_entropy(logits, batch.labels) if batch.labels is not None else None
    else:
        logits = tag_logits(final, head_params)
        loss = (
            ad.cross_entropy(logits, batch.tag_ids, batch.tag_weights)
            if batch.tag_ids is not None and batch.tag_weights is not None
            else None
        )
    return loss, logits, params, head_params


@dataclass
class AdamState:
    """First/second moment accumulators keyed like the parameter dicts."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0


def adam_init(params: dict[str, np.ndarray]) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(v) for k, v in params.items()},
        v={k: np.zeros_like(v) for k, v in params.items()},
    )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray | None],
    state: AdamState,
    cfg: TrainConfig,
) -> None:
    """One in-place update; parameters absent from ``grads`` are skipped."""
    state.t += 1
    bc1 = 1.0 - cfg.beta1**state.t
    bc2 = 1.0 - cfg.beta2**state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        p -= cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)


def train(
    model: KBertModel,
    head: TaskHead,
    train_data: list[ExampleRecord],
    dev_data: list[ExampleRecord] | None,
    kg: KnowledgeGraph | None,
    cfg: TrainConfig,
    limits: QueryLimits = QueryLimits(),
) -> tuple[KBertModel, list[dict[str, float]]]:
    """Fine-tune in place; returns the model and one metrics dict per epoch."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    encoded = [
        encode_example(model, head, ex, kg, cfg.ablation, limits) for ex in train_data
    ]
    if not encoded:
        raise ValueError("empty training set")
    all_params = {**model.params, **head.params}
    state = adam_init(all_params)
    history: list[dict[str, float]] = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(encoded))
        losses: list[float] = []
        for start in range(0, len(order), cfg.batch_size):
            chunk = [encoded[i] for i in order[start : start + cfg.batch_size]]
            batch = collate(chunk)
            loss, _, params, head_params = forward_batch(model, head, batch, True, rng)
            assert loss is not None
            if not np.isfinite(loss.data):
                raise TrainingError(
                    f"non-finite loss {float(loss.data)} at epoch {epoch}, "
                    f"step {state.t + 1}"
                )
            loss.backward()
            grads = {name: t.grad for name, t in {**params, **head_params}.items()}
            adam_step(all_params, grads, state, cfg)
            losses.append(float(loss.data))
        row: dict[str, float] = {
            "epoch": float(epoch),
            "train_loss": float(np.mean(losses)),
        }
        if dev_data:
            for k, val in evaluate(model, head, dev_data, kg, cfg.ablation, limits).items():
                row[f"dev_{k}"] = val
        history.append(row)
    return model, history


def evaluate(
    model: KBertModel,
    head: TaskHead,
    data: list[ExampleRecord],
    kg: KnowledgeGraph | None,
    ablation: Ablation = Ablation(),
    limits: QueryLimits = QueryLimits(),
    batch_size: int = 64,
) -> dict[str, float]:
    """Accuracy for classification, span precision/recall/F1 for tagging."""
    if head.kind == "classify":
        index = _label_index(head)
        encoded = [encode_example(model, head, ex, kg, ablation, limits) for ex in data]
        preds: list[int] = []
        for start in range(0, len(encoded), batch_size):
            batch = collate(encoded[start : start + batch_size])
            _, logits, _, _ = forward_batch(model, head, batch, False)
            preds.extend(int(i) for i in np.argmax(logits.data, axis=-1))
        gold = [index[ex.label] for ex in data]  # type: ignore[index]
        return {"accuracy": accuracy(preds, gold)}

    predictions = []
    gold_tags = []
    for ex in data:
        assert ex.tokens is not None and ex.tags is not None
        predictions.append(predict_tags(model, head, ex.tokens, kg, ablation, limits))
        gold_tags.append(ex.tags)
    p, r, f1 = evaluate_ner(predictions, gold_tags)
    return {"precision": p, "recall": r, "f1": f1}


def predict_tags(
    model: KBertModel,
    head: TaskHead,
    tokens: list[str],
    kg: KnowledgeGraph | None,
    ablation: Ablation = Ablation(),
    limits: QueryLimits = QueryLimits(),
) -> list[str]:
    """Tag one sentence; tokens lost to length trimming fall back to "O"."""
    logits = forward_task(model, head, tokens, kg, ablation, limits)
    tags = [head.labels[int(i)] for i in np.argmax(logits, axis=-1)]
    filler = "O" if "O" in head.labels else head.labels[0]
    tags += [filler] * (len(tokens) - len(tags))
    return tags[: len(tokens)]
