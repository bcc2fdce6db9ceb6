"""Knowledge-enabled BERT-style encoder: triple injection, soft positions,
visible-matrix masked attention, fine-tuning, and checkpointing."""

from .config import Ablation, ModelConfig, TrainConfig
from .injector import NEG_INF, SentenceTree, FlatSequence, flatten, visible_matrix
from .kg import KnowledgeGraph, QueryLimits, Triple, k_query, load_kg
from .model import KBertModel, PreparedInput, prepare_input, prepare_tokens
from .heads import TaskHead, forward_task, init_head
from .trainer import evaluate, predict_tags, train

__version__ = "0.1.0"

__all__ = [
    "Ablation",
    "ModelConfig",
    "TrainConfig",
    "NEG_INF",
    "SentenceTree",
    "FlatSequence",
    "flatten",
    "visible_matrix",
    "KnowledgeGraph",
    "QueryLimits",
    "Triple",
    "k_query",
    "load_kg",
    "KBertModel",
    "PreparedInput",
    "prepare_input",
    "prepare_tokens",
    "TaskHead",
    "forward_task",
    "init_head",
    "evaluate",
    "predict_tags",
    "train",
    "__version__",
]
