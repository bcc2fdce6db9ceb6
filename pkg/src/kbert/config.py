"""Configuration dataclasses shared across the pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field

TOKENIZE_MODES = ("char", "whitespace")


@dataclass
class ModelConfig:
    """Shape and behaviour of the encoder.

    The defaults are a desk-scale configuration that trains in seconds on
    one CPU core; layers=12, heads=12, hidden=768 is equally valid.
    """

    layers: int = 2
    heads: int = 2
    hidden: int = 64
    d_ff: int = 256
    max_seq_len: int = 64
    dropout: float = 0.0
    tokenize_mode: str = "whitespace"
    # False: softmax((QK^T + M) / sqrt(d_k)); True: softmax(QK^T / sqrt(d_k) + M).
    # Indistinguishable in practice since the mask constant stays huge either way.
    mask_after_scale: bool = False

    @property
    def d_k(self) -> int:
        return self.hidden // self.heads

    def validate(self) -> None:
        if self.layers < 1 or self.heads < 1 or self.hidden < 1 or self.d_ff < 1:
            raise ValueError("layer/head/hidden/d_ff counts must be >= 1")
        if self.hidden % self.heads != 0:
            raise ValueError(
                f"hidden size {self.hidden} not divisible by head count {self.heads}"
            )
        if self.max_seq_len < 2:
            raise ValueError("max_seq_len must be >= 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.tokenize_mode not in TOKENIZE_MODES:
            raise ValueError(f"unknown tokenize mode {self.tokenize_mode!r}")


@dataclass
class Ablation:
    """Switches for the three pipeline stages that can be turned off.

    use_kg=False skips querying and injection entirely; use_soft_position=False
    feeds hard positions to the position-embedding table; use_visible_matrix=False
    replaces the visibility mask with all-zeros (everything attends to everything).
    """

    use_kg: bool = True
    use_soft_position: bool = True
    use_visible_matrix: bool = True


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 5
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    ablation: Ablation = field(default_factory=Ablation)

    def validate(self) -> None:
        if self.lr <= 0:
            raise ValueError("learning rate must be > 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
