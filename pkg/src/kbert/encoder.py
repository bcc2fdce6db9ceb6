"""Mask-self-attention transformer encoder.

Per block: multi-head self-attention whose pre-softmax scores receive the
additive visible matrix, residual + layer norm, then a GELU feed-forward
sublayer with its own residual + layer norm.  The same visible matrix is
applied at every layer.  All math runs through the autodiff engine, so
``backward()`` on any scalar built from the output yields gradients for
every parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .config import ModelConfig
from .embedding import INIT_STD


class NumericError(ArithmeticError):
    """Non-finite activations detected during a forward pass."""


def init_params(config: ModelConfig, vocab_size: int, seed: int) -> dict[str, np.ndarray]:
    """All trainable encoder tensors, keyed by name, seeded and deterministic."""
    config.validate()
    rng = np.random.default_rng(seed)
    params = draw_tables(config, vocab_size, rng)
    h, f = config.hidden, config.d_ff
    for i in range(config.layers):
        p = f"layer{i}."
        for name in ("wq", "wk", "wv", "wo"):
            params[p + name] = rng.normal(0.0, INIT_STD, (h, h))
        for name in ("bq", "bk", "bv", "bo"):
            params[p + name] = np.zeros(h)
        params[p + "ffn_w1"] = rng.normal(0.0, INIT_STD, (h, f))
        params[p + "ffn_b1"] = np.zeros(f)
        params[p + "ffn_w2"] = rng.normal(0.0, INIT_STD, (f, h))
        params[p + "ffn_b2"] = np.zeros(h)
        for name in ("ln1_g", "ln2_g"):
            params[p + name] = np.ones(h)
        for name in ("ln1_b", "ln2_b"):
            params[p + name] = np.zeros(h)
    return params


def draw_tables(config: ModelConfig, vocab_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    return {
        "embed.token": rng.normal(0.0, INIT_STD, (vocab_size, config.hidden)),
        "embed.position": rng.normal(0.0, INIT_STD, (config.max_seq_len, config.hidden)),
        "embed.segment": rng.normal(0.0, INIT_STD, (2, config.hidden)),
    }


def wrap_params(params: dict[str, np.ndarray], trainable: bool = True) -> dict[str, ad.Tensor]:
    return {k: ad.Tensor(v, requires_grad=trainable) for k, v in params.items()}


def _as_batched_mask(m: np.ndarray) -> np.ndarray:
    """(n, n) or (batch, n, n) -> (batch, 1, n, n) for broadcast over heads."""
    if m.ndim == 2:
        m = m[None]
    return m[:, None, :, :]


def mask_self_attention(
    h: ad.Tensor,
    visible: np.ndarray,
    params: dict[str, ad.Tensor],
    config: ModelConfig,
    prefix: str = "layer0.",
) -> tuple[ad.Tensor, np.ndarray]:
    """Multi-head attention with the additive visibility mask.

    ``h`` is (batch, n, hidden); ``visible`` is (n, n) or (batch, n, n) with
    entries in {0, NEG_INF}.  Returns the projected attention output and the
    post-softmax score array (batch, heads, n, n).
    """
    b, n, hidden = h.shape
    if hidden != config.hidden:
        raise ValueError(f"hidden size mismatch: {hidden} vs config {config.hidden}")
    if visible.shape[-2:] != (n, n):
        raise ValueError(f"visible matrix shape {visible.shape} does not match n={n}")
    heads, dk = config.heads, config.d_k
    sqrt_dk = np.sqrt(float(dk))

    def project(name: str) -> ad.Tensor:
        full = ad.add(ad.matmul(h, params[prefix + "w" + name]), params[prefix + "b" + name])
        return ad.transpose(ad.reshape(full, (b, n, heads, dk)), (0, 2, 1, 3))

    q, k, v = project("q"), project("k"), project("v")
    scores = ad.matmul(q, ad.transpose(k, (0, 1, 3, 2)))
    mask = ad.Tensor(_as_batched_mask(visible))
    if config.mask_after_scale:
        logits = ad.add(ad.div_scalar(scores, sqrt_dk), mask)
    else:
        logits = ad.div_scalar(ad.add(scores, mask), sqrt_dk)
    s = ad.softmax(logits, axis=-1)
    context = ad.matmul(s, v)
    merged = ad.reshape(ad.transpose(context, (0, 2, 1, 3)), (b, n, hidden))
    out = ad.add(ad.matmul(merged, params[prefix + "wo"]), params[prefix + "bo"])
    return out, s.data


def transformer_block(
    h: ad.Tensor,
    visible: np.ndarray,
    params: dict[str, ad.Tensor],
    config: ModelConfig,
    prefix: str,
    rng: np.random.Generator | None = None,
) -> tuple[ad.Tensor, np.ndarray]:
    """Attention sublayer then feed-forward sublayer, each residual + norm."""
    attn, scores = mask_self_attention(h, visible, params, config, prefix)
    if rng is not None and config.dropout > 0.0:
        attn = ad.dropout(attn, config.dropout, rng)
    x = ad.layer_norm(ad.add(h, attn), params[prefix + "ln1_g"], params[prefix + "ln1_b"])
    ff = ad.gelu(ad.add(ad.matmul(x, params[prefix + "ffn_w1"]), params[prefix + "ffn_b1"]))
    ff = ad.add(ad.matmul(ff, params[prefix + "ffn_w2"]), params[prefix + "ffn_b2"])
    if rng is not None and config.dropout > 0.0:
        ff = ad.dropout(ff, config.dropout, rng)
    out = ad.layer_norm(ad.add(x, ff), params[prefix + "ln2_g"], params[prefix + "ln2_b"])
    return out, scores


@dataclass
class HiddenStates:
    """Per-layer hidden states h^0..h^L and post-softmax attention scores."""

    states: list[np.ndarray]  # layers+1 arrays of (batch, n, hidden)
    scores: list[np.ndarray]  # layers arrays of (batch, heads, n, n)


def encoder_forward(
    h0: ad.Tensor,
    visible: np.ndarray,
    params: dict[str, ad.Tensor],
    config: ModelConfig,
    rng: np.random.Generator | None = None,
) -> tuple[ad.Tensor, HiddenStates]:
    """Run all blocks with the same visible matrix; keep intermediates.

    Raises NumericError naming the offending layer if activations go
    non-finite.
    """
    h = h0
    states = [h0.data]
    all_scores: list[np.ndarray] = []
    for i in range(config.layers):
        h, scores = transformer_block(h, visible, params, config, f"layer{i}.", rng)
        if not np.isfinite(h.data).all():
            raise NumericError(f"numeric overflow in layer {i + 1}")
        states.append(h.data)
        all_scores.append(scores)
    return h, HiddenStates(states=states, scores=all_scores)
