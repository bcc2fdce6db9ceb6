"""Reverse-mode automatic differentiation over numpy arrays.

Small micrograd-style engine: each op builds a node holding the forward
value and a closure that routes the upstream gradient to its parents.
``backward()`` runs the closures in reverse topological order.  Ops that
need numerical care (softmax, layer norm, GELU, cross-entropy) are fused
so both the forward value and the gradient are computed in one stable
step.  Everything is float64 unless the caller passes float32 data.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Tensor:
    """An array node in the computation graph."""

    def __init__(self, data, requires_grad: bool = False, parents=(), backward_fn=None):
        self.data = np.asarray(data)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents = tuple(parents)
        self._backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, grad={'yes' if self.grad is not None else 'no'})"

    def backward(self) -> None:
        """Accumulate gradients into every reachable requires_grad tensor."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # Operator sugar for the handful of places expressions read better.
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to the shape it was broadcast from."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _needs(*tensors: Tensor) -> bool:
    return any(t.requires_grad for t in tensors)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return Tensor(out_data, _needs(a, b), (a, b), backward_fn)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return Tensor(out_data, _needs(a, b), (a, b), backward_fn)


def div_scalar(a, c: float) -> Tensor:
    """Elementwise division by a python scalar (kept as true division)."""
    a = as_tensor(a)
    out_data = a.data / c

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(g / c)

    return Tensor(out_data, a.requires_grad, (a,), backward_fn)


def matmul(a, b) -> Tensor:
    """np.matmul for >=2-D operands, broadcasting over leading batch axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError("matmul requires operands with ndim >= 2")
    out_data = np.matmul(a.data, b.data)

    def backward_fn(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a._accumulate(_unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b._accumulate(_unbroadcast(gb, b.data.shape))

    return Tensor(out_data, _needs(a, b), (a, b), backward_fn)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.reshape(shape)

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.data.shape))

    return Tensor(out_data, a.requires_grad, (a,), backward_fn)


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out_data = a.data.transpose(axes)

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(g.transpose(inverse))

    return Tensor(out_data, a.requires_grad, (a,), backward_fn)


def take_index(a, index: int, axis: int) -> Tensor:
    """Select one slice along an axis (e.g. the [CLS] row), dropping the axis."""
    a = as_tensor(a)
    out_data = np.take(a.data, index, axis=axis)

    def backward_fn(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            sl = [slice(None)] * a.data.ndim
            sl[axis] = index
            full[tuple(sl)] = g
            a._accumulate(full)

    return Tensor(out_data, a.requires_grad, (a,), backward_fn)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather with scatter-add backward."""
    out_data = table.data[ids]

    def backward_fn(g):
        if table.requires_grad:
            full = np.zeros_like(table.data)
            np.add.at(full, ids, g)
            table._accumulate(full)

    return Tensor(out_data, table.requires_grad, (table,), backward_fn)


def softmax(a, axis: int = -1) -> Tensor:
    """Numerically stable softmax (row-max subtraction) with fused backward."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        if a.requires_grad:
            inner = (g * s).sum(axis=axis, keepdims=True)
            a._accumulate(s * (g - inner))

    return Tensor(s, a.requires_grad, (a,), backward_fn)


def layer_norm(x, gain: Tensor, bias: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    x = as_tensor(x)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = xhat * gain.data + bias.data

    def backward_fn(g):
        if gain.requires_grad:
            gain._accumulate(_unbroadcast(g * xhat, gain.data.shape))
        if bias.requires_grad:
            bias._accumulate(_unbroadcast(g, bias.data.shape))
        if x.requires_grad:
            gx = g * gain.data
            m1 = gx.mean(axis=-1, keepdims=True)
            m2 = (gx * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(inv * (gx - m1 - xhat * m2))

    return Tensor(out_data, _needs(x, gain, bias), (x, gain, bias), backward_fn)


def gelu(x) -> Tensor:
    """Exact GELU: x * Phi(x) with the Gaussian CDF via erf."""
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out_data = x.data * cdf

    def backward_fn(g):
        if x.requires_grad:
            pdf = _INV_SQRT2PI * np.exp(-0.5 * x.data * x.data)
            x._accumulate(g * (cdf + x.data * pdf))

    return Tensor(out_data, x.requires_grad, (x,), backward_fn)


def dropout(x, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate == 0."""
    x = as_tensor(x)
    if rate == 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate) / (1.0 - rate)

    def backward_fn(g):
        if x.requires_grad:
            x._accumulate(g * keep)

    return Tensor(x.data * keep, x.requires_grad, (x,), backward_fn)


def cross_entropy(logits, labels: np.ndarray, weights: np.ndarray | None = None) -> Tensor:
    """Mean cross-entropy over the last axis of ``logits``.

    ``labels`` holds class indices with shape logits.shape[:-1].  Optional
    ``weights`` (same shape as labels, 0/1 or fractional) select which
    positions count; the mean divides by the weight sum.
    """
    logits = as_tensor(logits)
    labels = np.asarray(labels)
    if weights is None:
        weights = np.ones(labels.shape)
    weights = np.asarray(weights, dtype=logits.data.dtype)
    total = weights.sum()
    if total <= 0:
        raise ValueError("cross_entropy: no positions selected")
    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - logz
    picked = np.take_along_axis(logp, labels[..., None], axis=-1)[..., 0]
    out_data = -(picked * weights).sum() / total

    def backward_fn(g):
        if logits.requires_grad:
            probs = np.exp(logp)
            onehot = np.zeros_like(probs)
            np.put_along_axis(onehot, labels[..., None], 1.0, axis=-1)
            gl = (probs - onehot) * weights[..., None] / total
            logits._accumulate(g * gl)

    return Tensor(out_data, logits.requires_grad, (logits,), backward_fn)
