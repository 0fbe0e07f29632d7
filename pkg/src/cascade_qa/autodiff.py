"""Reverse-mode automatic differentiation over float64 numpy arrays.

Every operation builds a dynamic graph of :class:`Tensor` nodes;
:func:`backward` runs reverse topological accumulation, summing gradients
into tensors that are reused in several places.  :func:`grad_check`
compares the analytic gradients against central finite differences and is
the primary correctness instrument for everything built on top.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Optional, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for a primitive."""


_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording; forward values are still computed."""
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Tensor:
    """A float64 array plus the tape entry that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    # operator sugar; all arithmetic funnels through the module primitives
    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _accumulate(tensor: Tensor, grad: np.ndarray) -> None:
    if tensor.grad is None:
        tensor.grad = np.zeros_like(tensor.data)
    tensor.grad += grad


def _node(data: np.ndarray, parents: Sequence[Tensor], backward: Callable[[np.ndarray], None]) -> Tensor:
    out = Tensor(data)
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` over axes that were broadcast to reach ``grad.shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# Elementwise and linear algebra primitives
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g, b.shape))

    return _node(data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g, b.shape))

    return _node(data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _node(data, (a, b), backward)


def square(a: Tensor) -> Tensor:
    data = a.data * a.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, 2.0 * a.data * g)

    return _node(data, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix/vector product for 1-D and 2-D operands."""
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise ShapeError(f"matmul: unsupported ranks {a.shape} @ {b.shape}")
    if a.data.shape[-1] != b.data.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        ad, bd = a.data, b.data
        if ad.ndim == 1 and bd.ndim == 1:
            ga, gb = g * bd, g * ad
        elif ad.ndim == 2 and bd.ndim == 2:
            ga, gb = g @ bd.T, ad.T @ g
        elif ad.ndim == 1:  # (k,) @ (k,n) -> (n,)
            ga, gb = bd @ g, np.outer(ad, g)
        else:  # (m,k) @ (k,) -> (m,)
            ga, gb = np.outer(g, bd), ad.T @ g
        if a.requires_grad:
            _accumulate(a, ga)
        if b.requires_grad:
            _accumulate(b, gb)

    return _node(data, (a, b), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def backward(g):
        offset = 0
        for t, size in zip(tensors, sizes):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(offset, offset + size)
                _accumulate(t, g[tuple(index)])
            offset += size

    return _node(data, tensors, backward)


def stack_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Stack equal-shaped vectors into a matrix, one per row."""
    data = np.stack([t.data for t in tensors])

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                _accumulate(t, g[i])

    return _node(data, tensors, backward)


def slice_axis(a: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    data = a.data[index]

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[index] = g
            _accumulate(a, full)

    return _node(data, (a,), backward)


def row(a: Tensor, i: int) -> Tensor:
    data = a.data[i]

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[i] = g
            _accumulate(a, full)

    return _node(data, (a,), backward)


def take(a: Tensor, index: int) -> Tensor:
    """Scalar pick from a vector."""
    if a.data.ndim != 1:
        raise ShapeError(f"take: expected a vector, got {a.shape}")
    if not 0 <= index < a.data.shape[0]:
        raise ShapeError(f"take: index {index} out of bounds for {a.shape}")
    data = a.data[index]

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[index] = g
            _accumulate(a, full)

    return _node(data, (a,), backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    data = a.data.reshape(shape)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g.reshape(a.shape))

    return _node(data, (a,), backward)


def broadcast_to(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    data = np.broadcast_to(a.data, shape).copy()

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.shape))

    return _node(data, (a,), backward)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got {a.shape}")
    data = a.data.T.copy()

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g.T)

    return _node(data, (a,), backward)


# ---------------------------------------------------------------------------
# Nonlinearities, reductions, softmax family
# ---------------------------------------------------------------------------


def sigmoid(a: Tensor) -> Tensor:
    data = np.empty_like(a.data)
    pos = a.data >= 0
    data[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ez = np.exp(a.data[~pos])
    data[~pos] = ez / (1.0 + ez)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * data * (1.0 - data))

    return _node(data, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * (1.0 - data * data))

    return _node(data, (a,), backward)


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0.0)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * (a.data > 0.0))

    return _node(data, (a,), backward)


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g / a.data)

    return _node(data, (a,), backward)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * data)

    return _node(data, (a,), backward)


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(x)) computed without overflow."""
    data = np.maximum(a.data, 0.0) + np.log1p(np.exp(-np.abs(a.data)))

    def backward(g):
        if a.requires_grad:
            pos = a.data >= 0
            s = np.empty_like(a.data)
            s[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
            ez = np.exp(a.data[~pos])
            s[~pos] = ez / (1.0 + ez)
            _accumulate(a, g * s)

    return _node(data, (a,), backward)


def softmax(a: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """Softmax over the last axis; masked-out positions get exactly 0."""
    logits = a.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), logits.shape)
        if not mask.any(axis=-1).all():
            raise ShapeError("softmax: a row is fully masked")
        logits = np.where(mask, logits, -np.inf)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        if a.requires_grad:
            inner = (g * data).sum(axis=-1, keepdims=True)
            _accumulate(a, data * (g - inner))

    return _node(data, (a,), backward)


def log_softmax(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    data = shifted - log_z
    soft = np.exp(data)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g - soft * g.sum(axis=-1, keepdims=True))

    return _node(data, (a,), backward)


def gather(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup into an embedding table."""
    ids = np.asarray(ids, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeError(f"gather: table must be 2-D, got {table.shape}")
    data = table.data[ids]

    def backward(g):
        if table.requires_grad:
            full = np.zeros_like(table.data)
            np.add.at(full, ids, g)
            _accumulate(table, full)

    return _node(data, (table,), backward)


def reduce_sum(a: Tensor, axis: Optional[int] = None) -> Tensor:
    data = a.data.sum(axis=axis)

    def backward(g):
        if a.requires_grad:
            if axis is None:
                _accumulate(a, np.full_like(a.data, g))
            else:
                _accumulate(a, np.broadcast_to(np.expand_dims(g, axis), a.shape).copy())

    return _node(data, (a,), backward)


def reduce_mean(a: Tensor, axis: Optional[int] = None) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    data = a.data.mean(axis=axis)

    def backward(g):
        if a.requires_grad:
            if axis is None:
                _accumulate(a, np.full_like(a.data, g / count))
            else:
                _accumulate(a, np.broadcast_to(np.expand_dims(g, axis), a.shape).copy() / count)

    return _node(data, (a,), backward)


def reduce_max(a: Tensor, axis: Optional[int] = None) -> Tensor:
    """Max reduction; the gradient routes to the first maximal position."""
    if axis is None:
        data = a.data.max()
        flat_idx = int(np.argmax(a.data))

        def backward(g):
            if a.requires_grad:
                full = np.zeros_like(a.data)
                full.flat[flat_idx] = g
                _accumulate(a, full)

    else:
        data = a.data.max(axis=axis)
        arg = np.argmax(a.data, axis=axis)

        def backward(g):
            if a.requires_grad:
                full = np.zeros_like(a.data)
                grid = np.indices(data.shape)
                index = list(grid)
                index.insert(axis if axis >= 0 else a.data.ndim + axis, arg)
                full[tuple(index)] = g
                _accumulate(a, full)

    return _node(data, (a,), backward)


# ---------------------------------------------------------------------------
# Fused recurrent / convolutional cells
# ---------------------------------------------------------------------------


def lstm_cell(xh: Tensor, c_prev: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """One LSTM step on the concatenated input ``[x; h_prev]``.

    Gate order in the weight matrix is input, forget, candidate, output.
    Returns ``[h; c]`` so callers slice the halves they need.
    """
    hidden = c_prev.data.shape[0]
    if w.data.shape != (xh.data.shape[0], 4 * hidden):
        raise ShapeError(f"lstm_cell: weights {w.shape} do not match input {xh.shape} and hidden {hidden}")
    z = xh.data @ w.data + b.data
    zi, zf, zg, zo = z[:hidden], z[hidden : 2 * hidden], z[2 * hidden : 3 * hidden], z[3 * hidden :]
    i = 1.0 / (1.0 + np.exp(-zi))
    f = 1.0 / (1.0 + np.exp(-zf))
    g_ = np.tanh(zg)
    o = 1.0 / (1.0 + np.exp(-zo))
    c = f * c_prev.data + i * g_
    tc = np.tanh(c)
    h = o * tc
    data = np.concatenate([h, c])

    def backward(grad):
        dh, dc_out = grad[:hidden], grad[hidden:]
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_out
        df = dc * c_prev.data
        di = dc * g_
        dg = dc * i
        dz = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g_ * g_),
                do * o * (1.0 - o),
            ]
        )
        if xh.requires_grad:
            _accumulate(xh, w.data @ dz)
        if c_prev.requires_grad:
            _accumulate(c_prev, dc * f)
        if w.requires_grad:
            _accumulate(w, np.outer(xh.data, dz))
        if b.requires_grad:
            _accumulate(b, dz)

    return _node(data, (xh, c_prev, w, b), backward)


def char_conv_max(emb: Tensor, filters: Tensor, bias: Tensor, width: int = 5) -> Tensor:
    """Zero-padded 1-D convolution over character embeddings, max-pooled over time."""
    length, dim = emb.data.shape
    n_filters = filters.data.shape[1]
    if filters.data.shape[0] != width * dim:
        raise ShapeError(f"char_conv_max: filters {filters.shape} do not match width {width} x dim {dim}")
    pad = width // 2
    padded = np.zeros((length + 2 * pad, dim))
    padded[pad : pad + length] = emb.data
    windows = np.empty((length, width * dim))
    for t in range(length):
        windows[t] = padded[t : t + width].reshape(-1)
    scores = windows @ filters.data + bias.data
    arg = np.argmax(scores, axis=0)
    data = scores[arg, np.arange(n_filters)]

    def backward(g):
        dscores = np.zeros_like(scores)
        dscores[arg, np.arange(n_filters)] = g
        if bias.requires_grad:
            _accumulate(bias, dscores.sum(axis=0))
        if filters.requires_grad:
            _accumulate(filters, windows.T @ dscores)
        if emb.requires_grad:
            dwindows = dscores @ filters.data.T
            dpadded = np.zeros_like(padded)
            for t in range(length):
                dpadded[t : t + width] += dwindows[t].reshape(width, dim)
            _accumulate(emb, dpadded[pad : pad + length])

    return _node(data, (emb, filters, bias), backward)


# ---------------------------------------------------------------------------
# Sequence helpers built from the primitives above
# ---------------------------------------------------------------------------


def lstm_direction(x: Tensor, w: Tensor, b: Tensor, reverse: bool = False) -> list[Tensor]:
    """Unidirectional LSTM pass; returns per-step hidden states in input order."""
    steps = x.data.shape[0]
    hidden = w.data.shape[1] // 4
    h = Tensor(np.zeros(hidden))
    c = Tensor(np.zeros(hidden))
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    states: list[Optional[Tensor]] = [None] * steps
    for t in order:
        xh = concat([row(x, t), h])
        hc = lstm_cell(xh, c, w, b)
        h = slice_axis(hc, 0, hidden)
        c = slice_axis(hc, hidden, 2 * hidden)
        states[t] = h
    return states  # type: ignore[return-value]


def lstm_sequence(
    x: Tensor,
    w_fwd: Tensor,
    b_fwd: Tensor,
    w_bwd: Optional[Tensor] = None,
    b_bwd: Optional[Tensor] = None,
    bidirectional: bool = True,
) -> Tensor:
    """Run an LSTM over ``x`` of shape (steps, input_dim).

    Returns (steps, hidden) or, bidirectionally, (steps, 2 * hidden) with the
    forward and backward states concatenated per step.
    """
    if x.data.ndim != 2 or x.data.shape[0] == 0:
        raise ShapeError(f"lstm_sequence: expected a non-empty (steps, dim) input, got {x.shape}")
    fwd = lstm_direction(x, w_fwd, b_fwd, reverse=False)
    if not bidirectional:
        return stack_rows(fwd)
    bwd = lstm_direction(x, w_bwd, b_bwd, reverse=True)
    return stack_rows([concat([f, r]) for f, r in zip(fwd, bwd)])


def char_cnn_embed(char_ids: np.ndarray, table: Tensor, filters: Tensor, bias: Tensor, width: int = 5) -> Tensor:
    """Fixed-size word vector from its character sequence.

    Empty character sequences (padding) produce a zero vector.
    """
    if len(char_ids) == 0:
        return Tensor(np.zeros(filters.data.shape[1]))
    emb = gather(table, np.asarray(char_ids, dtype=np.int64))
    return char_conv_max(emb, filters, bias, width=width)


# ---------------------------------------------------------------------------
# Backward pass and verification
# ---------------------------------------------------------------------------


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate ``d loss / d tensor`` into every reachable tensor's ``grad``."""
    if loss.data.shape != ():
        raise ShapeError(f"backward: loss must be scalar, got {loss.shape}")
    order = _topo_order(loss)
    loss.grad = np.ones(())
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def gradients(loss: Tensor, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Backward pass returning fresh gradient arrays keyed by parameter name."""
    for p in params.values():
        p.zero_grad()
    backward(loss)
    return {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: dict[str, Tensor],
    eps: float = 1e-5,
    max_entries_per_param: Optional[int] = None,
    seed: int = 0,
    select: str = "random",
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn`` must rebuild the graph on every call.  When
    ``max_entries_per_param`` is given, only that many entries are checked
    per parameter: a seeded random sample, or with ``select="largest"`` the
    entries with the biggest analytic gradients (near-zero entries sit at the
    float64 noise floor of the difference quotient, so the largest ones give
    the sharpest comparison).
    """
    analytic = gradients(loss_fn(), params)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in sorted(params):
        tensor = params[name]
        flat = tensor.data.reshape(-1)
        n = flat.size
        a_flat = analytic[name].reshape(-1)
        if max_entries_per_param is not None and n > max_entries_per_param:
            if select == "largest":
                indices = np.argsort(-np.abs(a_flat), kind="stable")[:max_entries_per_param]
            else:
                indices = rng.choice(n, size=max_entries_per_param, replace=False)
        else:
            indices = np.arange(n)
        for idx in indices:
            original = flat[idx]
            flat[idx] = original + eps
            loss_plus = float(loss_fn().data)
            flat[idx] = original - eps
            loss_minus = float(loss_fn().data)
            flat[idx] = original
            numeric = (loss_plus - loss_minus) / (2.0 * eps)
            a = float(a_flat[idx])
            rel = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, rel)
    return worst


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


class ParameterStore:
    """Named trainable tensors with stable iteration order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, data: np.ndarray, trainable: bool = True) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter '{name}'")
        t = Tensor(np.asarray(data, dtype=np.float64), requires_grad=trainable, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self) -> list[tuple[str, Tensor]]:
        return [(name, self._params[name]) for name in self.names()]

    def as_dict(self) -> dict[str, Tensor]:
        return {name: self._params[name] for name in self.names()}

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.zero_grad()

    def snapshot(self, names: Optional[Iterable[str]] = None) -> dict[str, np.ndarray]:
        keys = sorted(names) if names is not None else self.names()
        return {name: self._params[name].data.copy() for name in keys}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, value in arrays.items():
            tensor = self._params[name]
            if tensor.data.shape != value.shape:
                raise ShapeError(f"parameter '{name}': stored shape {value.shape} != expected {tensor.data.shape}")
            tensor.data = value.astype(np.float64).copy()


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


def lstm_bias_init(hidden: int) -> np.ndarray:
    """Zero bias with the forget gate set to 1 for stable early recurrence."""
    b = np.zeros(4 * hidden)
    b[hidden : 2 * hidden] = 1.0
    return b
