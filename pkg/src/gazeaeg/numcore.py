"""Reverse-mode differentiation over float64 numpy arrays.

Operations executed inside a ``Tape`` context are recorded in order; ``Tape.backward``
replays them in reverse to produce gradients. Outside a tape the same functions are
plain numpy evaluations, which is what finite-difference checks rely on.

Only the primitives needed by the essay scorer are provided: elementwise arithmetic,
matmul, reductions, gathers, same-padded 1-D convolution, masked softmax, dropout and
masked MSE. ``lstm_seq`` and ``attention_pool`` are composed from them.
"""
from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class PoolingError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


Vjp = Callable[[np.ndarray], Sequence["np.ndarray | None"]]

_active: list["Tape"] = []


class Tape:
    """Ordered record of the primitive ops of one forward pass."""

    def __init__(self):
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Vjp]] = []

    def __enter__(self) -> "Tape":
        _active.append(self)
        return self

    def __exit__(self, *exc):
        _active.remove(self)
        return False

    def backward(self, loss: Tensor, wrt):
        """Gradients of scalar ``loss`` with respect to ``wrt``.

        ``wrt`` may be a single tensor, a sequence or a name->tensor mapping; the
        result has the same structure. Tensors the loss does not depend on get zeros.
        The tape is cleared afterwards.
        """
        if loss.data.size != 1:
            raise ShapeError(f"loss must be a scalar, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for out, inputs, vjp in reversed(self.nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for inp, gi in zip(inputs, vjp(g)):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        self.nodes.clear()

        def pick(t: Tensor) -> np.ndarray:
            g = grads.get(id(t))
            return np.zeros_like(t.data) if g is None else g.reshape(t.shape)

        if isinstance(wrt, Tensor):
            return pick(wrt)
        if isinstance(wrt, Mapping):
            return {k: pick(t) for k, t in wrt.items()}
        return [pick(t) for t in wrt]


def backward(tape: Tape, loss: Tensor, params):
    return tape.backward(loss, params)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(data: np.ndarray, inputs: tuple[Tensor, ...], vjp: Vjp) -> Tensor:
    if not np.isfinite(data).all():
        raise FloatingPointError("non-finite value produced in forward pass")
    out = Tensor(data)
    if _active and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _active[-1].nodes.append((out, inputs, vjp))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# elementwise ----------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _emit(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _emit(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _emit(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def sigmoid(x: Tensor) -> Tensor:
    # split by sign to stay finite for large |x|
    z = x.data
    e = np.exp(-np.abs(z))
    y = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _emit(y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _emit(y, (x,), lambda g: (g * (1.0 - y * y),))


def relu(x: Tensor) -> Tensor:
    on = x.data > 0
    return _emit(np.where(on, x.data, 0.0), (x,), lambda g: (g * on,))


# shape / linear algebra -----------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul expects operands with at least two dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def vjp(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if b.ndim == 2:
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _emit(a.data @ b.data, (a, b), vjp)


def reshape(x: Tensor, shape) -> Tensor:
    return _emit(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    y = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _emit(np.asarray(y), (x,), vjp)


def mean(x: Tensor, axis=None) -> Tensor:
    n = x.data.size if axis is None else x.shape[axis]
    return mul(tsum(x, axis=axis), 1.0 / n)


def getitem(x: Tensor, key) -> Tensor:
    """Basic (slice/integer) indexing only."""

    def vjp(g):
        full = np.zeros_like(x.data)
        full[key] = g
        return (full,)

    return _emit(np.array(x.data[key]), (x,), vjp)


def stack(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = tuple(xs)
    data = np.stack([t.data for t in xs], axis=axis)
    return _emit(data, xs, lambda g: tuple(np.moveaxis(g, axis, 0)))


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = tuple(xs)
    data = np.concatenate([t.data for t in xs], axis=axis)
    cuts = np.cumsum([t.shape[axis] for t in xs])[:-1]
    return _emit(data, xs, lambda g: tuple(np.split(g, cuts, axis=axis)))


def embed(weight: Tensor, index: np.ndarray, padding_index: int | None = None) -> Tensor:
    """Row gather ``weight[index]``; the padding row never receives gradient."""
    index = np.asarray(index, dtype=np.int64)

    def vjp(g):
        flat = g.reshape(-1, weight.shape[1])
        idx = index.reshape(-1)
        if padding_index is not None:
            keep = idx != padding_index
            flat, idx = flat[keep], idx[keep]
        full = np.zeros_like(weight.data)
        np.add.at(full, idx, flat)
        return (full,)

    return _emit(weight.data[index], (weight,), vjp)


# network primitives ---------------------------------------------------------

def conv1d_same(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Zero-padded convolution along the second-to-last axis.

    x: (..., T, d_in), kernels: (k, d_in, f), bias: (f,) -> (..., T, f).
    """
    k, d_in, f = kernels.shape
    if k % 2 == 0:
        raise ValueError(f"kernel size must be odd for same padding, got {k}")
    if x.shape[-1] != d_in or bias.shape != (f,):
        raise ShapeError(f"conv1d shape mismatch: input {x.shape}, kernels {kernels.shape}, bias {bias.shape}")
    lead, T = x.shape[:-2], x.shape[-2]
    pad = (k - 1) // 2
    x3 = x.data.reshape(-1, T, d_in)
    xp = np.pad(x3, ((0, 0), (pad, pad), (0, 0)))
    cols = np.concatenate([xp[:, j:j + T, :] for j in range(k)], axis=-1).reshape(-1, k * d_in)
    w2 = kernels.data.reshape(k * d_in, f)
    out = (cols @ w2 + bias.data).reshape(*lead, T, f)

    def vjp(g):
        g2 = g.reshape(-1, f)
        gw = (cols.T @ g2).reshape(k, d_in, f)
        gb = g2.sum(axis=0)
        gcols = (g2 @ w2.T).reshape(-1, T, k * d_in)
        gxp = np.zeros_like(xp)
        for j in range(k):
            gxp[:, j:j + T, :] += gcols[:, :, j * d_in:(j + 1) * d_in]
        gx = gxp[:, pad:pad + T, :].reshape(x.shape)
        return gx, gw, gb

    return _emit(out, (x, kernels, bias), vjp)


def masked_softmax(x: Tensor, mask: np.ndarray | None = None, axis: int = -1) -> Tensor:
    """Softmax over ``axis`` restricted to ``mask``; fully masked slices give zeros."""
    z = x.data
    if mask is None:
        mask = np.ones(z.shape, dtype=bool)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
    shifted = np.where(mask, z, -np.inf)
    peak = shifted.max(axis=axis, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    e = np.where(mask, np.exp(np.where(mask, z - peak, 0.0)), 0.0)
    total = e.sum(axis=axis, keepdims=True)
    y = e / np.where(total > 0, total, 1.0)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _emit(y, (x,), vjp)


def dropout(x: Tensor, rate: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-rate) at train time."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("train-mode dropout needs a random generator")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _emit(x.data * keep, (x,), lambda g: (g * keep,))


def mse(pred: Tensor, target, mask: np.ndarray | None = None, axis=None) -> Tensor:
    """Mean squared error over unmasked entries, reduced over ``axis`` (all by default).

    A reduction with no unmasked entries yields 0 and zero gradient.
    """
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"mse shape mismatch {pred.shape} vs {target.shape}")
    m = np.ones(pred.shape) if mask is None else np.asarray(mask, dtype=np.float64)
    if m.shape != pred.shape:
        raise ShapeError(f"mask shape {m.shape} does not match {pred.shape}")
    diff = pred.data - target
    count = m.sum(axis=axis, keepdims=True)
    denom = np.where(count > 0, count, 1.0)
    out = ((m * diff * diff).sum(axis=axis, keepdims=True) / denom)
    out_shape = np.asarray(m.sum(axis=axis)).shape

    def vjp(g):
        g = np.asarray(g).reshape(count.shape)
        return (g * 2.0 * m * diff / denom,)

    return _emit(out.reshape(out_shape), (pred,), vjp)


# composites -----------------------------------------------------------------

def attention_pool(states: Tensor, w: Tensor, v: Tensor, mask: np.ndarray | None = None,
                   allow_empty: bool = False) -> tuple[Tensor, Tensor]:
    """Additive attention pooling over the second-to-last axis.

    score_i = v . tanh(w^T s_i); weights are a softmax over unmasked positions.
    Returns (pooled (..., h), weights (..., N)).
    """
    n, h = states.shape[-2:]
    if w.shape[0] != h or v.shape != (w.shape[1],):
        raise ShapeError(f"attention params {w.shape}, {v.shape} do not fit states {states.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not allow_empty and not mask.any(axis=-1).all():
            raise PoolingError("attention pooling over a fully masked sequence")
    u = tanh(matmul(states, w))
    scores = reshape(matmul(u, reshape(v, (-1, 1))), states.shape[:-1])
    weights = masked_softmax(scores, mask)
    pooled = tsum(mul(states, reshape(weights, (*states.shape[:-1], 1))), axis=-2)
    return pooled, weights


def masked_mean_pool(states: Tensor, mask: np.ndarray | None = None) -> Tensor:
    if mask is None:
        return mean(states, axis=-2)
    m = np.asarray(mask, dtype=np.float64)
    count = np.maximum(m.sum(axis=-1, keepdims=True), 1.0)
    return tsum(mul(states, (m / count)[..., None]), axis=-2)


def lstm_seq(inputs: Tensor, wx: Tensor, wh: Tensor, b: Tensor,
             mask: np.ndarray | None = None) -> Tensor:
    """LSTM over the second-to-last axis of ``inputs`` (..., S, d) from zero state.

    Gate layout in the 4h columns is input, forget, candidate, output. Where ``mask``
    is false the previous state is carried through unchanged.
    """
    d, h4 = wx.shape
    h = h4 // 4
    if inputs.shape[-1] != d or wh.shape != (h, h4) or b.shape != (h4,) or h4 % 4:
        raise ShapeError(f"lstm params wx {wx.shape}, wh {wh.shape}, b {b.shape} do not fit inputs {inputs.shape}")
    lead, S = inputs.shape[:-2], inputs.shape[-2]
    xw = add(matmul(inputs, wx), b)
    hs = Tensor(np.zeros((*lead, h)))
    cs = Tensor(np.zeros((*lead, h)))
    outs = []
    for t in range(S):
        recur = reshape(matmul(reshape(hs, (-1, h)), wh), (*lead, h4))
        z = add(getitem(xw, (..., t, slice(None))), recur)
        gates = sigmoid(z)
        i_g = getitem(gates, (..., slice(0, h)))
        f_g = getitem(gates, (..., slice(h, 2 * h)))
        o_g = getitem(gates, (..., slice(3 * h, 4 * h)))
        cand = tanh(getitem(z, (..., slice(2 * h, 3 * h))))
        c_new = add(mul(f_g, cs), mul(i_g, cand))
        h_new = mul(o_g, tanh(c_new))
        if mask is not None:
            m = np.asarray(mask, dtype=np.float64)[..., t, None]
            c_new = add(mul(c_new, m), mul(cs, 1.0 - m))
            h_new = add(mul(h_new, m), mul(hs, 1.0 - m))
        cs, hs = c_new, h_new
        outs.append(hs)
    return stack(outs, axis=-2)


# verification ---------------------------------------------------------------

def grad_check(f: Callable[[Tensor], Tensor], x: np.ndarray, eps: float = 1e-5) -> float:
    """Max elementwise relative error between backward() and central differences."""
    x = np.array(x, dtype=np.float64)
    xt = Tensor(x.copy(), requires_grad=True)
    with Tape() as tape:
        loss = f(xt)
    analytic = tape.backward(loss, xt)
    numeric = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        hi, lo = x.copy(), x.copy()
        hi[i] += eps
        lo[i] -= eps
        numeric[i] = (float(f(Tensor(hi)).data) - float(f(Tensor(lo)).data)) / (2 * eps)
    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))
