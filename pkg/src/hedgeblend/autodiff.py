"""Minimal tape-based reverse-mode differentiation over numpy arrays.

Just enough machinery to backpropagate through a recurrent hedging rollout
and through the blending objectives: elementwise arithmetic with
broadcasting, matmul, the usual activations, reductions, concat/slice,
row gather, and a fused LSTM cell. Graphs are built only when an input
requires gradients, so inference-style forward passes run at plain numpy
speed with no caching.

Not supported on purpose: higher-order gradients, in-place ops, dtype
promotion games. Everything is float64.
"""

from __future__ import annotations

import numpy as np


def _sigmoid_inplace(x: np.ndarray) -> np.ndarray:
    """sigmoid via the tanh identity; numpy's tanh is SIMD-vectorised where
    scipy's expit is not, and this is the rollout's hottest element-wise op."""
    x *= 0.5
    np.tanh(x, out=x)
    x += 1.0
    x *= 0.5
    return x


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Array node on the tape. ``_vjp`` maps the output gradient to parent gradients.

    Float dtypes are preserved (float32 graphs stay float32); anything else
    is promoted to float64.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _node(data, parents, vjp) -> "Tensor":
        if any(p.requires_grad for p in parents):
            out = Tensor(data, requires_grad=True)
            out._parents = tuple(parents)
            out._vjp = vjp
            return out
        return Tensor(data)

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        return Tensor._node(
            self.data + other.data,
            (self, other),
            lambda g: (_unbroadcast(g, self.shape), _unbroadcast(g, other.shape)),
        )

    __radd__ = __add__

    def __sub__(self, other):
        other = as_tensor(other)
        return Tensor._node(
            self.data - other.data,
            (self, other),
            lambda g: (_unbroadcast(g, self.shape), _unbroadcast(-g, other.shape)),
        )

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        other = as_tensor(other)
        return Tensor._node(
            self.data * other.data,
            (self, other),
            lambda g: (
                _unbroadcast(g * other.data, self.shape),
                _unbroadcast(g * self.data, other.shape),
            ),
        )

    __rmul__ = __mul__

    def __neg__(self):
        return Tensor._node(-self.data, (self,), lambda g: (-g,))

    def __truediv__(self, scalar):
        return self * (1.0 / float(scalar))

    def __matmul__(self, other):
        other = as_tensor(other)
        return Tensor._node(
            self.data @ other.data,
            (self, other),
            lambda g: (g @ other.data.T, self.data.T @ g),
        )

    def __getitem__(self, key):
        def vjp(g):
            full = np.zeros_like(self.data)
            full[key] = g
            return (full,)

        return Tensor._node(self.data[key], (self,), vjp)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- activations and elementwise functions ------------------------------------


def tanh(t: Tensor) -> Tensor:
    out_data = np.tanh(t.data)
    return Tensor._node(out_data, (t,), lambda g: (g * (1.0 - out_data**2),))


def sigmoid(t: Tensor) -> Tensor:
    out_data = _sigmoid_inplace(t.data.copy())
    return Tensor._node(out_data, (t,), lambda g: (g * out_data * (1.0 - out_data),))


def exp(t: Tensor) -> Tensor:
    out_data = np.exp(t.data)
    return Tensor._node(out_data, (t,), lambda g: (g * out_data,))


def log(t: Tensor) -> Tensor:
    return Tensor._node(np.log(t.data), (t,), lambda g: (g / t.data,))


def absolute(t: Tensor) -> Tensor:
    """|t| with subgradient 0 at 0 (np.sign(0) == 0)."""
    return Tensor._node(np.abs(t.data), (t,), lambda g: (g * np.sign(t.data),))


# -- reductions and shape ops --------------------------------------------------


def tsum(t: Tensor, axis=None) -> Tensor:
    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, t.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), t.shape).copy(),)

    return Tensor._node(t.data.sum(axis=axis), (t,), vjp)


def tmean(t: Tensor, axis=None) -> Tensor:
    n = t.data.size if axis is None else t.shape[axis]
    return tsum(t, axis=axis) * (1.0 / n)


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    widths = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + widths)

    def vjp(g):
        slicer = [slice(None)] * g.ndim
        grads = []
        for i in range(len(tensors)):
            slicer[axis] = slice(offsets[i], offsets[i + 1])
            grads.append(g[tuple(slicer)])
        return tuple(grads)

    return Tensor._node(np.concatenate([t.data for t in tensors], axis=axis), tensors, vjp)


def gather_rows(t: Tensor, indices: np.ndarray) -> Tensor:
    """Select rows of a 1-D tensor; backward scatter-adds into place."""
    indices = np.asarray(indices)

    def vjp(g):
        full = np.zeros_like(t.data)
        np.add.at(full, indices, g)
        return (full,)

    return Tensor._node(t.data[indices], (t,), vjp)


def lstm_cell(xh: Tensor, c_prev: Tensor, w: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM step; returns (h_new, c_new). Gate order i, f, o, g.

    ``xh`` is the step input with the previous hidden state appended as its
    trailing columns, and ``w`` the matching stacked weight block, so the
    whole pre-activation is one GEMM. Fused into a single node (packed
    [h | c] output) so a long rollout tapes one backward closure per step;
    the hand-derived backward is validated against finite differences in
    the test suite.
    """
    hidden = c_prev.shape[1]
    pre = xh.data @ w.data
    pre += b.data
    # Contiguous copies of the gate blocks: every later product touches them,
    # and strided views defeat SIMD.
    i = _sigmoid_inplace(pre[:, :hidden].copy())
    f = _sigmoid_inplace(pre[:, hidden : 2 * hidden].copy())
    o = _sigmoid_inplace(pre[:, 2 * hidden : 3 * hidden].copy())
    g_ = pre[:, 3 * hidden :].copy()
    np.tanh(g_, out=g_)
    c_new = f * c_prev.data
    c_new += i * g_
    tc = np.tanh(c_new)

    if not (xh.requires_grad or c_prev.requires_grad or w.requires_grad or b.requires_grad):
        return Tensor(o * tc), Tensor(c_new)

    packed_data = np.empty((pre.shape[0], 2 * hidden), dtype=pre.dtype)
    np.multiply(o, tc, out=packed_data[:, :hidden])
    packed_data[:, hidden:] = c_new

    def vjp(grad):
        dh = np.ascontiguousarray(grad[:, :hidden])
        dc = grad[:, hidden:] + dh * o * (1.0 - tc**2)
        d_pre = np.empty_like(pre)
        d_pre[:, :hidden] = dc * g_ * (i * (1.0 - i))                     # input gate
        d_pre[:, hidden : 2 * hidden] = dc * c_prev.data * (f * (1.0 - f))  # forget gate
        d_pre[:, 2 * hidden : 3 * hidden] = dh * tc * (o * (1.0 - o))     # output gate
        d_pre[:, 3 * hidden :] = dc * i * (1.0 - g_**2)                   # candidate
        return (
            d_pre @ w.data.T,
            dc * f,
            xh.data.T @ d_pre,
            d_pre.sum(axis=0),
        )

    packed = Tensor._node(packed_data, (xh, c_prev, w, b), vjp)
    return packed[:, :hidden], packed[:, hidden:]


# -- backward ------------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every requires-grad leaf.

    Intermediate gradients and closures are released as soon as consumed, so
    peak memory stays near the forward tape's footprint.
    """
    if loss.data.size != 1:
        raise ValueError("backward expects a scalar loss")
    order: list[Tensor] = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._vjp is None:
            continue
        grads = node._vjp(node.grad)
        for parent, g in zip(node._parents, grads):
            if not parent.requires_grad or g is None:
                continue
            if parent.grad is None:
                parent.grad = np.array(g, copy=True)
            else:
                parent.grad += g
        node.grad = None
        node._vjp = None
        node._parents = ()


class Adam:
    """Adam over a list of leaf tensors, reading their ``.grad`` fields."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g**2
            m_hat = m / (1.0 - b1**self.t)
            v_hat = v / (1.0 - b2**self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
