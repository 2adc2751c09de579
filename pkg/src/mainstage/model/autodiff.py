"""Minimal reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray plus an optional gradient and a closure that
propagates an incoming gradient to its parents. Ops build the graph eagerly;
`backward(loss)` topologically sorts it once and runs the closures in
reverse. Only the ops this model needs exist: broadcast arithmetic, 2-D
matmul, rectifier, row softmax/log-softmax, slicing/concat, and the
convolution / pooling pair for the patch encoder.

Convolutions use im2col so both passes are matrix products; the column
matrix is recomputed in backward instead of stored, trading a little time
for a much smaller live graph.
"""

import numpy as np

from ..errors import NumericError


class Tensor:
    __slots__ = ("data", "grad", "name", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None, name=""):
        self.data = np.asarray(data)
        self.grad = None
        self.name = name
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, name={self.name!r})"


def _accum(t, g):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g, shape):
    """Sum a gradient down to the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def backward(root: Tensor):
    """Reverse-mode accumulation from a scalar root."""
    topo, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    root.grad = np.ones_like(root.data)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)


def check_finite_grads(named_tensors):
    """Raise NumericError naming the first tensor with a non-finite grad."""
    for name, t in named_tensors:
        if t.grad is not None and not np.all(np.isfinite(t.grad)):
            raise NumericError(f"non-finite gradient in {name}")


# --- arithmetic ---------------------------------------------------------------

def add(a, b):
    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))
    return Tensor(a.data + b.data, (a, b), bwd)


def sub(a, b):
    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))
    return Tensor(a.data - b.data, (a, b), bwd)


def mul(a, b):
    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))
    return Tensor(a.data * b.data, (a, b), bwd)


def div(a, b):
    def bwd(g):
        _accum(a, _unbroadcast(g / b.data, a.data.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))
    return Tensor(a.data / b.data, (a, b), bwd)


def add_const(a, c):
    def bwd(g):
        _accum(a, g)
    return Tensor(a.data + c, (a,), bwd)


def scale(a, c):
    def bwd(g):
        _accum(a, g * c)
    return Tensor(a.data * c, (a,), bwd)


def relu(a):
    mask = a.data > 0
    def bwd(g):
        _accum(a, g * mask)
    return Tensor(a.data * mask, (a,), bwd)


def sqrt(a):
    out = np.sqrt(a.data)
    def bwd(g):
        _accum(a, g * 0.5 / out)
    return Tensor(out, (a,), bwd)


def matmul(a, b):
    def bwd(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)
    return Tensor(a.data @ b.data, (a, b), bwd)


def transpose(a):
    def bwd(g):
        _accum(a, g.T)
    return Tensor(a.data.T, (a,), bwd)


# --- reductions ---------------------------------------------------------------

def mean_rows(a):
    """Mean over the last axis, kept: (N, D) -> (N, 1)."""
    n = a.data.shape[-1]
    def bwd(g):
        _accum(a, np.broadcast_to(g / n, a.data.shape))
    return Tensor(a.data.mean(axis=-1, keepdims=True), (a,), bwd)


def sum_all(a):
    def bwd(g):
        _accum(a, np.broadcast_to(g, a.data.shape))
    return Tensor(a.data.sum(), (a,), bwd)


# --- softmax family -----------------------------------------------------------

def log_softmax_rows(a):
    """Row-wise log-softmax via the log-sum-exp trick.

    Backward is g - softmax * rowsum(g); combined with a -sum(p * out) loss
    this yields d(loss)/d(input) = softmax - p exactly.
    """
    m = a.data.max(axis=-1, keepdims=True)
    z = a.data - m
    out = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    s = np.exp(out)
    def bwd(g):
        _accum(a, g - s * g.sum(axis=-1, keepdims=True))
    return Tensor(out, (a,), bwd)


def softmax_rows(a):
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)
    def bwd(g):
        _accum(a, s * (g - (g * s).sum(axis=-1, keepdims=True)))
    return Tensor(s, (a,), bwd)


# --- shape ops ----------------------------------------------------------------

def slice_rows(a, i, j):
    def bwd(g):
        pad = np.zeros_like(a.data)
        pad[i:j] = g
        _accum(a, pad)
    return Tensor(a.data[i:j], (a,), bwd)


def slice_cols(a, i, j):
    def bwd(g):
        pad = np.zeros_like(a.data)
        pad[:, i:j] = g
        _accum(a, pad)
    return Tensor(a.data[:, i:j], (a,), bwd)


def concat_rows(tensors):
    sizes = [t.data.shape[0] for t in tensors]
    def bwd(g):
        off = 0
        for t, n in zip(tensors, sizes):
            _accum(t, g[off:off + n])
            off += n
    return Tensor(np.concatenate([t.data for t in tensors], axis=0),
                  tuple(tensors), bwd)


def concat_cols(tensors):
    sizes = [t.data.shape[1] for t in tensors]
    def bwd(g):
        off = 0
        for t, n in zip(tensors, sizes):
            _accum(t, g[:, off:off + n])
            off += n
    return Tensor(np.concatenate([t.data for t in tensors], axis=1),
                  tuple(tensors), bwd)


# --- patch-encoder ops --------------------------------------------------------

def _im2col3(x):
    """(C, H, W) -> (H*W, C*9) of 3x3 neighborhoods, zero-padded edges."""
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))
    return win.transpose(1, 2, 0, 3, 4).reshape(h * w, c * 9)


def conv3x3(x, w, b):
    """Same-size 3x3 convolution: x (C,H,W), w (O,C,3,3), b (O,) -> (O,H,W)."""
    c, h, wd = x.data.shape
    o = w.data.shape[0]
    wmat = w.data.reshape(o, c * 9)
    col = _im2col3(x.data)
    out = (col @ wmat.T).T.reshape(o, h, wd) + b.data[:, None, None]

    def bwd(g):
        gm = g.reshape(o, h * wd).T                      # (H*W, O)
        col2 = _im2col3(x.data)
        _accum(w, (gm.T @ col2).reshape(w.data.shape))
        _accum(b, g.sum(axis=(1, 2)))
        dcol = (gm @ wmat).reshape(h, wd, c, 3, 3).transpose(2, 3, 4, 0, 1)
        dxp = np.zeros((c, h + 2, wd + 2), dtype=x.data.dtype)
        for di in range(3):
            for dj in range(3):
                dxp[:, di:di + h, dj:dj + wd] += dcol[:, di, dj]
        _accum(x, dxp[:, 1:h + 1, 1:wd + 1])

    return Tensor(out, (x, w, b), bwd)


def maxpool2(x):
    """2x2 max pooling, stride 2; ties keep the first (row-major) element."""
    c, h, w = x.data.shape
    h2, w2 = h // 2, w // 2
    win = (x.data[:, :h2 * 2, :w2 * 2]
           .reshape(c, h2, 2, w2, 2).transpose(0, 1, 3, 2, 4)
           .reshape(c, h2, w2, 4))
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def bwd(g):
        dwin = np.zeros((c, h2, w2, 4), dtype=x.data.dtype)
        np.put_along_axis(dwin, idx[..., None], g[..., None], axis=-1)
        dx = (dwin.reshape(c, h2, w2, 2, 2).transpose(0, 1, 3, 2, 4)
              .reshape(c, h2 * 2, w2 * 2))
        _accum(x, dx)

    return Tensor(out, (x,), bwd)


def global_avg_pool(x):
    """(C, H, W) -> (1, C) channel means."""
    c, h, w = x.data.shape
    def bwd(g):
        _accum(x, np.broadcast_to(g.reshape(c, 1, 1) / (h * w), x.data.shape))
    return Tensor(x.data.mean(axis=(1, 2)).reshape(1, c), (x,), bwd)
