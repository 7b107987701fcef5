"""Minimal reverse-mode automatic differentiation over numpy arrays.

Just enough machinery for this model family: broadcast arithmetic, matmul,
a few pointwise nonlinearities, embedding-row gathers, segment softmax /
weighted-sum (path attention), fused complex-distance scoring, and a stable
softmax cross-entropy. Backward closures are only recorded while gradients
are enabled (see `no_grad`), so inference pays almost nothing.
"""

from __future__ import annotations

import contextlib

import numpy as np

from rotapath import kernels

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operators ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _grad_hook(tensor):
    """Accumulator that respects requires_grad."""

    def hook(grad):
        if tensor.requires_grad:
            if tensor.grad is None:
                tensor.grad = np.array(grad, dtype=np.float64)
            else:
                tensor.grad += grad

    return hook


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    ha, hb = _grad_hook(a), _grad_hook(b)

    def backward(g):
        ha(_unbroadcast(g, a.data.shape))
        hb(_unbroadcast(g, b.data.shape))

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    ha, hb = _grad_hook(a), _grad_hook(b)

    def backward(g):
        ha(_unbroadcast(g, a.data.shape))
        hb(_unbroadcast(-g, b.data.shape))

    return _make(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    ha, hb = _grad_hook(a), _grad_hook(b)
    ad, bd = a.data, b.data

    def backward(g):
        ha(_unbroadcast(g * bd, ad.shape))
        hb(_unbroadcast(g * ad, bd.shape))

    return _make(ad * bd, (a, b), backward)


def scale(a, s):
    a = _as_tensor(a)
    ha = _grad_hook(a)

    def backward(g):
        ha(g * s)

    return _make(a.data * s, (a,), backward)


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    ha, hb = _grad_hook(a), _grad_hook(b)
    ad, bd = a.data, b.data

    def backward(g):
        if ad.ndim == 1 and bd.ndim == 2:  # (k,) @ (k,m) -> (m,)
            ha(bd @ g)
            hb(np.outer(ad, g))
        elif ad.ndim == 2 and bd.ndim == 1:  # (n,k) @ (k,) -> (n,)
            ha(np.outer(g, bd))
            hb(ad.T @ g)
        else:  # (n,k) @ (k,m) -> (n,m)
            ha(g @ bd.T)
            hb(ad.T @ g)

    return _make(ad @ bd, (a, b), backward)


def relu(a):
    a = _as_tensor(a)
    ha = _grad_hook(a)
    mask = a.data > 0

    def backward(g):
        ha(g * mask)

    return _make(a.data * mask, (a,), backward)


def sin(a):
    a = _as_tensor(a)
    ha = _grad_hook(a)
    c = np.cos(a.data)

    def backward(g):
        ha(g * c)

    return _make(np.sin(a.data), (a,), backward)


def cos(a):
    a = _as_tensor(a)
    ha = _grad_hook(a)
    s = np.sin(a.data)

    def backward(g):
        ha(-g * s)

    return _make(np.cos(a.data), (a,), backward)


def mean(a, axis=None):
    a = _as_tensor(a)
    ha = _grad_hook(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    shape = a.data.shape

    def backward(g):
        if axis is None:
            ha(np.full(shape, g / n))
        else:
            ha(np.repeat(np.expand_dims(g / n, axis), n, axis=axis))

    return _make(a.data.mean(axis=axis), (a,), backward)


def total(a):
    """Sum of all elements (scalar output)."""
    a = _as_tensor(a)
    ha = _grad_hook(a)
    shape = a.data.shape

    def backward(g):
        ha(np.full(shape, g))

    return _make(a.data.sum(), (a,), backward)


def reshape(a, shape):
    a = _as_tensor(a)
    ha = _grad_hook(a)
    old = a.data.shape

    def backward(g):
        ha(g.reshape(old))

    return _make(a.data.reshape(shape), (a,), backward)


def narrow(a, start, stop):
    """Contiguous slice [start:stop) along the last axis."""
    a = _as_tensor(a)
    ha = _grad_hook(a)
    shape = a.data.shape

    def backward(g):
        full = np.zeros(shape)
        full[..., start:stop] = g
        ha(full)

    return _make(a.data[..., start:stop], (a,), backward)


def splice(base, positions, values):
    """Overwrite base[positions] with values (1-D tensors, unique positions)."""
    base, values = _as_tensor(base), _as_tensor(values)
    hb, hv = _grad_hook(base), _grad_hook(values)
    positions = np.asarray(positions, dtype=np.int64)
    out = base.data.copy()
    out[positions] = values.data

    def backward(g):
        gb = g.copy()
        gb[positions] = 0.0
        hb(gb)
        hv(g[positions])

    return _make(out, (base, values), backward)


def concat(tensors, axis=-1):
    tensors = [_as_tensor(t) for t in tensors]
    hooks = [_grad_hook(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for hook, piece in zip(hooks, np.split(g, splits, axis=axis)):
            hook(piece)

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def gather_rows(table, idx):
    """Rows of a 2D parameter table; backward scatter-adds into the table
    gradient in place. Rows are pre-aggregated per unique index with a sorted
    reduceat, which is far faster than np.add.at when indices repeat."""
    table = _as_tensor(table)
    idx = np.asarray(idx, dtype=np.int64)

    def backward(g):
        if not table.requires_grad:
            return
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        if idx.shape[0] > 1:
            order = np.argsort(idx, kind="stable")
            sorted_idx = idx[order]
            starts = np.flatnonzero(np.r_[True, sorted_idx[1:] != sorted_idx[:-1]])
            sums = np.add.reduceat(g[order], starts, axis=0)
            table.grad[sorted_idx[starts]] += sums
        else:
            table.grad[idx] += g

    return _make(table.data[idx], (table,), backward)


def logsigmoid(a):
    a = _as_tensor(a)
    ha = _grad_hook(a)
    pos = a.data > 0
    expneg = np.exp(np.where(pos, -a.data, a.data))  # exp of -|x|, never overflows
    sig = np.where(pos, 1.0 / (1.0 + expneg), expneg / (1.0 + expneg))

    def backward(g):
        ha(g * (1.0 - sig))

    # stable: log sigmoid(x) = -softplus(-x)
    out = np.where(pos, -np.log1p(expneg), a.data - np.log1p(expneg))
    return _make(out, (a,), backward)


def softmax_cross_entropy(logits, target):
    """Cross-entropy of softmax(logits) against a single target index."""
    logits = _as_tensor(logits)
    hl = _grad_hook(logits)
    z = logits.data - logits.data.max()
    ez = np.exp(z)
    probs = ez / ez.sum()
    loss = np.log(ez.sum()) - z[target]

    def backward(g):
        grad = probs.copy()
        grad[target] -= 1.0
        hl(g * grad)

    return _make(loss, (logits,), backward)


def segment_softmax(logits, offsets):
    """Independent softmax over each offsets-delimited segment."""
    logits = _as_tensor(logits)
    hl = _grad_hook(logits)
    offsets = np.asarray(offsets, dtype=np.int64)
    w = kernels.segment_softmax(np.ascontiguousarray(logits.data), offsets)

    def backward(g):
        hl(kernels.segment_softmax_backward(w, offsets, np.ascontiguousarray(g)))

    return _make(w, (logits,), backward)


def segment_weighted_sum(values, weights, offsets):
    """Weighted sum of value rows within each segment -> (num_segments, D)."""
    values, weights = _as_tensor(values), _as_tensor(weights)
    hv, hw = _grad_hook(values), _grad_hook(weights)
    offsets = np.asarray(offsets, dtype=np.int64)
    vd = np.ascontiguousarray(values.data)
    wd = np.ascontiguousarray(weights.data)
    out = kernels.segment_weighted_sum(vd, wd, offsets)

    def backward(g):
        gv, gw = kernels.segment_weighted_sum_backward(vd, wd, offsets, np.ascontiguousarray(g))
        hv(gv)
        hw(gw)

    return _make(out, (values, weights), backward)


def score_candidates(hr_re, hr_im, c_re, c_im, norm):
    """Negated complex distance from one (re, im) vector to N candidate rows."""
    hr_re, hr_im = _as_tensor(hr_re), _as_tensor(hr_im)
    c_re, c_im = _as_tensor(c_re), _as_tensor(c_im)
    hooks = [_grad_hook(t) for t in (hr_re, hr_im, c_re, c_im)]
    args = [np.ascontiguousarray(t.data) for t in (hr_re, hr_im, c_re, c_im)]
    out = kernels.score_candidates(*args, norm)

    def backward(g):
        grads = kernels.score_candidates_backward(*args, norm, np.ascontiguousarray(g))
        for hook, grad in zip(hooks, grads):
            hook(grad)

    return _make(out, (hr_re, hr_im, c_re, c_im), backward)


def score_pairs(hr_re, hr_im, t_re, t_im, norm):
    """Row-wise negated complex distance between paired (B, d) vectors."""
    hr_re, hr_im = _as_tensor(hr_re), _as_tensor(hr_im)
    t_re, t_im = _as_tensor(t_re), _as_tensor(t_im)
    hooks = [_grad_hook(t) for t in (hr_re, hr_im, t_re, t_im)]
    args = [np.ascontiguousarray(t.data) for t in (hr_re, hr_im, t_re, t_im)]
    out = kernels.score_pairs(*args, norm)

    def backward(g):
        grads = kernels.score_pairs_backward(*args, norm, np.ascontiguousarray(g))
        for hook, grad in zip(hooks, grads):
            hook(grad)

    return _make(out, (hr_re, hr_im, t_re, t_im), backward)


def complex_mul(a_re, a_im, b_re, b_im):
    """Component-wise complex product, returned as a (re, im) tensor pair."""
    re = sub(mul(a_re, b_re), mul(a_im, b_im))
    im = add(mul(a_re, b_im), mul(a_im, b_re))
    return re, im


class Linear:
    """Dense layer y = x @ W + b with uniform He-style init."""

    def __init__(self, n_in, n_out, rng, zero=False):
        if zero:
            w = np.zeros((n_in, n_out))
        else:
            bound = np.sqrt(6.0 / n_in)
            w = rng.uniform(-bound, bound, size=(n_in, n_out))
        self.w = Tensor(w, requires_grad=True)
        self.b = Tensor(np.zeros(n_out), requires_grad=True)

    def __call__(self, x):
        return add(matmul(x, self.w), self.b)

    def params(self, prefix):
        return {prefix + ".w": self.w, prefix + ".b": self.b}


class Ffn:
    """Single-hidden-layer feed-forward map: linear, ReLU, linear."""

    def __init__(self, n_in, n_hidden, n_out, rng):
        self.lin1 = Linear(n_in, n_hidden, rng)
        self.lin2 = Linear(n_hidden, n_out, rng)

    def __call__(self, x):
        return self.lin2(relu(self.lin1(x)))

    def params(self, prefix):
        out = self.lin1.params(prefix + ".1")
        out.update(self.lin2.params(prefix + ".2"))
        return out
