"""Minimal differentiable tensor core.

A tape-based reverse-mode engine over numpy arrays: every operation
records its parents and a backward closure, ``Tensor.backward`` walks the
graph in reverse topological order. Parameters are float32 by default;
everything runs equally in float64, which the gradient-check tests rely
on. Inside :func:`no_grad` no graph is recorded, so inference pays only
the cost of the numpy calls.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

_GRAD_ENABLED = True


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tensor:
    """A numpy array plus optional gradient tape bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g: np.ndarray):
        if self.grad is None:
            self.grad = g.copy() if g.base is not None or g is self.data else g
        else:
            self.grad = self.grad + g

    def backward(self, grad: np.ndarray | None = None):
        if grad is None:
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.asarray(grad)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar; constants stay plain scalars/arrays so dtype is preserved.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _track(*parents: Tensor) -> bool:
    return _GRAD_ENABLED and any(p.requires_grad for p in parents)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if _track(*parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# Arithmetic
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    if not isinstance(b, Tensor):  # scalar / ndarray constant, dtype-preserving
        a = as_tensor(a)
        out_data = a.data + b

        def backward_const(g):
            a.accumulate_grad(_unbroadcast(g, a.data.shape))

        return _result(out_data, (a,), backward_const)
    if not isinstance(a, Tensor):
        return add(b, a)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.data.shape))

    return _result(out_data, (a, b), backward)


def sub(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        a = as_tensor(a)
        out_data = a.data - b

        def backward_bconst(g):
            a.accumulate_grad(_unbroadcast(g, a.data.shape))

        return _result(out_data, (a,), backward_bconst)
    if not isinstance(a, Tensor):
        out_data = a - b.data

        def backward_aconst(g):
            b.accumulate_grad(_unbroadcast(-g, b.data.shape))

        return _result(out_data, (b,), backward_aconst)
    out_data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g, b.data.shape))

    return _result(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        a = as_tensor(a)
        out_data = a.data * b

        def backward_const(g):
            a.accumulate_grad(_unbroadcast(g * b, a.data.shape))

        return _result(out_data, (a,), backward_const)
    if not isinstance(a, Tensor):
        return mul(b, a)
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape))

    return _result(out_data, (a, b), backward)


def div(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        return mul(a, 1.0 / b)
    a = as_tensor(a)
    out_data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g * out_data / b.data, b.data.shape))

    return _result(out_data, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            ga = g @ b.data.swapaxes(-1, -2) if b.data.ndim > 1 else np.outer(g, b.data)
            a.accumulate_grad(_unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = a.data.swapaxes(-1, -2) @ g if a.data.ndim > 1 else np.outer(a.data, g)
            b.accumulate_grad(_unbroadcast(gb, b.data.shape))

    return _result(out_data, (a, b), backward)


# ---------------------------------------------------------------------------
# Elementwise nonlinearities
# ---------------------------------------------------------------------------


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.tanh(a.data)

    def backward(g):
        a.accumulate_grad(g * (1.0 - out_data * out_data))

    return _result(out_data, (a,), backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out_data = 0.5 * np.tanh(0.5 * a.data) + 0.5  # stable at both tails

    def backward(g):
        a.accumulate_grad(g * out_data * (1.0 - out_data))

    return _result(out_data, (a,), backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def backward(g):
        a.accumulate_grad(g * out_data)

    return _result(out_data, (a,), backward)


def log(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.log(a.data)

    def backward(g):
        a.accumulate_grad(g / a.data)

    return _result(out_data, (a,), backward)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a) -> Tensor:
    """Gaussian error linear unit, tanh approximation (smooth everywhere,
    which keeps finite-difference checks clean)."""
    a = as_tensor(a)
    x = a.data
    x2 = x * x
    inner = x * (_GELU_C + (_GELU_C * 0.044715) * x2)
    t = np.tanh(inner)
    out_data = 0.5 * x * (1.0 + t)

    def backward(g):
        d_inner = _GELU_C + (3.0 * _GELU_C * 0.044715) * x2
        da = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
        a.accumulate_grad(g * da)

    return _result(out_data, (a,), backward)


# ---------------------------------------------------------------------------
# Reductions and shape ops
# ---------------------------------------------------------------------------


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            grad = np.broadcast_to(g, a.data.shape)
        else:
            g2 = g if keepdims else np.expand_dims(g, axis)
            grad = np.broadcast_to(g2, a.data.shape)
        a.accumulate_grad(grad.astype(a.data.dtype, copy=False))

    return _result(out_data, (a,), backward)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.mean(axis=axis, keepdims=keepdims)
    denom = a.data.size / max(out_data.size, 1)

    def backward(g):
        if axis is None:
            grad = np.broadcast_to(g, a.data.shape)
        else:
            g2 = g if keepdims else np.expand_dims(g, axis)
            grad = np.broadcast_to(g2, a.data.shape)
        a.accumulate_grad((grad / denom).astype(a.data.dtype, copy=False))

    return _result(out_data, (a,), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    out_data = a.data.reshape(shape)

    def backward(g):
        a.accumulate_grad(g.reshape(a.data.shape))

    return _result(out_data, (a,), backward)


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
        axes = tuple(axes[0])
    out_data = a.data.transpose(axes)
    inv = np.argsort(axes)

    def backward(g):
        a.accumulate_grad(g.transpose(inv))

    return _result(out_data, (a,), backward)


def getitem(a, key) -> Tensor:
    a = as_tensor(a)
    out_data = a.data[key]

    def backward(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, key, g)
        a.accumulate_grad(grad)

    return _result(out_data, (a,), backward)


def concat(tensors, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t.accumulate_grad(g[tuple(idx)])

    return _result(out_data, tuple(tensors), backward)


def stack(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t.accumulate_grad(np.take(g, i, axis=axis))

    return _result(out_data, tuple(tensors), backward)


# ---------------------------------------------------------------------------
# Neural-network primitives
# ---------------------------------------------------------------------------


def softmax(a, axis=-1) -> Tensor:
    """Shift-invariant softmax (max subtracted before exponentiation)."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        a.accumulate_grad(out_data * (g - dot))

    return _result(out_data, (a,), backward)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Layer normalization over the last axis."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out_data = gamma.data * xhat + beta.data

    def backward(g):
        d = x.data.shape[-1]
        if gamma.requires_grad:
            gamma.accumulate_grad(_unbroadcast(g * xhat, gamma.data.shape))
        if beta.requires_grad:
            beta.accumulate_grad(_unbroadcast(g, beta.data.shape))
        if x.requires_grad:
            gx_hat = g * gamma.data
            term1 = gx_hat
            term2 = gx_hat.mean(axis=-1, keepdims=True)
            term3 = xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True)
            x.accumulate_grad(inv * (term1 - term2 - term3))

    return _result(out_data, (x, gamma, beta), backward)


def embedding(table, indices) -> Tensor:
    """Row lookup ``table[indices]``; indices are a plain integer array."""
    table = as_tensor(table)
    idx = np.asarray(indices)
    out_data = table.data[idx]

    def backward(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, idx, g)
        table.accumulate_grad(grad)

    return _result(out_data, (table,), backward)


def dropout(x, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; only call while training."""
    x = as_tensor(x)
    if p <= 0.0:
        return x
    keep = (rng.random(x.data.shape) >= p).astype(x.data.dtype)
    scale = 1.0 / (1.0 - p)
    out_data = x.data * keep * scale

    def backward(g):
        x.accumulate_grad(g * keep * scale)

    return _result(out_data, (x,), backward)


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    # tanh-based form: one ufunc pass, stable at both tails
    return 0.5 * np.tanh(0.5 * x) + 0.5


def gru_sequence(x, w, u, b, reverse: bool = False, step_mask: np.ndarray | None = None) -> Tensor:
    """Run a single-direction GRU over a whole sequence.

    Fused primitive with hand-derived backpropagation through time, so the
    per-step recurrence never touches the tape. Gating convention (hidden
    matmul shared across gates, reset applied after it):

        z = sigmoid(a_z + u_z)      a = x W + b,  u = h U
        r = sigmoid(a_r + u_r)
        c = tanh(a_c + r * u_c)
        h' = (1 - z) * c + z * h

    ``x``: (B, n, D); ``w``: (D, 3H); ``u``: (H, 3H); ``b``: (3H,).
    ``step_mask``: optional (B, n) 0/1 array; masked steps carry the hidden
    state through unchanged, which makes padded batches equivalent to
    per-sequence runs. ``reverse`` processes t = n-1 .. 0 (outputs stay
    aligned with input positions).
    """
    x, w, u, b = as_tensor(x), as_tensor(w), as_tensor(u), as_tensor(b)
    B, n, _ = x.data.shape
    H = u.data.shape[0]
    dtype = x.data.dtype

    a_all = x.data @ w.data + b.data  # (B, n, 3H)
    order = range(n - 1, -1, -1) if reverse else range(n)
    tracking = _track(x, w, u, b)

    h = np.zeros((B, H), dtype=dtype)
    out = np.empty((B, n, H), dtype=dtype)
    if not tracking:
        u_data = u.data
        for t in order:
            a_t = a_all[:, t]
            ut = h @ u_data
            gates = _sigmoid_np(a_t[:, : 2 * H] + ut[:, : 2 * H])
            z = gates[:, :H]
            r = gates[:, H:]
            c = np.tanh(a_t[:, 2 * H :] + r * ut[:, 2 * H :])
            h_new = (1.0 - z) * c + z * h
            if step_mask is not None:
                m = step_mask[:, t : t + 1].astype(dtype)
                h_new = m * h_new + (1.0 - m) * h
            out[:, t] = h_new
            h = h_new
        return Tensor(out)

    # Saved per step for BPTT: gates, candidate, u_c and incoming hidden.
    zs = np.empty((n, B, H), dtype=dtype)
    rs = np.empty((n, B, H), dtype=dtype)
    cs = np.empty((n, B, H), dtype=dtype)
    ucs = np.empty((n, B, H), dtype=dtype)
    hprevs = np.empty((n, B, H), dtype=dtype)

    for t in order:
        a_t = a_all[:, t]
        ut = h @ u.data
        gates = _sigmoid_np(a_t[:, : 2 * H] + ut[:, : 2 * H])
        z = gates[:, :H]
        r = gates[:, H:]
        uc = ut[:, 2 * H :]
        c = np.tanh(a_t[:, 2 * H :] + r * uc)
        h_new = (1.0 - z) * c + z * h
        if step_mask is not None:
            m = step_mask[:, t : t + 1].astype(dtype)
            h_new = m * h_new + (1.0 - m) * h
        zs[t], rs[t], cs[t], ucs[t], hprevs[t] = z, r, c, uc, h
        out[:, t] = h_new
        h = h_new

    def backward(g):
        dw = np.zeros_like(w.data) if w.requires_grad else None
        du = np.zeros_like(u.data) if u.requires_grad else None
        da_all = np.zeros_like(a_all)
        dh = np.zeros((B, H), dtype=dtype)
        for t in reversed(list(order)):
            dh_total = g[:, t] + dh
            z, r, c, uc, h_prev = zs[t], rs[t], cs[t], ucs[t], hprevs[t]
            if step_mask is not None:
                m = step_mask[:, t : t + 1].astype(dtype)
                dh_new = dh_total * m
                dh_skip = dh_total * (1.0 - m)
            else:
                dh_new = dh_total
                dh_skip = 0.0
            dc = dh_new * (1.0 - z)
            dz = dh_new * (h_prev - c)
            dct = dc * (1.0 - c * c)
            dr = dct * uc
            duc = dct * r
            dz_pre = dz * z * (1.0 - z)
            dr_pre = dr * r * (1.0 - r)
            dstep_u = np.concatenate([dz_pre, dr_pre, duc], axis=1)  # (B, 3H)
            da_all[:, t, :H] = dz_pre
            da_all[:, t, H : 2 * H] = dr_pre
            da_all[:, t, 2 * H :] = dct
            if du is not None:
                du += h_prev.T @ dstep_u
            dh = dh_new * z + dstep_u @ u.data.T + dh_skip
        if w.requires_grad:
            flat_x = x.data.reshape(B * n, -1)
            dw += flat_x.T @ da_all.reshape(B * n, -1)
            w.accumulate_grad(dw)
        if u.requires_grad:
            u.accumulate_grad(du)
        if b.requires_grad:
            b.accumulate_grad(da_all.sum(axis=(0, 1)))
        if x.requires_grad:
            x.accumulate_grad(da_all @ w.data.T)

    return _result(out, (x, w, u, b), backward)


def cross_entropy_logits(logits, targets, weights=None) -> Tensor:
    """Weighted mean cross-entropy from raw logits.

    ``logits``: (..., v); ``targets``: integer array matching the leading
    shape; ``weights``: same leading shape, defaults to all ones. The loss
    is the weighted mean of per-position negative log-likelihoods.
    """
    logits = as_tensor(logits)
    v = logits.data.shape[-1]
    flat = logits.data.reshape(-1, v)
    tgt = np.asarray(targets).reshape(-1)
    if weights is None:
        w = np.ones(tgt.shape[0], dtype=flat.dtype)
    else:
        w = np.asarray(weights, dtype=flat.dtype).reshape(-1)
    w_sum = w.sum()
    if w_sum <= 0:
        return _result(np.asarray(0.0, dtype=flat.dtype), (logits,), lambda g: None)

    shifted = flat - flat.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1)) + flat.max(axis=-1)
    nll = lse - flat[np.arange(tgt.shape[0]), tgt]
    out_data = np.asarray((nll * w).sum() / w_sum, dtype=flat.dtype)

    def backward(g):
        p = np.exp(shifted)
        p /= p.sum(axis=-1, keepdims=True)
        p[np.arange(tgt.shape[0]), tgt] -= 1.0
        p *= (w / w_sum)[:, None]
        logits.accumulate_grad((g * p).reshape(logits.data.shape).astype(logits.data.dtype, copy=False))

    return _result(out_data, (logits,), backward)
