"""Neural layers assembled from the engine's primitives.

Initialization follows the usual fan-in scaling; every layer exposes its
parameters through ``Module.parameters()`` with stable dotted names, which
the checkpoint container and the optimizers key on.
"""

from __future__ import annotations

import math

import numpy as np

from . import engine
from .engine import Tensor


class Module:
    """Tiny parameter-tree base: child modules and Tensor attributes are
    discovered by introspection, lists of modules are supported."""

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                out[name] = value
            elif isinstance(value, Module):
                for sub, p in value.parameters().items():
                    out[f"{name}.{sub}"] = p
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        for sub, p in item.parameters().items():
                            out[f"{name}.{i}.{sub}"] = p
        return out

    def zero_grad(self):
        for p in self.parameters().values():
            p.zero_grad()

    def load_arrays(self, arrays: dict[str, np.ndarray], prefix: str = ""):
        params = self.parameters()
        for name, p in params.items():
            key = prefix + name
            if key not in arrays:
                raise KeyError(f"missing parameter {key!r}")
            arr = arrays[key]
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {key!r}: {arr.shape} vs {p.data.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)


def _param(rng: np.random.Generator, shape: tuple[int, ...], scale: float, dtype) -> Tensor:
    data = (rng.standard_normal(shape) * scale).astype(dtype)
    return Tensor(data, requires_grad=True)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, dtype=np.float32):
        self.weight = _param(rng, (d_in, d_out), 1.0 / math.sqrt(d_in), dtype)
        self.bias = Tensor(np.zeros(d_out, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return engine.add(engine.matmul(x, self.weight), self.bias)


class LayerNorm(Module):
    def __init__(self, d: int, dtype=np.float32):
        self.gamma = Tensor(np.ones(d, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(d, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return engine.layer_norm(x, self.gamma, self.beta)


class GRU(Module):
    """One direction of a GRU layer over (B, n, d_in) sequences."""

    def __init__(self, d_in: int, d_hidden: int, rng: np.random.Generator, dtype=np.float32, reverse: bool = False):
        self.w = _param(rng, (d_in, 3 * d_hidden), 1.0 / math.sqrt(d_in), dtype)
        self.u = _param(rng, (d_hidden, 3 * d_hidden), 1.0 / math.sqrt(d_hidden), dtype)
        self.b = Tensor(np.zeros(3 * d_hidden, dtype=dtype), requires_grad=True)
        self.reverse = reverse

    def __call__(self, x: Tensor, step_mask: np.ndarray | None = None) -> Tensor:
        return engine.gru_sequence(x, self.w, self.u, self.b, reverse=self.reverse, step_mask=step_mask)


class BiGRULayer(Module):
    """Forward and backward GRUs of width d_h/2 each, concatenated to d_h."""

    def __init__(self, d_in: int, d_h: int, rng: np.random.Generator, dtype=np.float32):
        assert d_h % 2 == 0, "bidirectional width must be even"
        self.fwd = GRU(d_in, d_h // 2, rng, dtype, reverse=False)
        self.bwd = GRU(d_in, d_h // 2, rng, dtype, reverse=True)

    def __call__(self, x: Tensor, step_mask: np.ndarray | None = None) -> Tensor:
        return engine.concat([self.fwd(x, step_mask), self.bwd(x, step_mask)], axis=-1)


class FeedForward(Module):
    """Position-wise MLP: d -> 4d -> d with GELU."""

    def __init__(self, d: int, rng: np.random.Generator, dtype=np.float32):
        self.lin1 = Linear(d, 4 * d, rng, dtype)
        self.lin2 = Linear(4 * d, d, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.lin2(engine.gelu(self.lin1(x)))


class MultiHeadSelfAttention(Module):
    def __init__(self, d: int, n_heads: int, rng: np.random.Generator, dtype=np.float32):
        assert d % n_heads == 0
        self.n_heads = n_heads
        self.d_head = d // n_heads
        self.wq = Linear(d, d, rng, dtype)
        self.wk = Linear(d, d, rng, dtype)
        self.wv = Linear(d, d, rng, dtype)
        self.wo = Linear(d, d, rng, dtype)

    def __call__(self, x: Tensor, attn_bias: np.ndarray | None = None) -> Tensor:
        """Bidirectional self-attention over (B, n, d).

        ``attn_bias``: optional additive (B, 1, 1, n) array (large negative
        at padded key positions).
        """
        B, n, d = x.shape
        h, dk = self.n_heads, self.d_head

        def split_heads(t: Tensor) -> Tensor:
            return engine.transpose(engine.reshape(t, (B, n, h, dk)), (0, 2, 1, 3))

        q = split_heads(self.wq(x))
        k = split_heads(self.wk(x))
        v = split_heads(self.wv(x))
        scores = engine.mul(engine.matmul(q, engine.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dk))
        if attn_bias is not None:
            scores = engine.add(scores, attn_bias)
        probs = engine.softmax(scores, axis=-1)
        ctx = engine.matmul(probs, v)  # (B, h, n, dk)
        merged = engine.reshape(engine.transpose(ctx, (0, 2, 1, 3)), (B, n, d))
        return self.wo(merged)

    def attention_probs(self, x: Tensor, attn_bias: np.ndarray | None = None) -> np.ndarray:
        """Attention weight rows (for inspection/tests), without tape."""
        with engine.no_grad():
            B, n, d = x.shape
            h, dk = self.n_heads, self.d_head
            q = engine.transpose(engine.reshape(self.wq(x), (B, n, h, dk)), (0, 2, 1, 3))
            k = engine.transpose(engine.reshape(self.wk(x), (B, n, h, dk)), (0, 2, 1, 3))
            scores = engine.mul(engine.matmul(q, engine.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dk))
            if attn_bias is not None:
                scores = engine.add(scores, attn_bias)
            return engine.softmax(scores, axis=-1).data


class EncoderBlock(Module):
    """Pre-LN transformer block: LN -> attention -> residual, then
    LN -> feed-forward -> residual."""

    def __init__(self, d: int, n_heads: int, rng: np.random.Generator, dtype=np.float32, dropout: float = 0.1):
        self.ln1 = LayerNorm(d, dtype)
        self.attn = MultiHeadSelfAttention(d, n_heads, rng, dtype)
        self.ln2 = LayerNorm(d, dtype)
        self.ff = FeedForward(d, rng, dtype)
        self.dropout = dropout

    def __call__(
        self,
        x: Tensor,
        attn_bias: np.ndarray | None = None,
        drop_rng: np.random.Generator | None = None,
    ) -> Tensor:
        a = self.attn(self.ln1(x), attn_bias)
        if drop_rng is not None and self.dropout > 0:
            a = engine.dropout(a, self.dropout, drop_rng)
        x = engine.add(x, a)
        f = self.ff(self.ln2(x))
        if drop_rng is not None and self.dropout > 0:
            f = engine.dropout(f, self.dropout, drop_rng)
        return engine.add(x, f)


def sinusoidal_positions(max_len: int, d: int, dtype=np.float32) -> np.ndarray:
    """Fixed sinusoidal positional encodings (max_len, d)."""
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    i = np.arange(d, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    enc = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return enc.astype(dtype)
