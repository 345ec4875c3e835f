"""The two-stage neural character decoder.

A geometric stage (stacked BiGRU over normalized touch coordinates) emits
per-position character logits; positions whose softmax confidence falls
below the threshold are replaced with the mask token; a semantic stage
(pre-LN transformer encoder acting as a character language model) then
re-decodes the whole sequence, filling masked positions and free to revise
kept ones. Decoding is whole-sequence: every new point re-decodes the
entire input, so earlier characters may change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..data import SessionMeta, TouchPoint, VocabSpec, default_vocab
from . import engine
from .engine import Tensor
from .layers import BiGRULayer, EncoderBlock, LayerNorm, Linear, Module, sinusoidal_positions

ATTN_MASK_VALUE = -1e9


class SequenceLengthError(ValueError):
    """Input sequence empty or longer than the model's max_len."""


def default_heads(d_h: int) -> int:
    """Head-count convention: one head per 64 hidden units, at least one."""
    return max(1, d_h // 64)


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 4
    d_h: int = 256
    n_heads: int = 4
    vocab_size: int = 31
    tau: float = 0.45
    max_len: int = 256
    dropout: float = 0.1
    dtype: str = "float32"

    def __post_init__(self):
        if self.d_h % self.n_heads != 0:
            raise ValueError(f"d_h={self.d_h} not divisible by n_heads={self.n_heads}")
        if self.d_h % 2 != 0:
            raise ValueError("d_h must be even (bidirectional split)")
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if self.layers < 1 or self.max_len < 1:
            raise ValueError("layers and max_len must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"unsupported dtype {self.dtype}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def to_dict(self) -> dict:
        return {
            "layers": self.layers,
            "d_h": self.d_h,
            "n_heads": self.n_heads,
            "vocab_size": self.vocab_size,
            "tau": self.tau,
            "max_len": self.max_len,
            "dropout": self.dropout,
            "dtype": self.dtype,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        return ModelConfig(**d)


@dataclass(frozen=True)
class DecodedText:
    """Final character indices plus per-position provenance.

    Provenance is "kept" where the geometric confidence cleared the
    threshold and "filled" where the semantic decoder worked from a mask
    token. The output characters themselves always come from the semantic
    stage, which may revise kept positions too.
    """

    indices: tuple[int, ...]
    text: str
    provenance: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.indices)


def normalize_points(points: Sequence[TouchPoint], meta: SessionMeta) -> np.ndarray:
    """Scale raw pixels to screen-relative units: (n, 2) with x/screen_w,
    y/screen_h. Off-screen points land outside [0, 1], which is fine."""
    out = np.array([[p.x / meta.screen_w, p.y / meta.screen_h] for p in points], dtype=np.float64)
    return out.reshape(-1, 2)


def softmax_confidence(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction; rows sum to one."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def mask_by_confidence(probs: np.ndarray, tau: float, mask_index: int) -> tuple[np.ndarray, np.ndarray]:
    """Apply the confidence gate to (n, v) probability rows.

    Returns (indices, kept): positions with max probability >= tau keep
    their argmax (ties break to the lowest index), the rest become the
    mask token. The comparison is inclusive at exactly tau.
    """
    probs = np.asarray(probs)
    best = probs.argmax(axis=-1)
    kept = probs.max(axis=-1) >= tau
    indices = np.where(kept, best, mask_index)
    return indices, kept


class GeometricDecoder(Module):
    """Stacked BiGRU from 2-d normalized coordinates to character logits.

    Dropout sits between the recurrent layers and runs only when a
    training rng is passed; keeping it active in every training forward
    (including the frozen pass that feeds the semantic stage) stops the
    stack from memorizing training users, which would otherwise starve the
    semantic stage of realistic errors to learn correction from.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        dtype = cfg.np_dtype
        self.in_proj = Linear(2, cfg.d_h, rng, dtype)
        self.layers = [BiGRULayer(cfg.d_h, cfg.d_h, rng, dtype) for _ in range(cfg.layers)]
        self.head = Linear(cfg.d_h, cfg.vocab_size, rng, dtype)
        self.dropout = cfg.dropout

    def __call__(
        self,
        x: Tensor,
        step_mask: np.ndarray | None = None,
        drop_rng: np.random.Generator | None = None,
    ) -> Tensor:
        h = self.in_proj(x)
        for i, layer in enumerate(self.layers):
            h = layer(h, step_mask)
            if drop_rng is not None and self.dropout > 0 and i < len(self.layers) - 1:
                h = engine.dropout(h, self.dropout, drop_rng)
        return self.head(h)


class SemanticDecoder(Module):
    """Pre-LN transformer encoder over embedded (possibly masked)
    character sequences, with an auxiliary LM head after every block and
    the main head after the final layer norm."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        dtype = cfg.np_dtype
        self.embed = Tensor((rng.standard_normal((cfg.vocab_size, cfg.d_h)) * 0.02).astype(dtype), requires_grad=True)
        # embeddings are scaled by sqrt(d_h) before the unit-amplitude
        # sinusoidal encoding is added, the usual balance
        self.embed_scale = math.sqrt(cfg.d_h)
        self.pe = sinusoidal_positions(cfg.max_len, cfg.d_h, dtype)
        self.blocks = [EncoderBlock(cfg.d_h, cfg.n_heads, rng, dtype, cfg.dropout) for _ in range(cfg.layers)]
        self.final_ln = LayerNorm(cfg.d_h, dtype)
        self.lm_head = Linear(cfg.d_h, cfg.vocab_size, rng, dtype)
        self.aux_heads = [Linear(cfg.d_h, cfg.vocab_size, rng, dtype) for _ in range(cfg.layers)]

    def __call__(
        self,
        embedded: Tensor,
        attn_bias: np.ndarray | None = None,
        drop_rng: np.random.Generator | None = None,
        want_aux: bool = False,
    ) -> tuple[Tensor, list[Tensor]]:
        n = embedded.shape[1]
        h = engine.add(embedded, self.pe[:n])
        aux = []
        for block, aux_head in zip(self.blocks, self.aux_heads):
            h = block(h, attn_bias, drop_rng)
            if want_aux:
                aux.append(aux_head(h))
        return self.lm_head(self.final_ln(h)), aux

    def embed_indices(self, indices: np.ndarray) -> Tensor:
        return engine.mul(engine.embedding(self.embed, indices), self.embed_scale)


def attention_bias_from_lengths(lengths: np.ndarray, n: int, dtype) -> np.ndarray | None:
    """(B, 1, 1, n) additive bias hiding padded key positions."""
    lengths = np.asarray(lengths)
    if (lengths == n).all():
        return None
    valid = np.arange(n)[None, :] < lengths[:, None]
    bias = np.where(valid, 0.0, ATTN_MASK_VALUE).astype(dtype)
    return bias[:, None, None, :]


def step_mask_from_lengths(lengths: np.ndarray, n: int) -> np.ndarray | None:
    lengths = np.asarray(lengths)
    if (lengths == n).all():
        return None
    return (np.arange(n)[None, :] < lengths[:, None]).astype(np.float64)


class SANCDModel:
    """Geometric decoder + confidence masking + semantic decoder."""

    def __init__(self, cfg: ModelConfig, vocab: VocabSpec | None = None, seed: int = 0):
        self.cfg = cfg
        self.vocab = vocab if vocab is not None else default_vocab()
        if len(self.vocab) != cfg.vocab_size:
            raise ValueError("config vocab_size disagrees with vocabulary")
        rng = np.random.default_rng(seed)
        self.geometric = GeometricDecoder(cfg, rng)
        self.semantic = SemanticDecoder(cfg, rng)
        self._typeable = np.asarray(self.vocab.typeable_indices)

    # ------------------------------------------------------------------
    # Parameters
    # ------------------------------------------------------------------

    def parameters(self) -> dict[str, Tensor]:
        out = {f"geometric.{k}": v for k, v in self.geometric.parameters().items()}
        out.update({f"semantic.{k}": v for k, v in self.semantic.parameters().items()})
        return out

    def geometric_parameters(self) -> dict[str, Tensor]:
        return {f"geometric.{k}": v for k, v in self.geometric.parameters().items()}

    def semantic_parameters(self) -> dict[str, Tensor]:
        return {f"semantic.{k}": v for k, v in self.semantic.parameters().items()}

    def zero_grad(self):
        for p in self.parameters().values():
            p.zero_grad()

    # ------------------------------------------------------------------
    # Forward pieces (training)
    # ------------------------------------------------------------------

    def _check_len(self, n: int):
        if n < 1:
            raise SequenceLengthError("empty input sequence")
        if n > self.cfg.max_len:
            raise SequenceLengthError(f"sequence length {n} exceeds max_len {self.cfg.max_len}")

    def geometric_logits(
        self,
        coords: np.ndarray,
        lengths: np.ndarray | None = None,
        drop_rng: np.random.Generator | None = None,
    ) -> Tensor:
        """(B, n, 2) normalized coordinates -> (B, n, v) logits."""
        coords = np.asarray(coords, dtype=self.cfg.np_dtype)
        B, n, _ = coords.shape
        self._check_len(n)
        step_mask = None if lengths is None else step_mask_from_lengths(lengths, n)
        return self.geometric(Tensor(coords), step_mask, drop_rng)

    def semantic_logits(
        self,
        indices: np.ndarray,
        lengths: np.ndarray | None = None,
        drop_rng: np.random.Generator | None = None,
        want_aux: bool = False,
    ) -> tuple[Tensor, list[Tensor]]:
        """(B, n) token indices -> (final logits, aux logits per block)."""
        indices = np.asarray(indices)
        B, n = indices.shape
        self._check_len(n)
        bias = None if lengths is None else attention_bias_from_lengths(lengths, n, self.cfg.np_dtype)
        emb = self.semantic.embed_indices(indices)
        return self.semantic(emb, bias, drop_rng, want_aux)

    def masked_indices_from_geometric(
        self,
        coords: np.ndarray,
        lengths: np.ndarray | None = None,
        drop_rng: np.random.Generator | None = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Run the frozen geometric stage and the confidence gate.

        Returns (indices, kept) as (B, n) arrays; padded positions get the
        pad token and count as neither kept nor masked. Passing a training
        rng keeps the geometric dropout active (noisy-teacher input for the
        semantic phase); inference always runs with dropout off.
        """
        with engine.no_grad():
            logits = self.geometric_logits(coords, lengths, drop_rng).data
        B, n, _ = logits.shape
        probs = softmax_confidence(logits)
        indices, kept = mask_by_confidence(probs.reshape(-1, self.cfg.vocab_size), self.cfg.tau, self.vocab.mask_index)
        indices = indices.reshape(B, n)
        kept = kept.reshape(B, n)
        if lengths is not None:
            pad = np.arange(n)[None, :] >= np.asarray(lengths)[:, None]
            indices = np.where(pad, self.vocab.pad_index, indices)
            kept = np.where(pad, False, kept)
        return indices, kept

    # ------------------------------------------------------------------
    # Inference
    # ------------------------------------------------------------------

    def _restricted_argmax(self, logits: np.ndarray) -> np.ndarray:
        """Argmax over typeable tokens only, so decoded text is always one
        character per position."""
        sub = logits[..., self._typeable]
        return self._typeable[sub.argmax(axis=-1)]

    def decode_batch(self, coords: np.ndarray, lengths: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Full two-stage decode of a batch.

        Returns (char indices (B, n), kept flags (B, n)). Deterministic:
        no dropout, no tape.
        """
        with engine.no_grad():
            masked_idx, kept = self.masked_indices_from_geometric(coords, lengths)
            final, _ = self.semantic_logits(masked_idx, lengths)
            out = self._restricted_argmax(final.data)
        return out, kept

    def geometric_argmax_batch(self, coords: np.ndarray, lengths: np.ndarray | None = None) -> np.ndarray:
        with engine.no_grad():
            logits = self.geometric_logits(coords, lengths).data
        return self._restricted_argmax(logits)

    def _decoded_text(self, indices: np.ndarray, kept: np.ndarray) -> DecodedText:
        idx = tuple(int(i) for i in indices)
        text = "".join(self.vocab.tokens[i] for i in idx)
        prov = tuple("kept" if k else "filled" for k in kept)
        return DecodedText(indices=idx, text=text, provenance=prov)

    def decode(self, points: Sequence[TouchPoint], meta: SessionMeta) -> DecodedText:
        """Decode one touch sequence end to end (whole-sequence re-decode)."""
        self._check_len(len(points))
        coords = normalize_points(points, meta)[None, :, :]
        indices, kept = self.decode_batch(coords)
        return self._decoded_text(indices[0], kept[0])

    def decode_geometric_only(self, points: Sequence[TouchPoint], meta: SessionMeta) -> DecodedText:
        """Ablation path: geometric argmax without the semantic stage.

        Every position counts as kept."""
        self._check_len(len(points))
        coords = normalize_points(points, meta)[None, :, :]
        indices = self.geometric_argmax_batch(coords)[0]
        return self._decoded_text(indices, np.ones(len(indices), dtype=bool))

    def prediction_map(self, prefix_points: Sequence[TouchPoint], meta: SessionMeta, grid_step: int) -> "PixelMap":
        return pixel_prediction_map(self, prefix_points, meta, grid_step)


class GeometricOnlyDecoder:
    """Pluggable-decoder wrapper exposing the geometric ablation through
    the same decode interface."""

    def __init__(self, model: SANCDModel):
        self.model = model

    @property
    def vocab(self) -> VocabSpec:
        return self.model.vocab

    def decode(self, points: Sequence[TouchPoint], meta: SessionMeta) -> DecodedText:
        return self.model.decode_geometric_only(points, meta)

    def prediction_map(self, prefix_points: Sequence[TouchPoint], meta: SessionMeta, grid_step: int) -> "PixelMap":
        return pixel_prediction_map(self.model, prefix_points, meta, grid_step, mode="geometric")


# ---------------------------------------------------------------------------
# Pixel-wise prediction map
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PixelMap:
    """Predicted character for each grid cell, laid out [row][col] with
    rows spanning the y axis top-to-bottom."""

    screen_w: int
    screen_h: int
    step: int
    chars: tuple[tuple[str, ...], ...]
    indices: np.ndarray = field(repr=False, compare=False)

    @property
    def rows(self) -> int:
        return len(self.chars)

    @property
    def cols(self) -> int:
        return len(self.chars[0]) if self.chars else 0


def pixel_prediction_map(
    model: SANCDModel,
    prefix_points: Sequence[TouchPoint],
    meta: SessionMeta,
    grid_step: int,
    chunk: int = 512,
    mode: str = "full",
) -> PixelMap:
    """Predicted last character when the next touch lands in each cell.

    For every grid cell center, the cell is appended to the prefix as a
    candidate next point and the whole sequence is re-decoded; the decoded
    character at the final position is recorded.
    """
    if grid_step < 1:
        raise ValueError(f"grid_step must be >= 1, got {grid_step}")
    model._check_len(len(prefix_points) + 1)
    cols = math.ceil(meta.screen_w / grid_step)
    rows = math.ceil(meta.screen_h / grid_step)
    prefix = normalize_points(prefix_points, meta) if len(prefix_points) else np.zeros((0, 2))

    centers = [
        ((c + 0.5) * grid_step / meta.screen_w, (r + 0.5) * grid_step / meta.screen_h)
        for r in range(rows)
        for c in range(cols)
    ]
    centers = np.asarray(centers, dtype=np.float64)
    n = len(prefix) + 1
    out = np.empty(len(centers), dtype=np.int64)
    for lo in range(0, len(centers), chunk):
        batch_centers = centers[lo : lo + chunk]
        coords = np.empty((len(batch_centers), n, 2), dtype=np.float64)
        coords[:, : len(prefix), :] = prefix[None, :, :]
        coords[:, -1, :] = batch_centers
        if mode == "geometric":
            indices = model.geometric_argmax_batch(coords)
        else:
            indices, _ = model.decode_batch(coords)
        out[lo : lo + len(batch_centers)] = indices[:, -1]
    grid = out.reshape(rows, cols)
    chars = tuple(tuple(model.vocab.tokens[i] for i in row) for row in grid)
    return PixelMap(screen_w=meta.screen_w, screen_h=meta.screen_h, step=grid_step, chars=chars, indices=grid)
