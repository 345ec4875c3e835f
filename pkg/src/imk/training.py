"""Three-phase training scheme for the two-stage decoder.

Phase 1 pretrains the semantic stage as a masked character language model
on plain text; phase 2 pretrains the geometric stage on coordinate
sequences with per-position cross-entropy; phase 3 fine-tunes by
alternating one-epoch turns, first updating the semantic parameters
against the end-to-end loss with the geometric stage frozen, then the
geometric parameters against their own cross-entropy with the semantic
stage frozen. Early stopping watches validation character accuracy with
patience 3 throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import metrics
from .data import TypedPhrase, VocabSpec, augment, encode_text, make_masked_batch
from .model import engine
from .model.checkpoint import load_model, save_model
from .model.engine import Tensor
from .model.sancd import SANCDModel, normalize_points

AUX_LOSS_WEIGHT = 0.3


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the batch id and gradient norms."""


class Phase(str, Enum):
    PRETRAIN_S = "PRETRAIN_S"
    PRETRAIN_G = "PRETRAIN_G"
    FINETUNE_S = "FINETUNE_S"
    FINETUNE_G = "FINETUNE_G"


@dataclass
class OptimizerSpec:
    """Per-decoder optimizer settings: plain SGD with gradient clipping for
    the geometric stage, Adam for the semantic stage."""

    geo_lr: float = 3.0
    geo_clip: float = 0.5
    sem_lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.geo_lr <= 0 or self.sem_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.geo_clip <= 0:
            raise ValueError("gradient clip must be positive")

    def to_dict(self) -> dict:
        return {
            "geo_lr": self.geo_lr,
            "geo_clip": self.geo_clip,
            "sem_lr": self.sem_lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
        }

    @staticmethod
    def from_dict(d: dict) -> "OptimizerSpec":
        return OptimizerSpec(**d)


def clip_global_norm(params: dict[str, Tensor], max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most
    ``max_norm``; returns the post-clip norm."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    norm = total**0.5
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * scale
        return max_norm
    return norm


def grad_global_norm(params: dict[str, Tensor]) -> float:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    return total**0.5


class SGDOptimizer:
    def __init__(self, params: dict[str, Tensor], lr: float, clip_norm: float | None = None):
        self.params = params
        self.lr = lr
        self.clip_norm = clip_norm
        self.last_grad_norm: float | None = None

    def step(self):
        if self.clip_norm is not None:
            self.last_grad_norm = clip_global_norm(self.params, self.clip_norm)
        else:
            self.last_grad_norm = grad_global_norm(self.params)
        for p in self.params.values():
            if p.grad is not None:
                p.data = p.data - (self.lr * p.grad).astype(p.data.dtype, copy=False)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def state_tensors(self) -> dict[str, np.ndarray]:
        return {}

    def state_scalars(self) -> dict:
        return {}

    def load_state(self, tensors: dict[str, np.ndarray], scalars: dict):
        pass


class AdamOptimizer:
    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.last_grad_norm: float | None = None

    def step(self):
        self.t += 1
        self.last_grad_norm = grad_global_norm(self.params)
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[k] / b1c
            v_hat = self.v[k] / b2c
            p.data = p.data - (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.data.dtype, copy=False)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for k in self.params:
            out[f"m.{k}"] = self.m[k]
            out[f"v.{k}"] = self.v[k]
        return out

    def state_scalars(self) -> dict:
        return {"t": self.t}

    def load_state(self, tensors: dict[str, np.ndarray], scalars: dict):
        self.t = int(scalars.get("t", 0))
        for k in self.params:
            if f"m.{k}" in tensors:
                self.m[k] = tensors[f"m.{k}"].astype(self.m[k].dtype, copy=True)
            if f"v.{k}" in tensors:
                self.v[k] = tensors[f"v.{k}"].astype(self.v[k].dtype, copy=True)


@dataclass
class EarlyStopping:
    """Stop once the watched accuracy has not improved for more than
    ``patience`` epochs."""

    patience: int = 3
    best_value: float = float("-inf")
    epochs_since_best: int = 0

    def update(self, value: float) -> bool:
        if value > self.best_value:
            self.best_value = value
            self.epochs_since_best = 0
        else:
            self.epochs_since_best += 1
        return self.epochs_since_best > self.patience

    @property
    def improved(self) -> bool:
        return self.epochs_since_best == 0


@dataclass
class TrainState:
    epoch: int = 0
    phase: Phase = Phase.PRETRAIN_S
    seed: int = 0
    best_metric: float | None = None

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "phase": self.phase.value,
            "seed": self.seed,
            "best_metric": self.best_metric,
        }

    @staticmethod
    def from_dict(d: dict) -> "TrainState":
        return TrainState(
            epoch=int(d["epoch"]),
            phase=Phase(d["phase"]),
            seed=int(d["seed"]),
            best_metric=d.get("best_metric"),
        )


# ---------------------------------------------------------------------------
# Batching helpers
# ---------------------------------------------------------------------------


def pad_index_batch(seqs: Sequence[Sequence[int]], pad: int) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    n = int(lengths.max())
    out = np.full((len(seqs), n), pad, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out, lengths


def phrase_batch_arrays(
    phrases: Sequence[TypedPhrase], vocab: VocabSpec
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pad a list of phrases into (coords (B, n, 2), targets (B, n), lengths)."""
    lengths = np.array([len(p) for p in phrases], dtype=np.int64)
    n = int(lengths.max())
    coords = np.zeros((len(phrases), n, 2), dtype=np.float64)
    targets = np.full((len(phrases), n), vocab.pad_index, dtype=np.int64)
    for i, p in enumerate(phrases):
        coords[i, : len(p)] = normalize_points(p.points, p.meta)
        targets[i, : len(p)] = encode_text(p.phrase, vocab)
    return coords, targets, lengths


def _iter_batches(n_items: int, batch_size: int, order: np.ndarray):
    for lo in range(0, n_items, batch_size):
        yield order[lo : lo + batch_size]


def valid_weights(lengths: np.ndarray, n: int) -> np.ndarray:
    return (np.arange(n)[None, :] < lengths[:, None]).astype(np.float64)


def _check_finite(loss: Tensor, batch_id: str, params: dict[str, Tensor]):
    if not np.isfinite(loss.data):
        raise TrainingDiverged(
            f"non-finite loss at batch {batch_id}; grad global norm "
            f"{grad_global_norm(params):.4g}"
        )


def _snapshot(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {k: p.data.copy() for k, p in params.items()}


def _restore(params: dict[str, Tensor], snap: dict[str, np.ndarray]):
    for k, p in params.items():
        p.data = snap[k].copy()


# ---------------------------------------------------------------------------
# Validation metrics
# ---------------------------------------------------------------------------


def masked_lm_accuracy(model: SANCDModel, examples: Sequence, batch_size: int = 64) -> float:
    """Accuracy of the final LM head at loss-masked positions."""
    correct = total = 0
    for lo in range(0, len(examples), batch_size):
        chunk = examples[lo : lo + batch_size]
        inputs, lengths = pad_index_batch([e.input_indices for e in chunk], model.vocab.pad_index)
        targets, _ = pad_index_batch([e.target_indices for e in chunk], model.vocab.pad_index)
        mask = np.zeros_like(inputs, dtype=bool)
        for i, e in enumerate(chunk):
            mask[i, : len(e.loss_mask)] = e.loss_mask
        with engine.no_grad():
            logits, _ = model.semantic_logits(inputs, lengths)
        pred = logits.data.argmax(axis=-1)
        correct += int(((pred == targets) & mask).sum())
        total += int(mask.sum())
    return correct / total if total else 0.0


def geometric_accuracy(model: SANCDModel, phrases: Sequence[TypedPhrase], batch_size: int = 64) -> float:
    correct = total = 0
    for lo in range(0, len(phrases), batch_size):
        chunk = phrases[lo : lo + batch_size]
        coords, targets, lengths = phrase_batch_arrays(chunk, model.vocab)
        pred = model.geometric_argmax_batch(coords, lengths)
        valid = valid_weights(lengths, coords.shape[1]).astype(bool)
        correct += int(((pred == targets) & valid).sum())
        total += int(valid.sum())
    return correct / total if total else 0.0


def pipeline_accuracy(model: SANCDModel, phrases: Sequence[TypedPhrase], batch_size: int = 64) -> float:
    """Full two-stage decode accuracy (position-wise, micro-averaged)."""
    correct = total = 0
    for lo in range(0, len(phrases), batch_size):
        chunk = phrases[lo : lo + batch_size]
        coords, targets, lengths = phrase_batch_arrays(chunk, model.vocab)
        pred, _ = model.decode_batch(coords, lengths)
        valid = valid_weights(lengths, coords.shape[1]).astype(bool)
        correct += int(((pred == targets) & valid).sum())
        total += int(valid.sum())
    return correct / total if total else 0.0


# ---------------------------------------------------------------------------
# Phase 1: semantic pretraining (masked character LM)
# ---------------------------------------------------------------------------


def pretrain_semantic(
    corpus: Sequence[str],
    model: SANCDModel,
    spec: OptimizerSpec,
    stop: EarlyStopping | None = None,
    *,
    seed: int = 0,
    max_epochs: int = 50,
    batch_size: int = 64,
    mask_draws: int = 1,
    val_corpus: Sequence[str] | None = None,
    log: Callable[[str], None] | None = None,
) -> list[dict]:
    """Masked-character-LM pretraining of the semantic stage.

    The loss sums the final head's cross-entropy at masked positions with
    0.3 times each auxiliary head's. ``mask_draws`` controls how many
    independently masked views of each sentence one epoch sees; more draws
    average the mask noise out of each gradient step, which matters on
    small corpora. Returns per-epoch history; the model is left holding
    the best-by-validation semantic parameters.
    """
    if not corpus:
        raise ValueError("empty corpus")
    stop = stop if stop is not None else EarlyStopping()
    params = model.semantic_parameters()
    opt = AdamOptimizer(params, spec.sem_lr, spec.beta1, spec.beta2, spec.eps)
    vocab = model.vocab

    val_sentences = list(val_corpus) if val_corpus is not None else list(corpus)
    val_rng = np.random.default_rng([seed, 0xA11])
    val_examples = [
        make_masked_batch(s, vocab, val_rng) for s in val_sentences * max(1, mask_draws)
    ]

    best = _snapshot(params)
    history: list[dict] = []
    n_items = len(corpus) * max(1, mask_draws)
    for epoch in range(1, max_epochs + 1):
        rng = np.random.default_rng([seed, epoch])
        drop_rng = np.random.default_rng([seed, epoch, 1])
        order = rng.permutation(n_items)
        epoch_loss = 0.0
        n_batches = 0
        for batch_ids in _iter_batches(n_items, batch_size, order):
            examples = [make_masked_batch(corpus[i % len(corpus)], vocab, rng) for i in batch_ids]
            inputs, lengths = pad_index_batch([e.input_indices for e in examples], vocab.pad_index)
            targets, _ = pad_index_batch([e.target_indices for e in examples], vocab.pad_index)
            w = np.zeros(inputs.shape, dtype=np.float64)
            for i, e in enumerate(examples):
                w[i, : len(e.loss_mask)] = e.loss_mask
            if w.sum() == 0:
                continue
            opt.zero_grad()
            final, aux = model.semantic_logits(inputs, lengths, drop_rng=drop_rng, want_aux=True)
            loss = engine.cross_entropy_logits(final, targets, w)
            for a in aux:
                loss = engine.add(loss, engine.mul(engine.cross_entropy_logits(a, targets, w), AUX_LOSS_WEIGHT))
            _check_finite(loss, f"semantic epoch {epoch} batch {n_batches}", params)
            loss.backward()
            opt.step()
            epoch_loss += float(loss.data)
            n_batches += 1
        val_acc = masked_lm_accuracy(model, val_examples)
        history.append(
            {"epoch": epoch, "phase": Phase.PRETRAIN_S.value, "train_loss": epoch_loss / max(n_batches, 1), "val_acc": val_acc}
        )
        if log:
            log(f"[pretrain-lm] epoch {epoch}: loss {history[-1]['train_loss']:.4f} val masked acc {val_acc:.4f}")
        should_stop = stop.update(val_acc)
        if stop.improved:
            best = _snapshot(params)
        if should_stop:
            break
    _restore(params, best)
    return history


# ---------------------------------------------------------------------------
# Phase 2: geometric pretraining
# ---------------------------------------------------------------------------


def pretrain_geometric(
    train: Sequence[TypedPhrase],
    model: SANCDModel,
    spec: OptimizerSpec,
    stop: EarlyStopping | None = None,
    *,
    val: Sequence[TypedPhrase] | None = None,
    seed: int = 0,
    max_epochs: int = 50,
    batch_size: int = 32,
    augment_data: bool = True,
    log: Callable[[str], None] | None = None,
) -> list[dict]:
    """Per-position cross-entropy training of the geometric stage with SGD
    and global-norm clipping; batches are augmented in raw pixel space."""
    if not train:
        raise ValueError("empty training set")
    stop = stop if stop is not None else EarlyStopping()
    params = model.geometric_parameters()
    opt = SGDOptimizer(params, spec.geo_lr, clip_norm=spec.geo_clip)
    val_set = list(val) if val is not None else list(train)

    best = _snapshot(params)
    history: list[dict] = []
    for epoch in range(1, max_epochs + 1):
        rng = np.random.default_rng([seed, 0x6E0, epoch])
        order = rng.permutation(len(train))
        epoch_loss = 0.0
        n_batches = 0
        drop_rng = np.random.default_rng([seed, 0x6E0, epoch, 1])
        for batch_ids in _iter_batches(len(train), batch_size, order):
            phrases = [train[i] for i in batch_ids]
            if augment_data:
                phrases = [augment(p, rng) for p in phrases]
            coords, targets, lengths = phrase_batch_arrays(phrases, model.vocab)
            w = valid_weights(lengths, coords.shape[1])
            opt.zero_grad()
            logits = model.geometric_logits(coords, lengths, drop_rng)
            loss = engine.cross_entropy_logits(logits, targets, w)
            _check_finite(loss, f"geometric epoch {epoch} batch {n_batches}", params)
            loss.backward()
            opt.step()
            epoch_loss += float(loss.data)
            n_batches += 1
        val_acc = geometric_accuracy(model, val_set)
        history.append(
            {"epoch": epoch, "phase": Phase.PRETRAIN_G.value, "train_loss": epoch_loss / max(n_batches, 1), "val_acc": val_acc}
        )
        if log:
            log(f"[pretrain-geo] epoch {epoch}: loss {history[-1]['train_loss']:.4f} val char acc {val_acc:.4f}")
        should_stop = stop.update(val_acc)
        if stop.improved:
            best = _snapshot(params)
        if should_stop:
            break
    _restore(params, best)
    return history


# ---------------------------------------------------------------------------
# Phase 3: alternating fine-tuning
# ---------------------------------------------------------------------------


def _semantic_finetune_epoch(
    model: SANCDModel,
    train: Sequence[TypedPhrase],
    opt: AdamOptimizer,
    rng: np.random.Generator,
    drop_rng: np.random.Generator,
    batch_size: int,
    augment_data: bool,
    epoch_tag: str,
) -> float:
    params = opt.params
    order = rng.permutation(len(train))
    epoch_loss = 0.0
    n_batches = 0
    for batch_ids in _iter_batches(len(train), batch_size, order):
        phrases = [train[i] for i in batch_ids]
        if augment_data:
            phrases = [augment(p, rng) for p in phrases]
        coords, targets, lengths = phrase_batch_arrays(phrases, model.vocab)
        w = valid_weights(lengths, coords.shape[1])
        # dropout stays live in the frozen geometric pass: the semantic
        # stage trains against realistic (noisier-than-eval) inputs
        masked_idx, _ = model.masked_indices_from_geometric(coords, lengths, drop_rng=drop_rng)
        opt.zero_grad()
        final, _ = model.semantic_logits(masked_idx, lengths, drop_rng=drop_rng)
        loss = engine.cross_entropy_logits(final, targets, w)
        _check_finite(loss, f"{epoch_tag} batch {n_batches}", params)
        loss.backward()
        opt.step()
        epoch_loss += float(loss.data)
        n_batches += 1
    return epoch_loss / max(n_batches, 1)


def _geometric_finetune_epoch(
    model: SANCDModel,
    train: Sequence[TypedPhrase],
    opt: SGDOptimizer,
    rng: np.random.Generator,
    batch_size: int,
    augment_data: bool,
    epoch_tag: str,
    straight_through: bool,
    drop_rng: np.random.Generator | None = None,
) -> float:
    params = opt.params
    order = rng.permutation(len(train))
    epoch_loss = 0.0
    n_batches = 0
    for batch_ids in _iter_batches(len(train), batch_size, order):
        phrases = [train[i] for i in batch_ids]
        if augment_data:
            phrases = [augment(p, rng) for p in phrases]
        coords, targets, lengths = phrase_batch_arrays(phrases, model.vocab)
        w = valid_weights(lengths, coords.shape[1])
        opt.zero_grad()
        if straight_through:
            loss = _straight_through_loss(model, coords, targets, lengths, w)
        else:
            logits = model.geometric_logits(coords, lengths)
            loss = engine.cross_entropy_logits(logits, targets, w)
        _check_finite(loss, f"{epoch_tag} batch {n_batches}", params)
        loss.backward()
        opt.step()
        epoch_loss += float(loss.data)
        n_batches += 1
    return epoch_loss / max(n_batches, 1)


def _straight_through_loss(
    model: SANCDModel,
    coords: np.ndarray,
    targets: np.ndarray,
    lengths: np.ndarray,
    w: np.ndarray,
) -> Tensor:
    """Experimental end-to-end loss for the geometric phase.

    The hard token selection (argmax or mask substitution) is kept in the
    forward pass while its gradient is routed through the softmax
    probabilities, so the semantic stage's loss can reach the geometric
    parameters despite the discrete gate.
    """
    logits = model.geometric_logits(coords, lengths)
    probs = engine.softmax(logits, axis=-1)
    B, n, v = probs.shape
    flat = probs.data.reshape(-1, v)
    from .model.sancd import mask_by_confidence

    indices, _ = mask_by_confidence(flat, model.cfg.tau, model.vocab.mask_index)
    if lengths is not None:
        pad = (np.arange(n)[None, :] >= lengths[:, None]).reshape(-1)
        indices = np.where(pad, model.vocab.pad_index, indices)
    onehot = np.zeros_like(flat)
    onehot[np.arange(flat.shape[0]), indices] = 1.0
    # forward: one-hot selection; backward: identity to the probabilities
    selection = engine.add(probs, Tensor((onehot - flat).reshape(B, n, v)))
    embedded = engine.mul(engine.matmul(selection, model.semantic.embed), model.semantic.embed_scale)
    final, _ = model.semantic(embedded, None if lengths is None else _attn_bias(model, lengths, n))
    return engine.cross_entropy_logits(final, targets, w)


def _attn_bias(model: SANCDModel, lengths: np.ndarray, n: int):
    from .model.sancd import attention_bias_from_lengths

    return attention_bias_from_lengths(lengths, n, model.cfg.np_dtype)


def finetune(
    model: SANCDModel,
    train: Sequence[TypedPhrase],
    val: Sequence[TypedPhrase],
    spec: OptimizerSpec,
    stop: EarlyStopping | None = None,
    *,
    seed: int = 0,
    max_epochs: int = 40,
    batch_size: int = 32,
    augment_data: bool = True,
    straight_through: bool = False,
    log: Callable[[str], None] | None = None,
) -> list[dict]:
    """Alternating-freeze fine-tuning, starting with a semantic epoch.

    Each epoch trains exactly one stage while the other's parameters stay
    untouched; validation uses full-pipeline character accuracy and the
    best checkpoint (all parameters) is restored at the end.
    """
    if not train or not val:
        raise ValueError("train and val must be non-empty")
    stop = stop if stop is not None else EarlyStopping()
    sem_opt = AdamOptimizer(model.semantic_parameters(), spec.sem_lr, spec.beta1, spec.beta2, spec.eps)
    geo_opt = SGDOptimizer(model.geometric_parameters(), spec.geo_lr, clip_norm=spec.geo_clip)

    all_params = model.parameters()
    best = _snapshot(all_params)
    best_acc = pipeline_accuracy(model, val)
    stop.update(best_acc)
    history: list[dict] = []
    for epoch in range(1, max_epochs + 1):
        rng = np.random.default_rng([seed, 0xF1, epoch])
        drop_rng = np.random.default_rng([seed, 0xF1, epoch, 1])
        semantic_turn = epoch % 2 == 1  # S first, then G, repeatedly
        if semantic_turn:
            phase = Phase.FINETUNE_S
            train_loss = _semantic_finetune_epoch(
                model, train, sem_opt, rng, drop_rng, batch_size, augment_data, f"finetune-S epoch {epoch}"
            )
        else:
            phase = Phase.FINETUNE_G
            train_loss = _geometric_finetune_epoch(
                model, train, geo_opt, rng, batch_size, augment_data, f"finetune-G epoch {epoch}", straight_through
            )
        val_acc = pipeline_accuracy(model, val)
        history.append({"epoch": epoch, "phase": phase.value, "train_loss": train_loss, "val_acc": val_acc})
        if log:
            log(f"[finetune] epoch {epoch} ({phase.value}): loss {train_loss:.4f} val acc {val_acc:.4f}")
        should_stop = stop.update(val_acc)
        if stop.improved:
            best = _snapshot(all_params)
        if should_stop:
            break
    _restore(all_params, best)
    return history


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalReport:
    set_name: str
    n_phrases: int
    cer_pct: float
    wer_pct: float
    char_acc: float

    def to_dict(self) -> dict:
        return {
            "set": self.set_name,
            "n_phrases": self.n_phrases,
            "cer_pct": self.cer_pct,
            "wer_pct": self.wer_pct,
            "char_acc": self.char_acc,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


def _split_on(seq: Sequence[int], sep: int) -> list[tuple[int, ...]]:
    out: list[tuple[int, ...]] = []
    cur: list[int] = []
    for s in seq:
        if s == sep:
            if cur:
                out.append(tuple(cur))
            cur = []
        else:
            cur.append(s)
    if cur:
        out.append(tuple(cur))
    return out


def evaluate(decoder, data: Sequence[TypedPhrase], set_name: str = "eval") -> EvalReport:
    """Decode every phrase and report micro-averaged corpus CER/WER plus
    position-wise character accuracy.

    ``decoder`` is anything with ``decode(points, meta) -> DecodedText``
    and a ``vocab`` attribute; scoring runs on vocabulary-encoded
    sequences (references are lowercased en route).
    """
    if not data:
        raise ValueError("no phrases to evaluate")
    vocab = decoder.vocab
    space = vocab.index_of(" ")
    char_dist = char_len = word_dist = word_len = 0
    correct = total = 0
    for phrase in data:
        ref = encode_text(phrase.phrase, vocab)
        hyp = list(decoder.decode(phrase.points, phrase.meta).indices)
        char_dist += metrics.edit_distance(hyp, ref).distance
        char_len += len(ref)
        ref_words = _split_on(ref, space)
        word_dist += metrics.edit_distance(_split_on(hyp, space), ref_words).distance
        word_len += max(len(ref_words), 1)
        if len(hyp) == len(ref):
            correct += sum(h == r for h, r in zip(hyp, ref))
        total += len(ref)
    return EvalReport(
        set_name=set_name,
        n_phrases=len(data),
        cer_pct=100.0 * char_dist / char_len,
        wer_pct=100.0 * word_dist / word_len,
        char_acc=correct / total,
    )


# ---------------------------------------------------------------------------
# Checkpointing (parameters + training state + optimizer moments)
# ---------------------------------------------------------------------------


@dataclass
class CheckpointBundle:
    model: SANCDModel
    state: TrainState | None
    opt_tensors: dict[str, np.ndarray] = field(default_factory=dict)
    opt_scalars: dict = field(default_factory=dict)


def save_checkpoint(
    path: str | Path,
    model: SANCDModel,
    state: TrainState | None = None,
    optimizers: dict[str, AdamOptimizer | SGDOptimizer] | None = None,
) -> None:
    extra: dict = {"train_state": state.to_dict() if state else None, "optimizer_scalars": {}}
    extra_tensors: dict[str, np.ndarray] = {}
    for name, opt in (optimizers or {}).items():
        extra["optimizer_scalars"][name] = opt.state_scalars()
        for k, arr in opt.state_tensors().items():
            extra_tensors[f"opt.{name}.{k}"] = arr
    save_model(path, model, extra=extra, extra_tensors=extra_tensors)


def load_checkpoint(path: str | Path, vocab: VocabSpec | None = None) -> CheckpointBundle:
    model, extra, leftovers = load_model(path, vocab)
    state = None
    if extra.get("train_state"):
        state = TrainState.from_dict(extra["train_state"])
    opt_tensors = {k[len("opt.") :]: v for k, v in leftovers.items() if k.startswith("opt.")}
    return CheckpointBundle(
        model=model,
        state=state,
        opt_tensors=opt_tensors,
        opt_scalars=extra.get("optimizer_scalars", {}),
    )
