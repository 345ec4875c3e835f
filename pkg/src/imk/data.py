"""Dataset formats, vocabulary encoding, splitting, augmentation and
masked-character examples for language-model pretraining.

The on-disk dataset format is JSONL, one typed phrase per line:

    {"participant": str, "age": int, "device": str, "screen_w": int,
     "screen_h": int, "corpus": str, "phrase": str,
     "points": [[x, y, t_ms], ...]}

Every point corresponds 1:1 to a character of ``phrase``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

VOCAB_SIZE = 31

# Masked-LM policy (BERT ratios at character granularity).
MASK_SELECT_PROB = 0.15
MASK_TOKEN_PROB = 0.80
MASK_RANDOM_PROB = 0.10

# Augmentation: shift a point with this probability, each axis by an
# integer offset drawn uniformly from [-AUGMENT_MAX_SHIFT, +AUGMENT_MAX_SHIFT].
AUGMENT_PROB = 0.5
AUGMENT_MAX_SHIFT = 3


class DatasetError(ValueError):
    """Malformed or inconsistent dataset content."""


class SourceCorpus(str, Enum):
    ONE_BILLION_WORD = "OneBillionWord"
    MACKENZIE = "MacKenzie"
    COMMON = "Common"
    SYNTHETIC = "Synthetic"


@dataclass(frozen=True)
class TouchPoint:
    """One committed keystroke: pixel coordinates plus milliseconds since
    the start of the phrase."""

    x: float
    y: float
    t_ms: int


@dataclass(frozen=True)
class SessionMeta:
    participant_id: str
    age: int
    device: str
    screen_w: int
    screen_h: int

    def __post_init__(self):
        if not self.participant_id:
            raise DatasetError("participant_id must be non-empty")
        if self.screen_w <= 0 or self.screen_h <= 0:
            raise DatasetError(
                f"screen dims must be positive, got {self.screen_w}x{self.screen_h}"
            )


@dataclass(frozen=True)
class TypedPhrase:
    """A ground-truth phrase paired 1:1 with its touch points.

    Off-screen coordinates are legal (typos may land outside the screen),
    but the point/character alignment is strict.
    """

    meta: SessionMeta
    phrase: str
    points: tuple[TouchPoint, ...]
    source_corpus: SourceCorpus

    def __post_init__(self):
        if len(self.points) != len(self.phrase):
            raise DatasetError(
                f"phrase {self.phrase!r}: {len(self.points)} points for "
                f"{len(self.phrase)} characters"
            )
        t_prev = None
        for p in self.points:
            if not (np.isfinite(p.x) and np.isfinite(p.y)):
                raise DatasetError(f"phrase {self.phrase!r}: non-finite coordinate")
            if t_prev is not None and p.t_ms < t_prev:
                raise DatasetError(f"phrase {self.phrase!r}: t_ms not non-decreasing")
            t_prev = p.t_ms

    def __len__(self) -> int:
        return len(self.points)

    def coords(self) -> np.ndarray:
        """(n, 2) float64 array of raw pixel coordinates."""
        return np.array([[p.x, p.y] for p in self.points], dtype=np.float64)


PAD_TOKEN = "[pad]"
MASK_TOKEN = "[mask]"
UNK_TOKEN = "[unk]"


@dataclass(frozen=True)
class VocabSpec:
    """The 31-token character vocabulary.

    Single-character tokens map characters directly; the three bracketed
    specials carry padding, confidence masking and out-of-vocabulary duty.
    """

    tokens: tuple[str, ...]
    pad_index: int
    mask_index: int
    unk_index: int
    char_to_index: dict[str, int] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if len(self.tokens) != VOCAB_SIZE:
            raise DatasetError(f"vocabulary must have {VOCAB_SIZE} tokens, got {len(self.tokens)}")
        if len(set(self.tokens)) != len(self.tokens):
            raise DatasetError("vocabulary tokens must be unique")
        special = {self.pad_index, self.mask_index, self.unk_index}
        if len(special) != 3 or any(not 0 <= i < len(self.tokens) for i in special):
            raise DatasetError("pad/mask/unk indices must be distinct and in range")
        for ch in "abcdefghijklmnopqrstuvwxyz ":
            if ch not in self.tokens:
                raise DatasetError(f"vocabulary missing required character {ch!r}")
        lookup = {t: i for i, t in enumerate(self.tokens) if len(t) == 1}
        object.__setattr__(self, "char_to_index", lookup)

    def __len__(self) -> int:
        return VOCAB_SIZE

    @property
    def typeable_indices(self) -> list[int]:
        """Indices of single-character tokens (everything but the specials)."""
        return sorted(self.char_to_index.values())

    def index_of(self, ch: str) -> int:
        return self.char_to_index.get(ch.lower(), self.unk_index)

    def to_json(self) -> str:
        payload = {
            "tokens": list(self.tokens),
            "pad_index": self.pad_index,
            "mask_index": self.mask_index,
            "unk_index": self.unk_index,
        }
        return json.dumps(payload, ensure_ascii=False, separators=(",", ":"))

    @staticmethod
    def from_json(text: str) -> "VocabSpec":
        d = json.loads(text)
        return VocabSpec(
            tokens=tuple(d["tokens"]),
            pad_index=int(d["pad_index"]),
            mask_index=int(d["mask_index"]),
            unk_index=int(d["unk_index"]),
        )


def default_vocab() -> VocabSpec:
    """Specials first, then 'a'-'z', space and apostrophe: 31 tokens."""
    tokens = (PAD_TOKEN, MASK_TOKEN, UNK_TOKEN) + tuple("abcdefghijklmnopqrstuvwxyz") + (" ", "'")
    return VocabSpec(tokens=tokens, pad_index=0, mask_index=1, unk_index=2)


def encode_text(s: str, vocab: VocabSpec) -> list[int]:
    """Lowercase and map each character to its vocabulary index.

    Characters outside the vocabulary map to ``unk_index``; length is
    always preserved.
    """
    return [vocab.index_of(ch) for ch in s]


def decode_text(indices: Sequence[int], vocab: VocabSpec) -> str:
    """Inverse of :func:`encode_text` for single-character tokens.

    Special indices render as their bracketed token names, so the
    encode/decode round trip holds only for typeable index sequences.
    """
    return "".join(vocab.tokens[i] for i in indices)


def clean_corpus_text(s: str, vocab: VocabSpec, max_len: int = 192) -> str:
    """Normalize raw corpus text for LM pretraining.

    Lowercases, drops characters outside the vocabulary (collapsing the
    removed runs to single spaces), squeezes space runs and caps length.
    """
    out: list[str] = []
    for ch in s.lower():
        if ch in vocab.char_to_index and ch != " ":
            out.append(ch)
        else:
            if out and out[-1] != " ":
                out.append(" ")
    text = "".join(out).strip()
    return text[:max_len]


@dataclass(frozen=True)
class SplitSpec:
    """Participant-wise split: every participant lives in exactly one set."""

    train_participants: frozenset[str]
    val_participants: frozenset[str]
    test_participants: frozenset[str]

    def __post_init__(self):
        a, b, c = self.train_participants, self.val_participants, self.test_participants
        if a & b or a & c or b & c:
            raise DatasetError("split participant sets must be pairwise disjoint")

    @staticmethod
    def of(train: Iterable[str], val: Iterable[str], test: Iterable[str]) -> "SplitSpec":
        return SplitSpec(frozenset(train), frozenset(val), frozenset(test))


def split_by_participant(
    data: Sequence[TypedPhrase], spec: SplitSpec
) -> tuple[list[TypedPhrase], list[TypedPhrase], list[TypedPhrase]]:
    """Assign each phrase to train/val/test by its participant id."""
    known = spec.train_participants | spec.val_participants | spec.test_participants
    missing = sorted({p.meta.participant_id for p in data} - known)
    if missing:
        raise DatasetError(f"participants not covered by split spec: {', '.join(missing)}")
    train = [p for p in data if p.meta.participant_id in spec.train_participants]
    val = [p for p in data if p.meta.participant_id in spec.val_participants]
    test = [p for p in data if p.meta.participant_id in spec.test_participants]
    return train, val, test


# ---------------------------------------------------------------------------
# JSONL (de)serialization
# ---------------------------------------------------------------------------

_RECORD_KEYS = ("participant", "age", "device", "screen_w", "screen_h", "corpus", "phrase", "points")


def phrase_to_record(phrase: TypedPhrase) -> dict:
    return {
        "participant": phrase.meta.participant_id,
        "age": phrase.meta.age,
        "device": phrase.meta.device,
        "screen_w": phrase.meta.screen_w,
        "screen_h": phrase.meta.screen_h,
        "corpus": phrase.source_corpus.value,
        "phrase": phrase.phrase,
        "points": [[p.x, p.y, p.t_ms] for p in phrase.points],
    }


def phrase_from_record(rec: dict) -> TypedPhrase:
    meta = SessionMeta(
        participant_id=rec["participant"],
        age=int(rec["age"]),
        device=rec["device"],
        screen_w=int(rec["screen_w"]),
        screen_h=int(rec["screen_h"]),
    )
    points = tuple(TouchPoint(float(x), float(y), int(t)) for x, y, t in rec["points"])
    return TypedPhrase(
        meta=meta,
        phrase=rec["phrase"],
        points=points,
        source_corpus=SourceCorpus(rec["corpus"]),
    )


def serialize_phrase(phrase: TypedPhrase) -> str:
    """Canonical single-line JSON for one phrase (fixed key order)."""
    return json.dumps(phrase_to_record(phrase), ensure_ascii=False, separators=(",", ":"))


def load_dataset(path: str | Path) -> list[TypedPhrase]:
    """Load a JSONL dataset, validating alignment per record."""
    out: list[TypedPhrase] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"{path}:{lineno}: malformed JSON record: {e}") from e
            try:
                out.append(phrase_from_record(rec))
            except (KeyError, TypeError, ValueError) as e:
                raise DatasetError(f"{path}:{lineno}: {e}") from e
    return out


def save_dataset(data: Iterable[TypedPhrase], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for phrase in data:
            fh.write(serialize_phrase(phrase))
            fh.write("\n")


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------


def sample_point_shift(rng: np.random.Generator) -> tuple[int, int, bool]:
    """Draw one augmentation decision: (dx, dy, triggered).

    Split out so the trigger rate is directly observable in tests; a
    triggered shift may still be (0, 0).
    """
    if rng.random() >= AUGMENT_PROB:
        return 0, 0, False
    dx = int(rng.integers(-AUGMENT_MAX_SHIFT, AUGMENT_MAX_SHIFT + 1))
    dy = int(rng.integers(-AUGMENT_MAX_SHIFT, AUGMENT_MAX_SHIFT + 1))
    return dx, dy, True


def augment(phrase: TypedPhrase, rng: np.random.Generator) -> TypedPhrase:
    """Jitter each point independently; characters and timestamps unchanged.

    The original phrase is never modified.
    """
    new_points = []
    for p in phrase.points:
        dx, dy, _ = sample_point_shift(rng)
        new_points.append(TouchPoint(p.x + dx, p.y + dy, p.t_ms))
    return replace(phrase, points=tuple(new_points))


# ---------------------------------------------------------------------------
# Masked-character examples (BERT-style, character granularity)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MaskedCharExample:
    input_indices: tuple[int, ...]
    target_indices: tuple[int, ...]
    loss_mask: tuple[bool, ...]

    def __post_init__(self):
        if not (len(self.input_indices) == len(self.target_indices) == len(self.loss_mask)):
            raise DatasetError("masked example fields must share one length")


def sample_mask_action(rng: np.random.Generator) -> str:
    """One of 'mask' (80%), 'random' (10%) or 'keep' (10%)."""
    u = rng.random()
    if u < MASK_TOKEN_PROB:
        return "mask"
    if u < MASK_TOKEN_PROB + MASK_RANDOM_PROB:
        return "random"
    return "keep"


def make_masked_batch(text: str, vocab: VocabSpec, rng: np.random.Generator) -> MaskedCharExample:
    """Turn one text into a masked-LM training example.

    15% of positions are selected for prediction; of those, 80% become the
    mask token, 10% a random non-special token and 10% stay unchanged.
    Loss applies only at selected positions.
    """
    if not text:
        raise DatasetError("cannot mask empty text")
    targets = encode_text(text, vocab)
    inputs = list(targets)
    loss_mask = [False] * len(targets)
    typeable = vocab.typeable_indices
    for i in range(len(targets)):
        if rng.random() >= MASK_SELECT_PROB:
            continue
        loss_mask[i] = True
        action = sample_mask_action(rng)
        if action == "mask":
            inputs[i] = vocab.mask_index
        elif action == "random":
            inputs[i] = typeable[int(rng.integers(0, len(typeable)))]
    return MaskedCharExample(tuple(inputs), tuple(targets), tuple(loss_mask))
