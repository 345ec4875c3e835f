"""Synthetic-typist simulator.

Each synthetic user owns a mental model of the keyboard: a per-axis scale
of the reference layout, an initial offset, a random-walk drift advancing
with every keystroke, and isotropic per-key noise. Population defaults for
scale and offset follow the published behavioral statistics (scale x
0.99 +/- 0.27, scale y 0.95 +/- 0.28; offsets -2.00 +/- 25.68 and
-7.13 +/- 29.44 pixels). Everything is a pure function of (spec, corpus,
seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import SessionMeta, SourceCorpus, TouchPoint, TypedPhrase, VocabSpec, default_vocab

SCALE_TRUNCATION = 0.2  # resample scales at or below this (collapsed keyboards)
KEY_INTERVAL_MS = (150, 350)  # uniform inter-key interval


@dataclass(frozen=True)
class ReferenceLayout:
    """Nominal key centers in pixels on a nominal screen."""

    key_centers: dict[str, tuple[float, float]]
    screen_w: int
    screen_h: int

    def center(self) -> np.ndarray:
        pts = np.asarray(list(self.key_centers.values()), dtype=np.float64)
        return pts.mean(axis=0)

    def position(self, ch: str) -> np.ndarray:
        try:
            return np.asarray(self.key_centers[ch], dtype=np.float64)
        except KeyError:
            raise KeyError(f"character {ch!r} has no key on the layout") from None


def default_layout(pitch: float = 100.0, screen_w: int = 1080, screen_h: int = 1920) -> ReferenceLayout:
    """Staggered QWERTY: 10-9-7 letter rows (apostrophe rides at the end of
    the home row) plus a space bar, keyboard block in the lower screen half."""
    rows = [
        ("qwertyuiop", 0.0),
        ("asdfghjkl'", 0.5),
        ("zxcvbnm", 1.5),
    ]
    margin_x = (screen_w - 10 * pitch) / 2.0
    top = screen_h - 5.0 * pitch
    centers: dict[str, tuple[float, float]] = {}
    for r, (chars, stagger) in enumerate(rows):
        y = top + (r + 0.5) * pitch
        for c, ch in enumerate(chars):
            centers[ch] = (margin_x + (c + stagger + 0.5) * pitch, y)
    centers[" "] = (screen_w / 2.0, top + 3.5 * pitch)
    return ReferenceLayout(key_centers=centers, screen_w=screen_w, screen_h=screen_h)


@dataclass(frozen=True)
class MentalModel:
    """One user's internalized keyboard transform."""

    scale_x: float
    scale_y: float
    offset0_x: float
    offset0_y: float
    drift_per_keystroke: float
    key_noise_sigma: float
    anchor_x: float
    anchor_y: float
    seed: int

    def __post_init__(self):
        if self.key_noise_sigma < 0 or self.drift_per_keystroke < 0:
            raise ValueError("noise parameters must be non-negative")


@dataclass(frozen=True)
class SynthSpec:
    """Population parameters for sampling users plus dataset shape."""

    n_users: int = 10
    phrases_per_user: int = 20
    screen_w: int = 1080
    screen_h: int = 1920
    scale_x_mean: float = 0.99
    scale_x_std: float = 0.27
    scale_y_mean: float = 0.95
    scale_y_std: float = 0.28
    offset_x_mean: float = -2.00
    offset_x_std: float = 25.68
    offset_y_mean: float = -7.13
    offset_y_std: float = 29.44
    drift_mean: float = 1.0
    drift_std: float = 0.5
    key_noise_mean: float = 25.0
    key_noise_std: float = 8.0
    anchor_jitter_std: float = 0.0

    def __post_init__(self):
        if self.n_users < 1:
            raise ValueError("n_users must be >= 1")
        for name in ("scale_x_std", "scale_y_std", "offset_x_std", "offset_y_std",
                     "drift_std", "key_noise_std", "anchor_jitter_std"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "SynthSpec":
        return SynthSpec(**json.loads(text))


def sample_mental_model(spec: SynthSpec, rng: np.random.Generator, layout: ReferenceLayout | None = None) -> MentalModel:
    """Draw one user from the population; scales are resampled until they
    clear the truncation floor."""
    layout = layout if layout is not None else default_layout(screen_w=spec.screen_w, screen_h=spec.screen_h)
    center = layout.center()

    def truncated_scale(mean: float, std: float) -> float:
        while True:
            s = mean + std * rng.standard_normal()
            if s > SCALE_TRUNCATION:
                return float(s)

    anchor = center + spec.anchor_jitter_std * rng.standard_normal(2)
    return MentalModel(
        scale_x=truncated_scale(spec.scale_x_mean, spec.scale_x_std),
        scale_y=truncated_scale(spec.scale_y_mean, spec.scale_y_std),
        offset0_x=float(spec.offset_x_mean + spec.offset_x_std * rng.standard_normal()),
        offset0_y=float(spec.offset_y_mean + spec.offset_y_std * rng.standard_normal()),
        drift_per_keystroke=float(max(0.0, spec.drift_mean + spec.drift_std * rng.standard_normal())),
        key_noise_sigma=float(max(0.0, spec.key_noise_mean + spec.key_noise_std * rng.standard_normal())),
        anchor_x=float(anchor[0]),
        anchor_y=float(anchor[1]),
        seed=int(rng.integers(0, 2**63 - 1)),
    )


class Typist:
    """Stateful generator for one user's session.

    The drift walk persists across phrases, so a long session wanders the
    way real participants do. All randomness comes from the mental model's
    seed unless an rng is supplied.
    """

    def __init__(
        self,
        mm: MentalModel,
        layout: ReferenceLayout,
        meta: SessionMeta,
        rng: np.random.Generator | None = None,
    ):
        self.mm = mm
        self.layout = layout
        self.meta = meta
        self.rng = rng if rng is not None else np.random.default_rng(mm.seed)
        self.walk = np.array([mm.offset0_x, mm.offset0_y], dtype=np.float64)
        self._center = layout.center()
        self._scale = np.array([mm.scale_x, mm.scale_y], dtype=np.float64)
        self._anchor = np.array([mm.anchor_x, mm.anchor_y], dtype=np.float64)

    def tap(self, ch: str) -> np.ndarray:
        pos = self._anchor + self._scale * (self.layout.position(ch) - self._center) + self.walk
        if self.mm.key_noise_sigma > 0:
            pos = pos + self.mm.key_noise_sigma * self.rng.standard_normal(2)
        if self.mm.drift_per_keystroke > 0:
            self.walk = self.walk + self.mm.drift_per_keystroke * self.rng.standard_normal(2)
        return pos

    def type_phrase(self, phrase: str, source: SourceCorpus = SourceCorpus.SYNTHETIC) -> TypedPhrase:
        points = []
        t = 0
        for ch in phrase:
            pos = self.tap(ch)
            points.append(TouchPoint(float(pos[0]), float(pos[1]), t))
            t += int(self.rng.integers(KEY_INTERVAL_MS[0], KEY_INTERVAL_MS[1] + 1))
        return TypedPhrase(meta=self.meta, phrase=phrase, points=tuple(points), source_corpus=source)


def synthesize_phrase(
    phrase: str,
    mm: MentalModel,
    layout: ReferenceLayout,
    rng: np.random.Generator,
    participant_id: str = "synth-0001",
    age: int = 25,
) -> TypedPhrase:
    """One-shot phrase synthesis (fresh drift walk starting at offset_0)."""
    meta = SessionMeta(
        participant_id=participant_id,
        age=age,
        device="synthetic",
        screen_w=layout.screen_w,
        screen_h=layout.screen_h,
    )
    return Typist(mm, layout, meta, rng).type_phrase(phrase)


def synthesize_dataset(
    spec: SynthSpec,
    corpus: Sequence[str],
    seed: int,
    layout: ReferenceLayout | None = None,
) -> list[TypedPhrase]:
    """Generate a dataset: users sampled from the population, phrases
    assigned round-robin from the corpus, fully deterministic under the
    seed. Participant ids run synth-0001, synth-0002, ..."""
    if not corpus:
        raise ValueError("empty corpus")
    layout = layout if layout is not None else default_layout(screen_w=spec.screen_w, screen_h=spec.screen_h)
    children = np.random.SeedSequence(seed).spawn(spec.n_users + 1)
    pop_rng = np.random.default_rng(children[0])

    typists: list[Typist] = []
    for u in range(spec.n_users):
        mm = sample_mental_model(spec, pop_rng, layout)
        mm = replace(mm, seed=0)  # session rng comes from the spawned stream
        meta = SessionMeta(
            participant_id=f"synth-{u + 1:04d}",
            age=int(pop_rng.integers(18, 32)),
            device="synthetic",
            screen_w=spec.screen_w,
            screen_h=spec.screen_h,
        )
        typists.append(Typist(mm, layout, meta, np.random.default_rng(children[u + 1])))

    out: list[TypedPhrase] = []
    for k in range(spec.n_users * spec.phrases_per_user):
        typist = typists[k % spec.n_users]
        phrase = corpus[k % len(corpus)]
        out.append(typist.type_phrase(phrase))
    out.sort(key=lambda p: p.meta.participant_id)
    return out


# ---------------------------------------------------------------------------
# Phrase corpora
# ---------------------------------------------------------------------------

# A compact everyday-English word pool; phrases sampled from it exercise
# every letter and the apostrophe.
WORD_POOL = (
    "the quick brown fox jumps over lazy dog and cat run fast time people way water "
    "long little very after word called just where most know get through back much "
    "good new write our used me man too any day same right look think also around "
    "another came come work three small set put end does big even such here why ask "
    "went men read need land different home us move try kind hand picture again change "
    "off play spell air away animal house point page letter mother answer found study "
    "still learn should world high every near add food between own below country plant "
    "last school father keep tree never start city earth eye light thought head under "
    "story saw left don't it's can't won't didn't that's what's there's let's night "
    "zebra quiz jazz oxygen vivid wax yellow king jump queen zero extra voice"
).split()


def make_phrases(
    n: int,
    seed: int,
    min_words: int = 4,
    max_words: int = 7,
    pool: Sequence[str] | None = None,
) -> list[str]:
    """Deterministic pseudo-English phrases sampled from a word pool."""
    pool = list(pool) if pool is not None else WORD_POOL
    rng = np.random.default_rng([seed, 0x9])
    out = []
    for _ in range(n):
        k = int(rng.integers(min_words, max_words + 1))
        words = [pool[int(rng.integers(0, len(pool)))] for _ in range(k)]
        out.append(" ".join(words))
    return out


def benchmark_pool() -> list[str]:
    """Words with pairwise edit distance >= 2 (greedy, deterministic).

    With no one-edit word pairs, any single-character typo has a unique
    nearest word, so language alone can resolve it; this is what gives the
    semantic stage measurable headroom over geometry at desk scale.
    """
    from .metrics import char_distance

    subset: list[str] = []
    for w in WORD_POOL:
        if len(w) >= 3 and all(char_distance(w, s).distance >= 2 for s in subset):
            subset.append(w)
    return subset


def standard_benchmark_spec() -> SynthSpec:
    """The desk-scale benchmark population: 50 users, 2000 phrases, noise
    tuned so a trained geometric-only decoder lands in the 10-30% CER band."""
    return SynthSpec(
        n_users=50,
        phrases_per_user=40,
        key_noise_mean=27.0,
        key_noise_std=6.0,
        drift_mean=1.0,
        drift_std=0.5,
    )


def encodable(phrase: str, vocab: VocabSpec | None = None) -> bool:
    vocab = vocab if vocab is not None else default_vocab()
    return all(ch in vocab.char_to_index for ch in phrase.lower())
