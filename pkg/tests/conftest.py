"""Shared fixtures.

BLAS thread caps are pinned before numpy loads so timing-sensitive tests
measure single-core behavior.
"""

import os

for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")

import numpy as np
import pytest

from imk.data import SessionMeta, SourceCorpus, TouchPoint, TypedPhrase, default_vocab


@pytest.fixture(scope="session")
def vocab():
    return default_vocab()


def make_phrase(
    phrase: str,
    xs=None,
    ys=None,
    participant: str = "p1",
    screen=(1080, 1920),
    corpus: SourceCorpus = SourceCorpus.SYNTHETIC,
) -> TypedPhrase:
    n = len(phrase)
    xs = xs if xs is not None else [100.0 * (i + 1) for i in range(n)]
    ys = ys if ys is not None else [200.0 * (i + 1) for i in range(n)]
    meta = SessionMeta(participant_id=participant, age=25, device="test", screen_w=screen[0], screen_h=screen[1])
    points = tuple(TouchPoint(float(x), float(y), 200 * i) for i, (x, y) in enumerate(zip(xs, ys)))
    return TypedPhrase(meta=meta, phrase=phrase, points=points, source_corpus=corpus)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
