"""Edit distances, CER/WER/WPM, and their metric properties."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imk.metrics import (
    MetricError,
    cer,
    char_accuracy,
    char_distance,
    corpus_error_rates,
    edit_distance,
    wer,
    word_distance,
    words,
    wpm,
)

SHORT = st.text(alphabet="abcd", max_size=8)


def recursive_distance(a, b):
    """Definition-led recursive Levenshtein oracle (independent of the DP)."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    if a[0] == b[0]:
        return recursive_distance(a[1:], b[1:])
    return 1 + min(
        recursive_distance(a[1:], b),
        recursive_distance(a, b[1:]),
        recursive_distance(a[1:], b[1:]),
    )


class TestCharDistance:
    def test_equal_strings(self):
        assert char_distance("abc", "abc").distance == 0

    def test_one_insertion(self):
        r = char_distance("ab", "abc")
        assert r.distance == 1
        assert (r.insertions, r.deletions, r.substitutions) == (1, 0, 0)

    def test_kitten_sitting(self):
        assert char_distance("kitten", "sitting").distance == 3

    def test_counts_sum_to_distance(self):
        r = char_distance("sunday", "saturday")
        assert r.distance == r.insertions + r.deletions + r.substitutions == 3

    def test_against_recursive_oracle(self):
        rng = np.random.default_rng(42)
        alphabet = "abcd"
        for _ in range(300):
            a = "".join(rng.choice(list(alphabet), size=rng.integers(0, 9)))
            b = "".join(rng.choice(list(alphabet), size=rng.integers(0, 9)))
            assert char_distance(a, b).distance == recursive_distance(a, b)

    @given(SHORT, SHORT)
    @settings(max_examples=100)
    def test_symmetry(self, a, b):
        assert char_distance(a, b).distance == char_distance(b, a).distance

    @given(SHORT, SHORT, SHORT)
    @settings(max_examples=100)
    def test_triangle_inequality(self, a, b, c):
        ab = char_distance(a, b).distance
        bc = char_distance(b, c).distance
        ac = char_distance(a, c).distance
        assert ac <= ab + bc

    @given(SHORT)
    def test_identity_of_indiscernibles(self, a):
        assert char_distance(a, a).distance == 0

    @given(SHORT, SHORT)
    @settings(max_examples=100)
    def test_bounded_by_longer_length(self, a, b):
        assert char_distance(a, b).distance <= max(len(a), len(b))


class TestWordDistance:
    def test_word_level(self):
        assert word_distance("a c", "a b").distance == 1

    def test_tokenizer_drops_empties(self):
        assert words("a  b ") == ["a", "b"]

    def test_matches_oracle_on_word_tuples(self):
        rng = np.random.default_rng(5)
        pool = ["go", "to", "the", "top"]
        for _ in range(200):
            a = [pool[i] for i in rng.integers(0, 4, size=rng.integers(0, 7))]
            b = [pool[i] for i in rng.integers(0, 4, size=rng.integers(0, 7))]
            assert edit_distance(a, b).distance == recursive_distance(a, b)


class TestCer:
    def test_zero_on_equal(self):
        assert cer("abc", "abc") == 0.0

    def test_one_third(self):
        assert abs(cer("abd", "abc") - 100.0 / 3.0) < 1e-9

    def test_empty_hypothesis(self):
        assert cer("", "abc") == 100.0

    def test_can_exceed_100(self):
        assert cer("aaaaaa", "b") > 100.0

    def test_empty_reference_rejected(self):
        with pytest.raises(MetricError):
            cer("abc", "")

    @given(st.text(alphabet="ab xy", min_size=1, max_size=12))
    def test_self_cer_zero(self, s):
        assert cer(s, s) == 0.0


class TestWer:
    def test_zero_on_equal(self):
        assert wer("a b", "a b") == 0.0

    def test_substitution(self):
        assert wer("a c", "a b") == 50.0

    def test_deletion(self):
        assert wer("a", "a b") == 50.0

    def test_reference_without_words_rejected(self):
        with pytest.raises(MetricError):
            wer("a", "   ")

    @given(st.text(alphabet="ab ", min_size=1, max_size=12).filter(lambda s: words(s)))
    def test_self_wer_zero(self, s):
        assert wer(s, s) == 0.0


class TestWpm:
    def test_spot_value(self):
        assert wpm(51, 0.2, 5) == 50.0

    def test_single_char_is_zero(self):
        assert wpm(1, 0.5) == 0.0
        assert wpm(1, 3.0) == 0.0

    def test_linear_in_inverse_minutes(self):
        assert wpm(101, 1.0, 5) == 2 * wpm(101, 2.0, 5)

    def test_linear_in_inverse_chars_per_word(self):
        assert wpm(101, 1.0, 4) == 2 * wpm(101, 1.0, 8)

    def test_nonpositive_minutes_rejected(self):
        with pytest.raises(MetricError):
            wpm(10, 0.0)


class TestCharAccuracy:
    def test_perfect(self):
        assert char_accuracy([1, 2, 3], [1, 2, 3]) == 1.0

    def test_partial(self):
        assert char_accuracy("abcd", "abXY") == 0.5

    def test_length_mismatch_rejected(self):
        with pytest.raises(MetricError):
            char_accuracy("ab", "abc")


class TestCorpusRates:
    def test_micro_average(self):
        # 1 error over 3 chars + 0 over 5 chars -> 1/8 of total chars
        c, w = corpus_error_rates([("abd", "abc"), ("hello", "hello")])
        assert abs(c - 100.0 / 8.0) < 1e-12
        assert w == 50.0  # one substituted word out of two words total

    def test_oracle_stub_scores_zero(self):
        c, w = corpus_error_rates([("a b c", "a b c")] * 4)
        assert (c, w) == (0.0, 0.0)
