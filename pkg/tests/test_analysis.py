"""Behavioral statistics: per-key stats, standard-score drift, scale/offset."""

import math

import numpy as np
import pytest

from imk.analysis import (
    char_position_stats,
    export_analysis,
    scale_offset_samples,
    scale_offset_stats,
    z_series,
)
from imk.data import SessionMeta, SourceCorpus, TouchPoint, TypedPhrase

from conftest import make_phrase


def phrase_at(participant, phrase, coords, t0=0):
    meta = SessionMeta(participant_id=participant, age=30, device="t", screen_w=1080, screen_h=1920)
    points = tuple(TouchPoint(float(x), float(y), t0 + 100 * i) for i, (x, y) in enumerate(coords))
    return TypedPhrase(meta=meta, phrase=phrase, points=points, source_corpus=SourceCorpus.SYNTHETIC)


class TestCharPositionStats:
    def test_mean_and_population_sigma(self):
        # 'a' typed at x = 0, 10, 20: mean 10, population sigma sqrt(200/3)
        data = [phrase_at("p1", "aaa", [(0, 5), (10, 5), (20, 5)])]
        stats = char_position_stats(data)
        e = stats[("p1", "a")]
        assert e.mean_x == 10.0
        assert abs(e.sigma_x - math.sqrt(200.0 / 3.0)) < 1e-12
        assert e.count == 3

    def test_single_occurrence_sigma_zero(self):
        stats = char_position_stats([phrase_at("p1", "a", [(42, 7)])])
        e = stats[("p1", "a")]
        assert (e.mean_x, e.mean_y, e.sigma_x, e.sigma_y) == (42.0, 7.0, 0.0, 0.0)

    def test_per_participant_grouping(self):
        data = [
            phrase_at("p1", "aa", [(0, 0), (10, 0)]),
            phrase_at("p2", "aa", [(0, 0), (10, 0)]),
        ]
        stats = char_position_stats(data)
        assert stats[("p1", "a")] == stats[("p2", "a")]
        assert len(stats) == 2

    def test_mean_within_observed_range(self):
        data = [phrase_at("p1", "bbbb", [(3, 1), (9, 2), (6, 3), (12, 4)])]
        e = char_position_stats(data)[("p1", "b")]
        assert 3 <= e.mean_x <= 12


class TestZSeries:
    def test_mirror_deviations_cancel_to_zero(self):
        # 'a' deviates -10 then +10, 'b' deviates +10 then -10: the averaged
        # standard score is exactly zero at both typing indices
        data = [phrase_at("p1", "abab", [(0, 0), (30, 30), (20, 20), (10, 10)])]
        zs = z_series(data, char_position_stats(data))
        assert len(zs) == 2
        for t in range(2):
            assert abs(zs.z_x[t]) < 1e-12
            assert abs(zs.z_y[t]) < 1e-12

    def test_single_pair_value(self):
        # one participant, one char at x = 0, 10, 20: z_x(1) = (0-10)/sigma
        data = [phrase_at("p1", "aaa", [(0, 0), (10, 10), (20, 20)])]
        stats = char_position_stats(data)
        zs = z_series(data, stats)
        sigma = math.sqrt(200.0 / 3.0)
        assert abs(zs.z_x[0] - (0 - 10) / sigma) < 1e-12
        assert abs(zs.z_x[0] + 1.224744871391589) < 1e-9
        assert zs.counts == (1, 1, 1)

    def test_zero_sigma_pairs_excluded(self):
        # 'a' always at the same spot (sigma 0) must not contribute
        data = [phrase_at("p1", "aabb", [(5, 5), (5, 5), (0, 0), (10, 10)])]
        zs = z_series(data, char_position_stats(data))
        assert zs.counts == (1, 1)

    def test_contributing_count_brute_force(self, rng):
        chars = "abcde"
        data = []
        for pid in ("p1", "p2", "p3"):
            text = "".join(rng.choice(list(chars), size=rng.integers(3, 12)))
            coords = rng.uniform(0, 1000, size=(len(text), 2))
            data.append(phrase_at(pid, text, coords))
        stats = char_position_stats(data)
        zs = z_series(data, stats)
        # brute-force recount of pairs with n_ij >= t and sigma > 0
        occurrences = {}
        for p in data:
            for ch in p.phrase:
                occurrences[(p.meta.participant_id, ch)] = occurrences.get((p.meta.participant_id, ch), 0) + 1
        for t in range(1, len(zs) + 1):
            expected = sum(
                1
                for key, n in occurrences.items()
                if n >= t and stats[key].sigma_x > 0 and stats[key].sigma_y > 0
            )
            assert zs.counts[t - 1] == expected

    def test_shift_invariance(self, rng):
        data, shifted = [], []
        for pid in ("p1", "p2"):
            text = "abcabcab"
            coords = rng.uniform(0, 500, size=(len(text), 2))
            data.append(phrase_at(pid, text, coords))
            delta = 137.0 if pid == "p1" else 0.0
            shifted.append(phrase_at(pid, text, coords + delta))
        z1 = z_series(data, char_position_stats(data))
        z2 = z_series(shifted, char_position_stats(shifted))
        np.testing.assert_allclose(z1.z_x, z2.z_x, atol=1e-9)
        np.testing.assert_allclose(z1.z_y, z2.z_y, atol=1e-9)

    def test_scale_invariance(self, rng):
        data, scaled = [], []
        for pid in ("p1", "p2"):
            text = "xyxyxy"
            coords = rng.uniform(0, 500, size=(len(text), 2))
            data.append(phrase_at(pid, text, coords))
            k = 3.7 if pid == "p1" else 1.0
            scaled.append(phrase_at(pid, text, coords * k))
        z1 = z_series(data, char_position_stats(data))
        z2 = z_series(scaled, char_position_stats(scaled))
        np.testing.assert_allclose(z1.z_x, z2.z_x, atol=1e-9)
        np.testing.assert_allclose(z1.z_y, z2.z_y, atol=1e-9)


class TestScaleOffset:
    def _sentence(self, participant, p_xy, space_xy, filler_n=0, t0=0):
        phrase = "p " + "a" * filler_n
        coords = [p_xy, space_xy] + [(1.0 * i, 2.0 * i) for i in range(filler_n)]
        return phrase_at(participant, phrase, coords, t0)

    def test_identical_vectors_give_scale_one(self):
        data = [
            self._sentence("p1", (300, 100), (100, 400), t0=0),
            self._sentence("p1", (500, 200), (300, 500), t0=10_000),
        ]
        samples = scale_offset_samples(data)
        assert samples[("scale", "x")] == [1.0, 1.0]
        assert samples[("scale", "y")] == [1.0, 1.0]

    def test_known_ratio(self):
        # second sentence doubles the space->p vector
        data = [
            self._sentence("p1", (300, 100), (100, 400)),
            self._sentence("p1", (500, -200), (100, 400), t0=10_000),
        ]
        samples = scale_offset_samples(data)
        assert samples[("scale", "x")] == [1.0, 2.0]
        assert samples[("scale", "y")] == [1.0, 2.0]

    def test_sentences_without_p_excluded(self):
        data = [
            self._sentence("p1", (300, 100), (100, 400)),
            phrase_at("p1", "aa a", [(0, 0), (1, 1), (2, 2), (3, 3)], t0=10_000),
        ]
        samples = scale_offset_samples(data)
        assert samples[("scale", "x")] == [1.0]

    def test_repeated_chars_use_average_positions(self):
        data = [
            phrase_at("p1", "pp  ", [(200, 0), (400, 0), (0, 100), (100, 100)]),
            phrase_at("p1", "p ", [(600, 0), (0, 200)], t0=10_000),
        ]
        samples = scale_offset_samples(data)
        # first sentence: mean p (300,0), mean space (50,100) -> dx 250
        # second: dx 600 -> ratio 2.4
        assert samples[("scale", "x")] == [1.0, pytest.approx(600.0 / 250.0)]

    def test_offset_zero_when_ends_coincide(self):
        coords = [(float(i % 10), float(i % 10)) for i in range(20)]
        data = [phrase_at("p1", "a" * 20, coords)]
        samples = scale_offset_samples(data)
        assert samples[("offset", "x")] == [0.0]
        assert samples[("offset", "y")] == [0.0]

    def test_offset_first_minus_last(self):
        coords = [(10.0, 5.0)] * 10 + [(4.0, 25.0)] * 10
        data = [phrase_at("p1", "a" * 20, coords)]
        samples = scale_offset_samples(data)
        assert samples[("offset", "x")] == [6.0]
        assert samples[("offset", "y")] == [-20.0]

    def test_short_session_excluded_from_offset(self):
        data = [phrase_at("p1", "a" * 19, [(1.0 * i, 0) for i in range(19)])]
        samples = scale_offset_samples(data)
        assert samples[("offset", "x")] == []

    def test_aggregate_stats(self):
        data = [
            self._sentence("p1", (300, 100), (100, 400)),
            self._sentence("p1", (500, -200), (100, 400), t0=10_000),
        ]
        stats = scale_offset_stats(data)
        s = stats[("scale", "x")]
        assert s.mean == 1.5 and s.min == 1.0 and s.max == 2.0
        assert abs(s.std - 0.5) < 1e-12  # population std of {1, 2}


class TestExport:
    def test_empty_stats_header_only(self, tmp_path):
        data = [phrase_at("p1", "a", [(1, 1)])]
        stats = char_position_stats(data)
        zs = z_series(data, stats)
        so = scale_offset_stats(data)
        paths = export_analysis(stats, zs, so, tmp_path)
        z_csv = (tmp_path / "z_series.csv").read_text()
        assert z_csv.splitlines()[0] == "t,z_x,z_y,count"
        # single occurrence -> sigma 0 -> no z rows
        assert len(z_csv.splitlines()) == 1
        assert len(paths) == 3

    def test_rows_sorted_and_deterministic(self, tmp_path, rng):
        data = [
            phrase_at("p2", "ba", rng.uniform(0, 100, (2, 2))),
            phrase_at("p1", "ab", rng.uniform(0, 100, (2, 2))),
        ]
        stats = char_position_stats(data)
        zs = z_series(data, stats)
        so = scale_offset_stats(data)
        export_analysis(stats, zs, so, tmp_path / "a")
        export_analysis(stats, zs, so, tmp_path / "b")
        for name in ("char_stats.csv", "z_series.csv", "scale_offset.csv"):
            a = (tmp_path / "a" / name).read_bytes()
            b = (tmp_path / "b" / name).read_bytes()
            assert a == b
        lines = (tmp_path / "a" / "char_stats.csv").read_text().splitlines()[1:]
        keys = [tuple(l.split(",")[:2]) for l in lines]
        assert keys == sorted(keys)
