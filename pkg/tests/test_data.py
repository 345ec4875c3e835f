"""Dataset formats, vocabulary, splitting, augmentation and masking."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imk.data import (
    AUGMENT_MAX_SHIFT,
    DatasetError,
    MaskedCharExample,
    SourceCorpus,
    SplitSpec,
    TypedPhrase,
    VocabSpec,
    augment,
    clean_corpus_text,
    decode_text,
    default_vocab,
    encode_text,
    load_dataset,
    make_masked_batch,
    sample_mask_action,
    sample_point_shift,
    save_dataset,
    serialize_phrase,
    split_by_participant,
)

from conftest import make_phrase


class TestVocab:
    def test_default_has_31_tokens(self, vocab):
        assert len(vocab) == 31
        assert len(vocab.tokens) == 31

    def test_special_indices_distinct(self, vocab):
        assert len({vocab.pad_index, vocab.mask_index, vocab.unk_index}) == 3

    def test_contains_letters_space_apostrophe(self, vocab):
        for ch in "abcdefghijklmnopqrstuvwxyz '":
            assert ch in vocab.char_to_index

    def test_json_round_trip(self, vocab):
        again = VocabSpec.from_json(vocab.to_json())
        assert again == vocab

    def test_rejects_wrong_size(self):
        with pytest.raises(DatasetError):
            VocabSpec(tokens=tuple("abc"), pad_index=0, mask_index=1, unk_index=2)


class TestEncodeText:
    def test_single_char(self, vocab):
        assert encode_text("a", vocab) == [vocab.index_of("a")]

    def test_case_folding(self, vocab):
        assert encode_text("A b", vocab) == [vocab.index_of("a"), vocab.index_of(" "), vocab.index_of("b")]

    def test_oov_maps_to_unk(self, vocab):
        assert encode_text("a€b", vocab) == [vocab.index_of("a"), vocab.unk_index, vocab.index_of("b")]

    def test_length_preserved(self, vocab):
        s = "Hello, World! 123"
        assert len(encode_text(s, vocab)) == len(s)

    @given(st.lists(st.sampled_from(sorted("abcdefghijklmnopqrstuvwxyz '")), max_size=30))
    def test_decode_encode_round_trip(self, chars):
        vocab = default_vocab()
        idx = [vocab.index_of(c) for c in chars]
        assert encode_text(decode_text(idx, vocab), vocab) == idx


class TestCleanCorpusText:
    def test_lowercases_and_strips(self, vocab):
        assert clean_corpus_text("Hello, World!", vocab) == "hello world"

    def test_collapses_runs(self, vocab):
        assert clean_corpus_text("a@@@b", vocab) == "a b"

    def test_caps_length(self, vocab):
        assert len(clean_corpus_text("a" * 500, vocab)) == 192


class TestLoadSave:
    def test_identity_load(self, tmp_path):
        p = make_phrase("abc")
        path = tmp_path / "d.jsonl"
        save_dataset([p], path)
        loaded = load_dataset(path)
        assert len(loaded) == 1
        assert loaded[0] == p

    def test_alignment_error_names_phrase(self, tmp_path):
        rec = {
            "participant": "p1", "age": 20, "device": "d", "screen_w": 100, "screen_h": 100,
            "corpus": "Synthetic", "phrase": "abc",
            "points": [[1, 1, 0], [2, 2, 1], [3, 3, 2], [4, 4, 3]],
        }
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps(rec) + "\n")
        with pytest.raises(DatasetError, match="abc"):
            load_dataset(path)

    def test_malformed_line_names_line_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(serialize_phrase(make_phrase("ab")) + "\n{oops\n")
        with pytest.raises(DatasetError, match=":2"):
            load_dataset(path)

    def test_round_trip_byte_identical(self, tmp_path):
        phrases = [make_phrase("abc"), make_phrase("hello world", participant="p2")]
        p1 = tmp_path / "a.jsonl"
        p2 = tmp_path / "b.jsonl"
        save_dataset(phrases, p1)
        save_dataset(load_dataset(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_off_screen_points_allowed(self):
        p = make_phrase("ab", xs=[-50.0, 2000.0], ys=[0.0, 1.0])
        assert p.points[0].x == -50.0

    def test_non_monotonic_time_rejected(self):
        meta = make_phrase("ab").meta
        from imk.data import TouchPoint

        with pytest.raises(DatasetError):
            TypedPhrase(
                meta=meta, phrase="ab",
                points=(TouchPoint(1, 1, 100), TouchPoint(2, 2, 50)),
                source_corpus=SourceCorpus.SYNTHETIC,
            )


class TestPublishedDataset:
    """Gated on a local copy of the released dataset in JSONL form."""

    dataset = __import__("os").environ.get("IMK_DATASET_JSONL")

    @pytest.mark.skipif(not dataset, reason="IMK_DATASET_JSONL unset")
    def test_published_dataset_totals(self):
        data = load_dataset(self.dataset)
        assert len(data) == 24_400
        assert sum(len(p) for p in data) == 1_929_079


class TestSplit:
    def test_78_participants_split_70_3_5(self):
        data = [make_phrase("ab", participant=f"u{i:02d}") for i in range(78)]
        ids = sorted({p.meta.participant_id for p in data})
        spec = SplitSpec.of(ids[:70], ids[70:73], ids[73:])
        train, val, test = split_by_participant(data, spec)
        assert (len({p.meta.participant_id for p in train}),
                len({p.meta.participant_id for p in val}),
                len({p.meta.participant_id for p in test})) == (70, 3, 5)

    def test_assigns_by_participant(self):
        data = [make_phrase("ab", participant=f"u{i}") for i in range(6)]
        spec = SplitSpec.of({"u0", "u1", "u2", "u3"}, {"u4"}, {"u5"})
        train, val, test = split_by_participant(data, spec)
        assert [len(train), len(val), len(test)] == [4, 1, 1]

    def test_all_in_train(self):
        data = [make_phrase("ab"), make_phrase("cd")]
        train, val, test = split_by_participant(data, SplitSpec.of({"p1"}, set(), set()))
        assert len(train) == 2 and not val and not test

    def test_overlap_rejected(self):
        with pytest.raises(DatasetError):
            SplitSpec.of({"a", "b"}, {"b"}, set())

    def test_uncovered_participant_listed(self):
        data = [make_phrase("ab", participant="ghost")]
        with pytest.raises(DatasetError, match="ghost"):
            split_by_participant(data, SplitSpec.of({"u"}, set(), set()))

    def test_partition_property(self):
        data = [make_phrase("ab", participant=f"u{i % 5}") for i in range(20)]
        spec = SplitSpec.of({"u0", "u1"}, {"u2"}, {"u3", "u4"})
        train, val, test = split_by_participant(data, spec)
        assert sorted(map(id, train + val + test)) == sorted(map(id, data))


class StubRng:
    """Deterministic stand-in driving augment decisions."""

    def __init__(self, trigger: bool, shift: int = 3):
        self.trigger = trigger
        self.shift = shift

    def random(self):
        return 0.0 if self.trigger else 1.0

    def integers(self, lo, hi):
        return self.shift


class TestAugment:
    def test_never_triggered_is_identity(self):
        p = make_phrase("abc")
        out = augment(p, StubRng(trigger=False))
        assert out == p

    def test_always_triggered_plus_three(self):
        p = make_phrase("a", xs=[100.0], ys=[200.0])
        out = augment(p, StubRng(trigger=True, shift=3))
        assert (out.points[0].x, out.points[0].y) == (103.0, 203.0)

    def test_original_unmodified(self, rng):
        p = make_phrase("abcdef")
        before = [(q.x, q.y) for q in p.points]
        augment(p, rng)
        assert [(q.x, q.y) for q in p.points] == before

    def test_characters_and_times_unchanged(self, rng):
        p = make_phrase("hello world")
        out = augment(p, rng)
        assert out.phrase == p.phrase
        assert [q.t_ms for q in out.points] == [q.t_ms for q in p.points]

    def test_shift_bounded(self, rng):
        p = make_phrase("x" * 200)
        out = augment(p, rng)
        for a, b in zip(p.points, out.points):
            assert abs(a.x - b.x) <= AUGMENT_MAX_SHIFT
            assert abs(a.y - b.y) <= AUGMENT_MAX_SHIFT

    def test_trigger_rate_monte_carlo(self):
        rng = np.random.default_rng(99)
        n = 100_000
        hits = sum(sample_point_shift(rng)[2] for _ in range(n))
        assert abs(hits / n - 0.5) < 0.01


class TestMaskedBatch:
    def test_select_nothing_identity(self, vocab):
        class NeverRng:
            def random(self):
                return 1.0

        ex = make_masked_batch("hello", vocab, NeverRng())
        assert ex.input_indices == ex.target_indices
        assert not any(ex.loss_mask)

    def test_forced_mask_at_first_position(self, vocab):
        class FirstOnlyRng:
            def __init__(self):
                self.calls = 0

            def random(self):
                # alternating select / action draws: select pos 0, mask branch,
                # never select again
                self.calls += 1
                return 0.0 if self.calls <= 2 else 1.0

        ex = make_masked_batch("abc", vocab, FirstOnlyRng())
        assert ex.input_indices[0] == vocab.mask_index
        assert ex.loss_mask == (True, False, False)
        assert ex.target_indices == tuple(encode_text("abc", vocab))

    def test_lengths_match(self, vocab, rng):
        ex = make_masked_batch("the quick brown fox", vocab, rng)
        assert len(ex.input_indices) == len(ex.target_indices) == len(ex.loss_mask)

    def test_selection_rate_monte_carlo(self, vocab):
        rng = np.random.default_rng(7)
        total = selected = 0
        text = "abcdefghij" * 100  # 1000 chars per call
        for _ in range(1000):  # 1e6 positions total
            ex = make_masked_batch(text, vocab, rng)
            selected += sum(ex.loss_mask)
            total += len(ex.loss_mask)
        assert abs(selected / total - 0.15) < 0.005

    def test_branch_ratios_monte_carlo(self):
        rng = np.random.default_rng(11)
        n = 200_000
        counts = {"mask": 0, "random": 0, "keep": 0}
        for _ in range(n):
            counts[sample_mask_action(rng)] += 1
        assert abs(counts["mask"] / n - 0.80) < 0.01
        assert abs(counts["random"] / n - 0.10) < 0.01
        assert abs(counts["keep"] / n - 0.10) < 0.01

    def test_random_branch_uses_typeable_tokens(self, vocab):
        rng = np.random.default_rng(3)
        specials = {vocab.pad_index, vocab.mask_index, vocab.unk_index}
        for _ in range(50):
            ex = make_masked_batch("abcdefghijklmnop" * 4, vocab, rng)
            for inp, tgt, m in zip(ex.input_indices, ex.target_indices, ex.loss_mask):
                if m and inp != vocab.mask_index and inp != tgt:
                    assert inp not in specials

    @settings(max_examples=25)
    @given(st.text(alphabet="abc xyz", min_size=1, max_size=40))
    def test_targets_always_original(self, text):
        vocab = default_vocab()
        rng = np.random.default_rng(1)
        ex = make_masked_batch(text, vocab, rng)
        assert list(ex.target_indices) == encode_text(text, vocab)
