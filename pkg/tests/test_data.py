from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kiwi.data import (
    PAD_ID,
    SPECIALS,
    UNALIGNED_ID,
    UNK_ID,
    CorpusError,
    Field,
    QESample,
    build_vocab,
    epoch_order,
    load_corpus,
    load_vocabs,
    make_batches,
    parse_alignments,
    save_vocabs,
)


def write(tmp_path, name, lines):
    path = tmp_path / name
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


class TestLoadCorpus:
    def test_three_lines(self, tmp_path):
        src = write(tmp_path, "src", ["a b", "c", "d e f"])
        mt = write(tmp_path, "mt", ["x", "y z", "w"])
        samples = load_corpus({"source": src, "target": mt})
        assert len(samples) == 3
        assert samples[2].source == ["d", "e", "f"]
        assert samples[1].target == ["y", "z"]

    def test_tag_count_error_names_line(self, tmp_path):
        src = write(tmp_path, "src", ["s", "s"])
        mt = write(tmp_path, "mt", ["a", "a b"])
        tags = write(tmp_path, "tags", ["OK", "OK OK BAD"])
        with pytest.raises(CorpusError, match=r":2: expected 2 tags, found 3"):
            load_corpus({"source": src, "target": mt, "target_tags": tags})

    def test_gap_tags_have_one_more(self, tmp_path):
        src = write(tmp_path, "src", ["s"])
        mt = write(tmp_path, "mt", ["a b"])
        gaps = write(tmp_path, "gaps", ["OK BAD OK"])
        (sample,) = load_corpus({"source": src, "target": mt, "gap_tags": gaps})
        assert sample.gap_tags == ["OK", "BAD", "OK"]
        bad = write(tmp_path, "gaps2", ["OK BAD"])
        with pytest.raises(CorpusError, match="expected 3 tags"):
            load_corpus({"source": src, "target": mt, "gap_tags": bad})

    def test_source_tags_and_hter(self, tmp_path):
        src = write(tmp_path, "src", ["s t u"])
        mt = write(tmp_path, "mt", ["a"])
        st_ = write(tmp_path, "stags", ["OK BAD OK"])
        h = write(tmp_path, "hter", ["0.25"])
        (sample,) = load_corpus({"source": src, "target": mt, "source_tags": st_, "hter": h})
        assert sample.source_tags == ["OK", "BAD", "OK"] and sample.hter == 0.25
        with pytest.raises(CorpusError, match="outside"):
            load_corpus({"source": src, "target": mt, "hter": write(tmp_path, "h2", ["1.5"])})

    def test_line_count_mismatch(self, tmp_path):
        src = write(tmp_path, "src", ["a", "b"])
        mt = write(tmp_path, "mt", ["a"])
        with pytest.raises(CorpusError, match="line-count mismatch"):
            load_corpus({"source": src, "target": mt})

    def test_invalid_tag(self, tmp_path):
        src = write(tmp_path, "src", ["a"])
        mt = write(tmp_path, "mt", ["a"])
        with pytest.raises(CorpusError, match="invalid tag"):
            load_corpus({"source": src, "target": mt, "target_tags": write(tmp_path, "t", ["GOOD"])})

    def test_length_cap_rejects(self, tmp_path):
        src = write(tmp_path, "src", ["a b c"])
        mt = write(tmp_path, "mt", ["a"])
        with pytest.raises(CorpusError, match="cap of 2"):
            load_corpus({"source": src, "target": mt}, max_length=2)

    def test_alignment_out_of_range_reports_line(self, tmp_path):
        src = write(tmp_path, "src", ["a b"])
        mt = write(tmp_path, "mt", ["x"])
        al = write(tmp_path, "al", ["0-1"])
        with pytest.raises(CorpusError, match=r"al:1:"):
            load_corpus({"source": src, "target": mt, "alignments": al})


class TestAlignments:
    def test_pairs(self):
        assert parse_alignments("0-0 1-2") == [(0, 0), (1, 2)]

    def test_empty(self):
        assert parse_alignments("") == []

    def test_duplicates_kept(self):
        assert parse_alignments("1-1 1-1") == [(1, 1), (1, 1)]

    def test_out_of_range(self):
        with pytest.raises(CorpusError):
            parse_alignments("2-0", src_len=2, mt_len=3)

    @pytest.mark.parametrize("bad", ["0_1", "a-1", "1-", "-1-2"])
    def test_malformed(self, bad):
        with pytest.raises(CorpusError, match="malformed"):
            parse_alignments(bad)


class TestVocabulary:
    def test_specials_fixed(self):
        v = build_vocab([["z"]])
        assert v.itos[:5] == ["<pad>", "<unk>", "<s>", "</s>", "<unaligned>"] == list(SPECIALS)
        assert v.lookup("<pad>") == 0 and v.lookup("<unaligned>") == 4

    def test_min_freq(self):
        v = build_vocab([["a", "a", "b"]], min_freq=2)
        assert "a" in v and "b" not in v

    def test_order_frequency_then_token(self):
        v = build_vocab([["y", "x", "b", "b", "a", "a"]])
        assert v.itos[5:] == ["a", "b", "x", "y"]

    def test_deterministic(self):
        corpus = [["q", "w", "e"], ["w", "e"], ["e"]]
        assert build_vocab(corpus).itos == build_vocab(list(reversed(corpus))).itos

    def test_unknown_maps_to_unk(self):
        v = build_vocab([["a"]])
        assert v.numericalize(["a", "zzz"]) == [5, UNK_ID]

    def test_empty_corpus_keeps_specials(self):
        assert len(build_vocab([])) == len(SPECIALS)

    def test_save_load(self, tmp_path):
        vocabs = {"source": build_vocab([["a", "b", "b"]]), "target": build_vocab([["ü", "x"]])}
        save_vocabs(tmp_path / "v.json", vocabs)
        back = load_vocabs(tmp_path / "v.json")
        assert back == vocabs
        assert back["target"].digest() == vocabs["target"].digest()

    def test_field(self):
        f = Field("target", min_freq=1)
        f.build_vocab([f.tokenize("a b  a")])
        assert f.denumericalize(f.numericalize(["a", "b"])) == ["a", "b"]


tokens = st.text(alphabet="abcdefg", min_size=1, max_size=3)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(tokens, min_size=1, max_size=6), min_size=1, max_size=6))
def test_vocab_roundtrip_and_inverse(corpus):
    v = build_vocab(corpus)
    for sent in corpus:
        assert v.denumericalize(v.numericalize(sent)) == sent
    assert all(v.stoi[t] == i for i, t in enumerate(v.itos))
    assert max(v.stoi.values()) < len(v)
    counts = Counter(t for s in corpus for t in s)
    assert [counts[t] for t in v.itos[5:]] == sorted(counts.values(), reverse=True)


def sample(n_src, n_tgt, alignments=(), tags=True):
    s = QESample([f"s{i}" for i in range(n_src)], [f"t{i}" for i in range(n_tgt)], list(alignments))
    if tags:
        s.target_tags = ["BAD" if i % 2 else "OK" for i in range(n_tgt)]
        s.gap_tags = ["OK"] * (n_tgt + 1)
        s.source_tags = ["OK"] * n_src
        s.hter = 0.5
    return s


class TestBatches:
    def vocabs(self, samples):
        return build_vocab(s.source for s in samples), build_vocab(s.target for s in samples)

    def test_sizes(self):
        samples = [sample(2, 3) for _ in range(10)]
        sv, tv = self.vocabs(samples)
        assert [len(b) for b in make_batches(samples, 4, 0, sv, tv)] == [4, 4, 2]

    def test_bad_batch_size(self):
        with pytest.raises(ValueError):
            make_batches([sample(1, 1)], 0, 0, *self.vocabs([sample(1, 1)]))

    def test_same_seed_same_order(self):
        samples = [sample(1 + i % 3, 2) for i in range(9)]
        sv, tv = self.vocabs(samples)
        a = [b.indices.tolist() for b in make_batches(samples, 2, 7, sv, tv, epoch=3)]
        b = [b.indices.tolist() for b in make_batches(samples, 2, 7, sv, tv, epoch=3)]
        assert a == b
        np.testing.assert_array_equal(epoch_order(9, 7, 3), epoch_order(9, 7, 3))
        assert not np.array_equal(epoch_order(50, 7, 3), epoch_order(50, 7, 4))

    def test_unaligned_fallback(self):
        s = sample(2, 3, alignments=[(1, 0), (0, 0), (1, 2)])
        sv, tv = self.vocabs([s])
        (b,) = make_batches([s], 1, None, sv, tv)
        assert b.tgt_to_src[0].tolist() == [0, -1, 1]
        assert b.aligned_src_ids[0, 1] == UNALIGNED_ID
        assert b.aligned_src_ids[0, 0] == sv.lookup("s0")

    def test_masks_match_lengths(self):
        samples = [sample(1, 4), sample(3, 1), sample(2, 2)]
        sv, tv = self.vocabs(samples)
        (b,) = make_batches(samples, 3, None, sv, tv)
        np.testing.assert_array_equal(b.tgt_mask.sum(axis=1), [4, 1, 2])
        np.testing.assert_array_equal(b.gap_mask.sum(axis=1), [5, 2, 3])
        assert np.all((b.tgt_ids != PAD_ID) == (b.tgt_mask > 0))
        assert b.mt_tags[0].tolist() == [0, 1, 0, 1]
        assert b.hter.tolist() == [0.5, 0.5, 0.5]

    def test_optional_tags_absent(self):
        s = sample(2, 2, tags=False)
        (b,) = make_batches([s], 1, None, *self.vocabs([s]))
        assert b.mt_tags is None and b.hter is None

    def test_swapped(self):
        s = sample(3, 2, alignments=[(2, 0)])
        s.source_tags = ["OK", "OK", "BAD"]
        sv, tv = self.vocabs([s])
        (b,) = make_batches([s], 1, None, sv, tv)
        w = b.swapped()
        np.testing.assert_array_equal(w.tgt_ids, b.src_ids)
        assert w.mt_tags[0].tolist() == [0, 0, 1]
        assert w.aligned_src_ids[0].tolist() == [UNALIGNED_ID, UNALIGNED_ID, tv.lookup("t0")]


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.tuples(st.integers(1, 5), st.integers(1, 5)), min_size=1, max_size=12),
    st.integers(1, 5),
    st.integers(0, 100),
)
def test_batches_partition_the_corpus(shapes, batch_size, seed):
    samples = [sample(m, n) for m, n in shapes]
    sv = build_vocab(s.source for s in samples)
    tv = build_vocab(s.target for s in samples)
    batches = make_batches(samples, batch_size, seed, sv, tv)
    seen = sorted(i for b in batches for i in b.indices.tolist())
    assert seen == list(range(len(samples)))
    recovered = []
    for b in batches:
        for row, n in zip(b.tgt_ids, b.tgt_lengths):
            recovered.append(tuple(tv.denumericalize(row[:n])))
    assert Counter(recovered) == Counter(tuple(s.target) for s in samples)
