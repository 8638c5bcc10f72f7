"""Synthetic parallel data with known corruption, for tests and the toy corpus.

Every generator uses a word-for-word "language": source word ``s<k>``
translates to target word ``t<k>`` in the same position.  A machine
translation is produced from the clean translation by substituting, deleting
or inserting words at a chosen rate; the clean translation serves as the
post-edit and alignments follow the construction.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import QESample, SentenceTriplet, format_alignments, write_lines
from .labels import label_triplet

TOY_TRAIN = 150
TOY_DEV = 50


def source_word(k: int) -> str:
    return f"s{k}"


def target_word(k: int) -> str:
    return f"t{k}"


def corrupt(
    ids: list[int],
    rng: np.random.Generator,
    vocab_size: int,
    sub_rate: float,
    del_rate: float = 0.0,
    ins_rate: float = 0.0,
) -> tuple[list[int], list[tuple[int, int]]]:
    """Corrupted target ids and (source, mt) alignments for a monotone sentence."""
    mt: list[int] = []
    align: list[tuple[int, int]] = []
    for i, k in enumerate(ids):
        u = rng.random()
        if u < del_rate:
            continue
        if u < del_rate + sub_rate:
            wrong = int(rng.integers(vocab_size - 1))
            mt.append(wrong if wrong < k else wrong + 1)
        else:
            mt.append(k)
        align.append((i, len(mt) - 1))
        if rng.random() < ins_rate:
            mt.append(int(rng.integers(vocab_size)))
    if not mt:
        mt.append(ids[0])
        align.append((0, 0))
    return mt, align


def make_triplet(rng: np.random.Generator, vocab_size: int, min_len: int, max_len: int, **rates) -> SentenceTriplet:
    n = int(rng.integers(min_len, max_len + 1))
    ids = [int(k) for k in rng.integers(vocab_size, size=n)]
    mt, align = corrupt(ids, rng, vocab_size, **rates)
    return SentenceTriplet(
        [source_word(k) for k in ids],
        [target_word(k) for k in mt],
        [target_word(k) for k in ids],
        align,
    )


def labelled(triplet: SentenceTriplet) -> QESample:
    tags, score = label_triplet(triplet)
    return QESample(
        source=list(triplet.src),
        target=list(triplet.mt),
        alignments=list(triplet.alignments),
        target_tags=tags.mt_tags,
        gap_tags=tags.gap_tags,
        source_tags=tags.src_tags,
        hter=score,
        pe=list(triplet.pe),
    )


def overfit_corpus(n: int = 32, seed: int = 0, vocab_size: int = 30, max_len: int = 8) -> list[QESample]:
    """Small labelled corpus with substitutions, deletions and insertions."""
    rng = np.random.default_rng(seed)
    return [
        labelled(make_triplet(rng, vocab_size, 3, max_len, sub_rate=0.25, del_rate=0.05, ins_rate=0.05))
        for _ in range(n)
    ]


def copy_corpus(n: int = 400, seed: int = 0, vocab_size: int = 20, max_len: int = 8) -> list[QESample]:
    """Clean parallel data (target = word-for-word translation) for predictor training."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        t = make_triplet(rng, vocab_size, 1, max_len, sub_rate=0.0)
        out.append(QESample(t.src, t.mt, t.alignments))
    return out


def hter_corpus(n: int = 200, seed: int = 0, vocab_size: int = 20, min_len: int = 4, max_len: int = 8) -> list[QESample]:
    """Sentences whose substitution rate is drawn uniformly from [0, 0.6].

    With substitutions only, HTER equals the number of substituted words over
    the sentence length, so the target is fixed by the injected corruption.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        rate = float(rng.uniform(0.0, 0.6))
        out.append(labelled(make_triplet(rng, vocab_size, min_len, max_len, sub_rate=rate)))
    return out


def toy_triplets(n: int, seed: int, vocab_size: int = 40, max_len: int = 10) -> list[SentenceTriplet]:
    rng = np.random.default_rng(seed)
    return [
        make_triplet(rng, vocab_size, 3, max_len, sub_rate=0.2, del_rate=0.05, ins_rate=0.05)
        for _ in range(n)
    ]


def write_triplets(directory: str | Path, prefix: str, triplets: list[SentenceTriplet]) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_lines(d / f"{prefix}.src", (" ".join(t.src) for t in triplets))
    write_lines(d / f"{prefix}.mt", (" ".join(t.mt) for t in triplets))
    write_lines(d / f"{prefix}.pe", (" ".join(t.pe) for t in triplets))
    write_lines(d / f"{prefix}.align", (format_alignments(t.alignments) for t in triplets))


def write_toy_corpus(directory: str | Path, seed: int = 2018) -> Path:
    """The bundled corpus: 150 training and 50 validation triplets."""
    triplets = toy_triplets(TOY_TRAIN + TOY_DEV, seed)
    write_triplets(directory, "train", triplets[:TOY_TRAIN])
    write_triplets(directory, "dev", triplets[TOY_TRAIN:])
    return Path(directory)


def toy_corpus_dir() -> Path:
    """Location of the toy corpus shipped with the package."""
    return Path(__file__).parent / "resources" / "toy"


if __name__ == "__main__":
    write_toy_corpus(toy_corpus_dir())
