"""Corpus loading, vocabularies, numericalization and minibatching.

All corpora are pre-tokenized: one sentence per line, tokens separated by
whitespace.  Word-level tags are ``OK``/``BAD``; gap tags carry one more entry
than the MT sentence has tokens.
"""
from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

PAD, UNK, START, STOP, UNALIGNED = "<pad>", "<unk>", "<s>", "</s>", "<unaligned>"
SPECIALS = (PAD, UNK, START, STOP, UNALIGNED)
PAD_ID, UNK_ID, START_ID, STOP_ID, UNALIGNED_ID = range(5)

OK, BAD = "OK", "BAD"
TAG_IDS = {OK: 0, BAD: 1}

DEFAULT_MAX_LENGTH = 200

# column names accepted by load_corpus
TEXT_FIELDS = ("source", "target", "pe")
TAG_FIELDS = ("target_tags", "gap_tags", "source_tags")
CORPUS_FIELDS = TEXT_FIELDS + ("alignments",) + TAG_FIELDS + ("hter",)


class CorpusError(ValueError):
    """Malformed input files; the message names the file and 1-based line."""


Alignment = tuple[int, int]


@dataclass
class SentenceTriplet:
    src: list[str]
    mt: list[str]
    pe: list[str]
    alignments: list[Alignment] = field(default_factory=list)

    def __post_init__(self):
        check_alignments(self.alignments, len(self.src), len(self.mt))


@dataclass
class QESample:
    source: list[str]
    target: list[str]
    alignments: list[Alignment] = field(default_factory=list)
    target_tags: list[str] | None = None
    gap_tags: list[str] | None = None
    source_tags: list[str] | None = None
    hter: float | None = None
    pe: list[str] | None = None


def check_alignments(pairs: Iterable[Alignment], src_len: int, mt_len: int) -> None:
    for s, t in pairs:
        if not (0 <= s < src_len and 0 <= t < mt_len):
            raise CorpusError(
                f"alignment {s}-{t} out of range for sentence pair of lengths {src_len}/{mt_len}"
            )


def parse_alignments(line: str, src_len: int | None = None, mt_len: int | None = None) -> list[Alignment]:
    """Parse fast_align style ``i-j`` pairs (0-based source-target indices)."""
    pairs = []
    for token in line.split():
        left, sep, right = token.partition("-")
        if not sep or not left.isdigit() or not right.isdigit():
            raise CorpusError(f"malformed alignment token {token!r}")
        pairs.append((int(left), int(right)))
    if src_len is not None and mt_len is not None:
        check_alignments(pairs, src_len, mt_len)
    return pairs


def format_alignments(pairs: Iterable[Alignment]) -> str:
    return " ".join(f"{s}-{t}" for s, t in pairs)


def tokenize(line: str) -> list[str]:
    return line.split()


def read_lines(path: str | Path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n").rstrip("\r") for line in fh]


def write_lines(path: str | Path, lines: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")


def _parse_tags(line: str, expected: int, path, lineno: int) -> list[str]:
    tags = line.split()
    if len(tags) != expected:
        raise CorpusError(f"{path}:{lineno}: expected {expected} tags, found {len(tags)}")
    for tag in tags:
        if tag not in TAG_IDS:
            raise CorpusError(f"{path}:{lineno}: invalid tag {tag!r} (expected OK or BAD)")
    return tags


def load_corpus(paths: Mapping[str, str | Path], max_length: int = DEFAULT_MAX_LENGTH) -> list[QESample]:
    """Read parallel files into :class:`QESample` records.

    ``paths`` maps field names (``source``, ``target``, ``pe``,
    ``alignments``, ``target_tags``, ``gap_tags``, ``source_tags``, ``hter``)
    to files.  ``source`` and ``target`` are required.
    """
    unknown = set(paths) - set(CORPUS_FIELDS)
    if unknown:
        raise CorpusError(f"unknown corpus field(s): {', '.join(sorted(unknown))}")
    for required in ("source", "target"):
        if required not in paths or paths[required] is None:
            raise CorpusError(f"corpus needs a {required!r} file")
    columns = {name: read_lines(p) for name, p in paths.items() if p is not None}
    counts = {name: len(lines) for name, lines in columns.items()}
    if len(set(counts.values())) > 1:
        detail = ", ".join(f"{name}={n}" for name, n in counts.items())
        raise CorpusError(f"line-count mismatch across parallel files: {detail}")

    samples = []
    for i in range(counts["source"]):
        lineno = i + 1
        src = tokenize(columns["source"][i])
        tgt = tokenize(columns["target"][i])
        for name, toks in (("source", src), ("target", tgt)):
            if not toks:
                raise CorpusError(f"{paths[name]}:{lineno}: empty sentence")
            if len(toks) > max_length:
                raise CorpusError(
                    f"{paths[name]}:{lineno}: sentence has {len(toks)} tokens, above the cap of {max_length}"
                )
        sample = QESample(source=src, target=tgt)
        if "pe" in columns:
            sample.pe = tokenize(columns["pe"][i])
        if "alignments" in columns:
            try:
                sample.alignments = parse_alignments(columns["alignments"][i], len(src), len(tgt))
            except CorpusError as exc:
                raise CorpusError(f"{paths['alignments']}:{lineno}: {exc}") from None
        if "target_tags" in columns:
            sample.target_tags = _parse_tags(columns["target_tags"][i], len(tgt), paths["target_tags"], lineno)
        if "gap_tags" in columns:
            sample.gap_tags = _parse_tags(columns["gap_tags"][i], len(tgt) + 1, paths["gap_tags"], lineno)
        if "source_tags" in columns:
            sample.source_tags = _parse_tags(columns["source_tags"][i], len(src), paths["source_tags"], lineno)
        if "hter" in columns:
            sample.hter = _parse_score(columns["hter"][i], paths["hter"], lineno)
        samples.append(sample)
    return samples


def _parse_score(line: str, path, lineno: int) -> float:
    try:
        value = float(line.strip())
    except ValueError:
        raise CorpusError(f"{path}:{lineno}: not a number: {line.strip()!r}") from None
    if not 0.0 <= value <= 1.0:
        raise CorpusError(f"{path}:{lineno}: score {value} outside [0, 1]")
    return value


def load_triplets(src: str | Path, mt: str | Path, pe: str | Path, alignments: str | Path | None = None) -> list[SentenceTriplet]:
    """Read (source, MT, post-edit[, alignments]) files for label generation."""
    columns = {"src": read_lines(src), "mt": read_lines(mt), "pe": read_lines(pe)}
    if alignments is not None:
        columns["align"] = read_lines(alignments)
    counts = {k: len(v) for k, v in columns.items()}
    if len(set(counts.values())) > 1:
        detail = ", ".join(f"{k}={n}" for k, n in counts.items())
        raise CorpusError(f"line-count mismatch across parallel files: {detail}")
    triplets = []
    for i in range(counts["src"]):
        s, m, p = tokenize(columns["src"][i]), tokenize(columns["mt"][i]), tokenize(columns["pe"][i])
        pairs: list[Alignment] = []
        if alignments is not None:
            try:
                pairs = parse_alignments(columns["align"][i], len(s), len(m))
            except CorpusError as exc:
                raise CorpusError(f"{alignments}:{i + 1}: {exc}") from None
        triplets.append(SentenceTriplet(s, m, p, pairs))
    return triplets


# ---------------------------------------------------------------------------
# vocabulary


class Vocabulary:
    """Token <-> id map with the special symbols at fixed ids 0..4."""

    def __init__(self, tokens: Sequence[str] = (), counts: Mapping[str, int] | None = None):
        self.itos: list[str] = list(SPECIALS)
        for tok in tokens:
            if tok not in SPECIALS:
                self.itos.append(tok)
        self.stoi: dict[str, int] = {tok: i for i, tok in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")
        self.counts: dict[str, int] = dict(counts or {})

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def lookup(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def numericalize(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def denumericalize(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.itos).encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {"itos": self.itos[len(SPECIALS):], "counts": {t: self.counts.get(t, 0) for t in self.itos[len(SPECIALS):]}}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Vocabulary":
        return cls(d["itos"], d.get("counts"))


def build_vocab(sentences: Iterable[Sequence[str]], min_freq: int = 1, max_size: int | None = None) -> Vocabulary:
    """Frequency-thresholded vocabulary, ordered by (count desc, token asc)."""
    counts: Counter[str] = Counter()
    for sent in sentences:
        counts.update(sent)
    kept = sorted((t for t, c in counts.items() if c >= min_freq and t not in SPECIALS), key=lambda t: (-counts[t], t))
    if max_size is not None:
        kept = kept[:max_size]
    return Vocabulary(kept, {t: counts[t] for t in kept})


@dataclass
class Field:
    """How one text column is tokenized and mapped to ids."""

    name: str
    min_freq: int = 1
    max_size: int | None = None
    vocab: Vocabulary | None = None

    def tokenize(self, line: str) -> list[str]:
        return tokenize(line)

    def build_vocab(self, sentences: Iterable[Sequence[str]]) -> Vocabulary:
        self.vocab = build_vocab(sentences, self.min_freq, self.max_size)
        return self.vocab

    def numericalize(self, tokens: Sequence[str]) -> list[int]:
        return self.vocab.numericalize(tokens)

    def denumericalize(self, ids: Iterable[int]) -> list[str]:
        return self.vocab.denumericalize(ids)


def save_vocabs(path: str | Path, vocabs: Mapping[str, Vocabulary]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({k: v.to_dict() for k, v in vocabs.items()}, fh, ensure_ascii=False, sort_keys=True)


def load_vocabs(path: str | Path) -> dict[str, Vocabulary]:
    with open(path, encoding="utf-8") as fh:
        return {k: Vocabulary.from_dict(v) for k, v in json.load(fh).items()}


# ---------------------------------------------------------------------------
# batches


@dataclass
class Batch:
    """Padded id matrices plus everything derived from alignments and tags.

    Tag matrices use 0 for OK and 1 for BAD; padded cells are 0 and masked.
    ``tgt_to_src[b, j]`` is the leftmost source index aligned to MT token j
    (or -1), ``src_to_tgt`` the converse.
    """

    indices: np.ndarray
    src_ids: np.ndarray
    tgt_ids: np.ndarray
    src_lengths: np.ndarray
    tgt_lengths: np.ndarray
    tgt_to_src: np.ndarray
    src_to_tgt: np.ndarray
    aligned_src_ids: np.ndarray
    mt_tags: np.ndarray | None = None
    gap_tags: np.ndarray | None = None
    src_tags: np.ndarray | None = None
    hter: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def src_mask(self) -> np.ndarray:
        return _mask(self.src_lengths, self.src_ids.shape[1])

    @property
    def tgt_mask(self) -> np.ndarray:
        return _mask(self.tgt_lengths, self.tgt_ids.shape[1])

    @property
    def gap_mask(self) -> np.ndarray:
        return _mask(self.tgt_lengths + 1, self.tgt_ids.shape[1] + 1)

    def swapped(self) -> "Batch":
        """Same sentences with source and target roles exchanged.

        Source tags become the MT tags of the swapped batch; gap tags are dropped.
        """
        aligned = np.where(self.src_to_tgt >= 0, np.take_along_axis(self.tgt_ids, np.maximum(self.src_to_tgt, 0), 1), UNALIGNED_ID)
        aligned = np.where(self.src_mask > 0, aligned, PAD_ID)
        return Batch(
            indices=self.indices,
            src_ids=self.tgt_ids,
            tgt_ids=self.src_ids,
            src_lengths=self.tgt_lengths,
            tgt_lengths=self.src_lengths,
            tgt_to_src=self.src_to_tgt,
            src_to_tgt=self.tgt_to_src,
            aligned_src_ids=aligned,
            mt_tags=self.src_tags,
            hter=self.hter,
        )


def _mask(lengths: np.ndarray, width: int) -> np.ndarray:
    return (np.arange(width)[None, :] < lengths[:, None]).astype(np.float64)


def _leftmost(pairs: Iterable[Alignment], n: int, key: int) -> list[int]:
    out = [-1] * n
    for pair in pairs:
        i, j = pair[key], pair[1 - key]
        if out[i] < 0 or j < out[i]:
            out[i] = j
    return out


def collate(samples: Sequence[QESample], indices: Sequence[int], source_vocab: Vocabulary, target_vocab: Vocabulary) -> Batch:
    b = len(samples)
    m = max(len(s.source) for s in samples)
    n = max(len(s.target) for s in samples)
    src_ids = np.full((b, m), PAD_ID, dtype=np.int64)
    tgt_ids = np.full((b, n), PAD_ID, dtype=np.int64)
    tgt_to_src = np.full((b, n), -1, dtype=np.int64)
    src_to_tgt = np.full((b, m), -1, dtype=np.int64)
    aligned = np.full((b, n), PAD_ID, dtype=np.int64)
    has = {name: all(getattr(s, name) is not None for s in samples) for name in TAG_FIELDS + ("hter",)}
    mt_tags = np.zeros((b, n), dtype=np.int64) if has["target_tags"] else None
    gap_tags = np.zeros((b, n + 1), dtype=np.int64) if has["gap_tags"] else None
    src_tags = np.zeros((b, m), dtype=np.int64) if has["source_tags"] else None
    hter = np.array([s.hter for s in samples], dtype=np.float64) if has["hter"] else None

    for r, s in enumerate(samples):
        ls, lt = len(s.source), len(s.target)
        src_ids[r, :ls] = source_vocab.numericalize(s.source)
        tgt_ids[r, :lt] = target_vocab.numericalize(s.target)
        t2s = _leftmost(s.alignments, lt, key=1)
        s2t = _leftmost(s.alignments, ls, key=0)
        tgt_to_src[r, :lt] = t2s
        src_to_tgt[r, :ls] = s2t
        aligned[r, :lt] = [src_ids[r, k] if k >= 0 else UNALIGNED_ID for k in t2s]
        if mt_tags is not None:
            mt_tags[r, :lt] = [TAG_IDS[t] for t in s.target_tags]
        if gap_tags is not None:
            gap_tags[r, : lt + 1] = [TAG_IDS[t] for t in s.gap_tags]
        if src_tags is not None:
            src_tags[r, :ls] = [TAG_IDS[t] for t in s.source_tags]

    return Batch(
        indices=np.asarray(indices, dtype=np.int64),
        src_ids=src_ids,
        tgt_ids=tgt_ids,
        src_lengths=np.array([len(s.source) for s in samples], dtype=np.int64),
        tgt_lengths=np.array([len(s.target) for s in samples], dtype=np.int64),
        tgt_to_src=tgt_to_src,
        src_to_tgt=src_to_tgt,
        aligned_src_ids=aligned,
        mt_tags=mt_tags,
        gap_tags=gap_tags,
        src_tags=src_tags,
        hter=hter,
    )


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    """Sample permutation for one epoch; a pure function of (seed, epoch)."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def make_batches(
    samples: Sequence[QESample],
    batch_size: int,
    seed: int | None,
    source_vocab: Vocabulary,
    target_vocab: Vocabulary,
    epoch: int = 0,
) -> list[Batch]:
    """Split ``samples`` into padded batches.

    With ``seed=None`` the corpus order is kept (evaluation); otherwise the
    order is shuffled by :func:`epoch_order`.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = np.arange(len(samples)) if seed is None else epoch_order(len(samples), seed, epoch)
    batches = []
    for lo in range(0, len(order), batch_size):
        idx = order[lo : lo + batch_size]
        batches.append(collate([samples[i] for i in idx], idx, source_vocab, target_vocab))
    return batches
