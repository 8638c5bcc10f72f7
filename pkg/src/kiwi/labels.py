"""Gold word and sentence labels from post-edits.

Tags come from a shift-free Levenshtein alignment of the MT against its
post-edit (unit cost for substitution, insertion and deletion):

* an MT word is BAD when it is substituted or deleted;
* a gap is BAD when at least one post-edit word is inserted there;
* a source word is BAD when it is aligned to at least one BAD MT word.

HTER is the edit count divided by the post-edit length.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

from .data import BAD, OK, Alignment, CorpusError, SentenceTriplet, check_alignments

MATCH, SUB, DEL, INS = "match", "substitute", "delete", "insert"


class EditOp(NamedTuple):
    kind: str
    mt: int | None
    pe: int | None


class InconsistentScriptError(ValueError):
    pass


@dataclass
class EditScript:
    ops: list[EditOp]

    @property
    def edits(self) -> int:
        return sum(1 for op in self.ops if op.kind != MATCH)

    def count(self, kind: str) -> int:
        return sum(1 for op in self.ops if op.kind == kind)

    def __iter__(self):
        return iter(self.ops)

    def __len__(self) -> int:
        return len(self.ops)


@dataclass
class TagSequence:
    mt_tags: list[str]
    gap_tags: list[str]
    src_tags: list[str]


def edit_alignment(mt: Sequence[str], pe: Sequence[str]) -> EditScript:
    """Minimum-cost edit script turning ``mt`` into ``pe``.

    Ties in the backtrace are broken match > substitute > delete > insert.
    """
    n, m = len(mt), len(pe)
    # dist[i][j]: cost of turning mt[:i] into pe[:j]
    dist = [list(range(m + 1))]
    for i in range(1, n + 1):
        prev = dist[-1]
        row = [i] + [0] * m
        a = mt[i - 1]
        for j in range(1, m + 1):
            diag = prev[j - 1] + (a != pe[j - 1])
            up = prev[j] + 1
            left = row[j - 1] + 1
            row[j] = min(diag, up, left)
        dist.append(row)

    ops: list[EditOp] = []
    i, j = n, m
    while i > 0 or j > 0:
        here = dist[i][j]
        if i > 0 and j > 0:
            same = mt[i - 1] == pe[j - 1]
            if same and dist[i - 1][j - 1] == here:
                ops.append(EditOp(MATCH, i - 1, j - 1))
                i, j = i - 1, j - 1
                continue
            if not same and dist[i - 1][j - 1] + 1 == here:
                ops.append(EditOp(SUB, i - 1, j - 1))
                i, j = i - 1, j - 1
                continue
        if i > 0 and dist[i - 1][j] + 1 == here:
            ops.append(EditOp(DEL, i - 1, None))
            i -= 1
        else:
            ops.append(EditOp(INS, None, j - 1))
            j -= 1
    ops.reverse()
    return EditScript(ops)


def apply_script(mt: Sequence[str], pe: Sequence[str], script: EditScript) -> list[str]:
    """Rebuild the post-edit from ``mt`` and the script.

    ``pe`` supplies the words for substitutions and insertions.
    """
    out = []
    for op in script:
        if op.kind == MATCH:
            out.append(mt[op.mt])
        elif op.kind in (SUB, INS):
            out.append(pe[op.pe])
    return out


def _check_script(script: EditScript, n: int) -> None:
    expect_mt = 0
    expect_pe = 0
    for op in script:
        if op.mt is not None:
            if op.mt != expect_mt:
                raise InconsistentScriptError(f"MT index {op.mt} out of order (expected {expect_mt})")
            expect_mt += 1
        if op.pe is not None:
            if op.pe != expect_pe:
                raise InconsistentScriptError(f"PE index {op.pe} out of order (expected {expect_pe})")
            expect_pe += 1
        if (op.kind in (MATCH, SUB)) != (op.mt is not None and op.pe is not None):
            raise InconsistentScriptError(f"malformed operation {op}")
    if expect_mt != n:
        raise InconsistentScriptError(f"script covers {expect_mt} MT tokens, sentence has {n}")


def tags_from_edits(script: EditScript, n: int) -> tuple[list[str], list[str]]:
    """MT tags (n) and gap tags (n + 1) implied by an edit script."""
    _check_script(script, n)
    mt_tags = [OK] * n
    gap_tags = [OK] * (n + 1)
    consumed = 0
    for op in script:
        if op.kind == INS:
            gap_tags[consumed] = BAD
            continue
        if op.kind in (SUB, DEL):
            mt_tags[op.mt] = BAD
        consumed += 1
    return mt_tags, gap_tags


def source_tags(src_len: int, alignments: Iterable[Alignment], mt_tags: Sequence[str]) -> list[str]:
    """BAD for every source word aligned to a BAD MT word; unaligned words stay OK."""
    alignments = list(alignments)
    try:
        check_alignments(alignments, src_len, len(mt_tags))
    except CorpusError as exc:
        raise ValueError(str(exc)) from None
    tags = [OK] * src_len
    for s, t in alignments:
        if mt_tags[t] == BAD:
            tags[s] = BAD
    return tags


def hter(mt: Sequence[str], pe: Sequence[str]) -> float:
    if list(mt) == list(pe):
        return 0.0
    if not pe:
        return 1.0
    return min(1.0, edit_alignment(mt, pe).edits / len(pe))


def label_triplet(triplet: SentenceTriplet) -> tuple[TagSequence, float]:
    script = edit_alignment(triplet.mt, triplet.pe)
    mt_tags, gap_tags = tags_from_edits(script, len(triplet.mt))
    src_tags = source_tags(len(triplet.src), triplet.alignments, mt_tags)
    score = 0.0 if not script.edits else (1.0 if not triplet.pe else min(1.0, script.edits / len(triplet.pe)))
    return TagSequence(mt_tags, gap_tags, src_tags), score


def label_corpus(triplets: Iterable[SentenceTriplet]) -> list[tuple[TagSequence, float]]:
    return [label_triplet(t) for t in triplets]
