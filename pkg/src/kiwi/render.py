"""Terminal and HTML views of word and gap tags.

BAD words are shown in red.  A BAD gap becomes a red underscore placed between
its neighbouring words; OK gaps are invisible.
"""
from __future__ import annotations

import html
from typing import Sequence

from .data import BAD

RED = "\x1b[31m"
RESET = "\x1b[0m"
FORMATS = ("ansi", "html")


def _bad(row: Sequence, threshold: float) -> list[bool]:
    """Accept OK/BAD tags or BAD probabilities."""
    out = []
    for v in row:
        out.append(v == BAD if isinstance(v, str) else float(v) > threshold)
    return out


def render_sentence(words: Sequence[str], mt: Sequence, gaps: Sequence | None = None, fmt: str = "ansi", threshold: float = 0.5) -> str:
    if fmt not in FORMATS:
        raise ValueError(f"unknown render format {fmt!r} (expected ansi or html)")
    if len(mt) != len(words):
        raise ValueError(f"{len(words)} words but {len(mt)} word predictions")
    if gaps is not None and len(gaps) != len(words) + 1:
        raise ValueError(f"{len(words)} words need {len(words) + 1} gap predictions, got {len(gaps)}")
    word_bad = _bad(mt, threshold)
    gap_bad = _bad(gaps, threshold) if gaps is not None else [False] * (len(words) + 1)

    if fmt == "html":
        def word(w, bad):
            w = html.escape(w)
            return f'<span class="bad">{w}</span>' if bad else w
        gap = '<span class="bad-gap">_</span>'
    else:
        def word(w, bad):
            return f"{RED}{w}{RESET}" if bad else w
        gap = f"{RED}_{RESET}"

    pieces = []
    for i, w in enumerate(words):
        if gap_bad[i]:
            pieces.append(gap)
        pieces.append(word(w, word_bad[i]))
    if gap_bad[len(words)]:
        pieces.append(gap)
    return " ".join(pieces)


def render(samples: Sequence[Sequence[str]], mt: Sequence[Sequence], gaps: Sequence[Sequence] | None = None, fmt: str = "ansi", threshold: float = 0.5) -> str:
    """One rendered line per sentence, joined by newlines."""
    if len(samples) != len(mt) or (gaps is not None and len(gaps) != len(samples)):
        raise ValueError("sentence and prediction counts differ")
    lines = [
        render_sentence(words, mt[i], None if gaps is None else gaps[i], fmt, threshold)
        for i, words in enumerate(samples)
    ]
    return "\n".join(lines)
