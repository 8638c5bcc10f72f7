"""Integer windows over padded id matrices, as consumed by QUETCH and NuQE.

A window of width ``w`` around position ``c`` covers ``c - w//2 .. c + w//2``;
positions left of the sentence read ``<s>``, positions right of it ``</s>``.
Windows whose centre is unaligned are filled with ``<unaligned>``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import PAD_ID, START_ID, STOP_ID, UNALIGNED_ID, Batch

TASKS = ("mt", "gap", "source")


def check_window(width: int) -> None:
    if width < 1 or width % 2 == 0:
        raise ValueError(f"window size must be odd and >= 1, got {width}")


def gather_windows(ids: np.ndarray, lengths: np.ndarray, centers: np.ndarray, offsets: np.ndarray, unaligned: np.ndarray | None = None) -> np.ndarray:
    """``(B, P, len(offsets))`` ids read around ``centers`` (shape ``(B, P)``)."""
    pos = centers[:, :, None] + offsets[None, None, :]
    width = ids.shape[1]
    safe = np.clip(pos, 0, max(width - 1, 0))
    if width:
        out = np.take_along_axis(ids, safe.reshape(len(ids), -1), axis=1).reshape(pos.shape)
    else:
        out = np.full(pos.shape, PAD_ID, dtype=np.int64)
    out = np.where(pos < 0, START_ID, out)
    out = np.where(pos >= lengths[:, None, None], STOP_ID, out)
    if unaligned is not None:
        out = np.where(unaligned[:, :, None], UNALIGNED_ID, out)
    return out


@dataclass
class WindowInputs:
    main: np.ndarray  # (B, P, W_main) ids in the labelled side's vocabulary
    aligned: np.ndarray  # (B, P, W_aligned) ids in the other side's vocabulary
    mask: np.ndarray  # (B, P) 1.0 on labelled positions
    gold: np.ndarray | None  # (B, P) 0 = OK, 1 = BAD


def task_windows(batch: Batch, task: str, width: int) -> WindowInputs:
    """Per-position input windows for ``task`` in {mt, gap, source}.

    MT words look at a ``width`` window of MT words and a ``width`` window of
    source words around their leftmost aligned source word.  Gap ``g`` looks
    at the ``width + 1`` MT words around the boundary (both neighbours
    included) and at the source window aligned to MT word ``g - 1``; gap 0 is
    centred just before the source sentence.  Source words mirror MT words.
    """
    check_window(width)
    half = width // 2
    offsets = np.arange(width) - half
    if task == "mt":
        n = batch.tgt_ids.shape[1]
        centers = np.broadcast_to(np.arange(n), batch.tgt_ids.shape)
        main = gather_windows(batch.tgt_ids, batch.tgt_lengths, centers, offsets)
        link = batch.tgt_to_src
        aligned = gather_windows(batch.src_ids, batch.src_lengths, link, offsets, unaligned=link < 0)
        return WindowInputs(main, aligned, batch.tgt_mask, batch.mt_tags)
    if task == "gap":
        n = batch.tgt_ids.shape[1]
        centers = np.broadcast_to(np.arange(n + 1), (len(batch), n + 1))
        gap_offsets = np.arange(width + 1) - (half + 1)
        main = gather_windows(batch.tgt_ids, batch.tgt_lengths, centers, gap_offsets)
        left = np.concatenate([np.full((len(batch), 1), -1), batch.tgt_to_src], axis=1)
        unaligned = np.zeros(left.shape, dtype=bool)
        unaligned[:, 1:] = batch.tgt_to_src < 0
        aligned_centers = np.where(unaligned, 0, left)
        aligned = gather_windows(batch.src_ids, batch.src_lengths, aligned_centers, offsets, unaligned=unaligned)
        return WindowInputs(main, aligned, batch.gap_mask, batch.gap_tags)
    if task == "source":
        m = batch.src_ids.shape[1]
        centers = np.broadcast_to(np.arange(m), batch.src_ids.shape)
        main = gather_windows(batch.src_ids, batch.src_lengths, centers, offsets)
        link = batch.src_to_tgt
        aligned = gather_windows(batch.tgt_ids, batch.tgt_lengths, link, offsets, unaligned=link < 0)
        return WindowInputs(main, aligned, batch.src_mask, batch.src_tags)
    raise ValueError(f"unknown task {task!r} (expected one of {', '.join(TASKS)})")
