"""Writing in-memory samples out as parallel corpus files."""
from __future__ import annotations

from pathlib import Path

from kiwi.data import format_alignments, write_lines


def write_samples(directory: Path, prefix: str, samples) -> dict[str, str]:
    """Write every populated field of ``samples``; returns the field -> path map."""
    directory.mkdir(parents=True, exist_ok=True)
    columns = {
        "source": [" ".join(s.source) for s in samples],
        "target": [" ".join(s.target) for s in samples],
        "alignments": [format_alignments(s.alignments) for s in samples],
    }
    optional = {
        "target_tags": lambda s: " ".join(s.target_tags),
        "gap_tags": lambda s: " ".join(s.gap_tags),
        "source_tags": lambda s: " ".join(s.source_tags),
        "hter": lambda s: repr(s.hter),
    }
    for name, fmt in optional.items():
        if all(getattr(s, name) is not None for s in samples):
            columns[name] = [fmt(s) for s in samples]
    paths = {}
    for name, lines in columns.items():
        path = directory / f"{prefix}.{name}"
        write_lines(path, lines)
        paths[name] = str(path)
    return paths
