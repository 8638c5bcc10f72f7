"""``kiwi`` command line: train, predict, evaluate, label and render.

Examples::

    kiwi label --source dev.src --mt dev.mt --pe dev.pe --alignments dev.align --output-dir dev-labels
    kiwi train --config config.yml --seed 7
    kiwi predict --model runs/mt/best --model runs/gap/best --source dev.src --target dev.mt \\
        --alignments dev.align --output-dir preds
    kiwi evaluate --mt dev-labels/mt.tags preds/mt.probs --hter dev-labels/hter preds/hter
    kiwi render --target dev.mt --mt preds/mt.probs --gap preds/gap.probs --format html

Set ``KIWI_LOG`` (debug, info, warning, error) to change log verbosity.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import render as rendering
from .config import ConfigError, load_config
from .data import BAD, OK, CorpusError, load_corpus, load_triplets, read_lines, write_lines
from .ensemble import SystemPrediction, mean_arrays, read_probs, read_scores, write_probs, write_scores
from .labels import label_triplet
from .metrics import UndefinedCorrelationError, f1_mult, pearson, spearman, tags_from_probs
from .models import HTER, ModelFormatError, load_model
from .numerics import CheckpointFormatError
from .trainer import TrainingError, predict, train

log = logging.getLogger("kiwi")

WORD_STREAMS = ("mt", "gap", "source")


class UsageError(ValueError):
    pass


def _setup_logging() -> None:
    level = os.environ.get("KIWI_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


# ---------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    config = load_config(args.config)
    record = train(config, output_dir=args.output_dir, seed=args.seed)
    print(f"run {record.run_id}: {len(record.history)} epochs, best model at {record.best_path}")
    return 0


# ---------------------------------------------------------------------------
# predict


def _model_dir(path: str) -> Path:
    p = Path(path)
    if not (p / "manifest.json").exists() and (p / "best" / "manifest.json").exists():
        return p / "best"
    return p


def merge_predictions(systems: Sequence[SystemPrediction]) -> SystemPrediction:
    """Average every stream over the systems that produce it."""
    probs = {}
    streams = sorted({s for sys in systems for s in sys.probs})
    for stream in streams:
        group = [sys.probs[stream] for sys in systems if stream in sys.probs]
        lengths = {tuple(len(r) for r in g) for g in group}
        if len(lengths) > 1:
            raise UsageError(f"models disagree on the shape of the {stream} predictions")
        probs[stream] = [mean_arrays([g[i] for g in group]) for i in range(len(group[0]))]
    scored = [sys.scores for sys in systems if sys.scores is not None]
    scores = mean_arrays(scored) if scored else None
    return SystemPrediction("average", probs, scores)


def cmd_predict(args) -> int:
    paths = {"source": args.source, "target": args.target}
    if args.alignments:
        paths["alignments"] = args.alignments
    samples = load_corpus(paths)
    systems = []
    for m in args.model:
        model = load_model(_model_dir(m))
        systems.append(predict(model, samples, task=args.task, batch_size=args.batch_size))
    merged = merge_predictions(systems)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for stream, rows in merged.probs.items():
        write_probs(out / f"{stream}.probs", rows)
        write_lines(out / f"{stream}.tags", (" ".join(t) for t in merged.tags(stream, args.threshold)))
    if merged.scores is not None:
        write_scores(out / HTER, merged.scores)
    print(f"wrote {', '.join(sorted(merged.probs))}{' and hter' if merged.scores is not None else ''} predictions to {out}")
    return 0


# ---------------------------------------------------------------------------
# evaluate


def read_tag_or_prob_file(path: str, threshold: float) -> list[list[str]]:
    """Tags from a file of OK/BAD tokens or of BAD probabilities."""
    lines = read_lines(path)
    tokens = {tok for line in lines for tok in line.split()}
    if tokens <= {OK, BAD}:
        return [line.split() for line in lines]
    try:
        return tags_from_probs(read_probs(path), threshold)
    except ValueError:
        raise UsageError(f"{path}: expected OK/BAD tags or probabilities") from None


def evaluate_files(args) -> dict[str, float | None]:
    report: dict[str, float | None] = {}
    for stream in WORD_STREAMS:
        pair = getattr(args, stream)
        if pair is None:
            continue
        gold = read_tag_or_prob_file(pair[0], args.threshold)
        pred = read_tag_or_prob_file(pair[1], args.threshold)
        if len(gold) != len(pred):
            raise UsageError(f"{stream}: {len(gold)} gold sentences but {len(pred)} predicted")
        for i, (g, p) in enumerate(zip(gold, pred), 1):
            if len(g) != len(p):
                raise UsageError(f"{stream}: line {i} has {len(g)} gold tags but {len(p)} predicted")
        r = f1_mult(gold, pred)
        report[f"{stream}_f1_ok"] = r.f1_ok
        report[f"{stream}_f1_bad"] = r.f1_bad
        report[f"{stream}_f1_mult"] = r.f1_mult
    if args.hter is not None:
        gold_s, pred_s = read_scores(args.hter[0]), read_scores(args.hter[1])
        if len(gold_s) != len(pred_s):
            raise UsageError(f"hter: {len(gold_s)} gold scores but {len(pred_s)} predicted")
        for name, fn in (("pearson", pearson), ("spearman", spearman)):
            try:
                report[name] = fn(gold_s, pred_s)
            except UndefinedCorrelationError:
                report[name] = None
    if not report:
        raise UsageError("nothing to evaluate: give at least one of --mt, --gap, --source, --hter")
    return report


def cmd_evaluate(args) -> int:
    report = evaluate_files(args)
    for key, value in report.items():
        shown = "undefined" if value is None else f"{value:.4f}"
        if args.format == "kv":
            print(f"{key}={shown}")
        else:
            print(f"{key:<16}{shown}")
    return 0


# ---------------------------------------------------------------------------
# label


def cmd_label(args) -> int:
    triplets = load_triplets(args.source, args.mt, args.pe, args.alignments)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    labelled = [label_triplet(t) for t in triplets]
    write_lines(out / "mt.tags", (" ".join(tags.mt_tags) for tags, _ in labelled))
    write_lines(out / "gap.tags", (" ".join(tags.gap_tags) for tags, _ in labelled))
    write_lines(out / "source.tags", (" ".join(tags.src_tags) for tags, _ in labelled))
    write_scores(out / HTER, (score for _, score in labelled))
    print(f"labelled {len(triplets)} sentences into {out}")
    return 0


# ---------------------------------------------------------------------------
# render


def _read_rows(path: str | None):
    if path is None:
        return None
    lines = read_lines(path)
    tokens = {tok for line in lines for tok in line.split()}
    if tokens <= {OK, BAD}:
        return [line.split() for line in lines]
    return read_probs(path)


def cmd_render(args) -> int:
    words = [line.split() for line in read_lines(args.target)]
    text = rendering.render(words, _read_rows(args.mt), _read_rows(args.gap), args.format, args.threshold)
    if args.output:
        Path(args.output).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kiwi", description="Word- and sentence-level translation quality estimation.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("train", help="train a model from a YAML config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--output-dir", default=None, help="override the config output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write BAD probabilities, tags and sentence scores")
    p.add_argument("--model", action="append", required=True, help="model or run directory; repeat to average")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--alignments")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--task", choices=WORD_STREAMS, default=None, help="require models trained for this task")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against gold labels")
    for stream in WORD_STREAMS:
        p.add_argument(f"--{stream}", nargs=2, metavar=("GOLD", "PRED"), help=f"{stream} tags or probabilities")
    p.add_argument("--hter", nargs=2, metavar=("GOLD", "PRED"), help="sentence scores, one per line")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--format", choices=("text", "kv"), default="text")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("label", help="derive tags and HTER from post-edits")
    p.add_argument("--source", required=True)
    p.add_argument("--mt", required=True)
    p.add_argument("--pe", required=True)
    p.add_argument("--alignments")
    p.add_argument("--output-dir", required=True)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("render", help="show BAD words and gaps in colour or HTML")
    p.add_argument("--target", required=True)
    p.add_argument("--mt", required=True, help="MT tags or probabilities")
    p.add_argument("--gap", help="gap tags or probabilities")
    p.add_argument("--format", choices=rendering.FORMATS, default="ansi")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--output")
    p.set_defaults(func=cmd_render)
    return parser


HANDLED = (
    ConfigError,
    CorpusError,
    ModelFormatError,
    CheckpointFormatError,
    TrainingError,
    UsageError,
    ValueError,
    OSError,
)


def run_command(argv: Sequence[str] | None = None) -> int:
    """Run one subcommand; returns the process exit status."""
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except HANDLED as exc:
        msg = " ".join(str(exc).split())
        print(f"kiwi {args.command}: error: {msg}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
