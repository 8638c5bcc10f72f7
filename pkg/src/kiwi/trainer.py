"""Training loop, best-model keeping, prediction and run directories.

Run directory layout::

    config.snapshot             resolved configuration (YAML)
    history.jsonl               one JSON record per finished epoch
    checkpoints/epoch_<k>/      model directory after epoch k (1-based)
    best/                       model directory with the best selection metric
    predictions/val.<stream>.probs   validation probabilities of the best model
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from filelock import FileLock, Timeout

from . import numerics as nx
from .config import Config, load_config
from .data import QESample, Vocabulary, build_vocab, load_corpus, make_batches, parse_alignments
from .ensemble import SystemPrediction, write_probs, write_scores
from .metrics import UndefinedCorrelationError, f1_mult, pearson, spearman, tags_from_probs
from .models import (
    HTER,
    Estimator,
    ModelFormatError,
    Predictor,
    QEModel,
    build_model,
    load_model,
    save_model,
    trainable_parameters,
)

log = logging.getLogger(__name__)

GOLD_FIELD = {"mt": "target_tags", "gap": "gap_tags", "source": "source_tags"}
PREDICT_BATCH = 64


class TrainingError(RuntimeError):
    pass


@dataclass
class RunRecord:
    run_id: str
    output_dir: Path
    config: dict
    seed: int
    history: list[dict] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)
    best_path: Path | None = None
    best_epoch: int | None = None
    best_value: float | None = None

    @property
    def model_path(self) -> Path | None:
        return self.best_path


# ---------------------------------------------------------------------------
# evaluation


def predict_samples(model: QEModel, samples: Sequence[QESample], batch_size: int = PREDICT_BATCH, system_id: str | None = None) -> SystemPrediction:
    """Run ``model`` over ``samples`` in corpus order."""
    if not samples:
        raise ValueError("no samples to predict")
    rows: dict[str, list] = {s: [None] * len(samples) for s in model.streams()}
    for batch in make_batches(samples, batch_size, None, model.vocabs["source"], model.vocabs["target"]):
        out = model.predict_batch(batch)
        for stream, arrays in out.items():
            for i, arr in zip(batch.indices, arrays):
                rows[stream][i] = arr
    scores = None
    if HTER in rows:
        scores = np.array([float(r[0]) for r in rows.pop(HTER)])
    return SystemPrediction(system_id or model.kind, rows, scores)


def evaluate_predictions(pred: SystemPrediction, samples: Sequence[QESample], threshold: float = 0.5) -> dict[str, float | None]:
    """Official scores for every stream that has gold labels."""
    report: dict[str, float | None] = {}
    for stream, rows in sorted(pred.probs.items()):
        gold = [getattr(s, GOLD_FIELD[stream]) for s in samples]
        if any(g is None for g in gold):
            continue
        r = f1_mult(gold, tags_from_probs(rows, threshold))
        report[f"{stream}_f1_ok"] = r.f1_ok
        report[f"{stream}_f1_bad"] = r.f1_bad
        report[f"{stream}_f1_mult"] = r.f1_mult
    if pred.scores is not None and all(s.hter is not None for s in samples):
        gold = [s.hter for s in samples]
        for name, fn in (("pearson", pearson), ("spearman", spearman)):
            try:
                report[name] = fn(gold, pred.scores)
            except UndefinedCorrelationError:
                report[name] = None
    return report


def predictor_accuracy(model: Predictor, samples: Sequence[QESample], batch_size: int = PREDICT_BATCH) -> float:
    right = total = 0
    for batch in make_batches(samples, batch_size, None, model.vocabs["source"], model.vocabs["target"]):
        r, t = model.accuracy_counts(batch)
        right += r
        total += t
    return right / total if total else 0.0


def mean_loss(model: QEModel, samples: Sequence[QESample], batch_size: int = PREDICT_BATCH) -> float:
    total = weight = 0.0
    for batch in make_batches(samples, batch_size, None, model.vocabs["source"], model.vocabs["target"]):
        total += model.loss(batch).item() * len(batch)
        weight += len(batch)
    return total / weight


def validation_metrics(model: QEModel, samples: Sequence[QESample], threshold: float) -> tuple[dict, SystemPrediction | None]:
    if isinstance(model, Predictor):
        return {"accuracy": predictor_accuracy(model, samples), "loss": mean_loss(model, samples)}, None
    pred = predict_samples(model, samples)
    report = evaluate_predictions(pred, samples, threshold)
    report["loss"] = mean_loss(model, samples)
    return report, pred


def selection_key(model: QEModel, metric: str) -> tuple[str, bool]:
    """History key used for best-model selection and whether higher is better."""
    if metric == "auto":
        if isinstance(model, Predictor):
            return "accuracy", True
        return f"{model.task}_f1_mult", True
    if metric == "f1_mult":
        if isinstance(model, Predictor):
            raise TrainingError("a predictor has no f1_mult; use accuracy or loss")
        return f"{model.task}_f1_mult", True
    return metric, metric != "loss"


# ---------------------------------------------------------------------------
# training


def run_epoch(
    model: QEModel,
    optimizer: nx.Optimizer,
    params: Mapping[str, nx.Tensor],
    samples: Sequence[QESample],
    batch_size: int,
    seed: int,
    epoch: int,
    clip_norm: float = 5.0,
) -> float:
    """One pass over ``samples`` in the (seed, epoch) order; returns the mean batch loss."""
    batches = make_batches(samples, batch_size, seed, model.vocabs["source"], model.vocabs["target"], epoch=epoch)
    total = 0.0
    for step, batch in enumerate(batches, 1):
        loss = model.loss(batch)
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingError(f"non-finite loss at epoch {epoch}, step {step}")
        nx.forward_backward(loss, params)
        nx.clip_grad_norm(params, clip_norm)
        optimizer.step()
        total += value
    return total / len(batches)


def _load_samples(paths: Mapping[str, Path], max_length: int) -> list[QESample]:
    return load_corpus({k: str(v) for k, v in paths.items()}, max_length=max_length)


def _vocabs(config: Config, train: Sequence[QESample]) -> dict[str, Vocabulary]:
    return {
        "source": build_vocab((s.source for s in train), config.data.min_freq, config.data.max_vocab),
        "target": build_vocab((s.target for s in train), config.data.min_freq, config.data.max_vocab),
    }


def build_from_config(config: Config, train: Sequence[QESample]) -> QEModel:
    kind = config.model.kind
    if kind == "estimator" and config.model.predictor_model is not None:
        predictor = load_model(config.model.predictor_model)
        if not isinstance(predictor, Predictor):
            raise TrainingError(f"{config.model.predictor_model} is not a predictor model")
        return Estimator(predictor.vocabs, config.model.hparams, seed=config.seed, predictor=predictor)
    return build_model(kind, _vocabs(config, train), config.model.hparams, seed=config.seed)


def _run_id(snapshot: str) -> str:
    return hashlib.sha256(snapshot.encode("utf-8")).hexdigest()[:12]


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _save(model: QEModel, path: Path) -> None:
    try:
        if path.exists():
            shutil.rmtree(path)
        save_model(model, path)
    except OSError as exc:
        raise TrainingError(f"could not write snapshot {path}: {exc}") from exc


def _write_predictions(out_dir: Path, pred: SystemPrediction) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for stream, rows in pred.probs.items():
        write_probs(out_dir / f"val.{stream}.probs", rows)
    if pred.scores is not None:
        write_scores(out_dir / f"val.{HTER}.probs", pred.scores)


def train(config: Config | str | Path, output_dir: str | Path | None = None, seed: int | None = None) -> RunRecord:
    """Train one model as described by ``config``; see the module docstring for outputs."""
    if not isinstance(config, Config):
        config = load_config(config)
    if output_dir is not None:
        config.output_dir = Path(output_dir).resolve()
    if seed is not None:
        config.seed = seed
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(out / ".lock"))
    try:
        lock.acquire(timeout=0)
    except Timeout:
        raise TrainingError(f"run directory {out} is in use by another process") from None
    try:
        return _train_locked(config)
    finally:
        lock.release()


def _train_locked(config: Config) -> RunRecord:
    out = config.output_dir
    tc = config.training
    train_set = _load_samples(config.data.train, config.data.max_length)
    valid_set = train_set if config.data.valid is None else _load_samples(config.data.valid, config.data.max_length)
    model = build_from_config(config, train_set)
    params = trainable_parameters(model)
    optimizer = nx.make_optimizer(tc.optimizer, params, tc.learning_rate)
    key, higher = selection_key(model, tc.selection_metric)

    snapshot = config.dumps()
    (out / "config.snapshot").write_text(snapshot, encoding="utf-8")
    record = RunRecord(_run_id(snapshot), out, config.to_dict(), config.seed)
    history_path = out / "history.jsonl"
    history_path.write_text("", encoding="utf-8")
    best_dir = out / "best"
    _save(model, best_dir)
    record.best_path = best_dir

    stale = 0
    for epoch in range(1, tc.epochs + 1):
        train_loss = run_epoch(model, optimizer, params, train_set, tc.batch_size, config.seed, epoch, tc.clip_norm)
        metrics, pred = validation_metrics(model, valid_set, tc.threshold)
        entry: dict[str, Any] = {"epoch": epoch, "train_loss": train_loss}
        entry.update({k: _json_value(v) for k, v in sorted(metrics.items())})
        current = metrics.get(key)
        if current is None and key not in metrics:
            raise TrainingError(f"selection metric {key!r} is not available for this model and data")
        improved = current is not None and (
            record.best_value is None or (current > record.best_value if higher else current < record.best_value)
        )
        if improved:
            record.best_value, record.best_epoch = current, epoch
            _save(model, best_dir)
            if pred is not None:
                _write_predictions(out / "predictions", pred)
            stale = 0
        else:
            stale += 1
        entry["best"] = improved
        if tc.checkpoint_every and epoch % tc.checkpoint_every == 0:
            ckpt = out / "checkpoints" / f"epoch_{epoch}"
            _save(model, ckpt)
            record.checkpoints.append(ckpt)
            entry["checkpoint"] = f"checkpoints/epoch_{epoch}"
        record.history.append(entry)
        with open(history_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
        log.info("epoch %d loss %.4f %s=%s", epoch, entry["train_loss"], key, current)
        if tc.patience and stale >= tc.patience:
            log.info("early stopping after %d epochs without improvement", stale)
            break
    return record


# ---------------------------------------------------------------------------
# prediction


def predict(model: QEModel | str | Path, samples: Sequence[QESample], task: str | None = None, batch_size: int = PREDICT_BATCH) -> SystemPrediction:
    """BAD probabilities (and sentence scores when available) for ``samples``."""
    if not isinstance(model, QEModel):
        model = load_model(model)
    if isinstance(model, Predictor):
        raise ModelFormatError("predictor checkpoints cannot tag translations")
    if task is not None and task != model.task:
        raise ModelFormatError(f"model was trained for task {model.task!r}, not {task!r}")
    if not samples:
        raise ValueError("no samples to predict")
    return predict_samples(model, samples, batch_size)


def _sentences(value) -> list[str]:
    return [value] if isinstance(value, str) else list(value)


class Model:
    """A loaded model with a dictionary-friendly ``predict``."""

    def __init__(self, model: QEModel):
        self.model = model

    def predict(self, examples, batch_size: int = PREDICT_BATCH) -> dict[str, list]:
        """Predict on ``[{"source": ..., "target": ...}, ...]``.

        Each value may be a single sentence or a list of sentences.  Returns
        ``{stream: [[bad probability per token], ...]}`` plus ``"hter"`` scores
        when the model produces them.
        """
        samples = []
        for ex in examples:
            sources, targets = _sentences(ex["source"]), _sentences(ex["target"])
            if len(sources) != len(targets):
                raise ValueError("source and target sentence counts differ")
            aligns = _sentences(ex.get("alignments", [""] * len(sources)))
            for s, t, a in zip(sources, targets, aligns):
                src, tgt = s.split(), t.split()
                samples.append(QESample(src, tgt, parse_alignments(a, len(src), len(tgt))))
        pred = predict(self.model, samples, batch_size=batch_size)
        out: dict[str, list] = {k: [r.tolist() for r in v] for k, v in pred.probs.items()}
        if pred.scores is not None:
            out[HTER] = pred.scores.tolist()
        return out


def load(path: str | Path) -> Model:
    return Model(load_model(path))
