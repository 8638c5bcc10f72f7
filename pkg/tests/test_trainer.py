import json

import numpy as np
import pytest
import yaml
from filelock import FileLock

import kiwi
from kiwi import trainer
from kiwi.config import Config
from kiwi.data import QESample, build_vocab
from kiwi.models import ModelFormatError, Predictor, Quetch, build_model, load_model
from kiwi.numerics import Adam
from kiwi.numerics.checkpoint import CheckpointFormatError
from kiwi.synthetic import copy_corpus, overfit_corpus
from kiwi.trainer import TrainingError, evaluate_predictions, predict, predict_samples, run_epoch, train

from helpers import write_samples

SMALL = {"embedding_dim": 8, "hidden_dim": 16}


def make_config(tmp_path, epochs=3, model=None, training=None, seed=5, valid=True):
    data = overfit_corpus(32, seed=0)
    raw = {
        "seed": seed,
        "output_dir": str(tmp_path / "run"),
        "data": {"train": write_samples(tmp_path / "data", "train", data[:24])},
        "model": model or {"kind": "quetch", "task": "mt", **SMALL},
        "training": {"epochs": epochs, "learning_rate": 0.01, "batch_size": 8, **(training or {})},
    }
    if valid:
        raw["data"]["valid"] = write_samples(tmp_path / "data", "dev", data[24:])
    return Config.from_dict(raw, tmp_path)


def history_lines(record):
    return (record.output_dir / "history.jsonl").read_text().splitlines()


class TestTrain:
    def test_zero_epochs_keeps_initial_model(self, tmp_path):
        config = make_config(tmp_path, epochs=0)
        record = train(config)
        assert record.history == [] and history_lines(record) == []
        assert record.best_epoch is None
        initial = build_model("quetch", load_model(record.best_path).vocabs, SMALL, seed=5)
        for name, value in initial.state_dict().items():
            np.testing.assert_array_equal(load_model(record.best_path).state_dict()[name], value)

    def test_run_directory_layout(self, tmp_path):
        record = train(make_config(tmp_path, epochs=2))
        out = record.output_dir
        for rel in ("config.snapshot", "history.jsonl", "best/manifest.json", "checkpoints/epoch_1", "checkpoints/epoch_2", "predictions/val.mt.probs", "predictions/val.hter.probs"):
            assert (out / rel).exists(), rel
        assert record.model_path == out / "best"
        assert len(record.history) == len(history_lines(record)) == 2
        snapshot = yaml.safe_load((out / "config.snapshot").read_text())
        assert snapshot["training"]["epochs"] == 2 and snapshot["seed"] == 5

    def test_history_is_deterministic(self, tmp_path):
        a = train(make_config(tmp_path / "a"))
        b = train(make_config(tmp_path / "b"))
        assert (a.output_dir / "history.jsonl").read_bytes() == (b.output_dir / "history.jsonl").read_bytes()
        assert a.run_id != "" and a.history == b.history

    def test_seed_override_changes_run(self, tmp_path):
        a = train(make_config(tmp_path / "a"))
        b = train(make_config(tmp_path / "b"), seed=6)
        assert b.seed == 6 and a.history != b.history

    def test_history_records(self, tmp_path):
        record = train(make_config(tmp_path, epochs=2))
        entries = [json.loads(line) for line in history_lines(record)]
        assert [e["epoch"] for e in entries] == [1, 2]
        for e in entries:
            assert {"train_loss", "mt_f1_mult", "mt_f1_ok", "mt_f1_bad", "best", "checkpoint"} <= set(e)
            assert not any(str(tmp_path) in str(v) for v in e.values())

    def test_best_is_the_maximum_of_history(self, tmp_path):
        record = train(make_config(tmp_path, epochs=4))
        values = [e["mt_f1_mult"] for e in record.history]
        assert record.best_value == max(values)
        assert record.best_epoch == values.index(max(values)) + 1
        best = load_model(record.best_path)
        ckpt = load_model(tmp_path / "run" / "checkpoints" / f"epoch_{record.best_epoch}")
        for name, value in best.state_dict().items():
            assert value.tobytes() == ckpt.state_dict()[name].tobytes()

    def test_early_stopping(self, tmp_path, monkeypatch):
        scripted = iter([0.5, 0.6, 0.4, 0.3, 0.2, 0.9, 0.9, 0.9])

        def fake_metrics(model, samples, threshold):
            return {"mt_f1_mult": next(scripted)}, None

        monkeypatch.setattr(trainer, "validation_metrics", fake_metrics)
        record = train(make_config(tmp_path, epochs=8, training={"patience": 2}))
        assert [e["epoch"] for e in record.history] == [1, 2, 3, 4]
        assert record.best_epoch == 2 and record.best_value == 0.6
        assert record.best_epoch in [e["epoch"] for e in record.history]

    def test_non_finite_loss_aborts(self, tmp_path, monkeypatch):
        real = trainer.build_from_config

        def poisoned(config, samples):
            model = real(config, samples)
            model.output.bias.data[:] = np.nan
            return model

        monkeypatch.setattr(trainer, "build_from_config", poisoned)
        with pytest.raises(TrainingError, match="epoch 1, step 1"):
            train(make_config(tmp_path))

    def test_snapshot_failure_aborts_with_partial_run(self, tmp_path, monkeypatch):
        real = trainer.save_model

        def failing(model, path):
            if "epoch_2" in str(path):
                raise OSError("disk full")
            return real(model, path)

        monkeypatch.setattr(trainer, "save_model", failing)
        with pytest.raises(TrainingError, match="disk full"):
            train(make_config(tmp_path, epochs=3))
        assert len(history_lines_at(tmp_path / "run")) == 1
        assert (tmp_path / "run" / "checkpoints" / "epoch_1").exists()

    def test_locked_run_directory(self, tmp_path):
        config = make_config(tmp_path)
        config.output_dir.mkdir(parents=True)
        with FileLock(str(config.output_dir / ".lock")):
            with pytest.raises(TrainingError, match="in use"):
                train(config)
        train(config)

    def test_train_without_validation_uses_training_set(self, tmp_path):
        record = train(make_config(tmp_path, epochs=1, valid=False))
        assert record.history[0]["mt_f1_mult"] is not None

    def test_predictor_selects_on_accuracy(self, tmp_path):
        data = copy_corpus(40, seed=0)
        raw = {
            "output_dir": str(tmp_path / "run"),
            "data": {"train": write_samples(tmp_path / "data", "train", data)},
            "model": {"kind": "predictor", "embedding_dim": 8, "hidden_dim": 8, "out_dim": 8},
            "training": {"epochs": 2, "learning_rate": 0.01},
        }
        record = train(Config.from_dict(raw, tmp_path))
        assert all(0 <= e["accuracy"] <= 1 for e in record.history)
        assert isinstance(load_model(record.best_path), Predictor)

    def test_estimator_on_pretrained_predictor(self, tmp_path):
        data = overfit_corpus(32, seed=0)
        files = write_samples(tmp_path / "data", "train", data)
        pre = {
            "output_dir": str(tmp_path / "pre"),
            "data": {"train": {"source": files["source"], "target": files["target"]}},
            "model": {"kind": "predictor", "embedding_dim": 8, "hidden_dim": 8, "out_dim": 8},
            "training": {"epochs": 1},
        }
        pre_record = train(Config.from_dict(pre, tmp_path))
        est = {
            "output_dir": str(tmp_path / "est"),
            "data": {"train": files},
            "model": {"kind": "estimator", "task": "mt", "hidden_dim": 8, "rnn_dim": 4, "predictor_model": str(pre_record.best_path)},
            "training": {"epochs": 1},
        }
        record = train(Config.from_dict(est, tmp_path))
        model = load_model(record.best_path)
        assert model.predictor.hparams["out_dim"] == 8
        frozen = load_model(pre_record.best_path).state_dict()
        for name, value in model.predictor.state_dict().items():
            assert value.tobytes() == frozen[name].tobytes()


def history_lines_at(run_dir):
    return (run_dir / "history.jsonl").read_text().splitlines()


class TestRunEpoch:
    def test_reports_step(self):
        data = overfit_corpus(8, seed=0)
        vocabs = {"source": build_vocab(s.source for s in data), "target": build_vocab(s.target for s in data)}
        model = Quetch(vocabs, SMALL)
        params = model.named_parameters()
        model.output.bias.data[:] = np.nan
        with pytest.raises(TrainingError, match="non-finite loss at epoch 3, step 1"):
            run_epoch(model, Adam(params), params, data, 4, 0, 3)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("trained")
    return train(make_config(tmp, epochs=2))


class TestPredict:
    def test_usage_example_shape(self, trained):
        model = kiwi.load_model(trained.model_path)
        examples = [{"source": "the Sharpen tool sharpens", "target": "das Scharfzeichner-Werkzeug schärft"}]
        out = model.predict(examples)
        assert len(out["mt"]) == 1 and len(out["mt"][0]) == 3
        assert len(out["hter"]) == 1
        assert all(0.0 <= p <= 1.0 for p in out["mt"][0])

    def test_predict_twice_is_bit_identical(self, trained):
        samples = overfit_corpus(10, seed=9)
        a = predict(trained.model_path, samples)
        b = predict(trained.model_path, samples)
        for x, y in zip(a.probs["mt"], b.probs["mt"]):
            assert x.tobytes() == y.tobytes()
        assert a.scores.tobytes() == b.scores.tobytes()

    def test_checkpoint_is_not_mutated(self, trained):
        before = (trained.model_path / "params.ckpt").read_bytes()
        predict(trained.model_path, overfit_corpus(4, seed=1))
        assert (trained.model_path / "params.ckpt").read_bytes() == before

    def test_unknown_words_map_to_unk(self, trained):
        out = predict(trained.model_path, [QESample(["never", "seen"], ["nie", "gesehen", "."])])
        assert len(out.probs["mt"][0]) == 3

    def test_errors(self, trained, tmp_path):
        with pytest.raises(ValueError, match="no samples"):
            predict(trained.model_path, [])
        with pytest.raises(ModelFormatError, match="task"):
            predict(trained.model_path, overfit_corpus(2), task="gap")
        data = overfit_corpus(4)
        vocabs = {"source": build_vocab(s.source for s in data), "target": build_vocab(s.target for s in data)}
        with pytest.raises(ModelFormatError, match="predictor"):
            predict(Predictor(vocabs, {"embedding_dim": 4, "hidden_dim": 4, "out_dim": 4}), data)

    def test_truncated_checkpoint(self, trained, tmp_path):
        import shutil

        copy = tmp_path / "m"
        shutil.copytree(trained.model_path, copy)
        blob = (copy / "params.ckpt").read_bytes()
        (copy / "params.ckpt").write_bytes(blob[: len(blob) // 2])
        with pytest.raises(CheckpointFormatError):
            load_model(copy)

    def test_evaluation_matches_best_metric(self, trained, tmp_path):
        data = overfit_corpus(32, seed=0)[24:]
        metrics = evaluate_predictions(predict_samples(load_model(trained.model_path), data), data)
        assert metrics["mt_f1_mult"] == pytest.approx(trained.best_value, abs=1e-12)
