import os
import subprocess
import sys

import pytest
import yaml

from kiwi.cli import run_command
from kiwi.data import write_lines
from kiwi.synthetic import overfit_corpus, toy_corpus_dir

from helpers import write_samples

SMALL = {"embedding_dim": 8, "hidden_dim": 16}


def kiwi(*args):
    return run_command([str(a) for a in args])


@pytest.fixture
def config_path(tmp_path):
    data = overfit_corpus(32, seed=0)
    raw = {
        "seed": 1,
        "output_dir": "run",
        "data": {
            "train": write_samples(tmp_path / "data", "train", data[:24]),
            "valid": write_samples(tmp_path / "data", "dev", data[24:]),
        },
        "model": {"kind": "quetch", "task": "mt", **SMALL},
        "training": {"epochs": 2, "learning_rate": 0.01},
    }
    path = tmp_path / "config.yml"
    path.write_text(yaml.safe_dump(raw))
    return path


class TestTrain:
    def test_creates_run_directory(self, config_path, tmp_path, capsys):
        assert kiwi("train", "--config", config_path) == 0
        assert (tmp_path / "run" / "best" / "manifest.json").exists()
        assert "2 epochs" in capsys.readouterr().out

    def test_overrides(self, config_path, tmp_path):
        assert kiwi("train", "--config", config_path, "--output-dir", tmp_path / "other", "--seed", 9) == 0
        snapshot = yaml.safe_load((tmp_path / "other" / "config.snapshot").read_text())
        assert snapshot["seed"] == 9 and not (tmp_path / "run").exists()

    def test_unknown_key(self, config_path, capsys):
        raw = yaml.safe_load(config_path.read_text())
        raw["training"]["lerning_rate"] = 0.1
        config_path.write_text(yaml.safe_dump(raw))
        assert kiwi("train", "--config", config_path) != 0
        err = capsys.readouterr().err
        assert "lerning_rate" in err and len(err.strip().splitlines()) == 1

    def test_missing_config(self, tmp_path, capsys):
        assert kiwi("train", "--config", tmp_path / "none.yml") == 1
        assert "not found" in capsys.readouterr().err

    def test_invalid_subcommand(self, capsys):
        assert kiwi("fly") == 2
        assert kiwi() == 2


class TestLabel:
    def test_outputs(self, tmp_path):
        src, mt, pe = tmp_path / "s", tmp_path / "m", tmp_path / "p"
        write_lines(src, ["s1 s2 s3"])
        write_lines(mt, ["a x c"])
        write_lines(pe, ["a b c d"])
        (tmp_path / "al").write_text("0-0 1-1 2-2\n")
        assert kiwi("label", "--source", src, "--mt", mt, "--pe", pe, "--alignments", tmp_path / "al", "--output-dir", tmp_path / "out") == 0
        out = tmp_path / "out"
        assert (out / "mt.tags").read_text() == "OK BAD OK\n"
        assert (out / "gap.tags").read_text() == "OK OK OK BAD\n"
        assert (out / "source.tags").read_text() == "OK BAD OK\n"
        assert float((out / "hter").read_text()) == 0.5

    def test_line_mismatch(self, tmp_path, capsys):
        write_lines(tmp_path / "s", ["a", "b"])
        write_lines(tmp_path / "m", ["a"])
        assert kiwi("label", "--source", tmp_path / "s", "--mt", tmp_path / "m", "--pe", tmp_path / "m", "--output-dir", tmp_path / "o") == 1
        assert "kiwi label: error:" in capsys.readouterr().err


class TestEvaluate:
    def files(self, tmp_path):
        write_lines(tmp_path / "gold", ["OK BAD OK OK"])
        write_lines(tmp_path / "pred", ["0.1 0.9 0.7 0.2"])
        write_lines(tmp_path / "gh", ["1", "2", "3"])
        write_lines(tmp_path / "ph", ["1", "2", "4"])

    def test_report(self, tmp_path, capsys):
        self.files(tmp_path)
        assert kiwi("evaluate", "--mt", tmp_path / "gold", tmp_path / "pred", "--hter", tmp_path / "gh", tmp_path / "ph", "--format", "kv") == 0
        report = dict(line.split("=") for line in capsys.readouterr().out.split())
        assert report["mt_f1_mult"] == "0.5333"
        assert report["pearson"] == "0.9820" and report["spearman"] == "1.0000"

    def test_tags_against_tags(self, tmp_path, capsys):
        self.files(tmp_path)
        assert kiwi("evaluate", "--mt", tmp_path / "gold", tmp_path / "gold") == 0
        assert "1.0000" in capsys.readouterr().out

    def test_undefined_correlation(self, tmp_path, capsys):
        write_lines(tmp_path / "g", ["0.2", "0.2"])
        write_lines(tmp_path / "p", ["0.1", "0.3"])
        assert kiwi("evaluate", "--hter", tmp_path / "g", tmp_path / "p", "--format", "kv") == 0
        assert "pearson=undefined" in capsys.readouterr().out

    @pytest.mark.parametrize(
        "gold,pred",
        [(["OK BAD"], ["OK BAD", "OK"]), (["OK BAD"], ["OK"]), (["OK BAD"], ["OK maybe"])],
    )
    def test_mismatch(self, tmp_path, capsys, gold, pred):
        write_lines(tmp_path / "g", gold)
        write_lines(tmp_path / "p", pred)
        assert kiwi("evaluate", "--mt", tmp_path / "g", tmp_path / "p") == 1
        assert "kiwi evaluate: error:" in capsys.readouterr().err

    def test_nothing_to_evaluate(self):
        assert kiwi("evaluate") == 1


class TestPredict:
    def test_average_of_two_runs(self, config_path, tmp_path):
        assert kiwi("train", "--config", config_path) == 0
        assert kiwi("train", "--config", config_path, "--seed", 2, "--output-dir", tmp_path / "run2") == 0
        files = write_samples(tmp_path / "data", "test", overfit_corpus(5, seed=4))
        args = ["--source", files["source"], "--target", files["target"], "--alignments", files["alignments"]]
        assert kiwi("predict", "--model", tmp_path / "run", *args, "--output-dir", tmp_path / "p1") == 0
        assert kiwi("predict", "--model", tmp_path / "run2" / "best", *args, "--output-dir", tmp_path / "p2") == 0
        assert kiwi("predict", "--model", tmp_path / "run", "--model", tmp_path / "run2", *args, "--output-dir", tmp_path / "avg") == 0
        from kiwi.ensemble import read_probs

        a, b, m = (read_probs(tmp_path / d / "mt.probs") for d in ("p1", "p2", "avg"))
        for x, y, z in zip(a, b, m):
            assert z == pytest.approx((x + y) / 2, abs=1e-6)
        tags = (tmp_path / "avg" / "mt.tags").read_text().splitlines()
        assert [len(t.split()) for t in tags] == [len(r) for r in m]
        assert len((tmp_path / "avg" / "hter").read_text().splitlines()) == 5

    def test_task_mismatch(self, config_path, tmp_path, capsys):
        assert kiwi("train", "--config", config_path) == 0
        files = write_samples(tmp_path / "data", "test", overfit_corpus(2, seed=4))
        code = kiwi("predict", "--model", tmp_path / "run", "--source", files["source"], "--target", files["target"], "--task", "gap", "--output-dir", tmp_path / "p")
        assert code == 1 and "task" in capsys.readouterr().err

    def test_missing_model(self, tmp_path, capsys):
        files = write_samples(tmp_path / "data", "test", overfit_corpus(2, seed=4))
        assert kiwi("predict", "--model", tmp_path / "nothing", "--source", files["source"], "--target", files["target"], "--output-dir", tmp_path / "p") == 1
        assert "manifest" in capsys.readouterr().err


class TestRender:
    def test_html_file(self, tmp_path):
        write_lines(tmp_path / "t", ["a <b>", "c"])
        write_lines(tmp_path / "m", ["OK BAD", "OK"])
        write_lines(tmp_path / "g", ["OK BAD OK", "OK OK"])
        assert kiwi("render", "--target", tmp_path / "t", "--mt", tmp_path / "m", "--gap", tmp_path / "g", "--format", "html", "--output", tmp_path / "o.html") == 0
        assert (tmp_path / "o.html").read_text() == 'a <span class="bad-gap">_</span> <span class="bad">&lt;b&gt;</span>\nc\n'

    def test_plain_stdout(self, tmp_path, capsys):
        write_lines(tmp_path / "t", ["a b"])
        write_lines(tmp_path / "m", ["OK OK"])
        assert kiwi("render", "--target", tmp_path / "t", "--mt", tmp_path / "m") == 0
        assert capsys.readouterr().out == "a b\n"

    def test_length_mismatch(self, tmp_path):
        write_lines(tmp_path / "t", ["a b"])
        write_lines(tmp_path / "m", ["OK"])
        assert kiwi("render", "--target", tmp_path / "t", "--mt", tmp_path / "m") == 1


def test_bundled_toy_corpus_is_consistent():
    toy = toy_corpus_dir()
    for split, n in (("train", 150), ("dev", 50)):
        lengths = {ext: len((toy / f"{split}.{ext}").read_text().splitlines()) for ext in ("src", "mt", "pe", "align")}
        assert set(lengths.values()) == {n}


def test_kiwi_log_controls_verbosity(config_path, tmp_path):
    def run(level):
        env = dict(os.environ, KIWI_LOG=level)
        return subprocess.run(
            [sys.executable, "-m", "kiwi", "train", "--config", str(config_path), "--output-dir", str(tmp_path / level)],
            capture_output=True, text=True, env=env,
        )

    quiet, chatty = run("warning"), run("info")
    assert quiet.returncode == chatty.returncode == 0
    assert "epoch 1" not in quiet.stderr
    assert "INFO kiwi.trainer: epoch 1" in chatty.stderr
