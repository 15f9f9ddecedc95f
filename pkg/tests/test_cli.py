"""End-to-end CLI behavior: pipelines, config files, manifests, exit codes."""

import json
import subprocess
import sys

import pytest

from chordseg import cli
from chordseg.corpus import load_corpus


def run_cli(*argv):
    return cli.run([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One synthetic corpus plus trained artifacts shared by the tests."""
    root = tmp_path_factory.mktemp("cliwork")
    corpus = root / "corpus.jsonl"
    emb = root / "emb.txt"
    model = root / "model"
    assert run_cli("synth-corpus", "--out", corpus, "--tracks", 12, "--seed", 5) == 0
    assert run_cli(
        "train-embedding", "--corpus", corpus, "--out", emb,
        "--kind", "pitchclass2vec", "--epochs", 2, "--subsample-t", 0.9,
    ) == 0
    assert run_cli(
        "train-segmenter", "--corpus", corpus, "--embedding", emb, "--out", model,
        "--hidden-size", 6, "--max-epochs", 2, "--batch-tracks", 4,
    ) == 0
    return root


def test_synth_corpus_output(workspace):
    load = load_corpus(workspace / "corpus.jsonl")
    assert len(load.tracks) == 12
    assert all(t.sections is not None for t in load.tracks)
    manifest = json.loads((workspace / "corpus.jsonl.manifest.json").read_text())
    assert manifest["command"] == "synth-corpus"
    assert manifest["settings"]["tracks"] == 12
    assert manifest["settings"]["seed"] == 5
    assert manifest["n_tracks"] == 12
    assert set(manifest["versions"]) == {"chordseg", "python", "numpy", "kernels"}


def test_train_embedding_manifest(workspace):
    manifest = json.loads((workspace / "emb.txt.manifest.json").read_text())
    assert manifest["command"] == "train-embedding"
    assert manifest["settings"]["kind"] == "pitchclass2vec"
    assert len(manifest["epoch_mean_loss"]) == 2
    assert manifest["vocab_size"] > 0


def test_train_segmenter_artifacts(workspace):
    assert (workspace / "model.json").exists()
    assert (workspace / "model.params").exists()
    manifest = json.loads((workspace / "model.manifest.json").read_text())
    assert manifest["command"] == "train-segmenter"
    assert manifest["split_sizes"][0] >= 1
    assert len(manifest["training_log"]) <= 2
    artifact = json.loads((workspace / "model.json").read_text())
    assert artifact["labels"] == sorted(artifact["labels"])
    assert artifact["embedding"][0]["kind"] == "pitchclass"


def test_segment_lstm_and_evaluate(workspace):
    est = workspace / "est.jsonl"
    code = run_cli(
        "segment", "--corpus", workspace / "corpus.jsonl", "--out", est,
        "--method", "lstm", "--model", workspace / "model",
        "--embedding", workspace / "emb.txt",
    )
    assert code == 0
    lines = [json.loads(line) for line in est.read_text().splitlines()]
    assert [obj["id"] for obj in lines] == sorted(obj["id"] for obj in lines)
    load = load_corpus(workspace / "corpus.jsonl")
    lengths = {t.id: len(t.chords) for t in load.tracks}
    for obj in lines:
        spans = obj["segments"]
        assert spans[0][0] == 0 and spans[-1][1] == lengths[obj["id"]]
        assert all(a[1] == b[0] for a, b in zip(spans, spans[1:]))

    report = workspace / "report"
    assert run_cli("evaluate", "--ref", workspace / "corpus.jsonl",
                   "--est", est, "--out", report) == 0
    doc = json.loads((workspace / "report.json").read_text())
    assert len(doc["tracks"]) == 12
    assert set(doc["aggregate"]) == {"P", "R", "F1", "S_O", "S_U", "S_F1"}
    assert (workspace / "report.csv").exists()
    manifest = json.loads((workspace / "report.manifest.json").read_text())
    assert manifest["outputs"] == [str(workspace / "report.json"),
                                   str(workspace / "report.csv")]


@pytest.mark.parametrize("method", ["form-raw", "form-simple", "random", "fixed-pop"])
def test_baseline_methods(workspace, method, tmp_path):
    out = tmp_path / f"{method}.jsonl"
    assert run_cli("baseline", "--corpus", workspace / "corpus.jsonl",
                   "--out", out, "--method", method) == 0
    assert len(out.read_text().splitlines()) == 12


def test_segment_is_deterministic(workspace, tmp_path):
    a = tmp_path / "a.jsonl"
    b = tmp_path / "b.jsonl"
    for out in (a, b):
        assert run_cli("segment", "--corpus", workspace / "corpus.jsonl",
                       "--out", out, "--method", "random", "--seed", 3) == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.jsonl"
    assert run_cli("segment", "--corpus", workspace / "corpus.jsonl",
                   "--out", c, "--method", "random", "--seed", 4) == 0
    assert a.read_bytes() != c.read_bytes()


def test_config_file_and_flag_precedence(workspace, tmp_path):
    cfg = tmp_path / "settings.cfg"
    cfg.write_text("method = random\nseed = 1\n# comment line\n\n")
    out = tmp_path / "out.jsonl"
    assert run_cli("segment", "--config", cfg, "--corpus", workspace / "corpus.jsonl",
                   "--out", out, "--seed", 2) == 0
    manifest = json.loads((tmp_path / "out.jsonl.manifest.json").read_text())
    assert manifest["settings"]["method"] == "random"
    assert manifest["settings"]["seed"] == 2  # flag beats config file


def test_config_file_errors(workspace, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("not a key value line\n")
    out = tmp_path / "x.jsonl"
    assert run_cli("segment", "--config", cfg, "--corpus", workspace / "corpus.jsonl",
                   "--out", out, "--method", "random") == 2
    cfg.write_text("unknown_key = 1\n")
    assert run_cli("segment", "--config", cfg, "--corpus", workspace / "corpus.jsonl",
                   "--out", out, "--method", "random") == 2
    cfg.write_text("seed = not_an_int\n")
    assert run_cli("segment", "--config", cfg, "--corpus", workspace / "corpus.jsonl",
                   "--out", out, "--method", "random") == 2


def test_usage_errors_exit_1(workspace, tmp_path):
    # unknown --method value comes from argparse itself
    with pytest.raises(SystemExit) as err:
        run_cli("segment", "--corpus", workspace / "corpus.jsonl",
                "--out", tmp_path / "x.jsonl", "--method", "bogus")
    assert err.value.code == 1
    with pytest.raises(SystemExit) as err:
        run_cli("no-such-command")
    assert err.value.code == 1
    # missing required setting is reported after parsing
    assert run_cli("segment", "--corpus", workspace / "corpus.jsonl",
                   "--method", "random") == 1
    # lstm without a model
    assert run_cli("segment", "--corpus", workspace / "corpus.jsonl",
                   "--out", tmp_path / "x.jsonl", "--method", "lstm") == 1


def test_baseline_rejects_lstm(workspace, tmp_path):
    with pytest.raises(SystemExit) as err:
        run_cli("baseline", "--corpus", workspace / "corpus.jsonl",
                "--out", tmp_path / "x.jsonl", "--method", "lstm")
    assert err.value.code == 1


def test_data_errors_exit_2(workspace, tmp_path):
    assert run_cli("segment", "--corpus", tmp_path / "missing.jsonl",
                   "--out", tmp_path / "x.jsonl", "--method", "random") == 2
    # evaluate with an estimate file that skips a track
    est = tmp_path / "partial.jsonl"
    est.write_text('{"id": "synth-0000", "segments": [[0, 4, "a"]]}\n')
    assert run_cli("evaluate", "--ref", workspace / "corpus.jsonl",
                   "--est", est, "--out", tmp_path / "r") == 2
    # corrupt corpus line
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "x"}\n')
    assert run_cli("segment", "--corpus", bad,
                   "--out", tmp_path / "x.jsonl", "--method", "random") == 2


def test_mismatched_embedding_dim_exits_2(workspace, tmp_path):
    emb2 = tmp_path / "emb2.txt"
    assert run_cli(
        "train-embedding", "--corpus", workspace / "corpus.jsonl", "--out", emb2,
        "--kind", "word2vec", "--dim", 4, "--epochs", 1, "--subsample-t", 0.9,
    ) == 0
    assert run_cli(
        "segment", "--corpus", workspace / "corpus.jsonl",
        "--out", tmp_path / "x.jsonl", "--method", "lstm",
        "--model", workspace / "model", "--embedding", emb2,
    ) == 2


def test_hybrid_embedding_training(workspace, tmp_path):
    emb2 = tmp_path / "word.txt"
    assert run_cli(
        "train-embedding", "--corpus", workspace / "corpus.jsonl", "--out", emb2,
        "--kind", "word2vec", "--dim", 4, "--epochs", 1, "--subsample-t", 0.9,
    ) == 0
    model = tmp_path / "hybrid"
    assert run_cli(
        "train-segmenter", "--corpus", workspace / "corpus.jsonl",
        "--embedding", workspace / "emb.txt", "--embedding2", emb2,
        "--out", model, "--hidden-size", 5, "--max-epochs", 1,
    ) == 0
    artifact = json.loads((tmp_path / "hybrid.json").read_text())
    assert artifact["input_dim"] == 10 + 4
    assert len(artifact["embedding"]) == 2
    out = tmp_path / "est.jsonl"
    assert run_cli(
        "segment", "--corpus", workspace / "corpus.jsonl", "--out", out,
        "--method", "lstm", "--model", model,
        "--embedding", workspace / "emb.txt", "--embedding2", emb2,
    ) == 0


def test_module_entry_point():
    result = subprocess.run(
        [sys.executable, "-m", "chordseg", "--version"],
        capture_output=True, text=True,
    )
    assert result.returncode == 0
    assert "chordseg" in result.stdout


def test_fasttext_kind_flags(workspace, tmp_path):
    out = tmp_path / "ft.txt"
    assert run_cli(
        "train-embedding", "--corpus", workspace / "corpus.jsonl", "--out", out,
        "--kind", "fasttext", "--dim", 4, "--epochs", 1, "--subsample-t", 0.9,
        "--min-n", 2, "--max-n", 3, "--buckets", 101,
    ) == 0
    header = out.read_text().splitlines()[0].split()
    assert header[2] == "char_ngram:2:3:101"
