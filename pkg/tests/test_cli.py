import json
import sys
from unittest.mock import patch

import pytest
from typer.testing import CliRunner

from mol2adr import __version__
from mol2adr.cli import app, run

runner = CliRunner()


def test_version():
    result = runner.invoke(app, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.stdout
    assert "checkpoint 1" in result.stdout


def test_help():
    result = runner.invoke(app, ["--help"])
    assert result.exit_code == 0
    assert "Predict adverse drug reactions" in result.stdout
    for command in ("parse", "fragment", "vocab", "graph", "train", "predict", "eval"):
        assert command in result.stdout


def test_train_help():
    result = runner.invoke(app, ["train", "--help"])
    assert result.exit_code == 0
    assert "--config" in result.stdout
    assert "--seeds" in result.stdout


def test_parse_prints_one_json_object_per_line():
    result = runner.invoke(app, ["parse"], input="CCO\n\nc1ccccc1\n")
    assert result.exit_code == 0
    objects = [json.loads(line) for line in result.stdout.splitlines() if line.startswith("{")]
    assert [o["canonical"] for o in objects] == ["CCO", "c1ccccc1"]
    assert [a["h"] for a in objects[0]["atoms"]] == [3, 2, 1]


def test_parse_error_exits_with_data_code():
    result = runner.invoke(app, ["parse"], input="C(C\n")
    assert result.exit_code == 2


def test_fragment_benzyl_chloride():
    result = runner.invoke(app, ["fragment"], input="ClCc1ccccc1\nCCOCC\n")
    assert result.exit_code == 0
    lines = result.stdout.splitlines()
    assert "*CCl" in lines
    assert "*c1ccccc1" in lines
    assert "*O*" in lines
    assert "" in lines


def test_vocab_and_graph(dataset_file, tmp_path):
    vocab_path = tmp_path / "vocab.jsonl"
    args = ["vocab", str(dataset_file), "-o", str(vocab_path), "--workers", "1"]
    result = runner.invoke(app, args)
    assert result.exit_code == 0
    assert vocab_path.read_text(encoding="utf-8").strip()

    graph_path = tmp_path / "out" / "graph.json"
    graph_path.parent.mkdir()
    result = runner.invoke(app, ["graph", str(dataset_file), "-o", str(graph_path)])
    assert result.exit_code == 0
    assert (tmp_path / "out" / "vocab.jsonl").exists()
    assert json.loads(graph_path.read_text(encoding="utf-8"))


def test_vocab_missing_dataset(tmp_path):
    result = runner.invoke(app, ["vocab", str(tmp_path / "missing.tsv")])
    assert result.exit_code == 2


@patch("mol2adr.core.Mol2AdrPipeline")
def test_train_resolves_flags_over_config(mock_pipeline, tmp_path):
    config = tmp_path / "run.conf"
    config.write_text("epochs = 7\nd_model = 16\ndecoder_heads = 4\n", encoding="utf-8")
    result = runner.invoke(
        app, ["train", "-c", str(config), "--epochs", "2", "--seeds", "3,4", "-o", str(tmp_path)]
    )
    assert result.exit_code == 0
    cfg = mock_pipeline.call_args[0][0]
    assert (cfg.epochs, cfg.d_model, cfg.seeds) == (2, 16, (3, 4))
    assert cfg.output_dir == str(tmp_path)
    mock_pipeline.return_value.run.assert_called_once()


@patch("mol2adr.core.Mol2AdrPipeline")
def test_train_ablation_flags(mock_pipeline, tmp_path):
    args = ["train", "-o", str(tmp_path), "--prune", "0.5", "--raw-features", "--sinusoidal-pos"]
    result = runner.invoke(app, args + ["--allow-duplicates"])
    assert result.exit_code == 0
    cfg = mock_pipeline.call_args[0][0]
    assert cfg.prune_threshold == 0.5
    assert cfg.raw_features and cfg.sinusoidal_pos and cfg.allow_duplicates

    result = runner.invoke(app, ["train", "-o", str(tmp_path)])
    cfg = mock_pipeline.call_args[0][0]
    assert cfg.prune_threshold is None
    assert not (cfg.raw_features or cfg.sinusoidal_pos or cfg.allow_duplicates)


def test_train_rejects_bad_config(tmp_path):
    config = tmp_path / "run.conf"
    config.write_text("colour = blue\n", encoding="utf-8")
    result = runner.invoke(app, ["train", "-c", str(config)])
    assert result.exit_code == 1


def test_eval_identical_files(tmp_path):
    labels = tmp_path / "labels.txt"
    labels.write_text("nausea,rash\nheadache\n", encoding="utf-8")
    output = tmp_path / "metrics.json"
    result = runner.invoke(app, ["eval", str(labels), str(labels), "-o", str(output)])
    assert result.exit_code == 0
    data = json.loads(output.read_text(encoding="utf-8"))
    assert data["f1"] == 1.0
    assert data["seed"] is None


def test_eval_records_run_seed_and_hash(trained_run, tmp_path):
    labels = tmp_path / "labels.txt"
    labels.write_text("nausea\n", encoding="utf-8")
    output = tmp_path / "metrics.json"
    args = ["eval", str(labels), str(labels), "--run", str(trained_run), "-o", str(output)]
    result = runner.invoke(app, args)
    assert result.exit_code == 0
    data = json.loads(output.read_text(encoding="utf-8"))
    trained = json.loads((trained_run / "metrics.json").read_text(encoding="utf-8"))
    assert data["seed"] == 1
    assert data["config_hash"] == trained["config_hash"]
    assert data["config_hash"] is not None


def test_invalid_utf8_dataset_is_a_data_error(tmp_path):
    dataset = tmp_path / "bad.tsv"
    dataset.write_bytes(b"drug_id\tstructure\tlabels\nd1\tCCO\tna\xffusea\n")
    result = runner.invoke(app, ["vocab", str(dataset), "--workers", "1"])
    assert result.exit_code == 2


def test_eval_length_mismatch(tmp_path):
    pred = tmp_path / "pred.txt"
    pred.write_text("nausea\n", encoding="utf-8")
    truth = tmp_path / "truth.txt"
    truth.write_text("nausea\nrash\n", encoding="utf-8")
    result = runner.invoke(app, ["eval", str(pred), str(truth), "-o", str(tmp_path / "m.json")])
    assert result.exit_code == 2


def test_predict(trained_run):
    result = runner.invoke(app, ["predict", str(trained_run)], input="CCO\nCC(=O)O\n")
    assert result.exit_code == 0


def test_predict_reports_bad_lines(trained_run):
    result = runner.invoke(app, ["predict", str(trained_run)], input="CCO\nC(C\n")
    assert result.exit_code == 2


def test_explain(trained_run, tmp_path):
    output = tmp_path / "contrib.csv"
    result = runner.invoke(app, ["explain", str(trained_run), "d12", "-o", str(output), "--joint"])
    assert result.exit_code == 0
    assert output.read_text(encoding="utf-8").startswith("motif_index,")

    result = runner.invoke(app, ["explain", str(trained_run), "nope", "-o", str(output)])
    assert result.exit_code == 2


def test_config_show():
    result = runner.invoke(app, ["config"])
    assert result.exit_code == 0
    assert "d_model = 128" in result.stdout
    assert "seeds = 1,2,3,4,5" in result.stdout


def test_selftest_command():
    result = runner.invoke(app, ["selftest"])
    assert result.exit_code == 0


def test_unknown_command_exits_with_usage_code(monkeypatch):
    monkeypatch.setattr(sys, "argv", ["mol2adr", "transmogrify"])
    with pytest.raises(SystemExit) as exc:
        run()
    assert exc.value.code == 1
