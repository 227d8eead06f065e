import json
import subprocess
import sys

import pytest

from cliplta.cli import main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """gen-synth -> train -> eval through the CLI, shared by the read-only tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    run = root / "run"
    cfg = root / "synth.json"
    cfg.write_text(json.dumps({
        "n_train": 16, "n_val": 8, "N": 3, "c": 8, "d_video": 8,
        "Z": 3, "n_verbs": 4, "n_nouns": 4, "seed": 9,
    }), encoding="utf-8")
    assert main(["gen-synth", "--config", str(cfg), "--out", str(data)]) == 0
    assert main([
        "train", "--variant", "img_plus_clip",
        "--store", str(data / "store"), "--gt", str(data / "gt_train.json"),
        "--taxonomy", str(data / "taxonomy.json"), "--out-dir", str(run),
        "--epochs", "2", "--batch-size", "4", "--base-lr", "0.001",
        "--n-layers", "1", "--n-heads-agg", "2", "--seed", "0",
    ]) == 0
    assert main([
        "eval", "--checkpoint", str(run / "checkpoint"),
        "--store", str(data / "store"), "--gt", str(data / "gt_val.json"),
        "--taxonomy", str(data / "taxonomy.json"), "--k", "3", "--seed", "1",
        "--out-dir", str(run),
    ]) == 0
    return root


class TestPipeline:
    def test_artifacts_exist(self, workspace):
        assert (workspace / "data" / "store" / "manifest.json").is_file()
        assert (workspace / "run" / "checkpoint" / "config.json").is_file()
        assert (workspace / "run" / "runlog.jsonl").is_file()
        assert (workspace / "run" / "predictions.json").is_file()
        assert (workspace / "run" / "report.json").is_file()

    def test_prediction_file_schema(self, workspace):
        payload = json.loads((workspace / "run" / "predictions.json").read_text())
        assert payload["version"] == 1
        assert payload["Z"] == 3 and payload["K"] == 3
        example = next(iter(payload["predictions"].values()))
        assert len(example["verb"]) == 3 and len(example["verb"][0]) == 3

    def test_report_command_table(self, workspace, capsys):
        assert main(["report", "--runs", str(workspace / "run")]) == 0
        out = capsys.readouterr().out
        assert "Method" in out and "img_plus_clip" in out

    def test_report_command_json(self, workspace, capsys):
        assert main(["report", "--runs", str(workspace / "run"), "--json"]) == 0
        rows = json.loads(capsys.readouterr().out)
        assert rows[0]["method"] == "img_plus_clip"
        assert 0.0 <= rows[0]["verb"] <= 1.0

    def test_probe_outputs_json_lines(self, workspace, capsys):
        assert main([
            "probe", "--store", str(workspace / "data" / "store"),
            "--taxonomy", str(workspace / "data" / "taxonomy.json"),
            "--clip", "train_00000#0",
        ]) == 0
        lines = capsys.readouterr().out.strip().split("\n")
        assert len(lines) == 3  # one record per frame
        record = json.loads(lines[0])
        assert set(record) == {"frame", "place", "scenario", "verbs", "nouns", "names"}
        assert len(record["nouns"]) == 3

    def test_flag_overrides_config(self, workspace, tmp_path, capsys):
        # config says 20 epochs, flag forces 1
        cfg = tmp_path / "train.json"
        cfg.write_text(json.dumps({
            "variant": "baseline",
            "store": str(workspace / "data" / "store"),
            "gt": str(workspace / "data" / "gt_train.json"),
            "taxonomy": str(workspace / "data" / "taxonomy.json"),
            "out_dir": str(tmp_path / "run"),
            "epochs": 20, "batch_size": 4, "n_layers": 1, "n_heads_agg": 2,
        }), encoding="utf-8")
        assert main(["train", "--config", str(cfg), "--epochs", "1"]) == 0
        lines = (tmp_path / "run" / "runlog.jsonl").read_text().strip().split("\n")
        assert len(lines) == 1


class TestCrossProcessDeterminism:
    def test_fresh_processes_reproduce_prediction_bytes(self, workspace, tmp_path):
        # the strongest form of the reproducibility contract: two separate
        # interpreter invocations, identical artifacts
        def run_once(tag):
            run_dir = tmp_path / tag
            for argv in (
                ["train", "--variant", "img_plus_clip",
                 "--store", str(workspace / "data" / "store"),
                 "--gt", str(workspace / "data" / "gt_train.json"),
                 "--taxonomy", str(workspace / "data" / "taxonomy.json"),
                 "--out-dir", str(run_dir), "--epochs", "2", "--batch-size", "4",
                 "--n-layers", "1", "--n-heads-agg", "2", "--seed", "7"],
                ["eval", "--checkpoint", str(run_dir / "checkpoint"),
                 "--store", str(workspace / "data" / "store"),
                 "--gt", str(workspace / "data" / "gt_val.json"),
                 "--taxonomy", str(workspace / "data" / "taxonomy.json"),
                 "--k", "5", "--seed", "7", "--out-dir", str(run_dir)],
            ):
                proc = subprocess.run([sys.executable, "-m", "cliplta.cli", *argv],
                                      capture_output=True, text=True)
                assert proc.returncode == 0, proc.stderr
            return (run_dir / "predictions.json").read_bytes()

        assert run_once("a") == run_once("b")


class TestExitCodes:
    def test_validation_error_is_2(self, workspace, tmp_path):
        code = main([
            "train", "--variant", "img_plus_clip",
            "--store", str(workspace / "data" / "store"),
            "--gt", str(workspace / "data" / "gt_train.json"),
            "--taxonomy", str(workspace / "data" / "taxonomy.json"),
            "--out-dir", str(tmp_path / "r"), "--epochs", "0",
        ])
        assert code == 2

    def test_missing_config_is_2(self, tmp_path):
        assert main(["gen-synth", "--config", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "o")]) == 2

    def test_unknown_clip_is_2(self, workspace):
        assert main([
            "probe", "--store", str(workspace / "data" / "store"),
            "--taxonomy", str(workspace / "data" / "taxonomy.json"),
            "--clip", "no_such#0",
        ]) == 2

    def test_corrupt_blob_is_3(self, workspace, tmp_path):
        import shutil

        store_copy = tmp_path / "store"
        shutil.copytree(workspace / "data" / "store", store_copy)
        blob = store_copy / "clip_000000.frames.bin"
        blob.write_bytes(blob.read_bytes()[:-4])
        assert main([
            "probe", "--store", str(store_copy),
            "--taxonomy", str(workspace / "data" / "taxonomy.json"),
            "--clip", "train_00000#0",
        ]) == 3
