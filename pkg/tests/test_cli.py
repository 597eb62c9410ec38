"""End-to-end CLI behavior: exit codes, determinism, the full pipeline."""

import json

import pytest

from treectx.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestUsage:
    def test_help_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        assert "synth" in capsys.readouterr().out

    def test_no_command_is_usage_error(self, capsys):
        code, _, err = run(capsys)
        assert code == 1

    def test_unknown_flag_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["synth", "--frobnicate"])
        assert exc.value.code == 1

    def test_missing_file_is_data_error(self, capsys):
        code, _, err = run(capsys, "vocab", "--manifest", "/nonexistent/m.json",
                           "--vocab", "/tmp/v.txt")
        assert code == 2
        assert "error" in err


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """synth -> vocab -> train -> checkpoint/log, shared by the read-only tests."""
    ws = tmp_path_factory.mktemp("cli")
    data = ws / "data"
    code = main([
        "synth", "--task", "local", "--pages", "12", "--nodes-min", "6",
        "--nodes-max", "10", "--seed", "3", "--ratios", "0.5,0.25,0.25",
        "--out", str(data),
    ])
    assert code == 0
    ckpt = ws / "model.json"
    log = ws / "log.csv"
    code = main([
        "train", "--manifest", str(data / "manifest.json"), "--model", "fc",
        "--classes", "name,price", "--epochs", "6", "--batch-size", "6",
        "--lr", "0.05", "--hidden", "8", "--seed", "1",
        "--checkpoint", str(ckpt), "--log", str(log), "--plot",
    ])
    assert code == 0
    return {"dir": ws, "data": data, "manifest": data / "manifest.json",
            "checkpoint": ckpt, "log": log}


class TestPipeline:
    def test_synth_wrote_pages_and_manifest(self, workspace):
        assert (workspace["data"] / "manifest.json").exists()
        assert len(list(workspace["data"].glob("local-*.json"))) == 12

    def test_vocab_subcommand(self, workspace, capsys):
        vocab = workspace["dir"] / "tags.txt"
        code, out, _ = run(capsys, "vocab", "--manifest", str(workspace["manifest"]),
                           "--vocab", str(vocab))
        assert code == 0
        assert vocab.exists()
        assert "tags" in out

    def test_train_wrote_checkpoint_log_and_figure(self, workspace):
        doc = json.loads(workspace["checkpoint"].read_text())
        assert doc["model_kind"] == "fc"
        assert doc["classes"] == ["name", "price"]
        assert workspace["log"].exists()
        assert workspace["log"].with_suffix(".png").exists()

    def test_eval_prints_table_and_json(self, workspace, capsys):
        code, out, _ = run(capsys, "eval", "--checkpoint", str(workspace["checkpoint"]),
                           "--manifest", str(workspace["manifest"]), "--split", "test")
        assert code == 0
        assert "macro avg" in out
        code, out, _ = run(capsys, "eval", "--checkpoint", str(workspace["checkpoint"]),
                           "--manifest", str(workspace["manifest"]), "--split", "test",
                           "--json")
        assert code == 0
        doc = json.loads(out)
        assert set(doc) >= {"classes", "f1", "macro_f1", "micro_f1", "weighted_f1"}

    def test_train_then_eval_never_errors(self, workspace, capsys):
        # checkpoint format round-trips through the eval path
        code, _, err = run(capsys, "eval", "--checkpoint", str(workspace["checkpoint"]),
                           "--manifest", str(workspace["manifest"]), "--split", "validation")
        assert code == 0 and not err

    def test_predict_on_a_page(self, workspace, capsys):
        snapshot = sorted(workspace["data"].glob("local-*.json"))[0]
        code, out, _ = run(capsys, "predict", "--checkpoint", str(workspace["checkpoint"]),
                           "--snapshot", str(snapshot), "--node", "0", "--json")
        assert code == 0
        doc = json.loads(out)
        assert doc["predicted"] in ("name", "price")
        assert len(doc["probs"]) == 2

    def test_predict_bad_node_is_data_error(self, workspace, capsys):
        snapshot = sorted(workspace["data"].glob("local-*.json"))[0]
        code, _, err = run(capsys, "predict", "--checkpoint", str(workspace["checkpoint"]),
                           "--snapshot", str(snapshot), "--node", "999")
        assert code == 2
        assert "999" in err

    def test_report_renders_figure(self, workspace, capsys):
        out_png = workspace["dir"] / "curves.png"
        code, out, _ = run(capsys, "report", "--log", str(workspace["log"]),
                           "--out", str(out_png))
        assert code == 0
        assert out_png.exists()


class TestGradcheck:
    def test_prints_small_error_and_exits_zero(self, capsys):
        code, out, _ = run(capsys, "gradcheck", "--model", "bidir-embeddings", "--seed", "7",
                           "--hidden", "3", "--nodes", "6")
        assert code == 0
        assert "max relative error" in out
        err = float(out.split("max relative error:")[1].split()[0])
        assert err < 1e-4

    def test_covers_every_kind(self, capsys):
        for kind in ("fc", "mono-bu", "bidir-features"):
            code, out, _ = run(capsys, "gradcheck", "--model", kind, "--seed", "3",
                               "--hidden", "3", "--nodes", "6")
            assert code == 0


class TestDeterminism:
    def test_synth_twice_is_bitwise_identical(self, tmp_path, capsys):
        for sub in ("x", "y"):
            code, _, _ = run(capsys, "synth", "--task", "local", "--pages", "4",
                             "--nodes-min", "6", "--nodes-max", "8", "--seed", "11",
                             "--out", str(tmp_path / sub))
            assert code == 0
        for name in ("local-0000.json", "manifest.json"):
            assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()

    def test_config_file_merges_flag_wins(self, tmp_path, capsys):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"pages": 3, "nodes_min": 6, "nodes_max": 8, "seed": 5}))
        code, out, _ = run(capsys, "synth", "--task", "local", "--pages", "5",
                           "--config", str(config), "--out", str(tmp_path / "out"))
        assert code == 0
        assert "wrote 5 pages" in out  # the flag beat the config file's 3
