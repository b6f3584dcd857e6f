import csv
import json
from pathlib import Path

import pytest

from csiuq.cli import main
from csiuq.features import CSV_COLUMNS

DATA = Path(__file__).parent / "data"
GOLDEN_METRICS = sorted(DATA.glob("golden_metrics_Home-*.json"))

SMALL = ["--homes", "3", "--recordings", "2", "--duration", "8", "--subcarriers", "8"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """synth -> pipeline -> train -> evaluate on three small homes."""
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", *SMALL, "--seed", "3", "--out", str(root / "data")]) == 0
    assert main(["pipeline", "--data", str(root / "data"), "--out", str(root / "feat")]) == 0
    assert main(["train", "--features", str(root / "feat"), "--test-home", "home2",
                 "--epochs", "5", "--out", str(root / "model")]) == 0
    assert main(["evaluate", "--checkpoint", str(root / "model" / "checkpoint.json"),
                 "--features", str(root / "feat"), "--test-home", "home2", "--T", "10",
                 "--out", str(root / "eval")]) == 0
    return root


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestExitCodes:
    def test_zero_homes_is_usage_error(self, tmp_path, capsys):
        assert main(["synth", "--homes", "0", "--out", str(tmp_path)]) == 2
        assert "--homes" in capsys.readouterr().err

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as info:
            main(["synth", "--no-such-flag"])
        assert info.value.code == 2

    def test_missing_manifest(self, tmp_path, capsys):
        assert main(["pipeline", "--data", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 1
        assert "manifest not found" in capsys.readouterr().err

    def test_report_needs_one_source(self, tmp_path):
        assert main(["report", "--out", str(tmp_path)]) == 2

    def test_config_defaults_and_unknown_keys(self, tmp_path):
        good = tmp_path / "good.json"
        good.write_text(json.dumps({"pairs": 3, "n": 1000}))
        assert main(["kl-check", "--config", str(good)]) == 0
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"pairz": 3}))
        with pytest.raises(SystemExit) as info:
            main(["kl-check", "--config", str(bad)])
        assert info.value.code == 2

    def test_schema_mismatch(self, tmp_path, capsys):
        (tmp_path / "features_x.csv").write_text("a,b,c\n1,2,3\n")
        assert main(["train", "--features", str(tmp_path), "--out", str(tmp_path)]) == 1
        assert "expected columns" in capsys.readouterr().err

    def test_gradcheck(self, capsys):
        assert main(["gradcheck", "--seed", "2"]) == 0
        assert "max relative gradient error" in capsys.readouterr().out
        assert main(["gradcheck", "--tol", "1e-30"]) == 1


class TestSynth:
    def test_layout(self, workspace):
        manifest = json.loads((workspace / "data" / "manifest.json").read_text())
        assert len(manifest["recordings"]) == 3 * 4
        homes = sorted({r["home_id"] for r in manifest["recordings"]})
        assert homes == ["home1", "home2", "home3"]
        for r in manifest["recordings"]:
            header = json.loads((workspace / "data" / r["header"]).read_text())
            assert header["dims"] == [1, 2, 8, 800]
            assert header["label"] == r["label"]
        assert (workspace / "data" / "home1" / "motion_000.bin").exists()
        assert (workspace / "data" / "home3" / "nomotion_001.json").exists()

    def test_manifest_hashes_repeat(self, workspace, tmp_path):
        assert main(["synth", *SMALL, "--seed", "3", "--out", str(tmp_path)]) == 0
        assert ((tmp_path / "manifest.json").read_bytes()
                == (workspace / "data" / "manifest.json").read_bytes())

    def test_ood_homes(self, tmp_path):
        assert main(["synth", "--homes", "1", "--ood-homes", "1", "--recordings", "1",
                     "--duration", "2", "--subcarriers", "4", "--out", str(tmp_path)]) == 0
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert {(r["home_id"], r["regime"]) for r in manifest["recordings"]} == {
            ("home1", "in"), ("home2", "ood")}


class TestPipeline:
    def test_feature_csvs(self, workspace):
        for home in ("home1", "home2", "home3"):
            rows = read_rows(workspace / "feat" / f"features_{home}.csv")
            assert tuple(rows[0]) == CSV_COLUMNS
            assert all(len(r) == 9 for r in rows)
            # 4 recordings x ((800 - 200) // 100 + 1) windows
            assert len(rows) - 1 == 4 * 7
        summary = json.loads((workspace / "feat" / "pipeline_summary.json").read_text())
        assert summary["homes"]["home1"] == {"recordings": 4, "windows": 28, "dropped": 0}

    def test_sixty_second_recording(self, tmp_path):
        assert main(["synth", "--homes", "1", "--recordings", "1", "--duration", "60",
                     "--subcarriers", "8", "--out", str(tmp_path / "d")]) == 0
        assert main(["pipeline", "--data", str(tmp_path / "d"), "--window", "200", "--hop", "100",
                     "--out", str(tmp_path / "f")]) == 0
        summary = json.loads((tmp_path / "f" / "pipeline_summary.json").read_text())
        assert summary["homes"]["home1"]["windows"] == 2 * 59

    def test_static_only_is_degenerate(self, tmp_path, capsys):
        assert main(["synth", "--homes", "1", "--motion-recordings", "0", "--static-recordings", "1",
                     "--noise-ratio", "0", "--duration", "4", "--subcarriers", "4",
                     "--out", str(tmp_path)]) == 0
        assert main(["pipeline", "--data", str(tmp_path), "--out", str(tmp_path / "f")]) == 1
        assert "degenerate" in capsys.readouterr().err

    def test_save_series(self, workspace, tmp_path):
        assert main(["pipeline", "--data", str(workspace / "data"), "--save-series",
                     "--out", str(tmp_path)]) == 0
        series = sorted(tmp_path.glob("series_*.csv"))
        assert len(series) == 12
        assert series[0].read_text().startswith("# sample_rate_hz=100.0\nsample_index,value\n")


class TestTrainEvaluate:
    def test_train_outputs(self, workspace):
        rows = read_rows(workspace / "model" / "loss_history.csv")
        assert rows[0] == ["epoch", "loss", "accuracy"] and len(rows) == 6
        ckpt = json.loads((workspace / "model" / "checkpoint.json").read_text())
        assert ckpt["standardizer"] is not None and ckpt["train_state"]["epoch"] == 5
        assert (workspace / "model" / "fig_loss.png").stat().st_size > 0

    def test_metrics_schema(self, workspace):
        m = json.loads((workspace / "eval" / "metrics_home2.json").read_text())
        assert m["home_id"] == "home2"
        for key in ("accuracy_pct", "mean_entropy_no_motion", "mean_entropy_motion"):
            assert isinstance(m[key], float)
        assert 0 <= m["accuracy_pct"] <= 100
        assert m["n_examples"] == 28 and m["T"] == 10

    def test_uncertainty_dumps(self, workspace):
        long = read_rows(workspace / "eval" / "uncertainty_home2.csv")
        assert long[0][:6] == ["example", "true_label", "predicted_label", "sample",
                               "p_no_motion", "p_motion"]
        assert len(long) - 1 == 28 * 10
        for r in long[1:]:
            assert float(r[4]) + float(r[5]) == pytest.approx(1.0, abs=1e-12)
        ent = read_rows(workspace / "eval" / "entropy_home2.csv")
        assert len(ent) - 1 == 28
        for name in ("fig_probabilities_home2.png", "fig_entropy_home2.png"):
            assert (workspace / "eval" / name).exists()

    def test_unknown_test_home(self, workspace, tmp_path):
        assert main(["train", "--features", str(workspace / "feat"), "--test-home", "home9",
                     "--epochs", "1", "--out", str(tmp_path)]) == 1


class TestReport:
    def test_golden_markdown(self, tmp_path, capsys):
        assert main(["report", "--metrics", *map(str, GOLDEN_METRICS), "--out", str(tmp_path)]) == 0
        golden = (DATA / "golden_table.md").read_bytes()
        assert (tmp_path / "report.md").read_bytes() == golden
        assert capsys.readouterr().out.encode() == golden
        rows = json.loads((tmp_path / "report.json").read_text())["rows"]
        assert [r["home_id"] for r in rows] == ["Home-1", "Home-2", "Home-3", "Home-4"]
        assert (tmp_path / "fig_report.png").exists()

    def test_metrics_from_evaluate(self, workspace, tmp_path):
        assert main(["report", "--metrics", str(workspace / "eval" / "metrics_home2.json"),
                     "--out", str(tmp_path), "--no-figures"]) == 0
        lines = (tmp_path / "report.md").read_text().splitlines()
        assert len(lines) == 3 and lines[2].startswith("| home2 | ")

    def test_incomplete_metrics(self, tmp_path):
        (tmp_path / "m.json").write_text(json.dumps({"home_id": "h"}))
        assert main(["report", "--metrics", str(tmp_path / "m.json"), "--out", str(tmp_path)]) == 1

    def test_experiment(self, workspace, tmp_path):
        cfg = tmp_path / "exp.json"
        feat = workspace / "feat"
        cfg.write_text(json.dumps({
            "homes": [str(feat / f"features_home{i}.csv") for i in (1, 2, 3)],
            "epochs": 3, "T": 5,
        }))
        assert main(["report", "--experiment", str(cfg), "--out", str(tmp_path / "r")]) == 0
        report = json.loads((tmp_path / "r" / "report.json").read_text())
        assert [f["test_home"] for f in report["folds"]] == ["home1", "home2", "home3"]
        assert report["master_seed"] == 0
        assert main(["report", "--experiment", str(cfg), "--seed", "4",
                     "--out", str(tmp_path / "r4"), "--no-figures"]) == 0
        assert json.loads((tmp_path / "r4" / "report.json").read_text())["master_seed"] == 4
