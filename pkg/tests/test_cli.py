import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from schoolpulse.cli import main


def write_config(tmp_path: Path, **extra) -> Path:
    data_dir = tmp_path / "data"
    lines = [
        f'data_dir = "{data_dir}"',
        f'pseudonym_key_hex = "{"44" * 32}"',
        "[federation]",
        "rounds = 5",
        "epochs = 10",
        "seed = 3",
    ]
    path = tmp_path / "config.toml"
    path.write_text("\n".join(lines) + "\n")
    return path


def run(args, **kwargs):
    return CliRunner().invoke(main, args, **kwargs)


class TestGenData:
    def test_deterministic_trees(self, tmp_path):
        r1 = run(["gen-data", "--seed", "7", "--out", str(tmp_path / "a"),
                  "--schools", "2", "--students", "10"])
        r2 = run(["gen-data", "--seed", "7", "--out", str(tmp_path / "b"),
                  "--schools", "2", "--students", "10"])
        assert r1.exit_code == 0 and r2.exit_code == 0
        files1 = sorted((tmp_path / "a").iterdir())
        files2 = sorted((tmp_path / "b").iterdir())
        assert [f.name for f in files1] == [f.name for f in files2]
        for f1, f2 in zip(files1, files2):
            if f1.name != "manifest.json":
                assert f1.read_bytes() == f2.read_bytes()

    def test_stdout_is_json(self, tmp_path):
        result = run(["gen-data", "--seed", "1", "--out", str(tmp_path / "x"),
                      "--schools", "1", "--students", "2"])
        payload = json.loads(result.stdout)
        assert payload["seed"] == 1


class TestPipeline:
    @pytest.fixture()
    def ingested(self, tmp_path):
        config = write_config(tmp_path)
        data_dir = tmp_path / "synthetic"
        assert run(["gen-data", "--seed", "3", "--out", str(data_dir),
                    "--schools", "2", "--students", "30"]).exit_code == 0
        for i in range(2):
            result = run(["ingest", "--config", str(config), "--school", f"sch-{i}",
                          "--file", str(data_dir / f"school-{i}.csv")])
            assert result.exit_code == 0, result.stderr
        return config

    def test_train_before_ingest_exits_1(self, tmp_path):
        config = write_config(tmp_path)
        result = run(["train", "--config", str(config), "--kind", "inschool"])
        assert result.exit_code == 1
        assert "no records" in result.stderr

    def test_full_pipeline(self, ingested, tmp_path):
        result = run(["train", "--config", str(ingested)])
        assert result.exit_code == 0, result.stderr
        trained = json.loads(result.stdout)["trained"]
        assert {t["kind"] for t in trained} == {"inschool", "exam", "behavior"}

        result = run(["fed-run", "--config", str(ingested)])
        assert result.exit_code == 0, result.stderr
        assert json.loads(result.stdout)["rounds"] == 5

        out = tmp_path / "alerts.jsonl"
        result = run(["export-alerts", "--config", str(ingested), "--out", str(out)])
        assert result.exit_code == 0
        lines = out.read_text().splitlines()
        assert lines
        alert = json.loads(lines[0])
        assert set(alert) == {"token", "dimension", "color", "metric",
                              "config_snapshot", "generated_at"}
        assert alert["color"] in {"red", "yellow", "green"}

    def test_export_alerts_to_stdout(self, ingested):
        assert run(["train", "--config", str(ingested), "--kind", "inschool"]).exit_code == 0
        result = run(["export-alerts", "--config", str(ingested)])
        assert result.exit_code == 0
        for line in result.stdout.splitlines():
            json.loads(line)

    def test_report_writes_figures_and_payloads(self, ingested, tmp_path):
        assert run(["train", "--config", str(ingested)]).exit_code == 0
        assert run(["fed-run", "--config", str(ingested)]).exit_code == 0
        out_dir = tmp_path / "report"
        result = run(["report", "--config", str(ingested), "--out", str(out_dir)])
        assert result.exit_code == 0, result.stderr
        names = {p.name for p in out_dir.iterdir()}
        assert {"alerts.jsonl", "alerts.png", "wordcloud.json", "wordcloud.png",
                "heatmap.json", "heatmap.png", "talents.json", "talents.png",
                "federation_history.jsonl", "federation.png"} <= names
        for png in out_dir.glob("*.png"):
            assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


class TestExitCodes:
    def test_missing_file_exits_2(self, tmp_path):
        config = write_config(tmp_path)
        result = run(["ingest", "--config", str(config), "--school", "sch-0",
                      "--file", str(tmp_path / "missing.csv")])
        assert result.exit_code == 2

    def test_empty_file_exits_1(self, tmp_path):
        config = write_config(tmp_path)
        empty = tmp_path / "empty.csv"
        empty.write_bytes(b"")
        result = run(["ingest", "--config", str(config), "--school", "sch-0",
                      "--file", str(empty)])
        assert result.exit_code == 1

    def test_invalid_config_exits_1(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("[models]\nexam_bins = [1, 2]\n")
        result = run(["train", "--config", str(bad), "--kind", "inschool"])
        assert result.exit_code == 1
